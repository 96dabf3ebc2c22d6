//! Test-side reference computations: single-threaded brute-force folds
//! over the generator's event log, independent of the engine's windowing,
//! routing, and aggregation paths.

#![allow(dead_code)]

use rill_core::bench::{LoggedEvent, EVENT_TYPE_CLICK, EVENT_TYPE_VIEW};
use std::collections::BTreeMap;

/// Expected (value, max contributor event time) per group.
pub type GroupExpectation = BTreeMap<(u64, u64), (u64, u64)>;

fn campaign_of(ad: u64, num_campaigns: u64) -> u64 {
    ad % num_campaigns
}

/// SWA ground truth: count of all events per window, single key 0, with
/// the per-window max event time.
pub fn swa_oracle(logs: &[Vec<LoggedEvent>], window_ms: u64) -> GroupExpectation {
    let mut out = GroupExpectation::new();
    for e in logs.iter().flatten() {
        let w = e.event_time / window_ms;
        let entry = out.entry((w, 0)).or_insert((0, 0));
        entry.0 += 1;
        entry.1 = entry.1.max(e.event_time);
    }
    out
}

/// YSB ground truth: per (window, campaign) count of view events, with
/// the group's max event time.
pub fn ysb_oracle(
    logs: &[Vec<LoggedEvent>],
    window_ms: u64,
    num_campaigns: u64,
) -> GroupExpectation {
    let mut out = GroupExpectation::new();
    for e in logs.iter().flatten() {
        if e.etype != EVENT_TYPE_VIEW {
            continue;
        }
        let w = e.event_time / window_ms;
        let c = campaign_of(e.key, num_campaigns);
        let entry = out.entry((w, c)).or_insert((0, 0));
        entry.0 += 1;
        entry.1 = entry.1.max(e.event_time);
    }
    out
}

/// YSB* ground truth: per (window, campaign) click/view ratio in
/// micro-units, `floor(10^6 * clicks / views)`. Groups lacking either side
/// (or with zero views) produce no row, matching inner-join semantics.
pub fn ysb_star_oracle(
    logs: &[Vec<LoggedEvent>],
    window_ms: u64,
    num_campaigns: u64,
) -> GroupExpectation {
    let mut clicks: BTreeMap<(u64, u64), (u64, u64)> = BTreeMap::new();
    let mut views: BTreeMap<(u64, u64), (u64, u64)> = BTreeMap::new();
    for e in logs.iter().flatten() {
        let side = match e.etype {
            t if t == EVENT_TYPE_CLICK => &mut clicks,
            t if t == EVENT_TYPE_VIEW => &mut views,
            _ => continue,
        };
        let w = e.event_time / window_ms;
        let c = campaign_of(e.key, num_campaigns);
        let entry = side.entry((w, c)).or_insert((0, 0));
        entry.0 += 1;
        entry.1 = entry.1.max(e.event_time);
    }
    let mut out = GroupExpectation::new();
    for (group, (click_count, click_max)) in clicks {
        if let Some((view_count, view_max)) = views.get(&group) {
            if *view_count == 0 {
                continue;
            }
            let ratio = click_count * 1_000_000 / view_count;
            out.insert(group, (ratio, click_max.max(*view_max)));
        }
    }
    out
}

/// Flattens sink records into the same keyed map the oracles produce.
pub fn records_as_groups(records: &[rill_core::bench::WindowResultRecord]) -> GroupExpectation {
    let mut out = GroupExpectation::new();
    for r in records {
        let previous = out.insert((r.window_id, r.key), (r.value, r.event_time_ms));
        assert!(
            previous.is_none(),
            "(window {}, key {}) appeared more than once in sink output",
            r.window_id,
            r.key
        );
    }
    out
}
