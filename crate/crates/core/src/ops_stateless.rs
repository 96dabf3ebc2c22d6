//! One-to-one transformation operators: Map, Filter, Split, StaticJoin.
//!
//! Stateless operators process each event independently, keep no window
//! context, and forward timestamps untouched. Their only bookkeeping is the
//! marker barrier: a vertex can declare window `w` finished on its outgoing
//! channels only once every incoming channel has declared it, so each
//! stateless vertex forwards one marker per window — after the last
//! incoming marker for that window arrives. A terminated channel counts as
//! marked for every window.

use crate::event::Event;
use crate::metrics::VertexMetrics;
use crate::runtime::operator::{EndpointId, OpError, Operator, Router, StepOutputs};
use crate::runtime::topology::{MapFunction, Predicate, TableSource};
use parking_lot::Mutex;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use thiserror::Error;

/// Marker bookkeeping shared by all stateless operators.
pub struct MarkerBarrier {
    endpoints: usize,
    state: Mutex<BarrierState>,
}

#[derive(Default)]
struct BarrierState {
    /// window -> endpoints that marked it.
    pending: BTreeMap<u64, Vec<bool>>,
    closed: Vec<bool>,
    closed_count: usize,
    forwarded: HashSet<u64>,
}

pub enum MarkerOutcome {
    /// Not all channels have marked the window yet.
    Pending,
    /// This call completed the window; forward one marker.
    Complete,
    /// The (endpoint, window) pair was already marked.
    Duplicate,
}

impl MarkerBarrier {
    pub fn new(endpoints: usize) -> Self {
        MarkerBarrier {
            endpoints,
            state: Mutex::new(BarrierState {
                pending: BTreeMap::new(),
                closed: vec![false; endpoints],
                closed_count: 0,
                forwarded: HashSet::new(),
            }),
        }
    }

    fn complete(&self, marks: &[bool], closed: &[bool]) -> bool {
        marks
            .iter()
            .zip(closed)
            .all(|(&marked, &closed)| marked || closed)
    }

    pub fn on_marker(&self, endpoint: usize, window: u64) -> MarkerOutcome {
        let mut st = self.state.lock();
        if st.forwarded.contains(&window) {
            return MarkerOutcome::Duplicate;
        }
        let marks = st
            .pending
            .entry(window)
            .or_insert_with(|| vec![false; self.endpoints]);
        if marks[endpoint] {
            return MarkerOutcome::Duplicate;
        }
        marks[endpoint] = true;
        let done = {
            let marks = &st.pending[&window];
            self.complete(marks, &st.closed)
        };
        if done {
            st.pending.remove(&window);
            st.forwarded.insert(window);
            MarkerOutcome::Complete
        } else {
            MarkerOutcome::Pending
        }
    }

    /// Closes one endpoint and returns the windows that completed because
    /// of it, in ascending order.
    pub fn on_close(&self, endpoint: usize) -> Vec<u64> {
        let mut st = self.state.lock();
        if !st.closed[endpoint] {
            st.closed[endpoint] = true;
            st.closed_count += 1;
        }
        let closed = st.closed.clone();
        let mut done = Vec::new();
        st.pending.retain(|&window, marks| {
            if marks
                .iter()
                .zip(&closed)
                .all(|(&marked, &closed)| marked || closed)
            {
                done.push(window);
                false
            } else {
                true
            }
        });
        for &w in &done {
            st.forwarded.insert(w);
        }
        done
    }
}

/// Applies `f` to every event's value and shards the result.
pub struct MapOp {
    function: MapFunction,
    router: Router,
    barrier: MarkerBarrier,
}

impl MapOp {
    pub fn new(function: MapFunction, router: Router, endpoints: usize) -> Self {
        MapOp {
            function,
            barrier: MarkerBarrier::new(endpoints),
            router,
        }
    }
}

fn forward_barrier(
    barrier: &MarkerBarrier,
    input: EndpointId,
    window: u64,
    out: &mut StepOutputs,
    metrics: Option<&VertexMetrics>,
) {
    match barrier.on_marker(input.flat, window) {
        MarkerOutcome::Complete => out.broadcast_marker(window),
        MarkerOutcome::Pending => {}
        MarkerOutcome::Duplicate => {
            if let Some(m) = metrics {
                m.duplicate_markers.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

fn close_barrier(barrier: &MarkerBarrier, input: EndpointId, out: &mut StepOutputs) {
    for window in barrier.on_close(input.flat) {
        out.broadcast_marker(window);
    }
}

impl Operator for MapOp {
    fn on_data(
        &self,
        _input: EndpointId,
        events: Vec<Event>,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        for mut event in events {
            event.value = self.function.apply(event.value);
            let slot = self.router.slot(&event);
            out.emit(slot, event);
        }
        Ok(())
    }

    fn on_marker(
        &self,
        input: EndpointId,
        window: u64,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        forward_barrier(&self.barrier, input, window, out, None);
        Ok(())
    }

    fn on_endpoint_closed(&self, input: EndpointId, out: &mut StepOutputs) -> Result<(), OpError> {
        close_barrier(&self.barrier, input, out);
        Ok(())
    }
}

/// Drops events failing the predicate; passing events route like Map's.
pub struct FilterOp {
    predicate: Predicate,
    router: Router,
    barrier: MarkerBarrier,
}

impl FilterOp {
    pub fn new(predicate: Predicate, router: Router, endpoints: usize) -> Self {
        FilterOp {
            predicate,
            barrier: MarkerBarrier::new(endpoints),
            router,
        }
    }
}

impl Operator for FilterOp {
    fn on_data(
        &self,
        _input: EndpointId,
        events: Vec<Event>,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        for event in events {
            if self.predicate.matches(&event) {
                let slot = self.router.slot(&event);
                out.emit(slot, event);
            }
        }
        Ok(())
    }

    fn on_marker(
        &self,
        input: EndpointId,
        window: u64,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        forward_barrier(&self.barrier, input, window, out, None);
        Ok(())
    }

    fn on_endpoint_closed(&self, input: EndpointId, out: &mut StepOutputs) -> Result<(), OpError> {
        close_barrier(&self.barrier, input, out);
        Ok(())
    }
}

/// Routes each event to the branch of its first matching condition:
/// slot `condition_index * world_size + value % world_size`. Events
/// matching no condition are dropped and counted; events matching several
/// go to the first match and are counted.
pub struct SplitOp {
    conditions: Vec<Predicate>,
    router: Router,
    barrier: MarkerBarrier,
    metrics: Arc<VertexMetrics>,
}

impl SplitOp {
    pub fn new(
        conditions: Vec<Predicate>,
        router: Router,
        endpoints: usize,
        metrics: Arc<VertexMetrics>,
    ) -> Self {
        SplitOp {
            conditions,
            barrier: MarkerBarrier::new(endpoints),
            router,
            metrics,
        }
    }
}

impl Operator for SplitOp {
    fn on_data(
        &self,
        _input: EndpointId,
        events: Vec<Event>,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        for event in events {
            let mut matches = self
                .conditions
                .iter()
                .enumerate()
                .filter(|(_, c)| c.matches(&event))
                .map(|(i, _)| i);
            match matches.next() {
                Some(first) => {
                    if matches.next().is_some() {
                        self.metrics.op_errors.fetch_add(1, Ordering::Relaxed);
                    }
                    let slot = self.router.split_slot(first, &event);
                    out.emit(slot, event);
                }
                None => {
                    self.metrics.dropped.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        Ok(())
    }

    fn on_marker(
        &self,
        input: EndpointId,
        window: u64,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        forward_barrier(&self.barrier, input, window, out, Some(&self.metrics));
        Ok(())
    }

    fn on_endpoint_closed(&self, input: EndpointId, out: &mut StepOutputs) -> Result<(), OpError> {
        close_barrier(&self.barrier, input, out);
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("static table i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("static table line {line}: expected `key,value`, got `{text}`")]
    Malformed { line: usize, text: String },
}

/// An immutable key -> value map shared by all ranks.
#[derive(Debug, Clone, Default)]
pub struct StaticTable {
    map: HashMap<u64, u64>,
}

impl StaticTable {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        StaticTable {
            map: pairs.into_iter().collect(),
        }
    }

    /// The benchmark ad table: ad `i` joins to campaign `i % num_campaigns`.
    pub fn ads_to_campaigns(num_campaigns: u64, ads_per_campaign: u64) -> Self {
        let num_ads = num_campaigns * ads_per_campaign;
        StaticTable::from_pairs((0..num_ads).map(|ad| (ad, ad % num_campaigns)))
    }

    /// Loads a two-column `key,value` CSV. Blank lines and a `key,value`
    /// header are tolerated.
    pub fn from_csv(path: &std::path::Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path)?;
        let mut map = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.eq_ignore_ascii_case("key,value")) {
                continue;
            }
            let mut cols = line.splitn(2, ',');
            let parse = |s: Option<&str>| -> Option<u64> { s?.trim().parse().ok() };
            match (parse(cols.next()), parse(cols.next())) {
                (Some(k), Some(v)) => {
                    map.insert(k, v);
                }
                _ => {
                    return Err(TableError::Malformed {
                        line: idx + 1,
                        text: line.to_string(),
                    })
                }
            }
        }
        Ok(StaticTable { map })
    }

    pub fn from_source(source: &TableSource) -> Result<Self, TableError> {
        match source {
            TableSource::Inline(pairs) => Ok(StaticTable::from_pairs(pairs.iter().copied())),
            TableSource::Csv(path) => StaticTable::from_csv(std::path::Path::new(path)),
            TableSource::AdsToCampaigns {
                num_campaigns,
                ads_per_campaign,
            } => Ok(StaticTable::ads_to_campaigns(*num_campaigns, *ads_per_campaign)),
        }
    }

    pub fn get(&self, key: u64) -> Option<u64> {
        self.map.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Joins each event against the static table, replacing the key with the
/// joined value (ad id -> campaign id). Unmatched keys are dropped and
/// counted.
pub struct StaticJoinOp {
    table: Arc<StaticTable>,
    router: Router,
    barrier: MarkerBarrier,
    metrics: Arc<VertexMetrics>,
}

impl StaticJoinOp {
    pub fn new(
        table: Arc<StaticTable>,
        router: Router,
        endpoints: usize,
        metrics: Arc<VertexMetrics>,
    ) -> Self {
        StaticJoinOp {
            table,
            barrier: MarkerBarrier::new(endpoints),
            router,
            metrics,
        }
    }
}

impl Operator for StaticJoinOp {
    fn on_data(
        &self,
        _input: EndpointId,
        events: Vec<Event>,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        for mut event in events {
            match self.table.get(event.key) {
                Some(joined) => {
                    event.key = joined;
                    let slot = self.router.slot(&event);
                    out.emit(slot, event);
                }
                None => {
                    self.metrics.dropped.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        Ok(())
    }

    fn on_marker(
        &self,
        input: EndpointId,
        window: u64,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        forward_barrier(&self.barrier, input, window, out, Some(&self.metrics));
        Ok(())
    }

    fn on_endpoint_closed(&self, input: EndpointId, out: &mut StepOutputs) -> Result<(), OpError> {
        close_barrier(&self.barrier, input, out);
        Ok(())
    }
}
