//! Sliding-window operators: Reduce/Aggregation, the windowed equi-join,
//! and the two-stage (local pre-aggregation / global aggregation) pattern.
//!
//! All of them keep two levels of nested hash maps — window id on the
//! outside, event key on the inside — behind one mutex shared by the
//! vertex's processing threads. A window is released at most once: when a
//! marker (or channel termination) has arrived from every incoming channel,
//! the window's keys are finalized, emitted downstream with the release
//! wall-clock stamped into the payload, followed by the operator's own
//! marker for that window, and the window is evicted.
//!
//! An emitted windowed event's `event_time` is the maximum event time of
//! the events that contributed to it, i.e. of its own (window, key) group.

use crate::clock::RunClock;
use crate::event::{Event, WindowSpec};
use crate::metrics::VertexMetrics;
use crate::runtime::operator::{EndpointId, OpError, Operator, Router, StepOutputs};
use crate::runtime::topology::{
    AggKind, AggStage, AggregateParams, JoinFunction, KeySelector, OperatorDescriptor,
    OperatorKind, RoutingStrategy,
};
use parking_lot::Mutex;
use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::Ordering;
use std::sync::Arc;

/// Fixed-point scale for ratio join results: value = floor(10^6 * l / r).
pub const RATIO_MICRO_UNITS: u64 = 1_000_000;

impl AggKind {
    pub fn init(&self) -> u64 {
        0
    }

    /// Folds one raw event value into the running state.
    pub fn combine(&self, state: u64, value: u64) -> u64 {
        match self {
            AggKind::Count => state + 1,
            AggKind::Sum => state.wrapping_add(value),
        }
    }

    /// Merges two partial states; commutative and associative for both
    /// kinds, which is what makes pre-aggregation sound.
    pub fn merge(&self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b)
    }

    pub fn finalize(&self, state: u64) -> u64 {
        state
    }
}

struct KeyState {
    state: u64,
    max_event_time: u64,
}

#[derive(Default)]
struct WindowState {
    keys: BTreeMap<u64, KeyState>,
    marked: Vec<bool>,
}

/// window id -> key -> aggregate state, plus marker and release tracking.
struct WindowStore {
    windows: BTreeMap<u64, WindowState>,
    released: HashSet<u64>,
    closed: Vec<bool>,
    endpoints: usize,
}

impl WindowStore {
    fn new(endpoints: usize) -> Self {
        WindowStore {
            windows: BTreeMap::new(),
            released: HashSet::new(),
            closed: vec![false; endpoints],
            endpoints,
        }
    }

    fn window_mut(&mut self, id: u64) -> &mut WindowState {
        let endpoints = self.endpoints;
        self.windows.entry(id).or_insert_with(|| WindowState {
            keys: BTreeMap::new(),
            marked: vec![false; endpoints],
        })
    }

    fn is_complete(&self, state: &WindowState) -> bool {
        state
            .marked
            .iter()
            .zip(&self.closed)
            .all(|(&m, &c)| m || c)
    }
}

/// Windowed fold shared by Reduce (constant key) and Aggregation (per event
/// key). `Pre` stage instances emit partial states routed by window id;
/// `Global` instances merge partials instead of folding raw values.
pub struct WindowedAggregate {
    function: AggKind,
    key: KeySelector,
    spec: WindowSpec,
    merge_inputs: bool,
    router: Router,
    clock: Arc<RunClock>,
    store: Mutex<WindowStore>,
    metrics: Arc<VertexMetrics>,
}

impl WindowedAggregate {
    pub fn new(
        params: &AggregateParams,
        router: Router,
        endpoints: usize,
        clock: Arc<RunClock>,
        metrics: Arc<VertexMetrics>,
    ) -> Result<Self, OpError> {
        let spec = WindowSpec::new(params.window_ms).map_err(|e| OpError(e.to_string()))?;
        Ok(WindowedAggregate {
            function: params.function,
            key: params.key,
            spec,
            merge_inputs: params.stage == AggStage::Global,
            router,
            clock,
            store: Mutex::new(WindowStore::new(endpoints)),
            metrics,
        })
    }

    fn release(&self, store: &mut WindowStore, window: u64, out: &mut StepOutputs) {
        let state = store.windows.remove(&window).unwrap_or_default();
        store.released.insert(window);
        let release_ms = self.clock.rel_now_ms();
        for (key, ks) in state.keys {
            let event = Event::with_payload(
                key,
                self.function.finalize(ks.state),
                ks.max_event_time,
                release_ms.to_le_bytes().to_vec(),
            );
            let slot = self.router.slot(&event);
            out.emit(slot, event);
        }
        out.broadcast_marker(window);
    }
}

impl Operator for WindowedAggregate {
    fn on_data(
        &self,
        _input: EndpointId,
        events: Vec<Event>,
        _out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        let mut store = self.store.lock();
        for event in events {
            let window = self.spec.window_id(event.event_time);
            if store.released.contains(&window) {
                self.metrics.late.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            let key = self.key.key_of(&event);
            let merge_inputs = self.merge_inputs;
            let function = self.function;
            let ks = store
                .window_mut(window)
                .keys
                .entry(key)
                .or_insert_with(|| KeyState {
                    state: function.init(),
                    max_event_time: 0,
                });
            ks.state = if merge_inputs {
                function.merge(ks.state, event.value)
            } else {
                function.combine(ks.state, event.value)
            };
            ks.max_event_time = ks.max_event_time.max(event.event_time);
        }
        Ok(())
    }

    fn on_marker(
        &self,
        input: EndpointId,
        window: u64,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        let mut store = self.store.lock();
        if store.released.contains(&window) {
            self.metrics.duplicate_markers.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        let state = store.window_mut(window);
        if state.marked[input.flat] {
            self.metrics.duplicate_markers.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        state.marked[input.flat] = true;
        if store.is_complete(&store.windows[&window]) {
            self.release(&mut store, window, out);
        }
        Ok(())
    }

    fn on_endpoint_closed(&self, input: EndpointId, out: &mut StepOutputs) -> Result<(), OpError> {
        let mut store = self.store.lock();
        store.closed[input.flat] = true;
        let ready: Vec<u64> = store
            .windows
            .iter()
            .filter(|(_, state)| store.is_complete(state))
            .map(|(&w, _)| w)
            .collect();
        for window in ready {
            self.release(&mut store, window, out);
        }
        Ok(())
    }
}

struct JoinKeyState {
    left: Option<u64>,
    right: Option<u64>,
    max_event_time: u64,
}

#[derive(Default)]
struct JoinWindowState {
    keys: BTreeMap<u64, JoinKeyState>,
    marked: Vec<bool>,
}

struct JoinStore {
    windows: BTreeMap<u64, JoinWindowState>,
    released: HashSet<u64>,
    closed: Vec<bool>,
    endpoints: usize,
}

impl JoinStore {
    fn is_complete(&self, state: &JoinWindowState) -> bool {
        state
            .marked
            .iter()
            .zip(&self.closed)
            .all(|(&m, &c)| m || c)
    }
}

/// Windowed equi-join of two input streams. Incoming channels are
/// partitioned into left and right by the predecessor they belong to; a
/// window is released only when it is complete on both sides. For the
/// ratio function the emitted value is `floor(10^6 * left / right)`;
/// keys present on one side only and pairs with a zero divisor produce no
/// output and are counted.
pub struct WindowedJoin {
    spec: WindowSpec,
    function: JoinFunction,
    router: Router,
    clock: Arc<RunClock>,
    store: Mutex<JoinStore>,
    metrics: Arc<VertexMetrics>,
}

impl WindowedJoin {
    pub fn new(
        window_ms: u64,
        function: JoinFunction,
        router: Router,
        endpoints: usize,
        clock: Arc<RunClock>,
        metrics: Arc<VertexMetrics>,
    ) -> Result<Self, OpError> {
        let spec = WindowSpec::new(window_ms).map_err(|e| OpError(e.to_string()))?;
        Ok(WindowedJoin {
            spec,
            function,
            router,
            clock,
            store: Mutex::new(JoinStore {
                windows: BTreeMap::new(),
                released: HashSet::new(),
                closed: vec![false; endpoints],
                endpoints,
            }),
            metrics,
        })
    }

    fn release(&self, store: &mut JoinStore, window: u64, out: &mut StepOutputs) {
        let state = store.windows.remove(&window).unwrap_or_default();
        store.released.insert(window);
        let release_ms = self.clock.rel_now_ms();
        for (key, ks) in state.keys {
            let value = match (ks.left, ks.right) {
                (Some(l), Some(r)) => match self.function {
                    JoinFunction::RatioMicros => {
                        if r == 0 {
                            self.metrics.dropped.fetch_add(1, Ordering::Relaxed);
                            continue;
                        }
                        l.saturating_mul(RATIO_MICRO_UNITS) / r
                    }
                },
                // Inner join: a key on one side only yields nothing.
                _ => {
                    self.metrics.dropped.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
            };
            let event = Event::with_payload(
                key,
                value,
                ks.max_event_time,
                release_ms.to_le_bytes().to_vec(),
            );
            let slot = self.router.slot(&event);
            out.emit(slot, event);
        }
        out.broadcast_marker(window);
    }
}

impl Operator for WindowedJoin {
    fn on_data(
        &self,
        input: EndpointId,
        events: Vec<Event>,
        _out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        let is_left = input.predecessor_index == 0;
        let mut store = self.store.lock();
        for event in events {
            let window = self.spec.window_id(event.event_time);
            if store.released.contains(&window) {
                self.metrics.late.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            let endpoints = store.endpoints;
            let state = store.windows.entry(window).or_insert_with(|| JoinWindowState {
                keys: BTreeMap::new(),
                marked: vec![false; endpoints],
            });
            let ks = state.keys.entry(event.key).or_insert_with(|| JoinKeyState {
                left: None,
                right: None,
                max_event_time: 0,
            });
            let side = if is_left { &mut ks.left } else { &mut ks.right };
            *side = Some(side.unwrap_or(0).wrapping_add(event.value));
            ks.max_event_time = ks.max_event_time.max(event.event_time);
        }
        Ok(())
    }

    fn on_marker(
        &self,
        input: EndpointId,
        window: u64,
        out: &mut StepOutputs,
    ) -> Result<(), OpError> {
        let mut store = self.store.lock();
        if store.released.contains(&window) {
            self.metrics.duplicate_markers.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        let endpoints = store.endpoints;
        let state = store.windows.entry(window).or_insert_with(|| JoinWindowState {
            keys: BTreeMap::new(),
            marked: vec![false; endpoints],
        });
        if state.marked[input.flat] {
            self.metrics.duplicate_markers.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        state.marked[input.flat] = true;
        if store.is_complete(&store.windows[&window]) {
            self.release(&mut store, window, out);
        }
        Ok(())
    }

    fn on_endpoint_closed(&self, input: EndpointId, out: &mut StepOutputs) -> Result<(), OpError> {
        let mut store = self.store.lock();
        store.closed[input.flat] = true;
        let ready: Vec<u64> = store
            .windows
            .iter()
            .filter(|(_, state)| store.is_complete(state))
            .map(|(&w, _)| w)
            .collect();
        for window in ready {
            self.release(&mut store, window, out);
        }
        Ok(())
    }
}

/// Expands one logical aggregation into its two-stage form: a local
/// pre-aggregator folding whatever arrives at each rank and routing
/// per-window partial states by window id, and a global aggregator merging
/// the partials under window completeness. Only functions with a merge
/// step qualify; both built-in kinds (count, sum) do.
pub fn preaggregate_then_global(
    agg_op_id: u8,
    global_op_id: u8,
    params: AggregateParams,
    downstream_routing: RoutingStrategy,
) -> (OperatorDescriptor, OperatorDescriptor) {
    let pre = OperatorDescriptor {
        op_id: agg_op_id,
        kind: OperatorKind::Aggregate(AggregateParams {
            stage: AggStage::Pre,
            ..params
        }),
        predecessors: vec![],
        successors: vec![global_op_id],
        pipelined: false,
        routing: RoutingStrategy::ShardByWindow {
            window_ms: params.window_ms,
        },
    };
    let global = OperatorDescriptor {
        op_id: global_op_id,
        kind: OperatorKind::Aggregate(AggregateParams {
            stage: AggStage::Global,
            ..params
        }),
        predecessors: vec![agg_op_id],
        successors: vec![],
        pipelined: false,
        routing: downstream_routing,
    };
    (pre, global)
}
