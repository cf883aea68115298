//! Asynchronous SIR epidemic on a network.
//!
//! One sweep makes `N` uniform picks with replacement. A picked susceptible
//! agent becomes infectious with probability `min(1, lambda * n_I * dt)`,
//! where `n_I` counts its infectious neighbors at that moment; a picked
//! infectious agent recovers with probability `min(1, mu * dt)`. Each sweep
//! advances time by `dt`, and the run stops when nobody is infectious.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::som::CellAssignment;
use crate::trace::{SimKind, SimTrace, Snapshot};
use crate::{seeded_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Health {
    Susceptible,
    Infectious,
    Removed,
}

impl Health {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirParams {
    pub lambda: f64,
    pub mu: f64,
    pub dt: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        SirParams {
            lambda: 0.2,
            mu: 1.0,
            dt: 0.01,
        }
    }
}

impl SirParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu must be > 0 for the epidemic to end, got {}",
                self.mu
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirState {
    health: Vec<Health>,
    infectious_neighbors: Vec<u32>,
    counts: [usize; 3],
    sweeps: u64,
}

impl SirState {
    /// Everyone susceptible except `infected`.
    pub fn with_infected(graph: &Graph, infected: &[usize]) -> Result<Self> {
        let n = graph.node_count();
        let mut state = SirState {
            health: vec![Health::Susceptible; n],
            infectious_neighbors: vec![0; n],
            counts: [n, 0, 0],
            sweeps: 0,
        };
        for &node in infected {
            if node >= n {
                return Err(Error::NodeOutOfRange {
                    id: node,
                    node_count: n,
                });
            }
            if state.health[node] == Health::Susceptible {
                state.set(graph, node, Health::Infectious);
            }
        }
        Ok(state)
    }

    pub fn health(&self) -> &[Health] {
        &self.health
    }

    /// `(S, I, R)` counts.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn infectious(&self) -> usize {
        self.counts[1]
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.sweeps as f64 * dt
    }

    /// Infectious neighbors of `node` right now.
    pub fn infectious_neighbors(&self, node: usize) -> u32 {
        self.infectious_neighbors[node]
    }

    fn set(&mut self, graph: &Graph, node: usize, next: Health) {
        let prev = self.health[node];
        if prev == next {
            return;
        }
        if prev == Health::Infectious {
            for &j in graph.neighbors(node) {
                self.infectious_neighbors[j] -= 1;
            }
        }
        if next == Health::Infectious {
            for &j in graph.neighbors(node) {
                self.infectious_neighbors[j] += 1;
            }
        }
        self.counts[prev.index()] -= 1;
        self.counts[next.index()] += 1;
        self.health[node] = next;
    }

    /// Applies the transition rule to one picked agent.
    pub fn visit(&mut self, graph: &Graph, node: usize, params: &SirParams, rng: &mut SimRng) {
        match self.health[node] {
            Health::Susceptible => {
                let n_i = self.infectious_neighbors[node];
                if n_i == 0 {
                    return;
                }
                let p = (params.lambda * n_i as f64 * params.dt).min(1.0);
                if rng.gen::<f64>() < p {
                    self.set(graph, node, Health::Infectious);
                }
            }
            Health::Infectious => {
                let p = (params.mu * params.dt).min(1.0);
                if rng.gen::<f64>() < p {
                    self.set(graph, node, Health::Removed);
                }
            }
            Health::Removed => {}
        }
    }

    fn cell_counts(&self, assignment: &CellAssignment) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; 3]; assignment.cell_count()];
        for (h, &cell) in self.health.iter().zip(&assignment.cells) {
            counts[cell][h.index()] += 1;
        }
        counts
    }
}

/// Infects `n_initial` distinct agents drawn uniformly without replacement.
pub fn init_sir(graph: &Graph, n_initial: usize, rng: &mut SimRng) -> Result<SirState> {
    let n = graph.node_count();
    if n_initial < 1 || n_initial > n {
        return Err(Error::InvalidParameter(format!(
            "initial infected count {n_initial} outside [1, {n}]"
        )));
    }
    let mut chosen = sample(rng, n, n_initial).into_vec();
    chosen.sort_unstable();
    SirState::with_infected(graph, &chosen)
}

/// One sweep: `N` picks with replacement, then `t += dt`.
pub fn step_sir(state: &mut SirState, graph: &Graph, params: &SirParams, rng: &mut SimRng) {
    let n = graph.node_count();
    for _ in 0..n {
        let node = rng.gen_range(0..n);
        state.visit(graph, node, params, rng);
    }
    state.sweeps += 1;
}

/// Which instants to record in a trace. The initial and terminal states are
/// not implied; the terminal snapshot is always added by the runner.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotTimes {
    /// `0, step, 2*step, ...` until the run ends.
    Every(f64),
    /// Explicit sorted times; those after the run ends are dropped.
    At(Vec<f64>),
}

impl SnapshotTimes {
    /// First sweep index whose time is at or after each requested instant.
    fn due_sweep(time: f64, dt: f64) -> u64 {
        let s = time / dt;
        // Absorb representation error so 0.5 / 0.01 lands on sweep 50.
        (s - 1e-9 * s.abs().max(1.0)).ceil().max(0.0) as u64
    }

    pub(crate) fn schedule(&self, dt: f64) -> Result<Box<dyn Iterator<Item = u64> + '_>> {
        match self {
            SnapshotTimes::Every(step) => {
                if !(*step > 0.0 && step.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "snapshot interval must be > 0, got {step}"
                    )));
                }
                Ok(Box::new(
                    (0u64..).map(move |j| Self::due_sweep(j as f64 * step, dt)),
                ))
            }
            SnapshotTimes::At(times) => {
                if times.windows(2).any(|w| w[0] > w[1]) || times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "snapshot times must be sorted and finite".into(),
                    ));
                }
                Ok(Box::new(times.iter().map(move |&t| Self::due_sweep(t, dt))))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SirOutcome {
    pub trace: SimTrace,
    pub final_state: SirState,
}

pub fn run_sir(
    graph: &Graph,
    assignment: &CellAssignment,
    params: &SirParams,
    n_initial: usize,
    seed: u64,
    snapshots: &SnapshotTimes,
) -> Result<SimTrace> {
    run_sir_with_state(graph, assignment, params, n_initial, seed, snapshots).map(|o| o.trace)
}

/// Runs until no agent is infectious, recording per-cell `S, I, R` counts at
/// the requested times and at termination.
pub fn run_sir_with_state(
    graph: &Graph,
    assignment: &CellAssignment,
    params: &SirParams,
    n_initial: usize,
    seed: u64,
    snapshots: &SnapshotTimes,
) -> Result<SirOutcome> {
    params.validate()?;
    if assignment.node_count() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: assignment.node_count(),
        });
    }
    let mut rng = seeded_rng(seed);
    let mut state = init_sir(graph, n_initial, &mut rng)?;
    let mut due = snapshots.schedule(params.dt)?.peekable();

    let mut recorded: Vec<Snapshot> = Vec::new();
    let record = |state: &SirState, recorded: &mut Vec<Snapshot>| {
        if recorded
            .last()
            .is_some_and(|s: &Snapshot| s.time >= state.time(params.dt))
        {
            return;
        }
        recorded.push(Snapshot {
            time: state.time(params.dt),
            counts: state.cell_counts(assignment),
        });
    };

    loop {
        let mut wanted = false;
        while due.peek().is_some_and(|&s| s <= state.sweeps) {
            wanted |= due.next() == Some(state.sweeps);
        }
        if wanted {
            record(&state, &mut recorded);
        }
        if state.infectious() == 0 {
            break;
        }
        step_sir(&mut state, graph, params, &mut rng);
    }
    record(&state, &mut recorded);

    let terminal_time = state.time(params.dt);
    Ok(SirOutcome {
        trace: SimTrace {
            kind: SimKind::Sir,
            width: assignment.width,
            height: assignment.height,
            snapshots: recorded,
            terminal_time: Some(terminal_time),
        },
        final_state: state,
    })
}
