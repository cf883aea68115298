//! Spatial prisoner's dilemma with synchronous imitate-the-best updating.
//!
//! Each round every agent plays one game with each neighbor and accumulates
//! the payoffs (`C`/`C` = 1, `C`/`D` = 0, `D`/`C` = T, `D`/`D` = eps). Then,
//! simultaneously, each agent copies the strategy of its wealthiest
//! neighbor unless its own payoff is at least as high.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::som::CellAssignment;
use crate::trace::{SimKind, SimTrace, Snapshot};
use crate::{seeded_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Cooperate,
    Defect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdParams {
    /// Temptation to defect, `T`.
    pub temptation: f64,
    /// Mutual-defection payoff, `eps`.
    pub punishment: f64,
}

impl Default for SpdParams {
    fn default() -> Self {
        SpdParams {
            temptation: 1.5,
            punishment: 0.0,
        }
    }
}

impl SpdParams {
    pub fn validate(&self) -> Result<()> {
        let SpdParams {
            temptation: t,
            punishment: eps,
        } = *self;
        if !(t > 1.0 && (0.0..1.0).contains(&eps) && t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "payoffs must satisfy T > 1 > eps >= 0 (got T={t}, eps={eps})"
            )));
        }
        Ok(())
    }

    pub fn payoff(&self, me: Strategy, other: Strategy) -> f64 {
        match (me, other) {
            (Strategy::Cooperate, Strategy::Cooperate) => 1.0,
            (Strategy::Cooperate, Strategy::Defect) => 0.0,
            (Strategy::Defect, Strategy::Cooperate) => self.temptation,
            (Strategy::Defect, Strategy::Defect) => self.punishment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpdInit {
    /// Each agent independently `C` or `D` with probability 1/2.
    #[default]
    Random,
    AllCooperate,
    AllDefect,
}

/// How to choose among several equally wealthy, strictly richer neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestId,
    /// Uniform choice, derived from `(seed, round, node)` so the update stays
    /// independent of processing order.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdState {
    pub strategies: Vec<Strategy>,
    pub round: usize,
    /// Payoffs from the most recent round (all zero before the first).
    pub payoffs: Vec<f64>,
}

impl SpdState {
    pub fn cooperators(&self) -> usize {
        self.strategies
            .iter()
            .filter(|&&s| s == Strategy::Cooperate)
            .count()
    }
}

pub fn init_spd(graph: &Graph, init: SpdInit, rng: &mut SimRng) -> SpdState {
    let n = graph.node_count();
    let strategies = match init {
        SpdInit::Random => (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Strategy::Cooperate
                } else {
                    Strategy::Defect
                }
            })
            .collect(),
        SpdInit::AllCooperate => vec![Strategy::Cooperate; n],
        SpdInit::AllDefect => vec![Strategy::Defect; n],
    };
    SpdState {
        strategies,
        round: 0,
        payoffs: vec![0.0; n],
    }
}

/// Accumulated payoff of every agent against all of its neighbors.
pub fn play_round(graph: &Graph, strategies: &[Strategy], params: &SpdParams) -> Vec<f64> {
    (0..graph.node_count())
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&j| params.payoff(strategies[i], strategies[j]))
                .sum()
        })
        .collect()
}

/// Next strategy of one agent given last round's strategies and payoffs.
pub fn next_strategy(
    graph: &Graph,
    strategies: &[Strategy],
    payoffs: &[f64],
    node: usize,
    tie: TieBreak,
    tie_salt: u64,
) -> Strategy {
    let nbrs = graph.neighbors(node);
    let best = nbrs
        .iter()
        .map(|&j| payoffs[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if nbrs.is_empty() || payoffs[node] >= best {
        return strategies[node];
    }
    match tie {
        // Neighbor lists are sorted, so the first match has the lowest id.
        TieBreak::LowestId => {
            let j = nbrs.iter().copied().find(|&j| payoffs[j] == best).unwrap();
            strategies[j]
        }
        TieBreak::Random => {
            let richest: Vec<usize> = nbrs
                .iter()
                .copied()
                .filter(|&j| payoffs[j] == best)
                .collect();
            let pick = mix64(tie_salt ^ mix64(node as u64)) % richest.len() as u64;
            strategies[richest[pick as usize]]
        }
    }
}

/// Synchronous update of all agents.
pub fn update_strategies(
    graph: &Graph,
    strategies: &[Strategy],
    payoffs: &[f64],
    tie: TieBreak,
    tie_salt: u64,
) -> Vec<Strategy> {
    (0..graph.node_count())
        .map(|i| next_strategy(graph, strategies, payoffs, i, tie, tie_salt))
        .collect()
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdConfig {
    pub params: SpdParams,
    pub init: SpdInit,
    pub tie: TieBreak,
    pub max_rounds: usize,
}

impl Default for SpdConfig {
    fn default() -> Self {
        SpdConfig {
            params: SpdParams::default(),
            init: SpdInit::Random,
            tie: TieBreak::LowestId,
            max_rounds: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpdOutcome {
    pub trace: SimTrace,
    pub final_state: SpdState,
}

pub fn run_spd(
    graph: &Graph,
    assignment: &CellAssignment,
    config: &SpdConfig,
    seed: u64,
) -> Result<SimTrace> {
    run_spd_with_state(graph, assignment, config, seed).map(|o| o.trace)
}

/// Alternates play and update, recording per-cell `C, D` counts every round,
/// until no strategy changes or `max_rounds` is reached.
pub fn run_spd_with_state(
    graph: &Graph,
    assignment: &CellAssignment,
    config: &SpdConfig,
    seed: u64,
) -> Result<SpdOutcome> {
    config.params.validate()?;
    if config.max_rounds < 1 {
        return Err(Error::InvalidParameter("max_rounds must be >= 1".into()));
    }
    if assignment.node_count() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: assignment.node_count(),
        });
    }
    let mut rng = seeded_rng(seed);
    let mut state = init_spd(graph, config.init, &mut rng);
    let tie_seed: u64 = rng.gen();

    let snapshot = |state: &SpdState| Snapshot {
        time: state.round as f64,
        counts: cell_counts(&state.strategies, assignment),
    };
    let mut snapshots = vec![snapshot(&state)];
    let mut terminal_time = None;

    while state.round < config.max_rounds {
        let payoffs = play_round(graph, &state.strategies, &config.params);
        let salt = mix64(tie_seed ^ state.round as u64);
        let next = update_strategies(graph, &state.strategies, &payoffs, config.tie, salt);
        let changed = next != state.strategies;
        state.strategies = next;
        state.payoffs = payoffs;
        state.round += 1;
        snapshots.push(snapshot(&state));
        if !changed {
            terminal_time = Some(state.round as f64);
            break;
        }
    }

    Ok(SpdOutcome {
        trace: SimTrace {
            kind: SimKind::Spd,
            width: assignment.width,
            height: assignment.height,
            snapshots,
            terminal_time,
        },
        final_state: state,
    })
}

fn cell_counts(strategies: &[Strategy], assignment: &CellAssignment) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; 2]; assignment.cell_count()];
    for (s, &cell) in strategies.iter().zip(&assignment.cells) {
        counts[cell][*s as usize] += 1;
    }
    counts
}
