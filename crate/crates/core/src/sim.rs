//! Per-timestep runtime estimation.
//!
//! A timestep costs `T = T_a + T_c (+ T_io)` per rank and the step finishes
//! when the slowest rank does, so the estimate is the max over ranks of the
//! per-rank sums. `T_a` comes from a saturating per-rank performance curve,
//! `T_c` from a latency-bandwidth message model over the gather-scatter
//! plan, and `T_io` from node filesystem bandwidth, amortized over the
//! output interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::mesh::{CommPlan, MeshError};
use crate::model::{classify_domain, ModelError, OperationDomain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("performance curve invalid: {0}")]
    InvalidCurve(String),
    #[error("network parameters invalid: {0}")]
    InvalidNetwork(String),
    #[error("I/O parameters invalid: {0}")]
    InvalidIo(String),
    #[error("rank vectors disagree: {0}")]
    InconsistentRanks(String),
    #[error("I/O is disabled in this configuration")]
    IoDisabled,
    #[error("node {0} has zero I/O bandwidth")]
    ZeroBandwidth(usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Saturating per-rank performance curve
/// `P(c) = p_opt * c / (c + eff_half_load)`.
///
/// `eff_half_load` is the load at which efficiency is 50%; zero makes the
/// curve flat at `p_opt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfCurve {
    pub p_opt: f64,
    pub eff_half_load: f64,
}

impl PerfCurve {
    pub fn new(p_opt: f64, eff_half_load: f64) -> Result<Self, SimError> {
        if !(p_opt > 0.0) || !p_opt.is_finite() {
            return Err(SimError::InvalidCurve(format!(
                "p_opt must be positive and finite, got {p_opt}"
            )));
        }
        if eff_half_load < 0.0 || !eff_half_load.is_finite() {
            return Err(SimError::InvalidCurve(format!(
                "eff_half_load must be non-negative, got {eff_half_load}"
            )));
        }
        Ok(Self {
            p_opt,
            eff_half_load,
        })
    }

    pub fn flat(p_opt: f64) -> Result<Self, SimError> {
        Self::new(p_opt, 0.0)
    }

    /// Achieved performance at the given load; never above `p_opt`.
    pub fn performance(&self, load: f64) -> f64 {
        if self.eff_half_load == 0.0 {
            self.p_opt
        } else {
            self.p_opt * load / (load + self.eff_half_load)
        }
    }
}

/// Arithmetic time for a rank holding `load` elements: `load / P(load)`,
/// which reduces to `(load + eff_half_load) / p_opt`. Zero load costs
/// nothing.
pub fn estimate_ta(load: f64, curve: &PerfCurve) -> f64 {
    if load <= 0.0 {
        0.0
    } else {
        (load + curve.eff_half_load) / curve.p_opt
    }
}

/// Latency-bandwidth communication model: each gather-scatter invocation
/// costs `alpha + beta * points` per neighbor message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Seconds per message.
    pub alpha: f64,
    /// Seconds per exchanged point.
    pub beta: f64,
    /// Gather-scatter invocations per timestep.
    pub gs_rounds_per_step: u32,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(SimError::InvalidNetwork("alpha must be >= 0".to_string()));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(SimError::InvalidNetwork("beta must be >= 0".to_string()));
        }
        Ok(())
    }

    pub fn zero() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gs_rounds_per_step: 0,
        }
    }
}

/// Communication time of one rank per timestep.
pub fn estimate_tc(plan: &CommPlan, rank: usize, net: &NetworkParams) -> Result<f64, SimError> {
    let msgs = plan.messages(rank)?;
    // Fold from +0.0; an empty iterator's sum() is -0.0.
    let per_round = msgs
        .iter()
        .map(|(_, points)| net.alpha + net.beta * *points as f64)
        .fold(0.0, |acc, t| acc + t);
    Ok(net.gs_rounds_per_step as f64 * per_round)
}

/// Output-phase parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoParams {
    pub enabled: bool,
    /// Bytes written per grid point.
    pub bytes_per_point: f64,
    /// Default node-to-filesystem bandwidth in GB/s, used for nodes whose
    /// module does not specify one.
    pub node_io_bw: f64,
    /// Write every this many timesteps.
    pub output_every: u32,
}

impl IoParams {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            bytes_per_point: 32.0,
            node_io_bw: 2.0,
            output_every: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.bytes_per_point < 0.0 || !self.bytes_per_point.is_finite() {
            return Err(SimError::InvalidIo("bytes_per_point must be >= 0".to_string()));
        }
        if self.node_io_bw < 0.0 {
            return Err(SimError::InvalidIo("node_io_bw must be >= 0".to_string()));
        }
        if self.output_every == 0 {
            return Err(SimError::InvalidIo("output_every must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Per-rank context for timestep estimation: which curve and node each rank
/// uses, plus run-level parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEnv {
    /// Performance curve per rank.
    pub curves: Vec<PerfCurve>,
    /// Node index per rank.
    pub node_of: Vec<usize>,
    /// Filesystem bandwidth per node in GB/s.
    pub node_bw: Vec<f64>,
    pub net: NetworkParams,
    pub io: IoParams,
    /// Grid points written per element (`N^3`).
    pub points_per_element: f64,
    /// Combined effective capacity of all selected devices, in elements;
    /// may be infinite.
    pub cap_total: f64,
    pub extreme_fill_ratio: f64,
}

/// Per-rank phase times and the max-over-ranks total for one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepEstimate {
    pub t_a: Vec<f64>,
    pub t_c: Vec<f64>,
    pub t_io: Vec<f64>,
    pub t_a_max: f64,
    pub t_c_max: f64,
    pub t_io_max: f64,
    /// `max_r (t_a + t_c + t_io)`, seconds.
    pub total: f64,
    pub dominant_rank: usize,
    pub domain: OperationDomain,
}

/// Estimate one timestep for the given per-rank element loads.
///
/// Loads may be fractional (continuous allocations round-trip exactly).
/// Without a communication plan all `t_c` are zero. The operation domain is
/// classified from the max arithmetic vs max communication time and the
/// aggregate capacity fill.
pub fn estimate_timestep(
    loads: &[f64],
    plan: Option<&CommPlan>,
    env: &SimEnv,
) -> Result<TimestepEstimate, SimError> {
    let n = loads.len();
    if env.curves.len() != n || env.node_of.len() != n {
        return Err(SimError::InconsistentRanks(format!(
            "{} loads, {} curves, {} node entries",
            n,
            env.curves.len(),
            env.node_of.len()
        )));
    }
    if let Some(p) = plan {
        if p.n_ranks() != n {
            return Err(SimError::InconsistentRanks(format!(
                "{} loads but plan covers {} ranks",
                n,
                p.n_ranks()
            )));
        }
    }
    env.net.validate()?;
    env.io.validate()?;

    let t_a: Vec<f64> = loads
        .iter()
        .zip(&env.curves)
        .map(|(l, c)| estimate_ta(*l, c))
        .collect();
    let t_c: Vec<f64> = match plan {
        Some(p) => (0..n)
            .map(|r| estimate_tc(p, r, &env.net))
            .collect::<Result<_, _>>()?,
        None => vec![0.0; n],
    };
    let t_io: Vec<f64> = if env.io.enabled {
        let phase = io_phase(loads, env)?;
        loads
            .iter()
            .enumerate()
            .map(|(r, _)| phase.node_seconds[env.node_of[r]] / env.io.output_every as f64)
            .collect()
    } else {
        vec![0.0; n]
    };

    let mut total = 0.0_f64;
    let mut dominant_rank = 0;
    for r in 0..n {
        let sum = t_a[r] + t_c[r] + t_io[r];
        if sum > total {
            total = sum;
            dominant_rank = r;
        }
    }
    let t_a_max = t_a.iter().copied().fold(0.0, f64::max);
    let t_c_max = t_c.iter().copied().fold(0.0, f64::max);
    let t_io_max = t_io.iter().copied().fold(0.0, f64::max);
    let cost: f64 = loads.iter().sum();
    let domain = classify_domain(t_a_max, t_c_max, cost, env.cap_total, env.extreme_fill_ratio)?;

    Ok(TimestepEstimate {
        t_a,
        t_c,
        t_io,
        t_a_max,
        t_c_max,
        t_io_max,
        total,
        dominant_rank,
        domain,
    })
}

/// Per-node output phase.
#[derive(Debug, Clone, PartialEq)]
pub struct IoPhase {
    /// Seconds each node spends writing one output.
    pub node_seconds: Vec<f64>,
    /// Elements per node.
    pub node_elements: Vec<f64>,
    /// `max / min` of the per-node write times; 1.0 when balanced, infinite
    /// when some node writes and another does not.
    pub imbalance: f64,
}

/// Write time per node for one output step: the node's share of grid points
/// times `bytes_per_point`, divided by its filesystem bandwidth.
pub fn io_phase(loads: &[f64], env: &SimEnv) -> Result<IoPhase, SimError> {
    if !env.io.enabled {
        return Err(SimError::IoDisabled);
    }
    if env.node_of.len() != loads.len() {
        return Err(SimError::InconsistentRanks(format!(
            "{} loads, {} node entries",
            loads.len(),
            env.node_of.len()
        )));
    }
    let n_nodes = env.node_bw.len();
    let mut node_elements = vec![0.0_f64; n_nodes];
    for (r, load) in loads.iter().enumerate() {
        let node = env.node_of[r];
        if node >= n_nodes {
            return Err(SimError::InconsistentRanks(format!(
                "rank {r} maps to node {node}, only {n_nodes} nodes"
            )));
        }
        node_elements[node] += load;
    }
    let mut node_seconds = Vec::with_capacity(n_nodes);
    for (node, els) in node_elements.iter().enumerate() {
        let mut bw = env.node_bw[node];
        if bw <= 0.0 {
            bw = env.io.node_io_bw;
        }
        if bw <= 0.0 {
            return Err(SimError::ZeroBandwidth(node));
        }
        let gigabytes = els * env.points_per_element * env.io.bytes_per_point / 1e9;
        node_seconds.push(gigabytes / bw);
    }
    let max = node_seconds.iter().copied().fold(0.0, f64::max);
    let min = node_seconds.iter().copied().fold(f64::INFINITY, f64::min);
    let imbalance = if max == 0.0 {
        1.0
    } else if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    };
    Ok(IoPhase {
        node_seconds,
        node_elements,
        imbalance,
    })
}

/// Normal-population 95% band over timestep samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ci95 {
    pub mean: f64,
    /// `1.96 * population standard deviation`: the spread of individual
    /// timesteps, not the standard error of the mean.
    pub half_width: f64,
}

pub fn ci95(samples: &[f64]) -> Result<Ci95, SimError> {
    if samples.len() < 2 {
        return Err(SimError::TooFewSamples(samples.len()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(Ci95 {
        mean,
        half_width: 1.96 * var.sqrt(),
    })
}

/// Seed-reproducible pseudo-random samples around an estimated timestep:
/// `total * (1 + rel_sigma * z)` with standard-normal `z`.
pub fn jittered_samples(
    estimate: &TimestepEstimate,
    n: usize,
    rel_sigma: f64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            estimate.total * (1.0 + rel_sigma * z)
        })
        .collect()
}
