//! Capacity-constrained performance model for heterogeneous device classes.
//!
//! One homogeneous cost `C` (elements advanced per time step) is split
//! across device classes so that the slowest class finishes as early as
//! possible:
//!
//! ```text
//! minimize   max_i  C_i / (count_i * p_opt_i)
//! subject to sum_i C_i = C,   0 <= C_i <= count_i * c_max_i
//! ```
//!
//! [`solve_allocation`] solves this exactly with water-filling: allocate
//! proportionally to aggregate performance, pin any class that overflows its
//! capacity, and re-solve over the remainder. [`brute_force_allocation`] is
//! a grid-search oracle used to cross-check the solver in tests.
//!
//! Cost is measured in element-timesteps and performance in
//! element-timesteps per second per device; capacity is the largest element
//! count a device can hold, usually memory-limited.

use thiserror::Error;

/// Default fraction of total capacity above which a compute-bound run is
/// considered extreme-scaling (half or more of device memory in use).
pub const DEFAULT_EXTREME_FILL_RATIO: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("device class list is empty")]
    NoClasses,
    #[error("cost must be non-negative, got {0}")]
    NegativeCost(f64),
    #[error("device class `{name}`: {reason}")]
    InvalidClass { name: String, reason: String },
    #[error("workload invalid: {0}")]
    InvalidWorkload(String),
    #[error("brute force supports at most {max} classes, got {got}")]
    TooManyClasses { max: usize, got: usize },
    #[error("grid_steps must be at least 10, got {0}")]
    GridTooCoarse(u64),
    #[error("total capacity is zero")]
    ZeroCapacity,
    #[error("no calibration runs provided")]
    NoRuns,
    #[error("calibration run {index} invalid: {reason}")]
    InvalidRun { index: usize, reason: String },
    #[error("weights must match classes: {0} weights for {1} classes")]
    WeightMismatch(usize, usize),
}

/// A category of computing device: one GPU, or one CPU node treated as a
/// single device whose ranks are its cores.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceClass {
    pub name: String,
    /// Best achievable performance per device, element-timesteps/s.
    pub p_opt: f64,
    /// Largest cost one device can hold, in elements. `None` = unbounded.
    pub c_max: Option<f64>,
    /// Memory per device in gigabytes, when known.
    pub mem_per_device: Option<f64>,
    /// Filesystem bandwidth per device in GB/s (0 allowed).
    pub io_bw_per_device: f64,
    /// Number of devices of this class.
    pub count: u64,
}

impl DeviceClass {
    pub fn new(name: impl Into<String>, p_opt: f64, count: u64) -> Self {
        Self {
            name: name.into(),
            p_opt,
            c_max: None,
            mem_per_device: None,
            io_bw_per_device: 0.0,
            count,
        }
    }

    pub fn with_cap(mut self, c_max: f64) -> Self {
        self.c_max = Some(c_max);
        self
    }

    pub fn with_memory(mut self, gigabytes: f64) -> Self {
        self.mem_per_device = Some(gigabytes);
        self
    }

    pub fn with_io_bw(mut self, gb_per_s: f64) -> Self {
        self.io_bw_per_device = gb_per_s;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::InvalidClass {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.p_opt > 0.0) || !self.p_opt.is_finite() {
            return fail("p_opt must be positive and finite");
        }
        if let Some(c) = self.c_max {
            if !(c > 0.0) {
                return fail("c_max must be positive when bounded");
            }
        }
        if self.count < 1 {
            return fail("count must be at least 1");
        }
        if self.io_bw_per_device < 0.0 {
            return fail("io_bw_per_device must be non-negative");
        }
        Ok(())
    }

    /// Derive the capacity from memory: `c_max = floor(mem / mem_per_element)`.
    /// A non-positive `mem_per_element` leaves the class unbounded.
    pub fn derive_cap_from_memory(mut self, mem_per_element: f64) -> Self {
        if let Some(mem) = self.mem_per_device {
            if mem_per_element > 0.0 {
                self.c_max = Some((mem / mem_per_element).floor());
            }
        }
        self
    }

    /// Aggregate performance of the whole class: `count * p_opt`.
    pub fn aggregate_p_opt(&self) -> f64 {
        self.count as f64 * self.p_opt
    }

    /// Total capacity of the whole class; infinite when unbounded.
    pub fn total_cap(&self) -> f64 {
        match self.c_max {
            Some(c) => self.count as f64 * c,
            None => f64::INFINITY,
        }
    }
}

/// A flow case: element count, polynomial order, and per-element resource
/// figures.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub elements: u64,
    pub poly_order: u32,
    /// Gigabytes of memory needed per element.
    pub mem_per_element: f64,
    /// Output bytes written per grid point when I/O is enabled.
    pub bytes_per_point_output: f64,
}

impl Workload {
    pub fn new(elements: u64, poly_order: u32) -> Result<Self, ModelError> {
        if elements == 0 {
            return Err(ModelError::InvalidWorkload(
                "elements must be positive".to_string(),
            ));
        }
        if poly_order == 0 {
            return Err(ModelError::InvalidWorkload(
                "poly_order must be positive".to_string(),
            ));
        }
        Ok(Self {
            elements,
            poly_order,
            mem_per_element: 0.001,
            bytes_per_point_output: 32.0,
        })
    }

    pub fn with_mem_per_element(mut self, gigabytes: f64) -> Self {
        self.mem_per_element = gigabytes;
        self
    }

    pub fn with_bytes_per_point(mut self, bytes: f64) -> Self {
        self.bytes_per_point_output = bytes;
        self
    }

    /// Total unique grid points, `E * N^3`.
    pub fn grid_points(&self) -> u64 {
        self.elements * (self.poly_order as u64).pow(3)
    }

    /// Total cost in cost units (one unit = one element-timestep).
    pub fn total_cost(&self) -> f64 {
        self.elements as f64
    }

    pub fn total_memory_gb(&self) -> f64 {
        self.elements as f64 * self.mem_per_element
    }
}

/// Per-class share of one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAllocation {
    pub name: String,
    /// Total cost assigned to the class.
    pub cost: f64,
    pub cost_per_device: f64,
    /// Pinned at capacity by the solver.
    pub saturated: bool,
}

/// Result of splitting a cost across device classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub classes: Vec<ClassAllocation>,
    /// Modeled lowest possible time per step, seconds.
    pub t_min: f64,
    pub feasible: bool,
}

impl Allocation {
    fn infeasible(classes: &[DeviceClass]) -> Self {
        Self {
            classes: classes
                .iter()
                .map(|c| ClassAllocation {
                    name: c.name.clone(),
                    cost: 0.0,
                    cost_per_device: 0.0,
                    saturated: false,
                })
                .collect(),
            t_min: f64::INFINITY,
            feasible: false,
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.classes.iter().map(|c| c.cost).sum()
    }

    pub fn saturated_names(&self) -> Vec<&str> {
        self.classes
            .iter()
            .filter(|c| c.saturated)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Operating regime of a run, decided by the balance of arithmetic vs
/// communication time and by how full the devices are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperationDomain {
    /// Latency-bound: adding devices cannot help.
    Communication,
    /// Work-bound with capacity to spare.
    Scaling,
    /// Work-bound and close to device capacity; extra modules buy memory
    /// as much as speed.
    ExtremeScaling,
}

impl std::fmt::Display for OperationDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperationDomain::Communication => write!(f, "communication"),
            OperationDomain::Scaling => write!(f, "scaling"),
            OperationDomain::ExtremeScaling => write!(f, "extreme-scaling"),
        }
    }
}

fn validate_classes(classes: &[DeviceClass]) -> Result<(), ModelError> {
    if classes.is_empty() {
        return Err(ModelError::NoClasses);
    }
    for c in classes {
        c.validate()?;
    }
    Ok(())
}

/// Additive lower bound on the time per step: `C / sum_i count_i * p_opt_i`.
///
/// Holds when every class can fit its share; the constrained optimum can
/// only be worse.
pub fn tmin_unconstrained(cost: f64, classes: &[DeviceClass]) -> Result<f64, ModelError> {
    validate_classes(classes)?;
    if cost < 0.0 {
        return Err(ModelError::NegativeCost(cost));
    }
    let p: f64 = classes.iter().map(DeviceClass::aggregate_p_opt).sum();
    Ok(cost / p)
}

/// Exact solver for the capacity-constrained min-max split.
///
/// Water-filling: equalize per-class time at `t = remaining / P_active`,
/// pin every class whose share would exceed its capacity, and repeat on the
/// remainder. Terminates in at most `classes.len()` rounds. Returns
/// `feasible = false` (with zero cost assignment) when the total capacity
/// cannot hold the cost.
pub fn solve_allocation(cost: f64, classes: &[DeviceClass]) -> Result<Allocation, ModelError> {
    validate_classes(classes)?;
    if cost < 0.0 {
        return Err(ModelError::NegativeCost(cost));
    }
    let total_cap: f64 = classes.iter().map(DeviceClass::total_cap).sum();
    if total_cap < cost {
        return Ok(Allocation::infeasible(classes));
    }

    let n = classes.len();
    let mut assigned = vec![0.0_f64; n];
    let mut pinned = vec![false; n];
    let mut remaining = cost;

    loop {
        let p_active: f64 = classes
            .iter()
            .enumerate()
            .filter(|(i, _)| !pinned[*i])
            .map(|(_, c)| c.aggregate_p_opt())
            .sum();
        if p_active == 0.0 {
            // Everything pinned; any residue is floating-point noise from
            // the subtraction chain (feasibility was checked up front).
            break;
        }
        let t = remaining / p_active;
        let mut overflowed = false;
        for (i, c) in classes.iter().enumerate() {
            if pinned[i] {
                continue;
            }
            let want = t * c.aggregate_p_opt();
            let cap = c.total_cap();
            if want > cap {
                assigned[i] = cap;
                pinned[i] = true;
                remaining -= cap;
                overflowed = true;
            }
        }
        if !overflowed {
            for (i, c) in classes.iter().enumerate() {
                if !pinned[i] {
                    assigned[i] = t * c.aggregate_p_opt();
                }
            }
            break;
        }
    }

    Ok(build_allocation(classes, &assigned, &pinned))
}

/// Split a cost proportionally to per-device weights, pinning classes at
/// capacity and redistributing the overflow among the unpinned ones.
///
/// This mirrors how a fixed GPU:CPU element ratio is applied in practice:
/// when the weighted share does not fit in device memory, the device takes
/// as much as it can hold and the rest shifts to the other classes. Unlike
/// [`solve_allocation`] the split follows the given weights, not measured
/// performance.
pub fn weighted_allocation(
    cost: f64,
    classes: &[DeviceClass],
    weight_per_device: &[f64],
) -> Result<Allocation, ModelError> {
    validate_classes(classes)?;
    if cost < 0.0 {
        return Err(ModelError::NegativeCost(cost));
    }
    if weight_per_device.len() != classes.len() {
        return Err(ModelError::WeightMismatch(
            weight_per_device.len(),
            classes.len(),
        ));
    }
    for (c, w) in classes.iter().zip(weight_per_device) {
        if !(*w >= 0.0) {
            return Err(ModelError::InvalidClass {
                name: c.name.clone(),
                reason: "weight must be non-negative".to_string(),
            });
        }
    }
    let total_cap: f64 = classes.iter().map(DeviceClass::total_cap).sum();
    if total_cap < cost {
        return Ok(Allocation::infeasible(classes));
    }

    let n = classes.len();
    let mut assigned = vec![0.0_f64; n];
    let mut pinned = vec![false; n];
    let mut remaining = cost;

    loop {
        let w_active: f64 = classes
            .iter()
            .enumerate()
            .filter(|(i, _)| !pinned[*i])
            .map(|(i, c)| c.count as f64 * weight_per_device[i])
            .sum();
        if w_active == 0.0 {
            break;
        }
        let per_unit = remaining / w_active;
        let mut overflowed = false;
        for (i, c) in classes.iter().enumerate() {
            if pinned[i] {
                continue;
            }
            let want = per_unit * c.count as f64 * weight_per_device[i];
            let cap = c.total_cap();
            if want > cap {
                assigned[i] = cap;
                pinned[i] = true;
                remaining -= cap;
                overflowed = true;
            }
        }
        if !overflowed {
            for (i, c) in classes.iter().enumerate() {
                if !pinned[i] {
                    assigned[i] = per_unit * c.count as f64 * weight_per_device[i];
                }
            }
            break;
        }
    }

    Ok(build_allocation(classes, &assigned, &pinned))
}

fn build_allocation(classes: &[DeviceClass], assigned: &[f64], pinned: &[bool]) -> Allocation {
    let mut t_min = 0.0_f64;
    let mut out = Vec::with_capacity(classes.len());
    for (i, c) in classes.iter().enumerate() {
        let t = assigned[i] / c.aggregate_p_opt();
        if t > t_min {
            t_min = t;
        }
        out.push(ClassAllocation {
            name: c.name.clone(),
            cost: assigned[i],
            cost_per_device: assigned[i] / c.count as f64,
            saturated: pinned[i],
        });
    }
    Allocation {
        classes: out,
        t_min,
        feasible: true,
    }
}

/// Exhaustive grid-search oracle for [`solve_allocation`], for test use.
///
/// Splits are enumerated on a simplex grid of `grid_steps` increments per
/// coordinate (plus the exact capacity boundaries), so the returned minimum
/// is within one grid quantum of the continuous optimum.
pub fn brute_force_allocation(
    cost: f64,
    classes: &[DeviceClass],
    grid_steps: u64,
) -> Result<Allocation, ModelError> {
    validate_classes(classes)?;
    if cost < 0.0 {
        return Err(ModelError::NegativeCost(cost));
    }
    if classes.len() > 4 {
        return Err(ModelError::TooManyClasses {
            max: 4,
            got: classes.len(),
        });
    }
    if grid_steps < 10 {
        return Err(ModelError::GridTooCoarse(grid_steps));
    }
    let caps: Vec<f64> = classes.iter().map(DeviceClass::total_cap).collect();
    let perfs: Vec<f64> = classes.iter().map(DeviceClass::aggregate_p_opt).collect();
    if caps.iter().sum::<f64>() < cost {
        return Ok(Allocation::infeasible(classes));
    }
    if cost == 0.0 {
        let assigned = vec![0.0; classes.len()];
        let pinned = vec![false; classes.len()];
        return Ok(build_allocation(classes, &assigned, &pinned));
    }

    // Candidate values for one coordinate: the grid points inside
    // [lo, hi] plus both endpoints, so capacity boundaries are hit exactly.
    let candidates = |lo: f64, hi: f64| -> Vec<f64> {
        let mut v = Vec::new();
        if hi < lo {
            return v;
        }
        v.push(lo);
        let steps = grid_steps as f64;
        let i0 = (lo / cost * steps).ceil() as u64;
        let i1 = (hi / cost * steps).floor() as u64;
        for i in i0..=i1.min(grid_steps) {
            let c = cost * i as f64 / steps;
            if c > lo && c < hi {
                v.push(c);
            }
        }
        v.push(hi);
        v
    };

    let mut best_t = f64::INFINITY;
    let mut best: Vec<f64> = vec![0.0; classes.len()];
    let mut consider = |split: &[f64]| {
        let t = split
            .iter()
            .zip(&perfs)
            .map(|(c, p)| c / p)
            .fold(0.0_f64, f64::max);
        if t < best_t {
            best_t = t;
            best.copy_from_slice(split);
        }
    };

    match classes.len() {
        1 => consider(&[cost]),
        2 => {
            let lo = (cost - caps[1]).max(0.0);
            let hi = caps[0].min(cost);
            for c0 in candidates(lo, hi) {
                consider(&[c0, cost - c0]);
            }
        }
        3 => {
            let lo0 = (cost - caps[1] - caps[2]).max(0.0);
            let hi0 = caps[0].min(cost);
            for c0 in candidates(lo0, hi0) {
                let rest = cost - c0;
                let lo1 = (rest - caps[2]).max(0.0);
                let hi1 = caps[1].min(rest);
                for c1 in candidates(lo1, hi1) {
                    consider(&[c0, c1, rest - c1]);
                }
            }
        }
        4 => {
            let lo0 = (cost - caps[1] - caps[2] - caps[3]).max(0.0);
            let hi0 = caps[0].min(cost);
            for c0 in candidates(lo0, hi0) {
                let rest0 = cost - c0;
                let lo1 = (rest0 - caps[2] - caps[3]).max(0.0);
                let hi1 = caps[1].min(rest0);
                for c1 in candidates(lo1, hi1) {
                    let rest1 = rest0 - c1;
                    let lo2 = (rest1 - caps[3]).max(0.0);
                    let hi2 = caps[2].min(rest1);
                    for c2 in candidates(lo2, hi2) {
                        consider(&[c0, c1, c2, rest1 - c2]);
                    }
                }
            }
        }
        _ => unreachable!(),
    }

    let pinned: Vec<bool> = best
        .iter()
        .zip(&caps)
        .map(|(c, cap)| cap.is_finite() && (c - cap).abs() <= cap.abs() * 1e-12)
        .collect();
    Ok(build_allocation(classes, &best, &pinned))
}

/// Memory feasibility of a workload on a set of device classes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub required_gb: f64,
    pub available_gb: f64,
}

/// Check whether the workload's memory footprint fits in the combined
/// device memory. Classes without a known memory size contribute nothing.
pub fn feasibility(workload: &Workload, classes: &[DeviceClass]) -> FeasibilityReport {
    let required_gb = workload.total_memory_gb();
    let available_gb: f64 = classes
        .iter()
        .map(|c| c.count as f64 * c.mem_per_device.unwrap_or(0.0))
        .sum();
    FeasibilityReport {
        feasible: required_gb <= available_gb,
        required_gb,
        available_gb,
    }
}

/// Classify the operating regime from the arithmetic/communication balance
/// and the capacity fill ratio `cost / cap_total`.
pub fn classify_domain(
    t_a: f64,
    t_c: f64,
    cost: f64,
    cap_total: f64,
    extreme_fill_ratio: f64,
) -> Result<OperationDomain, ModelError> {
    if cap_total == 0.0 {
        return Err(ModelError::ZeroCapacity);
    }
    if t_a <= t_c {
        return Ok(OperationDomain::Communication);
    }
    let fill = if cap_total.is_finite() {
        cost / cap_total
    } else {
        0.0
    };
    if fill >= extreme_fill_ratio {
        Ok(OperationDomain::ExtremeScaling)
    } else {
        Ok(OperationDomain::Scaling)
    }
}

/// One measured run used to calibrate per-device performance.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub device_count: u64,
    pub elements: u64,
    pub seconds_per_timestep: f64,
}

/// Best measured per-device throughput over a set of runs:
/// `max_r elements / (seconds_per_timestep * device_count)`.
pub fn calibrate_popt(runs: &[CalibrationRun]) -> Result<f64, ModelError> {
    if runs.is_empty() {
        return Err(ModelError::NoRuns);
    }
    let mut best = 0.0_f64;
    for (index, r) in runs.iter().enumerate() {
        if r.device_count == 0 || r.elements == 0 || !(r.seconds_per_timestep > 0.0) {
            return Err(ModelError::InvalidRun {
                index,
                reason: "all fields must be positive".to_string(),
            });
        }
        let p = r.elements as f64 / (r.seconds_per_timestep * r.device_count as f64);
        if p > best {
            best = p;
        }
    }
    Ok(best)
}
