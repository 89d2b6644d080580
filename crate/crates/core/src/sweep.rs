//! Strong-scaling sweeps and the GPU:CPU weight search.
//!
//! Each sweep point runs the full pipeline: split the cost across the
//! selected devices (min-max allocation or a fixed per-GPU weight), round
//! to integer per-rank element counts, partition the box mesh, derive the
//! gather-scatter plan, and estimate the timestep. Points are independent
//! and evaluated through [`crate::exec::map_ordered`], so sweeps run in
//! parallel when the `parallel` feature is on; row order always follows
//! input order.

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::mesh::{
    comm_plan, largest_remainder, partition_rcb, BoxMesh, RankWeights,
};
use crate::model::{solve_allocation, tmin_unconstrained, DeviceClass, OperationDomain, Workload};
use crate::sim::{estimate_timestep, IoParams, NetworkParams, PerfCurve, SimEnv, SimError};
use crate::util::fmt_num;

/// Whether a device class is a GPU-style accelerator (one rank per device)
/// or a CPU node (one rank per core).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Gpu,
    Cpu,
}

/// One device class of a concrete run: counts, per-device performance, and
/// capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub name: String,
    pub kind: DeviceKind,
    /// Devices of this class available to the run.
    pub devices: u64,
    /// MPI ranks per device: 1 for a GPU, the core count for a CPU node.
    pub ranks_per_device: u64,
    /// Devices per physical node (4 for a quad-GPU node; 1 for CPU nodes).
    pub devices_per_node: u64,
    /// Best per-device performance, element-timesteps/s.
    pub p_opt: f64,
    /// Per-rank load at which efficiency is 50%.
    pub eff_half_load: f64,
    /// Memory-derived capacity per device, elements.
    pub c_max: Option<f64>,
    /// Capacity actually usable by the solver stack, when lower than the
    /// theoretical `c_max`.
    pub usable_c_max: Option<f64>,
    /// Memory per device, GB.
    pub mem_per_device: Option<f64>,
    /// Node-to-filesystem bandwidth, GB/s.
    pub node_io_bw: f64,
}

impl ClassModel {
    pub fn ranks(&self) -> u64 {
        self.devices * self.ranks_per_device
    }

    pub fn nodes(&self) -> u64 {
        self.devices.div_ceil(self.devices_per_node)
    }

    pub fn rank_p_opt(&self) -> f64 {
        self.p_opt / self.ranks_per_device as f64
    }

    /// Capacity used for allocation decisions: the usable figure when one
    /// is known, the theoretical one otherwise.
    pub fn effective_c_max(&self) -> Option<f64> {
        self.usable_c_max.or(self.c_max)
    }

    pub fn rank_cap(&self) -> Option<f64> {
        self.effective_c_max().map(|c| c / self.ranks_per_device as f64)
    }

    fn device_class(&self, effective: bool) -> DeviceClass {
        let mut dc = DeviceClass::new(self.name.clone(), self.p_opt, self.devices);
        dc.c_max = if effective { self.effective_c_max() } else { self.c_max };
        dc.mem_per_device = self.mem_per_device;
        dc.io_bw_per_device = self.node_io_bw / self.devices_per_node as f64;
        dc
    }
}

/// The device classes a run can draw on.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineModel {
    pub classes: Vec<ClassModel>,
}

impl MachineModel {
    pub fn total_devices(&self) -> u64 {
        self.classes.iter().map(|c| c.devices).sum()
    }

    pub fn n_ranks(&self) -> u64 {
        self.classes.iter().map(ClassModel::ranks).sum()
    }

    pub fn gpu_devices(&self) -> u64 {
        self.classes
            .iter()
            .filter(|c| c.kind == DeviceKind::Gpu)
            .map(|c| c.devices)
            .sum()
    }

    pub fn cpu_cores(&self) -> u64 {
        self.classes
            .iter()
            .filter(|c| c.kind == DeviceKind::Cpu)
            .map(ClassModel::ranks)
            .sum()
    }

    /// Copy of this machine with per-class device counts replaced.
    pub fn with_devices(&self, devices: &[u64]) -> Result<MachineModel, SimError> {
        if devices.len() != self.classes.len() {
            return Err(SimError::InconsistentRanks(format!(
                "{} device counts for {} classes",
                devices.len(),
                self.classes.len()
            )));
        }
        for (c, d) in self.classes.iter().zip(devices) {
            if *d > c.devices {
                return Err(SimError::InconsistentRanks(format!(
                    "requested {d} devices of class `{}`, machine has {}",
                    c.name, c.devices
                )));
            }
        }
        let classes = self
            .classes
            .iter()
            .zip(devices)
            .map(|(c, d)| ClassModel {
                devices: *d,
                ..c.clone()
            })
            .collect();
        Ok(MachineModel { classes })
    }

    /// Model-level view of the classes with at least one device, with their
    /// original class index. Uses effective capacities when `effective`.
    pub fn active_device_classes(&self, effective: bool) -> Vec<(usize, DeviceClass)> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.devices > 0)
            .map(|(i, c)| (i, c.device_class(effective)))
            .collect()
    }

    /// Combined effective capacity in elements; infinite if any active
    /// class is unbounded.
    pub fn cap_total(&self) -> f64 {
        self.classes
            .iter()
            .filter(|c| c.devices > 0)
            .map(|c| match c.effective_c_max() {
                Some(cap) => c.devices as f64 * cap,
                None => f64::INFINITY,
            })
            .sum()
    }

    /// Per-rank partition weights for a fixed per-GPU weight: GPU ranks
    /// carry `gpu_weight`, CPU core ranks carry 1.
    pub fn rank_weights(&self, gpu_weight: f64) -> RankWeights {
        let mut weights = Vec::new();
        let mut class_of = Vec::new();
        for (i, c) in self.classes.iter().enumerate() {
            let w = match c.kind {
                DeviceKind::Gpu => gpu_weight,
                DeviceKind::Cpu => 1.0,
            };
            weights.extend(std::iter::repeat(w).take(c.ranks() as usize));
            class_of.extend(std::iter::repeat(i as u32).take(c.ranks() as usize));
        }
        RankWeights::with_classes(weights, class_of)
    }

    /// Rank-level simulation context for this machine.
    pub fn sim_env(
        &self,
        workload: &Workload,
        net: NetworkParams,
        io: IoParams,
        extreme_fill_ratio: f64,
    ) -> Result<SimEnv, SimError> {
        let mut curves = Vec::new();
        let mut node_of = Vec::new();
        let mut node_bw = Vec::new();
        let mut node_base = 0usize;
        for c in &self.classes {
            let curve = PerfCurve::new(c.rank_p_opt(), c.eff_half_load)?;
            for device in 0..c.devices {
                let node = node_base + (device / c.devices_per_node) as usize;
                for _ in 0..c.ranks_per_device {
                    curves.push(curve);
                    node_of.push(node);
                }
            }
            let nodes = c.nodes() as usize;
            node_bw.extend(std::iter::repeat(c.node_io_bw).take(nodes));
            node_base += nodes;
        }
        Ok(SimEnv {
            curves,
            node_of,
            node_bw,
            net,
            io,
            points_per_element: (workload.poly_order as f64).powi(3),
            cap_total: self.cap_total(),
            extreme_fill_ratio,
        })
    }

    /// Continuous per-rank element targets from the min-max allocation.
    /// `None` when the cost does not fit in the combined capacity.
    pub fn rank_targets_from_allocation(
        &self,
        cost: f64,
    ) -> Result<Option<Vec<f64>>, SimError> {
        let active = self.active_device_classes(true);
        let classes: Vec<DeviceClass> = active.iter().map(|(_, c)| c.clone()).collect();
        let alloc = solve_allocation(cost, &classes)?;
        if !alloc.feasible {
            return Ok(None);
        }
        let mut per_class_rank_target = vec![0.0; self.classes.len()];
        for ((i, _), ca) in active.iter().zip(&alloc.classes) {
            per_class_rank_target[*i] =
                ca.cost_per_device / self.classes[*i].ranks_per_device as f64;
        }
        Ok(Some(self.expand_rank_targets(&per_class_rank_target)))
    }

    /// Continuous per-rank element targets for a fixed per-GPU weight.
    /// `None` when any rank's share would exceed its capacity.
    pub fn rank_targets_from_weight(
        &self,
        cost: f64,
        gpu_weight: f64,
    ) -> Result<Option<Vec<f64>>, SimError> {
        let mut weight_sum = 0.0;
        for c in &self.classes {
            let w = match c.kind {
                DeviceKind::Gpu => gpu_weight,
                DeviceKind::Cpu => 1.0,
            };
            weight_sum += w * c.ranks() as f64;
        }
        if weight_sum <= 0.0 {
            return Ok(None);
        }
        let unit = cost / weight_sum;
        let mut per_class_rank_target = vec![0.0; self.classes.len()];
        for (i, c) in self.classes.iter().enumerate() {
            let w = match c.kind {
                DeviceKind::Gpu => gpu_weight,
                DeviceKind::Cpu => 1.0,
            };
            let target = unit * w;
            if let Some(cap) = c.rank_cap() {
                if c.devices > 0 && target > cap {
                    return Ok(None);
                }
            }
            per_class_rank_target[i] = target;
        }
        Ok(Some(self.expand_rank_targets(&per_class_rank_target)))
    }

    fn expand_rank_targets(&self, per_class: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_ranks() as usize);
        for (c, t) in self.classes.iter().zip(per_class) {
            out.extend(std::iter::repeat(*t).take(c.ranks() as usize));
        }
        out
    }

    /// Continuous per-class costs implied by per-rank targets.
    fn class_costs(&self, rank_targets: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.classes.len());
        let mut offset = 0usize;
        for c in &self.classes {
            let n = c.ranks() as usize;
            out.push(rank_targets[offset..offset + n].iter().sum());
            offset += n;
        }
        out
    }
}

/// One point of a strong-scaling sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub devices: u64,
    pub gpu_devices: u64,
    pub cpu_cores: u64,
    /// Continuous elements per GPU device; NaN when the point has none.
    pub elements_per_gpu: f64,
    /// Continuous elements per CPU core; NaN when the point has none.
    pub elements_per_core: f64,
    pub t_a_max: f64,
    pub t_c_max: f64,
    pub t_io_max: f64,
    pub t_total: f64,
    pub speedup: f64,
    pub parallel_efficiency: f64,
    /// Additive lower bound `C / sum P_opt` at this point.
    pub model_tmin: f64,
    pub domain: Option<OperationDomain>,
    pub feasible: bool,
}

impl ScalingRow {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.devices.to_string(),
            self.gpu_devices.to_string(),
            self.cpu_cores.to_string(),
            fmt_num(self.elements_per_gpu),
            fmt_num(self.elements_per_core),
            fmt_num(self.t_a_max),
            fmt_num(self.t_c_max),
            fmt_num(self.t_io_max),
            fmt_num(self.t_total),
            fmt_num(self.speedup),
            fmt_num(self.parallel_efficiency),
            fmt_num(self.model_tmin),
            match self.domain {
                Some(d) => d.to_string(),
                None => "infeasible".to_string(),
            },
        ]
    }
}

/// Strong-scaling results, ordered as the input points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Devices and time of the first feasible point; reference for speedup,
    /// efficiency, and the linear-scaling line.
    pub baseline: Option<(u64, f64)>,
}

impl ScalingTable {
    pub const CSV_HEADER: &'static str = "devices,gpu_devices,cpu_cores,elements_per_gpu,elements_per_core,t_a_max,t_c_max,t_io_max,t_total,speedup,parallel_efficiency,model_tmin,domain";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_fields().join(","));
            out.push('\n');
        }
        out
    }

    /// Perfect linear scaling from the baseline point: `t_0 * d_0 / d`.
    pub fn linear_ref(&self, devices: u64) -> f64 {
        match self.baseline {
            Some((d0, t0)) if devices > 0 => t0 * d0 as f64 / devices as f64,
            _ => f64::NAN,
        }
    }
}

/// Inputs of one strong-scaling sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig<'a> {
    pub workload: &'a Workload,
    pub machine: &'a MachineModel,
    pub net: NetworkParams,
    pub io: IoParams,
    /// Per-class device counts of each point, ascending in total devices.
    pub points: &'a [Vec<u64>],
    /// Fixed per-GPU weight; `None` uses the min-max allocation.
    pub weight: Option<f64>,
    pub extreme_fill_ratio: f64,
    pub mesh_dims: (u32, u32, u32),
}

/// Split total device counts across classes by mix ratio, largest-remainder
/// rounded.
pub fn mix_points(
    totals: &[u64],
    mix: &[f64],
    n_classes: usize,
) -> Result<Vec<Vec<u64>>, SimError> {
    if mix.len() != n_classes {
        return Err(SimError::InconsistentRanks(format!(
            "{} mix weights for {n_classes} classes",
            mix.len()
        )));
    }
    totals
        .iter()
        .map(|t| largest_remainder(*t, mix).map_err(SimError::from))
        .collect()
}

struct PointEval {
    devices: u64,
    gpu_devices: u64,
    cpu_cores: u64,
    elements_per_gpu: f64,
    elements_per_core: f64,
    t_a_max: f64,
    t_c_max: f64,
    t_io_max: f64,
    t_total: f64,
    model_tmin: f64,
    domain: Option<OperationDomain>,
    feasible: bool,
}

fn evaluate_point(
    cfg: &SweepConfig<'_>,
    mesh: &BoxMesh,
    counts: &[u64],
) -> Result<PointEval, SimError> {
    let machine = cfg.machine.with_devices(counts)?;
    let cost = cfg.workload.total_cost();
    let active = machine.active_device_classes(true);
    let active_classes: Vec<DeviceClass> = active.iter().map(|(_, c)| c.clone()).collect();
    let model_tmin = if active_classes.is_empty() {
        f64::NAN
    } else {
        tmin_unconstrained(cost, &active_classes)?
    };

    let targets = match cfg.weight {
        Some(w) => machine.rank_targets_from_weight(cost, w)?,
        None => machine.rank_targets_from_allocation(cost)?,
    };
    let (gpu_devices, cpu_cores) = (machine.gpu_devices(), machine.cpu_cores());
    let devices = machine.total_devices();

    let Some(targets) = targets else {
        return Ok(PointEval {
            devices,
            gpu_devices,
            cpu_cores,
            elements_per_gpu: f64::NAN,
            elements_per_core: f64::NAN,
            t_a_max: f64::NAN,
            t_c_max: f64::NAN,
            t_io_max: f64::NAN,
            t_total: f64::NAN,
            model_tmin,
            domain: None,
            feasible: false,
        });
    };

    let class_costs = machine.class_costs(&targets);
    let gpu_cost: f64 = machine
        .classes
        .iter()
        .zip(&class_costs)
        .filter(|(c, _)| c.kind == DeviceKind::Gpu)
        .map(|(_, cost)| cost)
        .sum();
    let cpu_cost: f64 = machine
        .classes
        .iter()
        .zip(&class_costs)
        .filter(|(c, _)| c.kind == DeviceKind::Cpu)
        .map(|(_, cost)| cost)
        .sum();

    let int_counts = largest_remainder(cfg.workload.elements, &targets)?;
    let partition = partition_rcb(mesh, &int_counts)?;
    let plan = comm_plan(mesh, &partition, cfg.workload.poly_order)?;
    let env = machine.sim_env(cfg.workload, cfg.net, cfg.io, cfg.extreme_fill_ratio)?;
    let loads: Vec<f64> = int_counts.iter().map(|c| *c as f64).collect();
    let est = estimate_timestep(&loads, Some(&plan), &env)?;

    Ok(PointEval {
        devices,
        gpu_devices,
        cpu_cores,
        elements_per_gpu: if gpu_devices > 0 {
            gpu_cost / gpu_devices as f64
        } else {
            f64::NAN
        },
        elements_per_core: if cpu_cores > 0 {
            cpu_cost / cpu_cores as f64
        } else {
            f64::NAN
        },
        t_a_max: est.t_a_max,
        t_c_max: est.t_c_max,
        t_io_max: est.t_io_max,
        t_total: est.total,
        model_tmin,
        domain: Some(est.domain),
        feasible: true,
    })
}

fn validate_sweep(cfg: &SweepConfig<'_>) -> Result<BoxMesh, SimError> {
    if cfg.points.is_empty() {
        return Err(SimError::InconsistentRanks(
            "sweep needs at least one point".to_string(),
        ));
    }
    let totals: Vec<u64> = cfg.points.iter().map(|p| p.iter().sum()).collect();
    if totals.windows(2).any(|w| w[0] >= w[1]) && totals.len() > 1 {
        return Err(SimError::InconsistentRanks(
            "sweep device counts must be strictly ascending".to_string(),
        ));
    }
    let (nx, ny, nz) = cfg.mesh_dims;
    let mesh = BoxMesh::new(nx, ny, nz)?;
    if mesh.elements() != cfg.workload.elements {
        return Err(SimError::InconsistentRanks(format!(
            "mesh holds {} elements, workload has {}",
            mesh.elements(),
            cfg.workload.elements
        )));
    }
    Ok(mesh)
}

fn finish_sweep(evals: Vec<Result<PointEval, SimError>>) -> Result<ScalingTable, SimError> {
    let evals: Vec<PointEval> = evals.into_iter().collect::<Result<_, _>>()?;
    let baseline = evals
        .iter()
        .find(|e| e.feasible)
        .map(|e| (e.devices, e.t_total));
    let rows = evals
        .into_iter()
        .map(|e| {
            let (speedup, parallel_efficiency) = match (baseline, e.feasible) {
                (Some((d0, t0)), true) => {
                    let s = t0 / e.t_total;
                    (s, s * d0 as f64 / e.devices as f64)
                }
                _ => (f64::NAN, f64::NAN),
            };
            ScalingRow {
                devices: e.devices,
                gpu_devices: e.gpu_devices,
                cpu_cores: e.cpu_cores,
                elements_per_gpu: e.elements_per_gpu,
                elements_per_core: e.elements_per_core,
                t_a_max: e.t_a_max,
                t_c_max: e.t_c_max,
                t_io_max: e.t_io_max,
                t_total: e.t_total,
                speedup,
                parallel_efficiency,
                model_tmin: e.model_tmin,
                domain: e.domain,
                feasible: e.feasible,
            }
        })
        .collect();
    Ok(ScalingTable { rows, baseline })
}

/// Evaluate a strong-scaling sweep, one row per point.
///
/// Infeasible points become rows flagged infeasible rather than errors.
/// Speedup and parallel efficiency are relative to the first feasible
/// point.
pub fn sweep_strong_scaling(cfg: &SweepConfig<'_>) -> Result<ScalingTable, SimError> {
    let mesh = validate_sweep(cfg)?;
    finish_sweep(exec::map_ordered(cfg.points, |pt| {
        evaluate_point(cfg, &mesh, pt)
    }))
}

/// Sequential twin of [`sweep_strong_scaling`]; same results, same order.
pub fn sweep_strong_scaling_seq(cfg: &SweepConfig<'_>) -> Result<ScalingTable, SimError> {
    let mesh = validate_sweep(cfg)?;
    finish_sweep(exec::map_ordered_seq(cfg.points, |pt| {
        evaluate_point(cfg, &mesh, pt)
    }))
}

/// One evaluated weight of a parameter search.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub weight: f64,
    pub t_total: f64,
    pub t_a_max: f64,
    pub t_c_max: f64,
    pub feasible: bool,
}

/// Result of a per-GPU weight parameter search.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSearch {
    pub best_weight: f64,
    pub best_time: f64,
    pub rows: Vec<WeightRow>,
}

/// Inputs of a weight search at a fixed machine size.
#[derive(Debug, Clone)]
pub struct WeightSearchConfig<'a> {
    pub workload: &'a Workload,
    pub machine: &'a MachineModel,
    pub net: NetworkParams,
    pub io: IoParams,
    /// Candidate elements-per-GPU-rank relative to one CPU core.
    pub grid: &'a [f64],
    pub extreme_fill_ratio: f64,
    pub mesh_dims: (u32, u32, u32),
}

fn evaluate_weight(
    cfg: &WeightSearchConfig<'_>,
    mesh: &BoxMesh,
    weight: f64,
) -> Result<WeightRow, SimError> {
    let cost = cfg.workload.total_cost();
    let Some(targets) = cfg.machine.rank_targets_from_weight(cost, weight)? else {
        return Ok(WeightRow {
            weight,
            t_total: f64::NAN,
            t_a_max: f64::NAN,
            t_c_max: f64::NAN,
            feasible: false,
        });
    };
    let int_counts = largest_remainder(cfg.workload.elements, &targets)?;
    let partition = partition_rcb(mesh, &int_counts)?;
    let plan = comm_plan(mesh, &partition, cfg.workload.poly_order)?;
    let env = cfg
        .machine
        .sim_env(cfg.workload, cfg.net, cfg.io, cfg.extreme_fill_ratio)?;
    let loads: Vec<f64> = int_counts.iter().map(|c| *c as f64).collect();
    let est = estimate_timestep(&loads, Some(&plan), &env)?;
    Ok(WeightRow {
        weight,
        t_total: est.total,
        t_a_max: est.t_a_max,
        t_c_max: est.t_c_max,
        feasible: true,
    })
}

fn finish_search(evals: Vec<Result<WeightRow, SimError>>) -> Result<WeightSearch, SimError> {
    let rows: Vec<WeightRow> = evals.into_iter().collect::<Result<_, _>>()?;
    let mut best: Option<(f64, f64)> = None;
    for row in rows.iter().filter(|r| r.feasible) {
        let better = match best {
            None => true,
            Some((bw, bt)) => row.t_total < bt || (row.t_total == bt && row.weight < bw),
        };
        if better {
            best = Some((row.weight, row.t_total));
        }
    }
    let Some((best_weight, best_time)) = best else {
        return Err(SimError::InconsistentRanks(
            "no weight in the grid yields a feasible split".to_string(),
        ));
    };
    Ok(WeightSearch {
        best_weight,
        best_time,
        rows,
    })
}

fn validate_search(cfg: &WeightSearchConfig<'_>) -> Result<BoxMesh, SimError> {
    if cfg.grid.is_empty() {
        return Err(SimError::InconsistentRanks(
            "weight grid is empty".to_string(),
        ));
    }
    let (nx, ny, nz) = cfg.mesh_dims;
    let mesh = BoxMesh::new(nx, ny, nz)?;
    if mesh.elements() != cfg.workload.elements {
        return Err(SimError::InconsistentRanks(format!(
            "mesh holds {} elements, workload has {}",
            mesh.elements(),
            cfg.workload.elements
        )));
    }
    Ok(mesh)
}

/// Evaluate every weight in the grid and return the argmin; ties go to the
/// smaller weight. Weights whose implied per-rank load exceeds a device
/// capacity are reported infeasible and excluded from the argmin.
pub fn search_weight(cfg: &WeightSearchConfig<'_>) -> Result<WeightSearch, SimError> {
    let mesh = validate_search(cfg)?;
    finish_search(exec::map_ordered(cfg.grid, |w| {
        evaluate_weight(cfg, &mesh, *w)
    }))
}

/// Sequential twin of [`search_weight`].
pub fn search_weight_seq(cfg: &WeightSearchConfig<'_>) -> Result<WeightSearch, SimError> {
    let mesh = validate_search(cfg)?;
    finish_search(exec::map_ordered_seq(cfg.grid, |w| {
        evaluate_weight(cfg, &mesh, *w)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gpu_class(name: &str, devices: u64, p_opt: f64, half: f64, cap: Option<f64>) -> ClassModel {
        ClassModel {
            name: name.to_string(),
            kind: DeviceKind::Gpu,
            devices,
            ranks_per_device: 1,
            devices_per_node: 1,
            p_opt,
            eff_half_load: half,
            c_max: cap,
            usable_c_max: None,
            mem_per_device: None,
            node_io_bw: 2.0,
        }
    }

    fn cpu_class(name: &str, nodes: u64, cores: u64, p_opt_node: f64, half: f64) -> ClassModel {
        ClassModel {
            name: name.to_string(),
            kind: DeviceKind::Cpu,
            devices: nodes,
            ranks_per_device: cores,
            devices_per_node: 1,
            p_opt: p_opt_node,
            eff_half_load: half,
            c_max: None,
            usable_c_max: None,
            mem_per_device: None,
            node_io_bw: 2.0,
        }
    }

    fn flat_machine() -> MachineModel {
        MachineModel {
            classes: vec![cpu_class("cluster", 8, 24, 48_000.0, 0.0)],
        }
    }

    #[test]
    fn zero_comm_flat_curves_scale_perfectly() {
        let workload = Workload::new(36_480, 7).unwrap();
        let machine = flat_machine();
        let points: Vec<Vec<u64>> = vec![vec![1], vec![2], vec![4], vec![8]];
        let cfg = SweepConfig {
            workload: &workload,
            machine: &machine,
            net: NetworkParams::zero(),
            io: IoParams::disabled(),
            points: &points,
            weight: None,
            extreme_fill_ratio: 0.5,
            mesh_dims: (30, 32, 38),
        };
        let table = sweep_strong_scaling(&cfg).unwrap();
        for row in &table.rows {
            assert!(row.feasible);
            assert_eq!(row.parallel_efficiency, 1.0);
            assert_eq!(row.t_c_max, 0.0);
        }
        // Flat curves with zero communication sit exactly on the additive
        // bound.
        for row in &table.rows {
            assert!((row.t_total - row.model_tmin).abs() / row.model_tmin < 1e-9);
        }
    }

    #[test]
    fn parallel_and_sequential_sweeps_match() {
        let workload = Workload::new(4096, 7).unwrap();
        let machine = MachineModel {
            classes: vec![
                gpu_class("gpu", 4, 100_000.0, 1000.0, Some(3000.0)),
                cpu_class("cpu", 4, 8, 8000.0, 1.0),
            ],
        };
        let points = vec![vec![1, 1], vec![2, 2], vec![4, 4]];
        let cfg = SweepConfig {
            workload: &workload,
            machine: &machine,
            net: NetworkParams {
                alpha: 1e-6,
                beta: 1e-9,
                gs_rounds_per_step: 50,
            },
            io: IoParams {
                enabled: true,
                bytes_per_point: 32.0,
                node_io_bw: 2.0,
                output_every: 10,
            },
            points: &points,
            weight: None,
            extreme_fill_ratio: 0.5,
            mesh_dims: (16, 16, 16),
        };
        let par = sweep_strong_scaling(&cfg).unwrap();
        let seq = sweep_strong_scaling_seq(&cfg).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par.to_csv(), seq.to_csv());
    }

    #[test]
    fn infeasible_point_becomes_row() {
        let workload = Workload::new(4096, 7).unwrap();
        let machine = MachineModel {
            classes: vec![gpu_class("gpu", 8, 100_000.0, 0.0, Some(1000.0))],
        };
        let points = vec![vec![2], vec![8]];
        let cfg = SweepConfig {
            workload: &workload,
            machine: &machine,
            net: NetworkParams::zero(),
            io: IoParams::disabled(),
            points: &points,
            weight: None,
            extreme_fill_ratio: 0.5,
            mesh_dims: (16, 16, 16),
        };
        let table = sweep_strong_scaling(&cfg).unwrap();
        assert!(!table.rows[0].feasible);
        assert!(table.rows[0].t_total.is_nan());
        assert_eq!(table.rows[0].domain, None);
        assert!(table.rows[1].feasible);
        // Baseline is the first feasible point.
        assert_eq!(table.baseline, Some((8, table.rows[1].t_total)));
        assert_eq!(table.rows[1].speedup, 1.0);
        let csv = table.to_csv();
        assert!(csv.lines().nth(1).unwrap().ends_with("infeasible"));
    }

    #[test]
    fn ascending_counts_enforced() {
        let workload = Workload::new(4096, 7).unwrap();
        let machine = flat_machine();
        let points = vec![vec![4], vec![2]];
        let cfg = SweepConfig {
            workload: &workload,
            machine: &machine,
            net: NetworkParams::zero(),
            io: IoParams::disabled(),
            points: &points,
            weight: None,
            extreme_fill_ratio: 0.5,
            mesh_dims: (16, 16, 16),
        };
        assert!(sweep_strong_scaling(&cfg).is_err());
    }

    #[test]
    fn weight_search_symmetric_classes_prefer_one() {
        // One "gpu" and one "cpu" class with identical per-rank behavior:
        // the balanced weight wins.
        let workload = Workload::new(4096, 7).unwrap();
        let machine = MachineModel {
            classes: vec![
                gpu_class("a", 8, 1000.0, 0.0, None),
                cpu_class("b", 8, 1, 1000.0, 0.0),
            ],
        };
        let grid = vec![0.5, 1.0, 2.0];
        let cfg = WeightSearchConfig {
            workload: &workload,
            machine: &machine,
            net: NetworkParams::zero(),
            io: IoParams::disabled(),
            grid: &grid,
            extreme_fill_ratio: 0.5,
            mesh_dims: (16, 16, 16),
        };
        let search = search_weight(&cfg).unwrap();
        assert_eq!(search.best_weight, 1.0);
    }

    #[test]
    fn weight_search_capacity_bound_takes_largest_fitting() {
        let workload = Workload::new(262_144, 7).unwrap();
        let machine = MachineModel {
            classes: vec![
                gpu_class("gpu", 16, 200_000.0, 0.0, Some(13_000.0)),
                cpu_class("cpu", 16, 24, 48_000.0, 0.0),
            ],
        };
        let grid = vec![60.0, 80.0, 100.0, 120.0];
        let cfg = WeightSearchConfig {
            workload: &workload,
            machine: &machine,
            net: NetworkParams::zero(),
            io: IoParams::disabled(),
            grid: &grid,
            extreme_fill_ratio: 0.5,
            mesh_dims: (64, 64, 64),
        };
        let search = search_weight(&cfg).unwrap();
        // 60 and 80 fit under the 13000-element cap (11703 and 12602
        // elements per GPU); 100 and 120 overflow it. The CPU side
        // dominates, so the largest fitting weight wins.
        assert!(!search.rows[2].feasible);
        assert!(!search.rows[3].feasible);
        assert_eq!(search.best_weight, 80.0);
    }

    #[test]
    fn weight_search_matches_sequential() {
        let workload = Workload::new(4096, 7).unwrap();
        let machine = MachineModel {
            classes: vec![
                gpu_class("gpu", 2, 50_000.0, 500.0, Some(3000.0)),
                cpu_class("cpu", 2, 8, 4000.0, 1.0),
            ],
        };
        let grid = vec![10.0, 30.0, 60.0, 90.0];
        let cfg = WeightSearchConfig {
            workload: &workload,
            machine: &machine,
            net: NetworkParams {
                alpha: 1e-6,
                beta: 1e-9,
                gs_rounds_per_step: 50,
            },
            io: IoParams::disabled(),
            grid: &grid,
            extreme_fill_ratio: 0.5,
            mesh_dims: (16, 16, 16),
        };
        assert_eq!(search_weight(&cfg).unwrap(), search_weight_seq(&cfg).unwrap());
    }

    #[test]
    fn mix_points_apportions_devices() {
        let pts = mix_points(&[2, 4, 9], &[1.0, 1.0], 2).unwrap();
        assert_eq!(pts, vec![vec![1, 1], vec![2, 2], vec![5, 4]]);
        assert!(mix_points(&[2], &[1.0], 2).is_err());
    }
}
