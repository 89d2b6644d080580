//! Machine and workload descriptions, built-in presets, and scenario files.
//!
//! A scenario is a TOML document with sections `machine`, `case`,
//! `network`, `io`, and `run`. Machines and cases can be spelled out inline
//! or pulled from a built-in preset by name with field-level overrides:
//!
//! ```toml
//! [machine]
//! preset = "deep"
//!
//! [machine.overrides.booster]
//! p_opt = 180000.0
//!
//! [case]
//! preset = "rbc"
//!
//! [network]
//! path = "host"        # pick the host- or device-path parameter set
//! alpha = 2.0e-6       # field-level override
//!
//! [run]
//! modules = ["booster", "cluster"]
//! devices = [48, 48]
//! ```
//!
//! Unknown keys are rejected. Loaded scenarios are immutable and fully
//! validated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Workload};
use crate::sim::{IoParams, NetworkParams};
use crate::sweep::{ClassModel, DeviceKind, MachineModel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unknown {kind} preset `{name}`")]
    UnknownPreset { kind: &'static str, name: String },
    #[error("scenario invalid:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("scenario inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One failed validation rule, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// One module of a machine: a set of identical nodes carrying identical
/// devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub name: String,
    pub kind: DeviceKind,
    pub nodes: u64,
    /// Computing devices per node (GPUs per node; 1 for CPU modules, where
    /// the node itself is the device).
    #[serde(default = "default_one")]
    pub devices_per_node: u64,
    /// Cores per node for CPU modules; each core runs one rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cores_per_node: Option<u64>,
    /// Total device count; derived as `nodes * devices_per_node` when
    /// omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    /// Memory per device, GB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_per_device: Option<f64>,
    /// Capacity actually usable per device when lower than the
    /// memory-derived figure (solver working sets eat into device memory).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usable_c_max: Option<f64>,
    /// Best per-device performance, element-timesteps/s.
    pub p_opt: f64,
    /// Per-rank load at which efficiency drops to 50%.
    #[serde(default)]
    pub eff_half_load: f64,
    /// Node-to-filesystem bandwidth, GB/s.
    #[serde(default = "default_io_bw")]
    pub io_bw_per_node: f64,
}

fn default_one() -> u64 {
    1
}

fn default_io_bw() -> f64 {
    2.0
}

impl ModuleSpec {
    pub fn device_count(&self) -> u64 {
        self.count.unwrap_or(self.nodes * self.devices_per_node)
    }

    pub fn ranks_per_device(&self) -> u64 {
        match self.kind {
            DeviceKind::Gpu => 1,
            DeviceKind::Cpu => self.cores_per_node.unwrap_or(1),
        }
    }

    /// Memory-derived capacity per device: `floor(mem / mem_per_element)`.
    pub fn derived_c_max(&self, mem_per_element: f64) -> Option<f64> {
        match self.mem_per_device {
            Some(mem) if mem_per_element > 0.0 => Some((mem / mem_per_element).floor()),
            _ => None,
        }
    }

    /// Fill level (in elements per device) above which a run on this module
    /// counts as extreme-scaling.
    pub fn extreme_threshold(&self, mem_per_element: f64, ratio: f64) -> Option<f64> {
        self.derived_c_max(mem_per_element).map(|c| c * ratio)
    }

    pub fn class_model(&self, mem_per_element: f64, devices: u64) -> ClassModel {
        ClassModel {
            name: self.name.clone(),
            kind: self.kind,
            devices,
            ranks_per_device: self.ranks_per_device(),
            devices_per_node: self.devices_per_node,
            p_opt: self.p_opt,
            eff_half_load: self.eff_half_load,
            c_max: self.derived_c_max(mem_per_element),
            usable_c_max: self.usable_c_max,
            mem_per_device: self.mem_per_device,
            node_io_bw: self.io_bw_per_node,
        }
    }
}

/// A machine: named modules plus its network parameter sets and I/O
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSpec {
    pub name: String,
    pub modules: Vec<ModuleSpec>,
    /// Network parameters when messages are staged through the host.
    pub network_host: NetworkParams,
    /// Network parameters with device-resident communication.
    pub network_device: NetworkParams,
    pub io_defaults: IoParams,
}

impl MachineSpec {
    pub fn module(&self, name: &str) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.name == name)
    }
}

/// A flow case: the element count and per-element resource figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    pub elements: u64,
    pub poly_order: u32,
    /// GB per element; the default 0.001 holds for polynomial order 7.
    pub mem_per_element: f64,
    pub bytes_per_point_output: f64,
}

impl CaseSpec {
    pub fn workload(&self) -> Result<Workload, ModelError> {
        Ok(Workload::new(self.elements, self.poly_order)?
            .with_mem_per_element(self.mem_per_element)
            .with_bytes_per_point(self.bytes_per_point_output))
    }
}

/// Run-level choices: which modules and how many devices, sweep counts,
/// weights, and statistics parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Modules to use, in order; all machine modules when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modules: Option<Vec<String>>,
    /// Devices per selected module; full module counts when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub devices: Option<Vec<u64>>,
    /// Total device counts of a strong-scaling sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    /// Device mix across the selected modules for sweep points (equal when
    /// omitted).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mix: Option<Vec<f64>>,
    /// Fixed elements-per-GPU-rank weight relative to one CPU core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Weight grid for the parameter search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub seed: u64,
    /// Timestep samples drawn for the 95% band.
    pub samples: u32,
    /// Relative jitter of the drawn samples; 0 keeps runs exactly
    /// deterministic.
    pub rel_sigma: f64,
    pub extreme_fill_ratio: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            modules: None,
            devices: None,
            counts: None,
            mix: None,
            weight: None,
            weights: None,
            seed: 0,
            samples: 100,
            rel_sigma: 0.0,
            extreme_fill_ratio: 0.5,
        }
    }
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub machine: MachineSpec,
    pub case: CaseSpec,
    pub network: NetworkParams,
    pub io: IoParams,
    pub run: RunOptions,
}

impl Scenario {
    pub fn workload(&self) -> Result<Workload, ScenarioError> {
        Ok(self.case.workload()?)
    }

    /// Indices of the modules selected by `run.modules`, in selection
    /// order.
    pub fn selected_module_indices(&self) -> Result<Vec<usize>, ScenarioError> {
        match &self.run.modules {
            None => Ok((0..self.machine.modules.len()).collect()),
            Some(names) => names
                .iter()
                .map(|n| {
                    self.machine
                        .modules
                        .iter()
                        .position(|m| &m.name == n)
                        .ok_or_else(|| {
                            ScenarioError::Inconsistent(format!(
                                "run.modules names unknown module `{n}`"
                            ))
                        })
                })
                .collect(),
        }
    }

    /// Device counts for the selected modules: `run.devices` when given,
    /// the full module counts otherwise.
    pub fn selected_devices(&self) -> Result<Vec<u64>, ScenarioError> {
        let idxs = self.selected_module_indices()?;
        match &self.run.devices {
            None => Ok(idxs
                .iter()
                .map(|&i| self.machine.modules[i].device_count())
                .collect()),
            Some(devices) => {
                if devices.len() != idxs.len() {
                    return Err(ScenarioError::Inconsistent(format!(
                        "run.devices has {} entries for {} selected modules",
                        devices.len(),
                        idxs.len()
                    )));
                }
                for (&d, &i) in devices.iter().zip(&idxs) {
                    let module = &self.machine.modules[i];
                    if d > module.device_count() {
                        return Err(ScenarioError::Inconsistent(format!(
                            "run.devices asks for {d} devices of `{}`, module has {}",
                            module.name,
                            module.device_count()
                        )));
                    }
                }
                Ok(devices.clone())
            }
        }
    }

    /// The machine model of this run: selected modules at their selected
    /// device counts, with capacities derived from the case's per-element
    /// memory.
    pub fn machine_model(&self) -> Result<MachineModel, ScenarioError> {
        let idxs = self.selected_module_indices()?;
        let devices = self.selected_devices()?;
        let classes = idxs
            .iter()
            .zip(&devices)
            .map(|(&i, &d)| self.machine.modules[i].class_model(self.case.mem_per_element, d))
            .collect();
        Ok(MachineModel { classes })
    }

    /// Model-level device classes of this run, memory figures included.
    /// With `effective_caps` the allocation-facing usable capacities are
    /// used, otherwise the memory-derived theoretical ones.
    pub fn device_classes(
        &self,
        effective_caps: bool,
    ) -> Result<Vec<crate::model::DeviceClass>, ScenarioError> {
        Ok(self
            .machine_model()?
            .active_device_classes(effective_caps)
            .into_iter()
            .map(|(_, c)| c)
            .collect())
    }

    /// Serialize the resolved scenario; the output parses back to an equal
    /// scenario.
    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string_pretty(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Check every invariant; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        fn push(out: &mut Vec<Violation>, field: impl Into<String>, rule: impl Into<String>) {
            out.push(Violation {
                field: field.into(),
                rule: rule.into(),
            });
        }
        let mut out = Vec::new();

        if self.machine.name.is_empty() {
            push(&mut out, "machine.name", "must not be empty");
        }
        if self.machine.modules.is_empty() {
            push(&mut out, "machine.modules", "must not be empty");
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.machine.modules {
            let field = |f: &str| format!("machine.modules[{}].{}", m.name, f);
            if !seen.insert(m.name.clone()) {
                push(
                    &mut out,
                    format!("machine.modules[{}]", m.name),
                    "module names must be unique",
                );
            }
            if m.nodes == 0 {
                push(&mut out, field("nodes"), "must be >= 1");
            }
            if m.devices_per_node == 0 {
                push(&mut out, field("devices_per_node"), "must be >= 1");
            }
            if let Some(count) = m.count {
                if count != m.nodes * m.devices_per_node {
                    push(&mut out, field("count"), "count = nodes * devices_per_node");
                }
            }
            if !(m.p_opt > 0.0) {
                push(&mut out, field("p_opt"), "must be > 0");
            }
            if m.eff_half_load < 0.0 {
                push(&mut out, field("eff_half_load"), "must be >= 0");
            }
            if let Some(mem) = m.mem_per_device {
                if !(mem > 0.0) {
                    push(&mut out, field("mem_per_device"), "must be > 0");
                }
            }
            if let Some(c) = m.usable_c_max {
                if !(c > 0.0) {
                    push(&mut out, field("usable_c_max"), "must be > 0");
                }
            }
            if m.io_bw_per_node < 0.0 {
                push(&mut out, field("io_bw_per_node"), "must be >= 0");
            }
            if m.kind == DeviceKind::Cpu && m.cores_per_node.unwrap_or(0) == 0 {
                push(
                    &mut out,
                    field("cores_per_node"),
                    "cpu modules need cores_per_node >= 1",
                );
            }
        }

        if self.case.elements == 0 {
            push(&mut out, "case.elements", "must be >= 1");
        }
        if self.case.poly_order == 0 {
            push(&mut out, "case.poly_order", "must be >= 1");
        }
        if self.case.mem_per_element < 0.0 {
            push(&mut out, "case.mem_per_element", "must be >= 0");
        }
        if self.case.bytes_per_point_output < 0.0 {
            push(&mut out, "case.bytes_per_point_output", "must be >= 0");
        }

        if self.network.alpha < 0.0 {
            push(&mut out, "network.alpha", "must be >= 0");
        }
        if self.network.beta < 0.0 {
            push(&mut out, "network.beta", "must be >= 0");
        }

        if self.io.bytes_per_point < 0.0 {
            push(&mut out, "io.bytes_per_point", "must be >= 0");
        }
        if self.io.node_io_bw < 0.0 {
            push(&mut out, "io.node_io_bw", "must be >= 0");
        }
        if self.io.output_every == 0 {
            push(&mut out, "io.output_every", "must be >= 1");
        }

        if let Some(w) = self.run.weight {
            if !(w > 0.0) {
                push(&mut out, "run.weight", "must be > 0");
            }
        }
        if let Some(ws) = &self.run.weights {
            if ws.iter().any(|w| !(*w > 0.0)) {
                push(&mut out, "run.weights", "entries must be > 0");
            }
        }
        if let Some(mix) = &self.run.mix {
            if mix.iter().any(|m| *m < 0.0) {
                push(&mut out, "run.mix", "entries must be >= 0");
            }
        }
        if let Some(counts) = &self.run.counts {
            if counts.windows(2).any(|w| w[0] >= w[1]) {
                push(&mut out, "run.counts", "must be strictly ascending");
            }
        }
        if !(self.run.extreme_fill_ratio > 0.0 && self.run.extreme_fill_ratio <= 1.0) {
            push(&mut out, "run.extreme_fill_ratio", "must be in (0, 1]");
        }
        if self.run.samples < 2 {
            push(&mut out, "run.samples", "must be >= 2");
        }
        if self.run.rel_sigma < 0.0 {
            push(&mut out, "run.rel_sigma", "must be >= 0");
        }
        if let Some(names) = &self.run.modules {
            for n in names {
                if self.machine.module(n).is_none() {
                    push(&mut out, "run.modules", format!("unknown module `{n}`"));
                }
            }
        }

        out
    }
}

// --- built-in presets ------------------------------------------------------

const DEFAULT_GS_ROUNDS: u32 = 50;

fn default_network() -> NetworkParams {
    NetworkParams {
        alpha: 1.5e-6,
        beta: 1.0e-9,
        gs_rounds_per_step: DEFAULT_GS_ROUNDS,
    }
}

/// Built-in machine descriptions.
///
/// Node counts, core counts, and device memory follow the published
/// hardware tables of the corresponding systems. Per-device `p_opt`,
/// `eff_half_load`, and the alpha-beta network figures are calibration
/// values, not vendor specs: they reproduce the parallel-efficiency bands
/// these modules show on the bundled flow cases (GPUs near 80% and falling
/// to 50-60% below 4000 elements/device, CPU clusters within 90-110%).
/// `gs_rounds_per_step = 50` assumes on the order of fifty gather-scatter
/// invocations per timestep across the pressure and velocity solves.
pub fn builtin_machines() -> Vec<MachineSpec> {
    vec![
        MachineSpec {
            name: "deep".to_string(),
            modules: vec![
                ModuleSpec {
                    name: "booster".to_string(),
                    kind: DeviceKind::Gpu,
                    nodes: 75,
                    devices_per_node: 1,
                    cores_per_node: None,
                    count: Some(75),
                    mem_per_device: Some(32.0),
                    // 32 GB holds 32000 elements on paper; solver overhead
                    // leaves a bit more than 30000 usable.
                    usable_c_max: Some(30_000.0),
                    p_opt: 200_000.0,
                    eff_half_load: 2_000.0,
                    io_bw_per_node: 2.0,
                },
                ModuleSpec {
                    name: "cluster".to_string(),
                    kind: DeviceKind::Cpu,
                    nodes: 50,
                    devices_per_node: 1,
                    cores_per_node: Some(24),
                    count: Some(50),
                    mem_per_device: Some(192.0),
                    usable_c_max: None,
                    p_opt: 48_000.0,
                    eff_half_load: 0.5,
                    io_bw_per_node: 2.0,
                },
            ],
            network_host: NetworkParams {
                alpha: 1.0e-6,
                beta: 1.0e-9,
                gs_rounds_per_step: DEFAULT_GS_ROUNDS,
            },
            network_device: NetworkParams {
                alpha: 8.0e-7,
                beta: 8.0e-10,
                gs_rounds_per_step: DEFAULT_GS_ROUNDS,
            },
            io_defaults: IoParams {
                enabled: false,
                bytes_per_point: 32.0,
                node_io_bw: 2.0,
                output_every: 1,
            },
        },
        MachineSpec {
            name: "juwels".to_string(),
            modules: vec![
                ModuleSpec {
                    name: "booster".to_string(),
                    kind: DeviceKind::Gpu,
                    nodes: 936,
                    devices_per_node: 4,
                    cores_per_node: None,
                    count: Some(3744),
                    mem_per_device: Some(40.0),
                    usable_c_max: None,
                    p_opt: 300_000.0,
                    eff_half_load: 2_000.0,
                    io_bw_per_node: 2.0,
                },
                ModuleSpec {
                    name: "cluster".to_string(),
                    kind: DeviceKind::Cpu,
                    nodes: 2271,
                    devices_per_node: 1,
                    cores_per_node: Some(48),
                    count: Some(2271),
                    mem_per_device: Some(96.0),
                    usable_c_max: None,
                    p_opt: 105_600.0,
                    eff_half_load: 1.0,
                    io_bw_per_node: 2.0,
                },
            ],
            network_host: NetworkParams {
                alpha: 1.2e-6,
                beta: 6.0e-10,
                gs_rounds_per_step: DEFAULT_GS_ROUNDS,
            },
            network_device: NetworkParams {
                alpha: 1.0e-6,
                beta: 5.0e-10,
                gs_rounds_per_step: DEFAULT_GS_ROUNDS,
            },
            io_defaults: IoParams {
                enabled: false,
                bytes_per_point: 32.0,
                node_io_bw: 2.0,
                output_every: 1,
            },
        },
        MachineSpec {
            name: "lumi-g".to_string(),
            modules: vec![
                // One device = one graphics compute die; each node carries
                // four dual-die accelerators with 128 GB apiece, so 64 GB
                // per device.
                ModuleSpec {
                    name: "gcd".to_string(),
                    kind: DeviceKind::Gpu,
                    nodes: 2560,
                    devices_per_node: 8,
                    cores_per_node: None,
                    count: Some(20_480),
                    mem_per_device: Some(64.0),
                    usable_c_max: None,
                    p_opt: 250_000.0,
                    eff_half_load: 2_500.0,
                    io_bw_per_node: 2.0,
                },
            ],
            // NICs sit on the devices here: staging messages through the
            // host costs extra hops, so the host path is markedly slower.
            network_host: NetworkParams {
                alpha: 1.6e-6,
                beta: 6.0e-10,
                gs_rounds_per_step: DEFAULT_GS_ROUNDS,
            },
            network_device: NetworkParams {
                alpha: 8.0e-7,
                beta: 3.0e-10,
                gs_rounds_per_step: DEFAULT_GS_ROUNDS,
            },
            io_defaults: IoParams {
                enabled: false,
                bytes_per_point: 32.0,
                node_io_bw: 2.0,
                output_every: 1,
            },
        },
    ]
}

/// Built-in flow cases. The 1 GB per 1000 elements memory figure holds for
/// polynomial order 7.
pub fn builtin_cases() -> Vec<CaseSpec> {
    let case = |name: &str, elements: u64| CaseSpec {
        name: name.to_string(),
        elements,
        poly_order: 7,
        mem_per_element: 0.001,
        bytes_per_point_output: 32.0,
    };
    vec![
        case("pipe", 36_480),
        case("tgv", 262_144),
        case("rbc", 2_097_152),
    ]
}

pub fn machine_preset(name: &str) -> Option<MachineSpec> {
    builtin_machines().into_iter().find(|m| m.name == name)
}

pub fn case_preset(name: &str) -> Option<CaseSpec> {
    builtin_cases().into_iter().find(|c| c.name == name)
}

// --- scenario files --------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    machine: MachineSection,
    case: CaseSection,
    #[serde(default)]
    network: Option<NetworkSection>,
    #[serde(default)]
    io: Option<IoSection>,
    #[serde(default)]
    run: Option<RunOptions>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MachineSection {
    preset: Option<String>,
    name: Option<String>,
    #[serde(default)]
    modules: Vec<ModuleSpec>,
    #[serde(default)]
    overrides: BTreeMap<String, ModuleOverride>,
    network_host: Option<NetworkParams>,
    network_device: Option<NetworkParams>,
    io_defaults: Option<IoParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModuleOverride {
    nodes: Option<u64>,
    devices_per_node: Option<u64>,
    cores_per_node: Option<u64>,
    count: Option<u64>,
    mem_per_device: Option<f64>,
    usable_c_max: Option<f64>,
    p_opt: Option<f64>,
    eff_half_load: Option<f64>,
    io_bw_per_node: Option<f64>,
}

impl ModuleOverride {
    fn apply(&self, m: &mut ModuleSpec) {
        if let Some(v) = self.nodes {
            m.nodes = v;
            m.count = None;
        }
        if let Some(v) = self.devices_per_node {
            m.devices_per_node = v;
            m.count = None;
        }
        if let Some(v) = self.cores_per_node {
            m.cores_per_node = Some(v);
        }
        if let Some(v) = self.count {
            m.count = Some(v);
        }
        if let Some(v) = self.mem_per_device {
            m.mem_per_device = Some(v);
        }
        if let Some(v) = self.usable_c_max {
            m.usable_c_max = Some(v);
        }
        if let Some(v) = self.p_opt {
            m.p_opt = v;
        }
        if let Some(v) = self.eff_half_load {
            m.eff_half_load = v;
        }
        if let Some(v) = self.io_bw_per_node {
            m.io_bw_per_node = v;
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseSection {
    preset: Option<String>,
    name: Option<String>,
    elements: Option<u64>,
    poly_order: Option<u32>,
    mem_per_element: Option<f64>,
    bytes_per_point_output: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    /// `"host"` or `"device"`: which of the machine's parameter sets to
    /// start from.
    path: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gs_rounds_per_step: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IoSection {
    enabled: Option<bool>,
    bytes_per_point: Option<f64>,
    node_io_bw: Option<f64>,
    output_every: Option<u32>,
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;

    let mut machine = match &file.machine.preset {
        Some(name) => machine_preset(name).ok_or_else(|| ScenarioError::UnknownPreset {
            kind: "machine",
            name: name.clone(),
        })?,
        None => {
            let name = file.machine.name.clone().ok_or_else(|| {
                ScenarioError::Inconsistent(
                    "machine needs either a preset or a name with modules".to_string(),
                )
            })?;
            MachineSpec {
                name,
                modules: file.machine.modules.clone(),
                network_host: default_network(),
                network_device: default_network(),
                io_defaults: IoParams::disabled(),
            }
        }
    };
    if file.machine.preset.is_some() && !file.machine.modules.is_empty() {
        return Err(ScenarioError::Inconsistent(
            "machine.modules cannot be combined with a preset; use machine.overrides".to_string(),
        ));
    }
    for (name, patch) in &file.machine.overrides {
        let module = machine
            .modules
            .iter_mut()
            .find(|m| &m.name == name)
            .ok_or_else(|| {
                ScenarioError::Inconsistent(format!("machine.overrides names unknown module `{name}`"))
            })?;
        patch.apply(module);
    }
    if let Some(net) = file.machine.network_host {
        machine.network_host = net;
    }
    if let Some(net) = file.machine.network_device {
        machine.network_device = net;
    }
    if let Some(io) = file.machine.io_defaults {
        machine.io_defaults = io;
    }

    let mut case = match &file.case.preset {
        Some(name) => case_preset(name).ok_or_else(|| ScenarioError::UnknownPreset {
            kind: "case",
            name: name.clone(),
        })?,
        None => {
            let elements = file.case.elements.ok_or_else(|| {
                ScenarioError::Inconsistent(
                    "case needs either a preset or an element count".to_string(),
                )
            })?;
            CaseSpec {
                name: file.case.name.clone().unwrap_or_else(|| "custom".to_string()),
                elements,
                poly_order: 7,
                mem_per_element: 0.001,
                bytes_per_point_output: 32.0,
            }
        }
    };
    if file.case.preset.is_some() {
        if let Some(name) = &file.case.name {
            case.name = name.clone();
        }
        if let Some(e) = file.case.elements {
            case.elements = e;
        }
    }
    if let Some(n) = file.case.poly_order {
        case.poly_order = n;
    }
    if let Some(m) = file.case.mem_per_element {
        case.mem_per_element = m;
    }
    if let Some(b) = file.case.bytes_per_point_output {
        case.bytes_per_point_output = b;
    }

    let mut network = match file.network.as_ref().and_then(|n| n.path.as_deref()) {
        None | Some("host") => machine.network_host,
        Some("device") => machine.network_device,
        Some(other) => {
            return Err(ScenarioError::Inconsistent(format!(
                "network.path must be `host` or `device`, got `{other}`"
            )))
        }
    };
    if let Some(section) = &file.network {
        if let Some(a) = section.alpha {
            network.alpha = a;
        }
        if let Some(b) = section.beta {
            network.beta = b;
        }
        if let Some(r) = section.gs_rounds_per_step {
            network.gs_rounds_per_step = r;
        }
    }

    let mut io = machine.io_defaults;
    if let Some(section) = &file.io {
        if let Some(e) = section.enabled {
            io.enabled = e;
        }
        if let Some(b) = section.bytes_per_point {
            io.bytes_per_point = b;
        }
        if let Some(bw) = section.node_io_bw {
            io.node_io_bw = bw;
        }
        if let Some(k) = section.output_every {
            io.output_every = k;
        }
    }

    let scenario = Scenario {
        machine,
        case,
        network,
        io,
        run: file.run.unwrap_or_default(),
    };
    let violations = scenario.validate();
    if !violations.is_empty() {
        return Err(ScenarioError::Invalid(violations));
    }
    // Selection consistency is part of loading, not of first use.
    scenario.selected_devices()?;
    Ok(scenario)
}

/// Load and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Build a scenario straight from preset names with default run options.
pub fn from_presets(machine: &str, case: &str) -> Result<Scenario, ScenarioError> {
    let machine = machine_preset(machine).ok_or_else(|| ScenarioError::UnknownPreset {
        kind: "machine",
        name: machine.to_string(),
    })?;
    let case = case_preset(case).ok_or_else(|| ScenarioError::UnknownPreset {
        kind: "case",
        name: case.to_string(),
    })?;
    let scenario = Scenario {
        network: machine.network_host,
        io: machine.io_defaults,
        machine,
        case,
        run: RunOptions::default(),
    };
    let violations = scenario.validate();
    if !violations.is_empty() {
        return Err(ScenarioError::Invalid(violations));
    }
    Ok(scenario)
}
