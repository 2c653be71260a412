//! Scenario files, task execution and sweep tables behind the CLI.
//!
//! A scenario is a JSON document tagged with [`SCHEMA`]. Nodes are addressed
//! as `[gen_x, off_x, gen_y, off_y]`; per-axis weight factors are listed in
//! tree index order `2^gen + off - 1`.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::constants::{
    box_constant, carleson_constant, embedding_constant, hereditary_constant, sawyer_conditions,
    verify_chain, CarlesonMethod, HereditaryMethod, DEFAULT_EMBEDDING_TOL,
};
use crate::error::{Error, Result};
use crate::extremal::{
    construction_by_name, family_size, uniform_boundary_mass, ConstructionSummary, DyadicRect,
    StructuredConstruction, MAX_BOUND_GENERATORS, MAX_DENSE_EXTREMAL_DEPTH,
};
use crate::hardy::{MassFunction, WeightFunction};
use crate::maximal::maximal_equivalence_probe;
use crate::poset::{BiTreeTopology, RectAddress};
use crate::random::{sample, Distribution};

pub const SCHEMA: &str = "bitree-embed/1";
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BITREE_EMBED_OUT_DIR";
pub const EXPERIMENTS: [&str; 5] = [
    "chain_ratios_product_w",
    "car_vs_rec",
    "rec_vs_embedding",
    "sum_of_products",
    "maximal_probe",
];

/// CLI exit status for an error: 1 usage, 2 assertion failure, 3 solver failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Solver(_) => 3,
        Error::Postcondition(_) => 2,
        _ => 1,
    }
}

/// `$BITREE_EMBED_OUT_DIR/<stem>.<ext>` when the variable is set.
pub fn default_output_path(stem: &str, format: Format) -> Option<PathBuf> {
    let dir = std::env::var_os(OUT_DIR_ENV)?;
    Some(PathBuf::from(dir).join(format!("{stem}.{}", format.extension())))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

// ------------------------------------------------------------ scenario

/// `[gen_x, off_x, gen_y, off_y]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRef(pub u32, pub usize, pub u32, pub usize);

impl NodeRef {
    fn resolve(self, topo: &BiTreeTopology) -> Result<usize> {
        let addr = RectAddress {
            gen_x: self.0,
            off_x: self.1,
            gen_y: self.2,
            off_y: self.3,
        };
        topo.index_of(addr)
            .ok_or_else(|| Error::Parameter(format!("node {self:?} is not in the bi-tree of depth {:?}", topo.depths())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeValue {
    pub node: NodeRef,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// Listed nodes, zero elsewhere.
    General { entries: Vec<NodeValue> },
    Product { x: Vec<f64>, y: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    Builtin {
        name: String,
        n: u32,
    },
    Explicit {
        depth: [u32; 2],
        mass: Vec<NodeValue>,
        weight: WeightSpec,
    },
    Random {
        depth: [u32; 2],
        seed: u64,
        #[serde(default = "default_distribution")]
        distribution: Distribution,
    },
}

fn default_distribution() -> Distribution {
    Distribution::General
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    BoxConstant,
    CarlesonConstant {
        #[serde(default = "default_carleson")]
        method: CarlesonMethod,
    },
    HereditaryConstant {
        #[serde(default = "default_hereditary")]
        method: HereditaryMethod,
    },
    EmbeddingConstant {
        #[serde(default = "default_tol")]
        tol: f64,
    },
    VerifyChain,
    SawyerConditions,
    MaximalProbe {
        #[serde(default = "default_probe_samples")]
        samples: usize,
    },
    /// Closed-form quantities of a builtin construction.
    Structured,
}

fn default_carleson() -> CarlesonMethod {
    CarlesonMethod::ExactMincut
}

fn default_hereditary() -> HereditaryMethod {
    HereditaryMethod::ExactEnum
}

fn default_tol() -> f64 {
    DEFAULT_EMBEDDING_TOL
}

fn default_probe_samples() -> usize {
    50
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::BoxConstant => "box_constant",
            Task::CarlesonConstant { .. } => "carleson_constant",
            Task::HereditaryConstant { .. } => "hereditary_constant",
            Task::EmbeddingConstant { .. } => "embedding_constant",
            Task::VerifyChain => "verify_chain",
            Task::SawyerConditions => "sawyer_conditions",
            Task::MaximalProbe { .. } => "maximal_probe",
            Task::Structured => "structured",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    pub instance: InstanceSource,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: Format,
    pub path: Option<PathBuf>,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = parse_json(text)?;
    if spec.schema != SCHEMA {
        return Err(Error::Parse {
            path: "schema".into(),
            message: format!("expected {SCHEMA:?}, got {:?}", spec.schema),
        });
    }
    Ok(spec)
}

pub fn parse_instance(text: &str) -> Result<InstanceSource> {
    parse_json(text)
}

// ------------------------------------------------------------ instances

pub struct Instance {
    pub label: String,
    pub dense: Option<(BiTreeTopology, MassFunction, WeightFunction)>,
    pub construction: Option<StructuredConstruction>,
}

impl Instance {
    fn dense(&self) -> Result<(&BiTreeTopology, &MassFunction, &WeightFunction)> {
        match &self.dense {
            Some((t, m, w)) => Ok((t, m, w)),
            None => Err(Error::Size(format!(
                "{} has no dense copy (depth limit {MAX_DENSE_EXTREMAL_DEPTH})",
                self.label
            ))),
        }
    }

    fn construction(&self) -> Result<&StructuredConstruction> {
        self.construction
            .as_ref()
            .ok_or_else(|| Error::Parameter(format!("{} is not a builtin construction", self.label)))
    }
}

pub fn build_instance(source: &InstanceSource) -> Result<Instance> {
    match source {
        InstanceSource::Builtin { name, n } => {
            let c = construction_by_name(name, *n)?;
            let dense = if *n <= MAX_DENSE_EXTREMAL_DEPTH {
                Some(c.materialize()?)
            } else {
                None
            };
            Ok(Instance {
                label: format!("{name}(N={n})"),
                dense,
                construction: Some(c),
            })
        }
        InstanceSource::Explicit { depth, mass, weight } => {
            let topo = BiTreeTopology::new(depth[0], depth[1])?;
            let mut mu = vec![0.0; topo.len()];
            for nv in mass {
                mu[nv.node.resolve(&topo)?] += nv.value;
            }
            let mu = MassFunction::new(&topo, mu)?;
            let w = match weight {
                WeightSpec::General { entries } => {
                    let mut w = vec![0.0; topo.len()];
                    for nv in entries {
                        w[nv.node.resolve(&topo)?] += nv.value;
                    }
                    WeightFunction::general(&topo, w)?
                }
                WeightSpec::Product { x, y } => WeightFunction::product(&topo, x.clone(), y.clone())?,
            };
            Ok(Instance {
                label: format!("explicit{depth:?}"),
                dense: Some((topo, mu, w)),
                construction: None,
            })
        }
        InstanceSource::Random { depth, seed, distribution } => {
            let topo = BiTreeTopology::new(depth[0], depth[1])?;
            let (mu, w) = sample(&topo, *seed, *distribution);
            Ok(Instance {
                label: format!("random{depth:?}/seed={seed}"),
                dense: Some((topo, mu, w)),
                construction: None,
            })
        }
    }
}

// ------------------------------------------------------------ tasks

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub id: usize,
    pub op: String,
    pub status: TaskStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Exit code class of the error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<i32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub label: String,
    pub depths: Option<[u32; 2]>,
    pub nodes: Option<usize>,
    pub construction: Option<ConstructionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema: String,
    pub seed: u64,
    pub instance: InstanceSummary,
    pub tasks: Vec<TaskReport>,
}

impl ScenarioReport {
    /// Exit code of the first failed task, 0 if all succeeded.
    pub fn exit_code(&self) -> i32 {
        self.tasks.iter().find_map(|t| t.code).unwrap_or(0)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Closed-form quantities of a construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub summary: ConstructionSummary,
    pub anchor_hereditary_ratio: Option<f64>,
    pub potential: crate::extremal::PotentialProfile,
    pub carleson_upper_bound: Option<f64>,
    pub rec_surrogate: Option<crate::extremal::RecSurrogate>,
    pub embedding_probe: Option<crate::extremal::EmbeddingProbe>,
}

pub fn structured_report(c: &StructuredConstruction, seed: u64) -> Result<StructuredReport> {
    let carleson_upper_bound = if c.generators.len() <= MAX_BOUND_GENERATORS {
        Some(c.carleson_upper_bound()?)
    } else {
        None
    };
    let leveled = c.k_max >= 1;
    Ok(StructuredReport {
        summary: c.into(),
        anchor_hereditary_ratio: c.anchor_hereditary_ratio(),
        potential: c.potential_profile(seed),
        carleson_upper_bound,
        rec_surrogate: leveled.then(|| c.rec_surrogate(seed)),
        embedding_probe: if leveled { Some(c.embedding_probe()?) } else { None },
    })
}

fn run_task(task: &Task, inst: &Instance, seed: u64) -> Result<Value> {
    Ok(match task {
        Task::BoxConstant => {
            let (t, m, w) = inst.dense()?;
            to_value(&box_constant(t, m, w))
        }
        Task::CarlesonConstant { method } => {
            let (t, m, w) = inst.dense()?;
            to_value(&carleson_constant(t, m, w, *method)?)
        }
        Task::HereditaryConstant { method } => {
            let (t, m, w) = inst.dense()?;
            to_value(&hereditary_constant(t, m, w, *method)?)
        }
        Task::EmbeddingConstant { tol } => {
            let (t, m, w) = inst.dense()?;
            to_value(&embedding_constant(t, m, w, *tol)?)
        }
        Task::VerifyChain => {
            let (t, m, w) = inst.dense()?;
            to_value(&verify_chain(t, m, w)?)
        }
        Task::SawyerConditions => {
            let (t, m, w) = inst.dense()?;
            to_value(&sawyer_conditions(t, m, w)?)
        }
        Task::MaximalProbe { samples } => {
            let (t, m, _) = inst.dense()?;
            let mut probe = maximal_equivalence_probe(t, m, *samples, seed)?;
            probe.samples.clear();
            to_value(&probe)
        }
        Task::Structured => to_value(&structured_report(inst.construction()?, seed)?),
    })
}

/// Runs the tasks in order. Instance construction errors abort the run;
/// task errors are recorded in the task's report.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioReport> {
    let inst = build_instance(&spec.instance)?;
    let tasks = spec
        .tasks
        .iter()
        .enumerate()
        .map(|(id, task)| {
            let (status, result, error, code) = match run_task(task, &inst, spec.seed) {
                Ok(v) => (TaskStatus::Ok, Some(v), None, None),
                Err(e) => (TaskStatus::Failed, None, Some(e.to_string()), Some(exit_code(&e))),
            };
            TaskReport {
                id,
                op: task.name().into(),
                status,
                result,
                error,
                code,
            }
        })
        .collect();
    let dense = inst.dense.as_ref().map(|(t, _, _)| t);
    Ok(ScenarioReport {
        schema: SCHEMA.into(),
        seed: spec.seed,
        instance: InstanceSummary {
            label: inst.label.clone(),
            depths: dense.map(|t| {
                let (a, b) = t.depths();
                [a, b]
            }),
            nodes: dense.map(|t| t.len()),
            construction: inst.construction.as_ref().map(Into::into),
        },
        tasks,
    })
}

/// Pretty JSON with a trailing newline.
pub fn report_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report types serialize");
    s.push('\n');
    s
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, f64)>) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                out.push((prefix.to_string(), x));
            }
        }
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        _ => {}
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// One row per numeric leaf of each task result: `task,op,status,quantity,value`.
pub fn scenario_csv(report: &ScenarioReport) -> String {
    let mut rows = Vec::new();
    for t in &report.tasks {
        let status = match t.status {
            TaskStatus::Ok => "ok",
            TaskStatus::Failed => "failed",
        };
        let mut leaves = Vec::new();
        if let Some(v) = &t.result {
            flatten("", v, &mut leaves);
        }
        let row = |q: String, v: String| vec![t.id.to_string(), t.op.clone(), status.into(), q, v];
        if leaves.is_empty() {
            rows.push(row(String::new(), String::new()));
        }
        rows.extend(leaves.into_iter().map(|(q, x)| row(q, fmt_float(x))));
    }
    write_csv(&["task", "op", "status", "quantity", "value"], rows)
}

// ------------------------------------------------------------ sweeps

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeAxis {
    Depth,
    Log2N,
    Log2M,
    M,
}

impl SlopeAxis {
    fn x(self, n: u32) -> f64 {
        match self {
            SlopeAxis::Depth => n as f64,
            SlopeAxis::Log2N => (n as f64).log2(),
            SlopeAxis::Log2M => (family_size(n) as f64).log2(),
            SlopeAxis::M => family_size(n) as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment: String,
    pub construction: String,
    /// Depth `N`, or the per-axis depth for random families.
    pub n: u32,
    pub quantity: String,
    pub value: f64,
    pub ratio: Option<f64>,
    pub witness: String,
    /// Least-squares slope of `value` against `slope_axis` over the rows
    /// sharing `(construction, quantity)`.
    pub slope: Option<f64>,
    pub slope_axis: SlopeAxis,
    pub seed: u64,
    pub params: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: String,
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str =
    "experiment,construction,n,quantity,value,ratio,witness,slope,slope_axis,seed,params";

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
        let rows = self.rows.iter().map(|r| {
            let axis = match r.slope_axis {
                SlopeAxis::Depth => "depth",
                SlopeAxis::Log2N => "log2_n",
                SlopeAxis::Log2M => "log2_m",
                SlopeAxis::M => "m",
            };
            vec![
                r.experiment.clone(),
                r.construction.clone(),
                r.n.to_string(),
                r.quantity.clone(),
                fmt_float(r.value),
                opt(r.ratio),
                r.witness.clone(),
                opt(r.slope),
                axis.into(),
                r.seed.to_string(),
                r.params.clone(),
            ]
        });
        write_csv(&SWEEP_CSV_HEADER.split(',').collect::<Vec<_>>(), rows)
    }

    /// Rows for one quantity, in sweep order.
    pub fn series(&self, construction: &str, quantity: &str) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.construction == construction && r.quantity == quantity)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub ns: Vec<u32>,
    pub seed: u64,
    /// Instances per depth, or random test functions per probe.
    pub samples: usize,
}

/// Least-squares slope; `None` with fewer than two distinct abscissae.
pub fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if points.len() < 2 || sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn fill_slopes(rows: &mut [SweepRow]) {
    let mut keys: Vec<(String, String)> = rows
        .iter()
        .map(|r| (r.construction.clone(), r.quantity.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    for (c, q) in keys {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.construction == c && r.quantity == q && r.value.is_finite())
            .map(|r| (r.slope_axis.x(r.n), r.value))
            .collect();
        let s = slope(&pts);
        for r in rows.iter_mut().filter(|r| r.construction == c && r.quantity == q) {
            r.slope = s;
        }
    }
}

struct RowBuilder<'a> {
    experiment: &'a str,
    construction: String,
    n: u32,
    axis: SlopeAxis,
    seed: u64,
    params: String,
    rows: Vec<SweepRow>,
}

impl RowBuilder<'_> {
    fn push(&mut self, quantity: &str, value: f64, ratio: Option<f64>, witness: impl Into<String>) {
        self.rows.push(SweepRow {
            experiment: self.experiment.into(),
            construction: self.construction.clone(),
            n: self.n,
            quantity: quantity.into(),
            value,
            ratio,
            witness: witness.into(),
            slope: None,
            slope_axis: self.axis,
            seed: self.seed,
            params: self.params.clone(),
        });
    }
}

fn chain_cell(n: u32, p: &SweepParams) -> Result<Vec<SweepRow>> {
    let topo = BiTreeTopology::new(n, n)?;
    let mut rb = RowBuilder {
        experiment: "chain_ratios_product_w",
        construction: "random_product_weight".into(),
        n,
        axis: SlopeAxis::Depth,
        seed: p.seed,
        params: format!("depth=({n},{n}) instances={} distribution=product_weight", p.samples),
        rows: Vec::new(),
    };
    let mut ce_box = (0.0f64, 0u64);
    let mut c_box = (0.0f64, 0u64);
    let mut mean = 0.0;
    for i in 0..p.samples as u64 {
        let s = p.seed.wrapping_add(i);
        let (mu, w) = sample(&topo, s, Distribution::ProductWeight);
        let b = box_constant(&topo, &mu, &w).value;
        if b <= 0.0 {
            continue;
        }
        let c = carleson_constant(&topo, &mu, &w, CarlesonMethod::ExactMincut)?.value;
        let ce = embedding_constant(&topo, &mu, &w, DEFAULT_EMBEDDING_TOL)?.value;
        mean += ce / b;
        if ce / b > ce_box.0 {
            ce_box = (ce / b, s);
        }
        if c / b > c_box.0 {
            c_box = (c / b, s);
        }
    }
    rb.push("max_ce_over_box", ce_box.0, None, format!("seed={}", ce_box.1));
    rb.push("max_c_over_box", c_box.0, None, format!("seed={}", c_box.1));
    rb.push("mean_ce_over_box", mean / p.samples.max(1) as f64, None, "");
    Ok(rb.rows)
}

/// Exact dense Carleson constant when a dense copy exists, else the
/// closed-form upper bound when the generator list is small enough.
fn carleson_for(c: &StructuredConstruction) -> Result<Option<(f64, &'static str)>> {
    if c.n <= MAX_DENSE_EXTREMAL_DEPTH {
        let (t, m, w) = c.materialize()?;
        let v = carleson_constant(&t, &m, &w, CarlesonMethod::ExactMincut)?.value;
        Ok(Some((v, "exact_mincut")))
    } else if c.generators.len() <= MAX_BOUND_GENERATORS {
        Ok(Some((c.carleson_upper_bound()?, "upper_bound")))
    } else {
        Ok(None)
    }
}

fn separation_cell(experiment: &str, name: &str, n: u32, p: &SweepParams, axis: SlopeAxis) -> Result<Vec<SweepRow>> {
    let c = construction_by_name(name, n)?;
    let mut rb = RowBuilder {
        experiment,
        construction: name.into(),
        n,
        axis,
        seed: p.seed,
        params: format!("n={n} m={} k_max={}", c.m, c.k_max),
        rows: Vec::new(),
    };
    let hc = c
        .anchor_hereditary_ratio()
        .ok_or_else(|| Error::Precondition(format!("{name} has no mass at ω₀")))?;
    rb.push("hc_witness", hc, None, "omega0");
    if let Some((carleson, how)) = carleson_for(&c)? {
        rb.push("carleson", carleson, None, how);
        rb.push("hc_over_c", hc / carleson, Some(hc / carleson), how);
    }
    Ok(rb.rows)
}

fn rec_cell(n: u32, p: &SweepParams) -> Result<Vec<SweepRow>> {
    let c = StructuredConstruction::rec_not_embedding(n)?;
    let mut rb = RowBuilder {
        experiment: "rec_vs_embedding",
        construction: "rec_not_embedding".into(),
        n,
        axis: SlopeAxis::Log2M,
        seed: p.seed,
        params: format!("n={n} m={} k_max={} sample_seed={}", c.m, c.k_max, p.seed),
        rows: Vec::new(),
    };
    let probe = c.embedding_probe()?;
    let rec = c.rec_surrogate(p.seed);
    let scale = c.m as f64 / n as f64;
    let log_m = (c.m as f64).log2();
    rb.push("embedding_ratio", probe.ratio, Some(probe.ratio / log_m), "f=I*mu0");
    rb.push("numerator_over_mass", probe.numerator / scale, None, "f=I*mu0");
    rb.push("denominator_over_mass", probe.denominator / scale, None, "f=I*mu0");
    rb.push("rec_surrogate", rec.value, None, format!("samples={}", rec.samples));
    rb.push("separation", probe.ratio / rec.value, None, "");
    Ok(rb.rows)
}

fn maximal_cell(n: u32, p: &SweepParams) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut shapes = vec![("tree", (n, 0), 4.0)];
    if n <= 3 {
        shapes.push(("bitree", (n, n), 16.0));
    }
    for (label, (dx, dy), bound) in shapes {
        let topo = BiTreeTopology::new(dx, dy)?;
        let mu = uniform_boundary_mass(&topo)?;
        let probe = maximal_equivalence_probe(&topo, &mu, p.samples, p.seed)?;
        let mut rb = RowBuilder {
            experiment: "maximal_probe",
            construction: format!("uniform_{label}"),
            n,
            axis: SlopeAxis::Depth,
            seed: p.seed,
            params: format!("depth=({dx},{dy}) samples={}", p.samples),
            rows: Vec::new(),
        };
        rb.push("left", probe.left, Some(probe.left / bound), "sup_ce");
        rb.push("right", probe.right, Some(probe.right / bound), "max_ratio");
        rb.push("upper_proxy", probe.upper_proxy, Some(probe.upper_proxy / bound), "layer_cake");
        rows.extend(rb.rows);
    }
    Ok(rows)
}

/// Runs a registered experiment over `params.ns`; cells run in parallel on
/// the current rayon pool and are merged in input order.
pub fn sweep(experiment: &str, params: &SweepParams) -> Result<SweepReport> {
    if !EXPERIMENTS.contains(&experiment) {
        return Err(Error::Parameter(format!(
            "unknown experiment {experiment:?}; expected one of {EXPERIMENTS:?}"
        )));
    }
    if params.ns.is_empty() {
        return Err(Error::Parameter("empty N range".into()));
    }
    let cells: Vec<Vec<SweepRow>> = params
        .ns
        .par_iter()
        .map(|&n| -> Result<Vec<SweepRow>> {
            match experiment {
                "chain_ratios_product_w" => chain_cell(n, params),
                "car_vs_rec" => {
                    let mut rows = separation_cell(experiment, "simple_car_not_rec", n, params, SlopeAxis::Depth)?;
                    if n >= 4 && n.is_power_of_two() {
                        rows.extend(separation_cell(experiment, "upset_car_not_rec", n, params, SlopeAxis::Log2N)?);
                    }
                    Ok(rows)
                }
                "rec_vs_embedding" => rec_cell(n, params),
                "sum_of_products" => separation_cell(experiment, "sum_of_products", n, params, SlopeAxis::M),
                "maximal_probe" => maximal_cell(n, params),
                _ => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = cells.into_iter().flatten().collect();
    fill_slopes(&mut rows);
    Ok(SweepReport {
        schema: SCHEMA.into(),
        experiment: experiment.into(),
        seed: params.seed,
        rows,
    })
}

/// Parses `4,8,16` or a range `2..6` (inclusive).
pub fn parse_n_list(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Parameter(format!("bad N list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

/// `"simple_car_not_rec"`-style rectangle strings for reports.
pub fn describe_rects(rects: &[DyadicRect]) -> Vec<String> {
    rects.iter().map(ToString::to_string).collect()
}
