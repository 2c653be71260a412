use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bitree_embed::constants::{carleson_brute, carleson_mincut, verify_chain};
use bitree_embed::extremal::{construction_by_name, uniform_boundary_mass, CONSTRUCTION_NAMES};
use bitree_embed::harness::{
    default_output_path, exit_code, parse_instance, parse_n_list, parse_scenario, report_json, run_scenario,
    scenario_csv, sweep, Format, InstanceSource, ScenarioReport, ScenarioSpec, SweepParams, Task,
    EXPERIMENTS, SCHEMA,
};
use bitree_embed::maximal::maximal_equivalence_probe;
use bitree_embed::random::{sample, Distribution};
use bitree_embed::{BiTreeTopology, Error, Result};

#[derive(Parser)]
#[command(name = "bitree-embed", version, about = "Embedding constants on finite dyadic bi-trees")]
struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    /// Worker threads for sweeps and probes (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Box,
    Carleson,
    Hereditary,
    Embedding,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    General,
    Boundary,
    ProductWeight,
    ProductBoundary,
}

impl From<Dist> for Distribution {
    fn from(d: Dist) -> Self {
        match d {
            Dist::General => Distribution::General,
            Dist::Boundary => Distribution::Boundary,
            Dist::ProductWeight => Distribution::ProductWeight,
            Dist::ProductBoundary => Distribution::ProductBoundary,
        }
    }
}

#[derive(Args)]
struct InstanceArgs {
    /// Builtin construction (see `counterexample --help`).
    #[arg(long, conflicts_with = "instance")]
    builtin: Option<String>,
    /// Depth N of the builtin construction.
    #[arg(long, default_value_t = 4)]
    n: u32,
    /// JSON instance file (`{"source": ...}`).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Random instance depth `X,Y`.
    #[arg(long, default_value = "2,2")]
    depth: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Dist::Boundary)]
    distribution: Dist,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one or all of the four constants.
    Constants {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum, default_value_t = Kind::All)]
        kind: Kind,
        /// `exact_mincut`/`brute_force` (carleson) or `exact_enum`/`local_search` (hereditary).
        #[arg(long)]
        method: Option<String>,
        /// Relative tolerance of the power iteration.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check Box ≤ C ≤ HC ≤ CE and report the ratios.
    Verify {
        #[command(flatten)]
        instance: InstanceArgs,
    },
    /// Closed-form quantities of a counterexample family.
    Counterexample {
        name: String,
        #[arg(long)]
        n: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the exact Carleson constant on the dense copy (N ≤ 8).
        #[arg(long)]
        exact: bool,
    },
    /// Run a registered experiment over a list (`4,8,16`) or range (`2..6`) of N.
    Sweep {
        experiment: String,
        #[arg(long = "n", alias = "depth")]
        ns: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances per depth, or test functions per probe.
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Quick internal consistency checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a scenario file (`-` for stdin).
    Run { scenario: PathBuf },
}

fn read_text(path: &Path) -> Result<String> {
    let res = if path.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin())
    } else {
        fs::read_to_string(path)
    };
    res.map_err(|e| Error::Parameter(format!("cannot read {}: {e}", path.display())))
}

fn instance_source(a: &InstanceArgs) -> Result<InstanceSource> {
    if let Some(name) = &a.builtin {
        return Ok(InstanceSource::Builtin { name: name.clone(), n: a.n });
    }
    if let Some(path) = &a.instance {
        return parse_instance(&read_text(path)?);
    }
    let bad = || Error::Parameter(format!("--depth expects X,Y, got {:?}", a.depth));
    let (x, y) = a.depth.split_once(',').ok_or_else(bad)?;
    Ok(InstanceSource::Random {
        depth: [x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?],
        seed: a.seed,
        distribution: a.distribution.into(),
    })
}

fn constant_tasks(kind: Kind, method: Option<&str>, tol: Option<f64>) -> Result<Vec<Task>> {
    let carleson = || -> Result<Task> {
        Ok(Task::CarlesonConstant {
            method: method.map_or(Ok(bitree_embed::constants::CarlesonMethod::ExactMincut), str::parse)?,
        })
    };
    let hereditary = || -> Result<Task> {
        Ok(Task::HereditaryConstant {
            method: method.map_or(Ok(bitree_embed::constants::HereditaryMethod::ExactEnum), str::parse)?,
        })
    };
    let embedding = Task::EmbeddingConstant {
        tol: tol.unwrap_or(bitree_embed::constants::DEFAULT_EMBEDDING_TOL),
    };
    Ok(match kind {
        Kind::Box => vec![Task::BoxConstant],
        Kind::Carleson => vec![carleson()?],
        Kind::Hereditary => vec![hereditary()?],
        Kind::Embedding => vec![embedding],
        Kind::All => {
            if method.is_some() {
                return Err(Error::Parameter("--method needs a single --kind".into()));
            }
            vec![Task::BoxConstant, carleson()?, hereditary()?, embedding]
        }
    })
}

struct Output {
    out: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn emit(&self, stem: &str, json: impl Serialize, csv: impl FnOnce() -> Option<String>) -> Result<()> {
        let text = match self.format {
            Format::Json => report_json(&json),
            Format::Csv => csv().ok_or_else(|| Error::Parameter("this command has no CSV form".into()))?,
        };
        match self.out.clone().or_else(|| default_output_path(stem, self.format)) {
            Some(path) => fs::write(&path, text)
                .map_err(|e| Error::Parameter(format!("cannot write {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn scenario(&self, stem: &str, report: &ScenarioReport) -> Result<i32> {
        self.emit(stem, report, || Some(scenario_csv(report)))?;
        Ok(report.exit_code())
    }
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn selftest(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for i in 0..40 {
        let topo = BiTreeTopology::new(1 + (i % 2), 1)?;
        let (mu, w) = sample(&topo, seed.wrapping_add(i as u64), Distribution::General);
        let fast = carleson_mincut(&topo, &mu, &w, 1e-12)?.value;
        let (slow, _, _) = carleson_brute(&topo, &mu, &w)?;
        worst = worst.max((fast - slow).abs() / slow.abs().max(1e-300));
    }
    checks.push(Check {
        name: "carleson_mincut_vs_brute_force",
        passed: worst <= 1e-9,
        detail: format!("max relative error {worst:e} over 40 instances"),
    });

    let mut bad = Vec::new();
    for n in 2..=5 {
        let c = construction_by_name("simple_car_not_rec", n)?;
        let r = c.anchor_hereditary_ratio().unwrap_or(0.0);
        if (r - (n + 1) as f64).abs() > 1e-12 {
            bad.push(format!("N={n}: {r}"));
        }
    }
    checks.push(Check {
        name: "anchor_witness_is_n_plus_one",
        passed: bad.is_empty(),
        detail: if bad.is_empty() { "N = 2..5".into() } else { bad.join("; ") },
    });

    let topo = BiTreeTopology::new(2, 2)?;
    let mut failures = 0;
    for i in 0..10 {
        let (mu, w) = sample(&topo, seed.wrapping_add(100 + i), Distribution::Boundary);
        if verify_chain(&topo, &mu, &w).is_err() {
            failures += 1;
        }
    }
    checks.push(Check {
        name: "forward_chain",
        passed: failures == 0,
        detail: format!("{failures} of 10 instances at depth (2,2) failed"),
    });

    let topo = BiTreeTopology::new(5, 0)?;
    let probe = maximal_equivalence_probe(&topo, &uniform_boundary_mass(&topo)?, 20, seed)?;
    checks.push(Check {
        name: "maximal_probe_tree_bound",
        passed: probe.left <= 4.0 + 1e-6 && probe.right <= probe.left * (1.0 + 1e-9),
        detail: format!("left {} right {} at depth (5,0)", probe.left, probe.right),
    });
    Ok(checks)
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    }
    let out = Output {
        out: cli.out,
        format: cli.format.into(),
    };
    let scenario = |instance, seed, tasks| ScenarioSpec {
        schema: SCHEMA.into(),
        seed,
        instance,
        tasks,
        output: None,
    };
    match cli.command {
        Command::Constants { instance, kind, method, tol } => {
            let tasks = constant_tasks(kind, method.as_deref(), tol)?;
            let report = run_scenario(&scenario(instance_source(&instance)?, instance.seed, tasks))?;
            out.scenario(&format!("constants-{}", instance.seed), &report)
        }
        Command::Verify { instance } => {
            let report = run_scenario(&scenario(instance_source(&instance)?, instance.seed, vec![Task::VerifyChain]))?;
            out.scenario(&format!("verify-{}", instance.seed), &report)
        }
        Command::Counterexample { name, n, seed, exact } => {
            if !CONSTRUCTION_NAMES.contains(&name.as_str()) {
                return Err(Error::Parameter(format!("unknown construction {name:?}; expected one of {CONSTRUCTION_NAMES:?}")));
            }
            let mut tasks = vec![Task::Structured];
            if exact {
                tasks.push(Task::CarlesonConstant {
                    method: bitree_embed::constants::CarlesonMethod::ExactMincut,
                });
            }
            let report = run_scenario(&scenario(InstanceSource::Builtin { name: name.clone(), n }, seed, tasks))?;
            out.scenario(&format!("{name}-{n}"), &report)
        }
        Command::Sweep { experiment, ns, seed, samples } => {
            if !EXPERIMENTS.contains(&experiment.as_str()) {
                return Err(Error::Parameter(format!("unknown experiment {experiment:?}; expected one of {EXPERIMENTS:?}")));
            }
            let params = SweepParams { ns: parse_n_list(&ns)?, seed, samples };
            let report = sweep(&experiment, &params)?;
            out.emit(&format!("{experiment}-{seed}"), &report, || Some(report.to_csv()))?;
            Ok(0)
        }
        Command::Selftest { seed } => {
            let checks = selftest(seed)?;
            let passed = checks.iter().all(|c| c.passed);
            out.emit("selftest", &checks, || None)?;
            Ok(if passed { 0 } else { 2 })
        }
        Command::Run { scenario } => {
            let spec = parse_scenario(&read_text(&scenario)?)?;
            let out = match &spec.output {
                Some(o) => Output {
                    out: out.out.or_else(|| o.path.clone()),
                    format: o.format,
                },
                None => out,
            };
            let stem = scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
            out.scenario(&stem, &run_scenario(&spec)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
