use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use provabs::abstraction::{
    concretization_count, enumerate_concretizations, loss_of_abstracted, AbstractedKExample, AbstractionTree,
    LossModel,
};
use provabs::consistency::{concretization_is_connected, consistent_queries};
use provabs::io::{
    bench_csv, example_to_file, generate_workload, load_database, load_distribution, load_kexample, load_tree,
    run_bench, save_database, save_kexample, save_tree, validate_inputs, BenchInstance, InputDigests, Report,
    WorkloadSpec,
};
use provabs::optimizer::{brute_force_optimal, run, Mode, OptimizerConfig, Toggle};
use provabs::privacy::{compute_privacy, CimDefinition};
use provabs::provenance::{KDatabase, KExample};
use provabs::{Error, Result};

/// Find the least lossy abstraction of a K-example whose privacy reaches a threshold.
#[derive(Parser)]
#[command(name = "provabs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Least loss with privacy at least --threshold.
    Optimize(Opts),
    /// Most privacy with loss at most --loi-max.
    Dual(Opts),
    /// Privacy of an abstracted example against --threshold.
    Privacy(Opts),
    /// Loss of information of an abstracted example.
    Loi(Opts),
    /// Count and list the concretizations of an abstracted example.
    Concretize(Opts),
    /// Consistent queries of a concrete example.
    Consistent(Opts),
    /// Exhaustive reference search, by --threshold or --loi-max.
    Oracle(Opts),
    /// Write a seeded synthetic workload.
    Generate(Opts),
    /// Ablation sweep as CSV.
    Bench(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum DisableArg {
    Sorting,
    LoiFirst,
    RowByRow,
    Connectivity,
    Caching,
}

impl From<DisableArg> for Toggle {
    fn from(d: DisableArg) -> Toggle {
        match d {
            DisableArg::Sorting => Toggle::Sorting,
            DisableArg::LoiFirst => Toggle::LoiFirst,
            DisableArg::RowByRow => Toggle::RowByRow,
            DisableArg::Connectivity => Toggle::Connectivity,
            DisableArg::Caching => Toggle::Caching,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CimDefArg {
    Algorithmic,
    Strict,
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long)]
    example: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    loi_max: Option<f64>,
    /// uniform, weighted, or file:<path>
    #[arg(long, default_value = "uniform")]
    distribution: String,
    #[arg(long, default_value_t = 1_000_000)]
    max_abstractions: u128,
    #[arg(long, default_value_t = 1_000_000)]
    max_concretizations: u128,
    #[arg(long, default_value_t = 10_000)]
    max_alignments: u128,
    #[arg(long, value_enum)]
    disable: Vec<DisableArg>,
    #[arg(long, value_enum, default_value = "algorithmic")]
    cim_def: CimDefArg,
    #[arg(long)]
    exclude_trivial: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Workload spec (JSON) for `generate` and `bench`.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of generated instances for `bench`, seeds counting up from --seed.
    #[arg(long, default_value_t = 5)]
    instances: u64,
    /// Include wall time in `bench` rows.
    #[arg(long)]
    timing: bool,
}

impl Opts {
    fn config(&self, mode: Mode) -> Result<OptimizerConfig> {
        let mut toggles = OptimizerConfig::default().toggles;
        for &d in &self.disable {
            toggles = toggles.without(d.into());
        }
        Ok(OptimizerConfig {
            mode,
            loss: self.loss_model()?,
            max_abstractions: self.max_abstractions,
            max_concretizations: self.max_concretizations,
            max_alignments: self.max_alignments,
            toggles,
            seed: self.seed,
            cim_def: match self.cim_def {
                CimDefArg::Algorithmic => CimDefinition::Algorithmic,
                CimDefArg::Strict => CimDefinition::Strict,
            },
            exclude_trivial: self.exclude_trivial,
        })
    }

    fn loss_model(&self) -> Result<LossModel> {
        match self.distribution.as_str() {
            "uniform" => Ok(LossModel::Uniform),
            "weighted" => Ok(LossModel::LeafWeighted),
            other => match other.strip_prefix("file:") {
                Some(path) => load_distribution(path),
                None => Err(Error::InvalidConfig(format!("unknown distribution `{other}`"))),
            },
        }
    }

    fn threshold(&self) -> Result<usize> {
        self.threshold
            .ok_or_else(|| Error::InvalidConfig("--threshold is required".into()))
    }

    fn mode(&self) -> Result<Mode> {
        match (self.threshold, self.loi_max) {
            (Some(k), None) => Ok(Mode::Primal { k }),
            (None, Some(loi_max)) => Ok(Mode::Dual { loi_max }),
            _ => Err(Error::InvalidConfig("give exactly one of --threshold and --loi-max".into())),
        }
    }

    fn path<'a>(&self, p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("--{flag} is required")))
    }

    /// Database, tree and example, cross-validated. `labels` admits tree
    /// node labels in the example.
    fn inputs(&self, labels: bool) -> Result<(KDatabase, AbstractionTree, KExample)> {
        let db = load_database(self.path(&self.db, "db")?)?;
        let tree = load_tree(self.path(&self.tree, "tree")?)?;
        let ex = load_kexample(self.path(&self.example, "example")?)?;
        validate_inputs(&db, &tree, &ex, labels)?;
        Ok((db, tree, ex))
    }

    fn workload_spec(&self) -> Result<WorkloadSpec> {
        let mut spec: WorkloadSpec = match &self.spec {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => WorkloadSpec::default(),
        };
        spec.seed = self.seed;
        Ok(spec)
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => Ok(fs::write(p, text)?),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn emit_report(&self, r: &Report) -> Result<ExitCode> {
        let text = match self.format {
            Format::Json => r.to_json() + "\n",
            Format::Text => r.to_text(),
        };
        self.emit(&text)?;
        Ok(ExitCode::from(r.status.exit_code() as u8))
    }

    fn emit_json(&self, v: serde_json::Value) -> Result<()> {
        self.emit(&(serde_json::to_string_pretty(&v)? + "\n"))
    }
}

fn digests(db: &KDatabase, tree: &AbstractionTree, ex: &KExample) -> InputDigests {
    InputDigests::of(Some(db), Some(tree), Some(ex))
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Optimize(o) => {
            let cfg = o.config(Mode::Primal { k: o.threshold()? })?;
            search("optimize", &o, cfg)
        }
        Command::Dual(o) => {
            let loi_max = o
                .loi_max
                .ok_or_else(|| Error::InvalidConfig("--loi-max is required".into()))?;
            search("dual", &o, o.config(Mode::Dual { loi_max })?)
        }
        Command::Oracle(o) => {
            let cfg = o.config(o.mode()?)?;
            let (db, tree, ex) = o.inputs(false)?;
            let inputs = digests(&db, &tree, &ex);
            match brute_force_optimal(&ex, &tree, &db, &cfg) {
                Ok(res) => o.emit_report(&Report::from_search("oracle", inputs, &ex, &cfg, &res)),
                Err(e) if e.is_cap() => o.emit_report(&Report::capped("oracle", inputs, &cfg, e.to_string())),
                Err(e) => Err(e),
            }
        }
        Command::Privacy(o) => {
            let cfg = o.config(Mode::Primal { k: o.threshold()? })?;
            let (db, tree, ex) = o.inputs(true)?;
            let inputs = digests(&db, &tree, &ex);
            let abs = AbstractedKExample::from_labels(ex);
            let loi = loss_of_abstracted(&abs, &tree, &cfg.loss).ok();
            let Mode::Primal { k } = cfg.mode else { unreachable!() };
            let mut cache = provabs::consistency::ConsistencyCache::new();
            match compute_privacy(&abs, &tree, &db, k, &mut cache, &cfg.privacy_config()) {
                Ok(out) => o.emit_report(&Report::from_privacy(inputs, &abs, loi, &cfg, &out)),
                Err(e) if e.is_cap() => o.emit_report(&Report::capped("privacy", inputs, &cfg, e.to_string())),
                Err(e) => Err(e),
            }
        }
        Command::Loi(o) => {
            let cfg = o.config(Mode::Primal { k: 1 })?;
            let (db, tree, ex) = o.inputs(true)?;
            let inputs = digests(&db, &tree, &ex);
            let abs = AbstractedKExample::from_labels(ex);
            let loi = loss_of_abstracted(&abs, &tree, &cfg.loss)?;
            o.emit_report(&Report::from_loss(inputs, &abs, loi, &cfg))
        }
        Command::Concretize(o) => {
            let (db, tree, ex) = o.inputs(true)?;
            let abs = AbstractedKExample::from_labels(ex);
            let count = concretization_count(&abs, &tree);
            if count > o.max_concretizations {
                o.emit_json(json!({ "count": count, "concretizations": null, "incomplete": true }))?;
                return Ok(ExitCode::from(3));
            }
            let mut list = Vec::new();
            for c in enumerate_concretizations(&abs, &tree, None, o.max_concretizations)? {
                let connected = concretization_is_connected(&c, &db)?;
                list.push(json!({ "example": example_to_file(c.example()), "connected": connected }));
            }
            o.emit_json(json!({ "count": count, "concretizations": list, "incomplete": false }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Consistent(o) => {
            let (db, _tree, ex) = o.inputs(false)?;
            let c = provabs::abstraction::Concretization::new(ex, Vec::new());
            let qs = match consistent_queries(&c, &db, o.max_alignments) {
                Ok(qs) => qs,
                Err(e) if e.is_cap() => {
                    eprintln!("provabs: {e}");
                    return Ok(ExitCode::from(3));
                }
                Err(e) => return Err(e),
            };
            let queries: Vec<_> = qs
                .iter()
                .map(|q| json!({ "query": q.to_string(), "connected": q.is_connected() }))
                .collect();
            o.emit_json(json!({
                "rowsConnected": concretization_is_connected(&c, &db)?,
                "queries": queries,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate(o) => {
            let spec = o.workload_spec()?;
            let w = generate_workload(&spec)?;
            match &o.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    save_database(&w.database, dir.join("db.json"))?;
                    save_tree(&w.tree, dir.join("tree.json"))?;
                    save_kexample(&w.example, dir.join("example.json"))?;
                    fs::write(dir.join("query.dl"), format!("{}\n", w.query))?;
                    fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
                }
                None => {
                    let v = json!({
                        "spec": spec,
                        "query": w.query.to_string(),
                        "database": provabs::io::database_to_file(&w.database),
                        "tree": w.tree.to_spec(),
                        "example": example_to_file(&w.example),
                    });
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench(o) => {
            let cfg = o.config(Mode::Primal { k: o.threshold.unwrap_or(2) })?;
            let instances = if o.db.is_some() || o.tree.is_some() || o.example.is_some() {
                let (database, tree, example) = o.inputs(false)?;
                vec![BenchInstance {
                    name: "input".into(),
                    database,
                    tree,
                    example,
                }]
            } else {
                let base = o.workload_spec()?;
                (0..o.instances)
                    .map(|i| {
                        let spec = WorkloadSpec {
                            seed: base.seed + i,
                            ..base.clone()
                        };
                        let w = generate_workload(&spec)?;
                        Ok(BenchInstance {
                            name: format!("seed{}", spec.seed),
                            database: w.database,
                            tree: w.tree,
                            example: w.example,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let rows = run_bench(&instances, &cfg, o.timing)?;
            o.emit(&bench_csv(&rows)?)?;
            let code = if rows.iter().all(|r| r.complete) { 0 } else { 3 };
            Ok(ExitCode::from(code))
        }
    }
}

fn search(command: &str, o: &Opts, cfg: OptimizerConfig) -> Result<ExitCode> {
    let (db, tree, ex) = o.inputs(false)?;
    let res = run(&ex, &tree, &db, &cfg)?;
    o.emit_report(&Report::from_search(command, digests(&db, &tree, &ex), &ex, &cfg, &res))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("provabs: {e}");
            ExitCode::from(if e.is_cap() { 3 } else { 2 })
        }
    }
}
