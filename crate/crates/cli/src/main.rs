use clap::{Args, Parser, Subcommand, ValueEnum};
use rwre::cascade::{cascade_replicas, estimate_sigma2, DEFAULT_N_W};
use rwre::coupling::{build_coupled, decompose, discrepancies, Discrepancies};
use rwre::experiments::{run_suite, Suite, SuiteOptions, SCHEMA_VERSION};
use rwre::mark_law::{canonical, LawConfig, MarkLaw};
use rwre::network::{effective_conductance, level_sums, max_flow};
use rwre::regime::{classify, classify_sampled, RegimeReport};
use rwre::rng::SeedSplitter;
use rwre::stats::Estimate;
use rwre::tree::{Environment, MarkedTree, RayedTree, DEFAULT_SIZE_CAP};
use rwre::walk::run_walk;
use rwre::Error;
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(
    name = "rwre",
    version,
    about = "Random walks in random environments on marked Galton-Watson trees"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Shorthand for --format json.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct LawArgs {
    /// Law config (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in law instead of a config file.
    #[arg(long, conflicts_with = "config")]
    law: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Regime, ρ(1), ρ'(1), p and κ of a law.
    Classify {
        #[command(flatten)]
        law: LawArgs,
        /// Estimate ρ from this many sampled broods instead of exactly.
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long, requires = "draws")]
        seed: Option<u64>,
    },
    /// One walk on an MT tree (or IMT with --imt).
    Walk {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        imt: bool,
    },
    /// Normalized cascade Y_n/ρ(α)^n averaged over trees; optionally σ².
    Cascade {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 10)]
        depth: usize,
        #[arg(long, default_value_t = 1000)]
        replicas: usize,
        /// Also estimate η and σ².
        #[arg(long)]
        sigma2: bool,
        #[arg(long, default_value_t = DEFAULT_N_W)]
        n_w: usize,
    },
    /// Effective conductance and max flow to level n on sampled trees.
    Network {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
    },
    /// Excursion decomposition and coupled walk with discrepancy series.
    Couple {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        /// Times at which to report discrepancies (default: powers of 10).
        #[arg(long, value_delimiter = ',')]
        at: Vec<usize>,
    },
    /// Run a check suite; exits 1 if any check fails.
    Verify {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        suite: String,
        #[arg(long)]
        seed: u64,
        /// Replicas for the identity checks.
        #[arg(long, default_value_t = 10_000)]
        replicas: usize,
        /// Include wall-clock times (makes reports non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Dump a sampled tree as JSON lines (or CSV).
    SampleTree {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        depth: usize,
        /// Sample an IMT tree with a spine of this length.
        #[arg(long)]
        ray_len: Option<usize>,
    },
}

#[derive(Debug)]
enum Failure {
    /// Bad input: exit 2.
    Usage(String),
    /// A check did not pass: exit 1.
    Check,
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::InvalidLaw(_)
            | Error::NotCritical { .. }
            | Error::WrongDriftSign { .. }
            | Error::UnboundedDensity => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_law(a: &LawArgs) -> CliResult<Arc<MarkLaw>> {
    let law = match (&a.config, &a.law) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            LawConfig::parse(&text)?.build()?
        }
        (None, Some(name)) => canonical::by_name(name)
            .ok_or_else(|| Failure::Usage(format!("unknown built-in law '{name}'")))?,
        (None, None) => {
            return Err(Failure::Usage(
                "one of --config or --law is required".into(),
            ))
        }
    };
    Ok(Arc::new(law))
}

fn size_cap() -> CliResult<usize> {
    match std::env::var("RWRE_SIZE_CAP") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Failure::Usage(format!(
                "RWRE_SIZE_CAP must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(DEFAULT_SIZE_CAP),
    }
}

struct Output {
    format: Format,
    sink: Box<dyn Write>,
}

impl Output {
    fn json<T: Serialize>(&mut self, v: &T) -> CliResult<()> {
        serde_json::to_writer_pretty(&mut self.sink, v)
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        writeln!(self.sink)?;
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(&mut self.sink);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'a str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(flatten)]
    body: T,
}

fn envelope<'a, T: Serialize>(command: &'a str, seed: Option<u64>, body: T) -> Envelope<'a, T> {
    Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        seed,
        body,
    }
}

#[derive(Serialize)]
struct ClassifyRow {
    rho_one: f64,
    rho_prime_one: f64,
    p: f64,
    alpha_star: f64,
    kappa: String,
    classification: String,
    degenerate_unbiased: bool,
}

impl From<&RegimeReport> for ClassifyRow {
    fn from(r: &RegimeReport) -> Self {
        let v = serde_json::to_value(r).unwrap_or_default();
        ClassifyRow {
            rho_one: r.rho_one,
            rho_prime_one: r.rho_prime_one,
            p: r.p,
            alpha_star: r.alpha_star,
            kappa: v["kappa"].to_string().trim_matches('"').to_string(),
            classification: v["classification"].as_str().unwrap_or_default().to_string(),
            degenerate_unbiased: r.degenerate_unbiased,
        }
    }
}

#[derive(Serialize)]
struct WalkRow {
    t: usize,
    vertex: usize,
    level: i64,
}

#[derive(Serialize)]
struct WalkBody {
    environment: &'static str,
    steps: usize,
    vertices: Vec<usize>,
    levels: Vec<i64>,
    returns: Vec<usize>,
    max_level: i64,
    min_level: i64,
}

#[derive(Serialize)]
struct CascadeRow {
    n: usize,
    mean: f64,
    se: f64,
    replicas: usize,
}

#[derive(Serialize)]
struct NetworkRow {
    replica: usize,
    depth: usize,
    conductance: f64,
    max_flow: f64,
    level_sum: f64,
    size: usize,
}

#[derive(Serialize)]
struct ExcursionRow {
    i: usize,
    tau: usize,
    eta: Option<usize>,
    tau_tilde: usize,
    eta_tilde: Option<usize>,
    explored_size: usize,
}

#[derive(Serialize)]
struct CheckRow {
    report: String,
    check: String,
    passed: bool,
    value: Option<f64>,
}

fn run(cli: Cli) -> CliResult<()> {
    let format = if cli.json { Format::Json } else { cli.format };
    let sink: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout())),
    };
    let mut out = Output { format, sink };
    let cap = size_cap()?;

    match cli.cmd {
        Command::Classify { law, draws, seed } => {
            let law = load_law(&law)?;
            let report = match draws {
                Some(d) => {
                    let seed = seed.ok_or_else(|| Failure::Usage("--draws needs --seed".into()))?;
                    classify_sampled(&law, d, seed)?
                }
                None => classify(&law)?,
            };
            match out.format {
                Format::Json => out.json(&envelope("classify", seed, &report))?,
                Format::Csv => out.csv([ClassifyRow::from(&report)])?,
            }
        }
        Command::Walk {
            law,
            seed,
            steps,
            imt,
        } => {
            let law = load_law(&law)?;
            let split = SeedSplitter::new(seed);
            let mut rng = split.rng(1);
            let traj = if imt {
                let mut t = RayedTree::new(law, split.seed(0), 1)?.with_cap(cap);
                let r = t.root();
                run_walk(&mut t, r, steps, &mut rng)?
            } else {
                let mut t = MarkedTree::new(law, split.seed(0)).with_cap(cap);
                run_walk(&mut t, 0, steps, &mut rng)?
            };
            match out.format {
                Format::Json => {
                    let body = WalkBody {
                        environment: if imt { "imt" } else { "mt" },
                        steps,
                        max_level: *traj.levels.iter().max().unwrap(),
                        min_level: *traj.levels.iter().min().unwrap(),
                        returns: traj.returns.clone(),
                        vertices: traj.vertices.clone(),
                        levels: traj.levels.clone(),
                    };
                    out.json(&envelope("walk", Some(seed), body))?
                }
                Format::Csv => out.csv(
                    traj.vertices
                        .iter()
                        .zip(&traj.levels)
                        .enumerate()
                        .map(|(t, (&vertex, &level))| WalkRow { t, vertex, level }),
                )?,
            }
        }
        Command::Cascade {
            law,
            seed,
            alpha,
            depth,
            replicas,
            sigma2,
            n_w,
        } => {
            let law = load_law(&law)?;
            let split = SeedSplitter::new(seed);
            let series = cascade_replicas(
                law.clone(),
                alpha,
                depth,
                replicas,
                split.fork("cascade").master(),
            )?;
            let rows: Vec<CascadeRow> = (0..=depth)
                .map(|n| {
                    let xs: Vec<f64> = series.iter().map(|s| s.normalized[n]).collect();
                    let e = Estimate::from_samples(&xs);
                    CascadeRow {
                        n,
                        mean: e.mean,
                        se: e.se,
                        replicas,
                    }
                })
                .collect();
            let s2 = if sigma2 {
                Some(estimate_sigma2(
                    law,
                    replicas,
                    100,
                    n_w,
                    split.fork("sigma2").master(),
                )?)
            } else {
                None
            };
            match out.format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Body {
                        alpha: f64,
                        normalized: Vec<CascadeRow>,
                        #[serde(skip_serializing_if = "Option::is_none")]
                        sigma2: Option<rwre::cascade::Sigma2Estimate>,
                    }
                    out.json(&envelope(
                        "cascade",
                        Some(seed),
                        Body {
                            alpha,
                            normalized: rows,
                            sigma2: s2,
                        },
                    ))?
                }
                Format::Csv => out.csv(rows)?,
            }
        }
        Command::Network {
            law,
            seed,
            depth,
            replicas,
        } => {
            let law = load_law(&law)?;
            let split = SeedSplitter::new(seed);
            let mut rows = Vec::new();
            for i in 0..replicas {
                let mut t = MarkedTree::new(law.clone(), split.seed(i as u64)).with_cap(cap);
                t.expand_to_depth(depth)?;
                rows.push(NetworkRow {
                    replica: i,
                    depth,
                    conductance: effective_conductance(&t, depth)?,
                    max_flow: max_flow(&t, depth)?,
                    level_sum: *level_sums(&t, depth)?.last().unwrap(),
                    size: t.len(),
                });
            }
            match out.format {
                Format::Json => out.json(&envelope(
                    "network",
                    Some(seed),
                    serde_json::json!({ "trees": rows }),
                ))?,
                Format::Csv => out.csv(rows)?,
            }
        }
        Command::Couple {
            law,
            seed,
            steps,
            alpha,
            at,
        } => {
            let law = load_law(&law)?;
            let split = SeedSplitter::new(seed);
            let mut t = MarkedTree::new(law, split.seed(0)).with_cap(cap);
            let traj = run_walk(&mut t, 0, steps, &mut split.rng(0))?;
            let d = decompose(&mut t, &traj)?;
            let pair = build_coupled(&t, &traj, &d, split.seed(1), &mut split.rng(1))?;
            let horizon = pair.steps().min(d.steps);
            let times: Vec<usize> = if at.is_empty() {
                std::iter::successors(Some(10usize), |x| x.checked_mul(10))
                    .take_while(|&x| x <= horizon)
                    .collect()
            } else {
                at
            };
            let series: Vec<Discrepancies> = times
                .iter()
                .map(|&s| discrepancies(&pair, &d, &traj, alpha, s))
                .collect::<Result<_, _>>()?;
            let excursions: Vec<ExcursionRow> = (0..d.tau.len())
                .map(|i| ExcursionRow {
                    i: i + 1,
                    tau: d.tau[i],
                    eta: d.eta.get(i).copied(),
                    tau_tilde: pair.tau[i],
                    eta_tilde: pair.eta.get(i).copied(),
                    explored_size: d.explored[i].size,
                })
                .collect();
            match out.format {
                Format::Json => {
                    let body = serde_json::json!({
                        "steps": steps,
                        "alpha": alpha,
                        "horizon": horizon,
                        "partial": d.partial,
                        "excursions": excursions,
                        "discrepancies": series,
                    });
                    out.json(&envelope("couple", Some(seed), body))?
                }
                Format::Csv => out.csv(series)?,
            }
        }
        Command::Verify {
            law,
            suite,
            seed,
            replicas,
            timing,
        } => {
            let suite: Suite = suite
                .parse()
                .map_err(|e: Error| Failure::Usage(e.to_string()))?;
            let law = if law.config.is_none() && law.law.is_none() {
                Arc::new(canonical::binary_half())
            } else {
                load_law(&law)?
            };
            let opts = SuiteOptions {
                replicas,
                ..Default::default()
            };
            let start = Instant::now();
            let mut report = run_suite(suite, law, &opts, seed)?;
            if timing {
                let secs = start.elapsed().as_secs_f64();
                for r in &mut report.reports {
                    r.wall_clock_s = Some(secs);
                }
            }
            match out.format {
                Format::Json => out.json(&report)?,
                Format::Csv => out.csv(report.reports.iter().flat_map(|r| {
                    r.checks.iter().map(move |c| {
                        let v = serde_json::to_value(c).unwrap_or_default();
                        CheckRow {
                            report: r.name.clone(),
                            check: c.name.clone(),
                            passed: c.passed,
                            value: v["value"].as_f64().or(v["diff"].as_f64()),
                        }
                    })
                }))?,
            }
            out.sink.flush()?;
            if !report.passed {
                return Err(Failure::Check);
            }
        }
        Command::SampleTree {
            law,
            seed,
            depth,
            ray_len,
        } => {
            let law = load_law(&law)?;
            let mut buf = Vec::new();
            match ray_len {
                Some(len) => {
                    let mut t = RayedTree::new(law, seed, len.max(1))?.with_cap(cap);
                    t.expand_subtrees(depth)?;
                    t.dump_jsonl(&mut buf)?;
                }
                None => {
                    let mut t = MarkedTree::new(law, seed).with_cap(cap);
                    t.expand_to_depth(depth)?;
                    t.dump_jsonl(&mut buf)?;
                }
            }
            match out.format {
                Format::Json => out.sink.write_all(&buf)?,
                Format::Csv => {
                    let rows: Vec<serde_json::Map<String, serde_json::Value>> = buf
                        .split(|&b| b == b'\n')
                        .filter(|l| !l.is_empty())
                        .map(|l| {
                            serde_json::from_slice(l).map_err(|e| Failure::Runtime(e.to_string()))
                        })
                        .collect::<CliResult<_>>()?;
                    let mut w = csv::Writer::from_writer(&mut out.sink);
                    if let Some(first) = rows.first() {
                        w.write_record(first.keys())?;
                    }
                    for r in &rows {
                        w.write_record(r.values().map(|v| match v {
                            serde_json::Value::Null => String::new(),
                            v => v.to_string(),
                        }))?;
                    }
                    w.flush()?;
                }
            }
        }
    }
    out.sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
