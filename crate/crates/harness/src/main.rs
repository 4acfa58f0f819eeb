use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stcv_core::condvar::{conditional_variance_profile, ProfileScheme};
use stcv_core::estimate::{cv_estimate, true_interpolation_error};
use stcv_core::models::ModelSpec;
use stcv_core::partition::PartitionSpec;
use stcv_core::sim::{replicate_seed, simulate_replicate, ScenarioConfig};
use stcv_core::{mse_loss, ModelRegistry, PartitionRegistry, SpaceTimeDataset};
use stcv_harness::case_study::run_case_study;
use stcv_harness::config::{default_estimators, default_models, estimator_name, CONFIG_SCHEMA};
use stcv_harness::plot::{emit_plots, PlotOptions};
use stcv_harness::study::{lattice_diameter, run_study, write_summary};
use stcv_harness::{CaseStudyConfig, HarnessError, Result, StudyConfig};

#[derive(Parser, Debug)]
#[command(name = "stcv", version, about = "Space-time cross-validation studies")]
struct Cli {
    #[command(flatten)]
    global: Global,

    /// Print the annotated configuration format and exit.
    #[arg(long)]
    print_config_schema: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one replicate of a scenario and write its tables.
    Simulate {
        #[arg(long, default_value_t = 1)]
        scenario: u32,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Cross-validate models on a dataset CSV.
    Evaluate {
        /// Dataset in the core CSV format.
        #[arg(long)]
        data: PathBuf,
        /// Disjoint holdout to score the full-data fit on.
        #[arg(long)]
        holdout: Option<PathBuf>,
        /// `kind[:key=value,...]`, e.g. `random_forest:n_trees=100`.
        #[arg(long = "model")]
        models: Vec<String>,
        /// `scheme[:value]`: `naive_kfold:10`, `llo_k:10`, `lolo`,
        /// `buffered:0.15` (fraction of the domain diameter).
        #[arg(long = "estimator")]
        estimators: Vec<String>,
    },
    /// Run a simulation battery.
    Study {
        /// Replicates per scenario; overrides the configuration.
        #[arg(long)]
        replicates: Option<usize>,
        /// Skip figure rendering.
        #[arg(long)]
        no_plots: bool,
    },
    /// Evaluate models per interval on monitor data (or the fixture).
    CaseStudy {
        /// Dataset CSV; overrides the configuration.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Render figures from result tables.
    Plot {
        /// Directory holding the CSV tables (defaults to --out).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Per-cell conditional variances of one replicate under each scheme.
    CondVar {
        #[arg(long, default_value_t = 3)]
        scenario: u32,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
}

/// Whether a run completed fully or recorded failures.
enum Outcome {
    Complete,
    Partial(usize),
}

fn parse_model(arg: &str) -> Result<ModelSpec> {
    let (kind, rest) = arg.split_once(':').unwrap_or((arg, ""));
    let mut spec = ModelSpec::new(kind);
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("model parameter `{kv}` is not key=value")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| HarnessError::Config(format!("model parameter `{k}` is not a number")))?;
        spec = spec.with(k, v);
    }
    Ok(spec)
}

fn parse_estimator(arg: &str) -> Result<PartitionSpec> {
    let (scheme, value) = match arg.split_once(':') {
        Some((s, v)) => (s, Some(v)),
        None => (arg, None),
    };
    let bad = || HarnessError::Config(format!("cannot parse estimator `{arg}`"));
    let spec = PartitionSpec::new(scheme);
    Ok(match (scheme, value) {
        ("naive_kfold" | "llo_k", Some(v)) => spec.with_k(v.parse().map_err(|_| bad())?),
        ("buffered", Some(v)) => spec.with_buffer_fraction(v.parse().map_err(|_| bad())?),
        (_, None) => spec,
        _ => return Err(bad()),
    })
}

fn study_config(g: &Global) -> Result<StudyConfig> {
    let mut cfg = match &g.config {
        Some(p) => StudyConfig::load(p)?,
        None => StudyConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn out_dir(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn simulate(g: &Global, scenario: u32, replicate: u64) -> Result<Outcome> {
    let sc = ScenarioConfig::get(scenario)?;
    let seed = g.seed.unwrap_or(42);
    let field = simulate_replicate(&sc, replicate, seed)?;
    let dir = out_dir(g, "simulated");
    field.write(&dir)?;
    println!(
        "scenario {scenario} replicate {replicate} (seed {}): {} observed locations, {} holdout cells -> {}",
        replicate_seed(seed, scenario, replicate),
        field.observed.len(),
        field.holdout().len(),
        dir.display()
    );
    Ok(Outcome::Complete)
}

fn evaluate(g: &Global, data: &Path, holdout: Option<&Path>, models: &[String], estimators: &[String]) -> Result<Outcome> {
    let ds = SpaceTimeDataset::from_csv_path(data)?;
    let models = if models.is_empty() {
        default_models()
    } else {
        models.iter().map(|m| parse_model(m)).collect::<Result<_>>()?
    };
    let estimators = if estimators.is_empty() {
        default_estimators()
    } else {
        estimators.iter().map(|e| parse_estimator(e)).collect::<Result<_>>()?
    };
    let seed = g.seed.unwrap_or(42);
    let hold = holdout.map(SpaceTimeDataset::from_csv_path).transpose()?;
    let diameter = ds.spatial_diameter();
    let mreg = ModelRegistry::with_defaults();
    let preg = PartitionRegistry::with_defaults();
    let dir = out_dir(g, "evaluation");
    std::fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("evaluate.csv"))?;
    w.write_record(["model", "estimator", "estimate", "n_folds", "n_test", "error"])?;
    let mut failures = 0;
    for (m, spec) in models.iter().enumerate() {
        let learner = mreg.build(spec)?;
        let name = spec.display_name();
        let fit_seed = stcv_core::rng::derive_seed(&[seed, 2, m as u64]);
        let mut rows: Vec<(String, stcv_core::Result<(f64, usize, usize)>)> = Vec::new();
        if let Some(h) = &hold {
            let r = learner.fit(&ds, &ds.usable_rows(), fit_seed).and_then(|rule| {
                let (rep, _) = true_interpolation_error(rule.as_ref(), &ds, h, mse_loss)?;
                Ok((rep.estimate, 1, rep.n_test()))
            });
            rows.push(("holdout".into(), r));
        }
        for (e, est) in estimators.iter().enumerate() {
            let label = estimator_name(est, diameter)?;
            let r = preg
                .build(est, diameter)
                .and_then(|p| p.partition(&ds, stcv_core::rng::derive_seed(&[seed, 1, e as u64])))
                .and_then(|fa| cv_estimate(&ds, &fa, learner.as_ref(), mse_loss, fit_seed))
                .map(|o| (o.report.estimate, o.report.per_fold.len(), o.report.n_test()));
            rows.push((label, r));
        }
        for (label, r) in rows {
            match r {
                Ok((est, folds, n)) => {
                    println!("{name:<15} {label:<17} {est:.6}");
                    w.write_record([name, &label, &est.to_string(), &folds.to_string(), &n.to_string(), ""])?;
                }
                Err(e) => {
                    failures += 1;
                    eprintln!("{name:<15} {label:<17} failed: {e}");
                    w.write_record([name, &label, "", "0", "0", &e.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(if failures == 0 {
        Outcome::Complete
    } else {
        Outcome::Partial(failures)
    })
}

fn study(g: &Global, replicates: Option<usize>, no_plots: bool) -> Result<Outcome> {
    let mut cfg = study_config(g)?;
    if let Some(r) = replicates {
        cfg = cfg.with_replicates(r);
    }
    cfg.validate()?;
    let results = run_study(&cfg)?;
    results.write(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("study.toml"), cfg.to_toml())?;
    write_summary(&results, std::io::stdout().lock())?;
    if !no_plots {
        let opts = PlotOptions {
            bootstrap_b: cfg.bootstrap_b,
            lowess_fraction: cfg.lowess_fraction,
            seed: cfg.master_seed,
        };
        match emit_plots(&cfg.output_dir, &cfg.output_dir.join("plots"), &opts) {
            Ok(files) => log::info!("wrote {} figures", files.len()),
            Err(e) => log::warn!("figures skipped: {e}"),
        }
    }
    Ok(match results.n_failures() {
        0 => Outcome::Complete,
        n => Outcome::Partial(n),
    })
}

fn case_study(g: &Global, input: Option<PathBuf>) -> Result<Outcome> {
    let mut cfg = match &g.config {
        Some(p) => CaseStudyConfig::load(p)?,
        None => CaseStudyConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    if input.is_some() {
        cfg.input_csv = input;
    }
    let (ds, res) = run_case_study(&cfg)?;
    res.write(&cfg.output_dir)?;
    if cfg.input_csv.is_none() {
        ds.to_csv_path(cfg.output_dir.join("case_fixture.csv"))?;
    }
    let table = stcv_harness::case_study::mean_table(&res.weekly);
    for ((m, e), v) in &table {
        println!("{m:<15} {e:<12} mean weekly {v:.5}");
    }
    Ok(match res.n_failures() {
        0 => Outcome::Complete,
        n => Outcome::Partial(n),
    })
}

fn plot(g: &Global, results: Option<PathBuf>) -> Result<Outcome> {
    let cfg = study_config(g)?;
    let out = cfg.output_dir.clone();
    let results = results.unwrap_or_else(|| out.clone());
    let files = emit_plots(
        &results,
        &out.join("plots"),
        &PlotOptions {
            bootstrap_b: cfg.bootstrap_b,
            lowess_fraction: cfg.lowess_fraction,
            seed: cfg.master_seed,
        },
    )?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(Outcome::Complete)
}

fn cond_var(g: &Global, scenario: u32, replicate: u64) -> Result<Outcome> {
    let sc = ScenarioConfig::get(scenario)?;
    let seed = g.seed.unwrap_or(42);
    let field = simulate_replicate(&sc, replicate, seed)?;
    let obs = field.observed_dataset()?;
    let diameter = lattice_diameter(&field);
    let preg = PartitionRegistry::with_defaults();
    let dir = out_dir(g, "condvar");
    std::fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("condvar.csv"))?;
    w.write_record(["estimator", "fold", "location", "time", "cond_var"])?;
    let rseed = replicate_seed(seed, scenario, replicate);
    let mut schemes: Vec<(String, Option<stcv_core::FoldAssignment>)> = vec![("true_grid".into(), None)];
    for (e, spec) in default_estimators().iter().enumerate() {
        let fa = preg
            .build(spec, diameter)?
            .partition(&obs, stcv_core::rng::derive_seed(&[rseed, 1, e as u64]))?;
        schemes.push((estimator_name(spec, diameter)?, Some(fa)));
    }
    for (name, fa) in &schemes {
        let scheme = match fa {
            Some(fa) => ProfileScheme::Folds(fa),
            None => ProfileScheme::TrueGrid,
        };
        let cells = conditional_variance_profile(&field, scheme)?;
        let mean = cells.iter().map(|c| c.cond_var).sum::<f64>() / cells.len() as f64;
        println!("{name:<17} cells {:>5}  mean conditional variance {mean:.6}", cells.len());
        for c in cells {
            w.write_record([
                name.clone(),
                c.fold.to_string(),
                c.location.to_string(),
                c.time.to_string(),
                c.cond_var.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(Outcome::Complete)
}

fn run(cli: Cli) -> Result<Outcome> {
    if cli.print_config_schema {
        print!("{CONFIG_SCHEMA}");
        return Ok(Outcome::Complete);
    }
    let g = cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        None => Err(HarnessError::Config("no command given; see --help".into())),
        Some(Command::Simulate { scenario, replicate }) => simulate(&g, scenario, replicate),
        Some(Command::Evaluate {
            data,
            holdout,
            models,
            estimators,
        }) => evaluate(&g, &data, holdout.as_deref(), &models, &estimators),
        Some(Command::Study { replicates, no_plots }) => study(&g, replicates, no_plots),
        Some(Command::CaseStudy { input }) => case_study(&g, input),
        Some(Command::Plot { results }) => plot(&g, results),
        Some(Command::CondVar { scenario, replicate }) => cond_var(&g, scenario, replicate),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            eprintln!("completed with {n} failed estimates");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
