use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ewpf_core::bench::{
    evaluate_steps, report_from_series, run_benchmark_grid, step_series, write_forecast_csv, BenchmarkSpec, Cell,
    Metrics,
};
use ewpf_core::checkpoint::Checkpoint;
use ewpf_core::data::{
    fit_minmax, load_csv, make_windows, prepare, split_train_test, synthesize_series, Profile, DEFAULT_TRAIN_FRAC,
};
use ewpf_core::kv::KvMap;
use ewpf_core::training::fit;
use ewpf_core::{Error, Forecaster};

use crate::{BenchmarkArgs, EvaluateArgs, ForecastArgs, GenerateArgs, Size, TrainArgs};

const SEED_VAR: &str = "EWPF_SEED";
const DEFAULT_POINTS: usize = 5000;

/// Keys accepted in a `train --config` file. Keys of the other model family
/// are allowed and ignored so one file can serve every model.
const TRAIN_KEYS: &[&str] = &[
    "lr",
    "beta1",
    "beta2",
    "batch_size",
    "epochs",
    "eps_adam",
    "seed",
    "final_step_only",
    "paper_betas",
    "train_frac",
    "points",
    "d_model",
    "n_heads",
    "n_layers",
    "d_ff",
    "dropout",
    "attn_dropout",
    "tie_embeddings",
    "eps_layernorm",
    "init_std",
    "hidden",
    "rnn_layers",
];

/// Bad invocation that clap cannot catch; exits with the usage code.
#[derive(Debug)]
pub struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 1 for usage and configuration mistakes, 3 for numerical divergence and 2
/// for everything else (bad data, IO, corrupt checkpoints).
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Divergence { .. } => 3,
                Error::Config(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| UsageError(format!("{SEED_VAR} must be an unsigned integer, got `{v}`")).into()),
        Err(_) => Ok(None),
    }
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let seed = a.seed.or(env_seed()?).unwrap_or(42);
    let series = synthesize_series(a.points, seed, a.profile)?;
    series
        .write_csv(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} points ({}, seed {seed}) to {}",
        series.len(),
        a.profile,
        a.out.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let base = match a.size {
        Size::Full => BenchmarkSpec::default(),
        Size::Toy => BenchmarkSpec::toy(),
    };
    let mut model_cfg = base.model_config(&Cell::new(a.model, a.seq, a.horizon));
    let mut train = base.train.clone();
    train.seed = base.seed;
    let mut train_frac = DEFAULT_TRAIN_FRAC;
    let mut points = DEFAULT_POINTS;
    if let Some(path) = &a.config {
        let kv = KvMap::load(path)?;
        if let Some(k) = kv.keys().find(|k| !TRAIN_KEYS.contains(k)) {
            return Err(UsageError(format!("{}: unknown key `{k}`", path.display())).into());
        }
        model_cfg = model_cfg.with_kv(&kv)?;
        train.update_from_kv(&kv)?;
        kv.read_into("train_frac", &mut train_frac)?;
        kv.read_into("points", &mut points)?;
        if kv.parse_value::<bool>("paper_betas")?.unwrap_or(false) {
            train = train.with_paper_betas();
        }
    }
    if a.paper_betas {
        train = train.with_paper_betas();
    }
    if let Some(e) = a.epochs {
        train.epochs = e;
    }
    if let Some(s) = a.seed.or(env_seed()?) {
        train.seed = s;
    }

    let (series, source) = match &a.data {
        Some(path) => (load_csv(path)?, path.display().to_string()),
        None => (
            synthesize_series(points, train.seed, Profile::DiurnalNoise)?,
            format!(
                "synthetic {} ({points} points, seed {})",
                Profile::DiurnalNoise,
                train.seed
            ),
        ),
    };
    let data = prepare(&series, a.seq, a.horizon, train_frac)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ckpt = a.out.join("model.ckpt");
    log::info!(
        "training {} on {source}: {} train / {} test windows",
        a.model,
        data.train.len(),
        data.test.len()
    );
    let out = fit(&model_cfg, &data, &train, Some(&ckpt))?;
    let history = a.out.join("history.csv");
    out.history.write_csv(&history)?;

    let (y, p) = step_series(&out.model, &out.params, &data.test)?
        .pop()
        .expect("horizon ≥ 1");
    let report = report_from_series(a.model, a.seq, a.horizon, &y, &p, Some(&data.scaler))?;
    let t: Vec<usize> = data
        .test
        .samples()
        .iter()
        .map(|s| data.train_len + s.origin + a.seq + a.horizon - 1)
        .collect();
    let forecast = a.out.join("forecast.csv");
    write_forecast_csv(
        &forecast,
        &t,
        &data.scaler.denormalize(&y),
        &data.scaler.denormalize(&p),
    )?;

    println!(
        "model    {} (seq {}, horizon {}, {} parameters)",
        a.model,
        a.seq,
        a.horizon,
        out.params.numel()
    );
    println!("data     {source}");
    println!("epochs   {}", train.epochs);
    println!("test     {}", metrics_line(&report.metrics));
    for path in [&ckpt, &history, &forecast] {
        println!("wrote    {}", path.display());
    }
    Ok(())
}

fn metrics_line(m: &Metrics) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
    format!(
        "MSE {:.6}  MAE {:.6}  MAPE {}  R2 {}  (n = {})",
        m.mse,
        m.mae,
        opt(m.mape),
        opt(m.r2),
        m.n
    )
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = Forecaster::new(&ck.model)?;
    let series = load_csv(&a.data)?;
    let (train, test) = split_train_test(&series, a.train_frac)?;
    let scaler = match ck.scaler {
        Some(s) => s,
        None => {
            log::warn!(
                "checkpoint has no scaler; fitting one on the training split of {}",
                a.data.display()
            );
            fit_minmax(train.values())?
        }
    };
    let windows = make_windows(&scaler.normalize(test.values()), model.seq_len(), model.horizon(), 1)?;
    let steps = evaluate_steps(&model, &ck.params, &windows)?;
    println!("step,MSE,MAE,MAPE,R2,n");
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let first = if a.steps { 0 } else { steps.len() - 1 };
    for (i, m) in steps.iter().enumerate().skip(first) {
        println!("{},{},{},{},{},{}", i + 1, m.mse, m.mae, opt(m.mape), opt(m.r2), m.n);
    }
    Ok(())
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => BenchmarkSpec::load(path)?,
        None => BenchmarkSpec::default(),
    };
    if let Some(s) = env_seed()? {
        spec.seed = s;
    }
    if let Some(j) = a.jobs {
        spec.jobs = j;
    }
    if let Some(out) = a.out {
        spec.out_dir = out;
    }
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir).with_context(|| format!("creating {}", spec.out_dir.display()))?;

    let outcome = run_benchmark_grid(&spec)?;
    let total = outcome.cells.len();
    let dir = &spec.out_dir;
    println!(
        "wrote {} and {}",
        dir.join("table2.csv").display(),
        dir.join("table2.md").display()
    );
    let mut failures: Vec<(Cell, Error)> = outcome
        .cells
        .into_iter()
        .filter_map(|c| c.result.err().map(|e| (c.cell, e)))
        .collect();
    if failures.is_empty() {
        println!("{total} cells completed");
        return Ok(());
    }
    for (cell, e) in &failures {
        eprintln!("{}: {e}", cell.name());
    }
    let n = failures.len();
    // a divergence takes precedence so the exit code reports it
    let pick = failures
        .iter()
        .position(|(_, e)| matches!(e, Error::Divergence { .. }))
        .unwrap_or(0);
    let (cell, err) = failures.swap_remove(pick);
    Err(anyhow::Error::new(err).context(format!("{n} of {total} cells failed, first: {}", cell.name())))
}

/// Window values in physical units: `timestamp,power` CSV or one number per
/// line with an optional `power` header.
fn read_window(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    match lines.peek() {
        Some((_, first)) if first.trim().eq_ignore_ascii_case("timestamp,power") => {
            return Ok(load_csv(path)?.values().to_vec());
        }
        Some((_, first)) if first.trim().eq_ignore_ascii_case("power") => {
            lines.next();
        }
        _ => {}
    }
    lines
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| {
                Error::Parse {
                    path: PathBuf::from(path),
                    line: i + 1,
                    message: format!("`{}` is not a number", l.trim()),
                }
                .into()
            })
        })
        .collect()
}

pub fn forecast(a: ForecastArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = Forecaster::new(&ck.model)?;
    let values = read_window(&a.window_csv)?;
    if values.len() != model.seq_len() {
        return Err(Error::Data(format!(
            "{} holds {} values but the model expects a window of {}",
            a.window_csv.display(),
            values.len(),
            model.seq_len()
        ))
        .into());
    }
    let x = ck.scaler.map_or_else(|| values.clone(), |s| s.normalize(&values));
    let pred = model.predict(&ck.params, &[&x])?.remove(0);
    let pred = ck.scaler.map_or_else(|| pred.clone(), |s| s.denormalize(&pred));
    println!("step,forecast");
    for (i, v) in pred.iter().enumerate() {
        println!("{},{v}", i + 1);
    }
    Ok(())
}
