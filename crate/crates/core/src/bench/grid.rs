use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::metrics::{report_from_series, step_series, MetricsReport};
use super::report::{write_forecast_csv, write_tables, Row};
use crate::baselines::{CellKind, RecurrentConfig};
use crate::data::{load_csv, prepare, synthesize_series, Profile, TimeSeries};
use crate::error::{Error, Result};
use crate::forecaster::{Forecaster, ModelConfig, ModelKind};
use crate::kv::KvMap;
use crate::model::TransformerConfig;
use crate::training::{fit, TrainConfig, TrainingHistory};

/// One (model, sequence length, horizon) combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub model: ModelKind,
    pub seq_len: usize,
    pub horizon: usize,
}

impl Cell {
    pub fn new(model: ModelKind, seq_len: usize, horizon: usize) -> Self {
        Cell {
            model,
            seq_len,
            horizon,
        }
    }

    /// File-name stem, e.g. `transformer_seq20_h1`.
    pub fn name(&self) -> String {
        format!("{}_seq{}_h{}", self.model, self.seq_len, self.horizon)
    }

    /// Report order: step, then sequence, then model.
    pub fn sort_key(&self) -> (usize, usize, ModelKind) {
        (self.horizon, self.seq_len, self.model)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.model, self.seq_len, self.horizon)
    }
}

/// `model:seq_len:horizon`, e.g. `gru:50:5`.
impl FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [model, seq, horizon] = parts[..] else {
            return Err(Error::config(format!("cell `{s}` is not model:seq_len:horizon")));
        };
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::config(format!("cell `{s}`: `{v}` is not a positive integer")))
        };
        Ok(Cell::new(model.parse()?, num(seq)?, num(horizon)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic { profile: Profile, points: usize },
}

pub fn load_series(source: &DataSource, seed: u64) -> Result<TimeSeries> {
    match source {
        DataSource::Csv(path) => load_csv(path),
        DataSource::Synthetic { profile, points } => synthesize_series(*points, seed, *profile),
    }
}

/// Everything a grid run needs. Defaults describe a desk-scale grid: the
/// full 2 × 3 × 3 cell set on 5,000 synthetic diurnal points with small
/// models.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub data: DataSource,
    pub cells: Vec<Cell>,
    pub train: TrainConfig,
    /// Template for transformer cells; `seq_len` and `horizon` come from the cell.
    pub transformer: TransformerConfig,
    pub recurrent_hidden: usize,
    pub recurrent_layers: usize,
    pub train_frac: f64,
    pub out_dir: PathBuf,
    /// Seeds every cell's training run, and the synthetic series unless
    /// `data_seed` is set.
    pub seed: u64,
    pub data_seed: Option<u64>,
    pub jobs: usize,
}

/// Full-size models as published: the default transformer and 8-layer,
/// 512-unit recurrent baselines trained for 50 epochs.
impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            data: DataSource::Synthetic {
                profile: Profile::DiurnalNoise,
                points: 5000,
            },
            cells: full_grid(&ModelKind::ALL, &[10, 20, 50], &[1, 5]),
            train: TrainConfig::default(),
            transformer: TransformerConfig::default(),
            recurrent_hidden: 512,
            recurrent_layers: 8,
            train_frac: crate::data::DEFAULT_TRAIN_FRAC,
            out_dir: PathBuf::from("bench_out"),
            seed: 42,
            data_seed: None,
            jobs: 1,
        }
    }
}

impl BenchmarkSpec {
    /// Desk-scale models: a one-layer d=16 transformer and one-layer,
    /// 16-unit recurrent baselines, 10 epochs at lr 1e-3.
    pub fn toy() -> Self {
        let mut transformer = TransformerConfig::toy(16, 2, 1, 20, 1);
        transformer.d_ff = 32;
        BenchmarkSpec {
            train: TrainConfig {
                lr: 1e-3,
                epochs: 10,
                ..TrainConfig::default()
            },
            transformer,
            recurrent_hidden: 16,
            recurrent_layers: 1,
            ..BenchmarkSpec::default()
        }
    }
}

/// Every combination, in report order.
pub fn full_grid(models: &[ModelKind], seq_lens: &[usize], horizons: &[usize]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &h in horizons {
        for &l in seq_lens {
            for &m in models {
                cells.push(Cell::new(m, l, h));
            }
        }
    }
    cells
}

const SPEC_KEYS: &[&str] = &[
    "size",
    "data",
    "profile",
    "points",
    "models",
    "seq_lens",
    "horizons",
    "cells",
    "out_dir",
    "seed",
    "data_seed",
    "jobs",
    "train_frac",
    "hidden",
    "rnn_layers",
    // training
    "lr",
    "beta1",
    "beta2",
    "batch_size",
    "epochs",
    "eps_adam",
    "final_step_only",
    "paper_betas",
    // transformer
    "d_model",
    "n_heads",
    "n_layers",
    "d_ff",
    "dropout",
    "attn_dropout",
    "tie_embeddings",
    "eps_layernorm",
    "init_std",
];

impl BenchmarkSpec {
    /// Reads a flat `key = value` spec; absent keys keep their defaults.
    ///
    /// `size = toy` starts from [`BenchmarkSpec::toy`] instead of the
    /// full-size default; every other key overrides the chosen base.
    /// `data` is `synthetic` (with optional `profile` and `points`) or a CSV
    /// path. Cells come from `cells = lstm:20:1, ...` or, failing that, the
    /// product of `models`, `seq_lens` and `horizons`.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        if let Some(unknown) = kv.keys().find(|k| !SPEC_KEYS.contains(k)) {
            return Err(Error::config(format!("unknown benchmark spec key `{unknown}`")));
        }
        let mut spec = match kv.get("size") {
            None | Some("full") => BenchmarkSpec::default(),
            Some("toy") => BenchmarkSpec::toy(),
            Some(other) => return Err(Error::config(format!("size must be `toy` or `full`, got `{other}`"))),
        };
        let (mut profile, mut points) = (Profile::DiurnalNoise, 5000);
        kv.read_into("profile", &mut profile)?;
        kv.read_into("points", &mut points)?;
        spec.data = match kv.get("data") {
            None | Some("synthetic") => DataSource::Synthetic { profile, points },
            Some(path) => DataSource::Csv(PathBuf::from(path)),
        };

        let models = kv
            .list::<ModelKind>("models")?
            .unwrap_or_else(|| ModelKind::ALL.to_vec());
        let seq_lens = kv.list::<usize>("seq_lens")?.unwrap_or_else(|| vec![10, 20, 50]);
        let horizons = kv.list::<usize>("horizons")?.unwrap_or_else(|| vec![1, 5]);
        spec.cells = match kv.list::<Cell>("cells")? {
            Some(cells) => cells,
            None => full_grid(&models, &seq_lens, &horizons),
        };

        if let Some(dir) = kv.get("out_dir") {
            spec.out_dir = PathBuf::from(dir);
        }
        kv.read_into("seed", &mut spec.seed)?;
        spec.data_seed = kv.parse_value("data_seed")?;
        kv.read_into("jobs", &mut spec.jobs)?;
        kv.read_into("train_frac", &mut spec.train_frac)?;
        kv.read_into("hidden", &mut spec.recurrent_hidden)?;
        kv.read_into("rnn_layers", &mut spec.recurrent_layers)?;
        spec.train.update_from_kv(kv)?;
        if kv.parse_value::<bool>("paper_betas")?.unwrap_or(false) {
            spec.train = spec.train.with_paper_betas();
        }
        spec.transformer.update_from_kv(kv)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvMap::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::config("benchmark spec has no cells"));
        }
        let mut seen = HashSet::new();
        for c in &self.cells {
            if !seen.insert(*c) {
                return Err(Error::config(format!("duplicate cell {c}")));
            }
            Forecaster::new(&self.model_config(c))?;
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be ≥ 1"));
        }
        self.train.validate()
    }

    pub fn model_config(&self, cell: &Cell) -> ModelConfig {
        match cell.model {
            ModelKind::Transformer => {
                let mut c = self.transformer.clone();
                c.seq_len = cell.seq_len;
                c.horizon = cell.horizon;
                ModelConfig::Transformer(c)
            }
            kind => {
                let cell_kind = if kind == ModelKind::Lstm {
                    CellKind::Lstm
                } else {
                    CellKind::Gru
                };
                ModelConfig::Recurrent(RecurrentConfig::toy(
                    cell_kind,
                    self.recurrent_hidden,
                    self.recurrent_layers,
                    cell.seq_len,
                    cell.horizon,
                ))
            }
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Files and scores from one finished cell.
#[derive(Debug)]
pub struct CellResult {
    pub report: MetricsReport,
    pub history: TrainingHistory,
    pub checkpoint: PathBuf,
    /// Index of each reporting-step target in the full series.
    pub t: Vec<usize>,
    /// Reporting-step targets and forecasts in the original units.
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub result: Result<CellResult>,
}

#[derive(Debug)]
pub struct GridOutcome {
    /// In spec order.
    pub cells: Vec<CellOutcome>,
}

impl GridOutcome {
    pub fn reports(&self) -> Vec<&MetricsReport> {
        self.cells
            .iter()
            .filter_map(|c| c.result.as_ref().ok().map(|r| &r.report))
            .collect()
    }

    pub fn failures(&self) -> Vec<(&Cell, &Error)> {
        self.cells
            .iter()
            .filter_map(|c| c.result.as_ref().err().map(|e| (&c.cell, e)))
            .collect()
    }
}

fn run_cell(spec: &BenchmarkSpec, series: &TimeSeries, cell: &Cell) -> Result<CellResult> {
    let data = prepare(series, cell.seq_len, cell.horizon, spec.train_frac)?;
    let checkpoint = spec.out_dir.join(format!("ckpt_{}.ckpt", cell.name()));
    let out = fit(&spec.model_config(cell), &data, &spec.train_config(), Some(&checkpoint))?;
    let (y, p) = step_series(&out.model, &out.params, &data.test)?
        .pop()
        .expect("horizon ≥ 1");
    let report = report_from_series(cell.model, cell.seq_len, cell.horizon, &y, &p, Some(&data.scaler))?;

    let t: Vec<usize> = data
        .test
        .samples()
        .iter()
        .map(|s| data.train_len + s.origin + cell.seq_len + cell.horizon - 1)
        .collect();
    let actual = data.scaler.denormalize(&y);
    let predicted = data.scaler.denormalize(&p);
    write_forecast_csv(
        &spec.out_dir.join(format!("forecast_{}.csv", cell.name())),
        &t,
        &actual,
        &predicted,
    )?;
    out.history
        .write_loss_csv(&spec.out_dir.join(format!("loss_{}.csv", cell.name())))?;
    Ok(CellResult {
        report,
        history: out.history,
        checkpoint,
        t,
        actual,
        predicted,
    })
}

/// Trains and scores every cell on one shared series, up to `spec.jobs`
/// cells at a time, then writes `table2.csv` and `table2.md`. A failing
/// cell is recorded and the rest of the grid still runs.
pub fn run_benchmark_grid(spec: &BenchmarkSpec) -> Result<GridOutcome> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir)?;
    let series = load_series(&spec.data, spec.data_seed.unwrap_or(spec.seed))?;
    log::info!(
        "benchmark: {} cells on {} points, {} job(s)",
        spec.cells.len(),
        series.len(),
        spec.jobs
    );

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<CellResult>>>> = Mutex::new((0..spec.cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..spec.jobs.min(spec.cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = spec.cells.get(i) else { break };
                let started = std::time::Instant::now();
                let result = run_cell(spec, &series, cell);
                match &result {
                    Ok(r) => log::info!(
                        "{}: test MSE {:.6} in {:.1}s",
                        cell.name(),
                        r.report.metrics.mse,
                        started.elapsed().as_secs_f64()
                    ),
                    Err(e) => log::warn!("{}: failed: {e}", cell.name()),
                }
                slots.lock().expect("no worker panicked")[i] = Some(result);
            });
        }
    });

    let cells: Vec<CellOutcome> = slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .zip(&spec.cells)
        .map(|(r, c)| CellOutcome {
            cell: *c,
            result: r.expect("every cell ran"),
        })
        .collect();

    let messages: Vec<Option<String>> = cells
        .iter()
        .map(|c| c.result.as_ref().err().map(|e| e.to_string()))
        .collect();
    let rows: Vec<Row> = cells
        .iter()
        .zip(&messages)
        .map(|(c, msg)| Row {
            cell: c.cell,
            report: c.result.as_ref().ok().map(|r| &r.report),
            error: msg.as_deref(),
        })
        .collect();
    write_tables(&rows, &spec.out_dir)?;
    Ok(GridOutcome { cells })
}
