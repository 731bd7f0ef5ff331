//! Experiment orchestration: flat key-value configs, multi-trial runs with
//! derived seeds, report emission/parsing, and width sweeps for figure
//! data. See docs/config-schema.txt for the config key reference.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::layers::{build_fasterkan, build_kan, build_linear, build_mlp, Model};
use crate::loss::LossKind;
use crate::optim::{self, BatchSampling, DpSgdConfig, TrainingLog};
use crate::rng::RngState;

pub const CONFIG_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp,
    Kan,
    FasterKan,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            "kan" => Ok(Self::Kan),
            "fasterkan" => Ok(Self::FasterKan),
            other => Err(Error::Parse(format!(
                "unknown model kind {other:?}; expected linear, mlp, kan, or fasterkan"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Mlp => "mlp",
            Self::Kan => "kan",
            Self::FasterKan => "fasterkan",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        n: usize,
        d: usize,
        noise: f64,
    },
    Csv {
        path: PathBuf,
        target: String,
        has_header: bool,
    },
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Optional cap on training rows for desk-scale runs.
        subset: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelKind,
    /// Full layer widths, input through output.
    pub widths: Vec<usize>,
    pub grid_size: usize,
    pub degree: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub num_grids: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub inv_denominator: f64,
    pub data: DataSource,
    pub split_fraction: f64,
    pub standardize: bool,
    pub trials: usize,
    pub seed: u64,
    pub private: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub noise_multiplier: f64,
    pub batch_size: usize,
    pub delta: f64,
    pub weight_decay: f64,
    pub batch_clip: Option<f64>,
    /// Raw config text echoed into reports.
    pub echo: String,
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("config key {key}: cannot parse value {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Parse(format!(
            "config key {key}: expected true or false, got {value:?}"
        ))),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "version",
    "task",
    "model",
    "widths",
    "grid_size",
    "degree",
    "grid_lo",
    "grid_hi",
    "num_grids",
    "grid_min",
    "grid_max",
    "inv_denominator",
    "data",
    "csv_path",
    "csv_target",
    "csv_has_header",
    "mnist_train_images",
    "mnist_train_labels",
    "mnist_test_images",
    "mnist_test_labels",
    "mnist_subset",
    "synthetic_n",
    "synthetic_d",
    "synthetic_noise",
    "split_fraction",
    "standardize",
    "trials",
    "seed",
    "private",
    "epochs",
    "learning_rate",
    "clip",
    "noise_multiplier",
    "batch_size",
    "delta",
    "weight_decay",
    "batch_clip",
];

impl ExperimentConfig {
    /// Parse the flat `key = value` config format. Unknown keys are
    /// rejected; '#' starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut kv: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "config line {}: expected 'key = value', got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse(format!("unknown config key {key:?}")));
            }
            if !seen.insert(key.clone()) {
                return Err(Error::Parse(format!("duplicate config key {key:?}")));
            }
            kv.push((key, value));
        }
        let lookup = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let require = |key: &str| {
            lookup(key).ok_or_else(|| Error::Parse(format!("missing required config key {key:?}")))
        };

        let version: u64 = parse_field("version", require("version")?)?;
        if version != CONFIG_VERSION {
            return Err(Error::Parse(format!(
                "config version {version} unsupported; this build reads version {CONFIG_VERSION}"
            )));
        }
        let task = match require("task")? {
            "regression" => Task::Regression,
            "classification" => Task::Classification,
            other => {
                return Err(Error::Parse(format!(
                    "config key task: expected regression or classification, got {other:?}"
                )))
            }
        };
        let model = ModelKind::parse(require("model")?)?;
        let widths: Vec<usize> = require("widths")?
            .split(',')
            .map(|w| parse_field("widths", w.trim()))
            .collect::<Result<_>>()?;
        if widths.len() < 2 {
            return Err(Error::Parse(
                "config key widths: need at least input and output width".into(),
            ));
        }
        let data = match require("data")? {
            "synthetic" => DataSource::Synthetic {
                n: parse_field("synthetic_n", require("synthetic_n")?)?,
                d: parse_field("synthetic_d", require("synthetic_d")?)?,
                noise: parse_field("synthetic_noise", require("synthetic_noise")?)?,
            },
            "csv" => DataSource::Csv {
                path: PathBuf::from(require("csv_path")?),
                target: require("csv_target")?.to_string(),
                has_header: match lookup("csv_has_header") {
                    Some(v) => parse_bool("csv_has_header", v)?,
                    None => true,
                },
            },
            "mnist" => DataSource::Mnist {
                train_images: PathBuf::from(require("mnist_train_images")?),
                train_labels: PathBuf::from(require("mnist_train_labels")?),
                test_images: PathBuf::from(require("mnist_test_images")?),
                test_labels: PathBuf::from(require("mnist_test_labels")?),
                subset: match lookup("mnist_subset") {
                    Some(v) => Some(parse_field("mnist_subset", v)?),
                    None => None,
                },
            },
            other => {
                return Err(Error::Parse(format!(
                    "config key data: expected synthetic, csv, or mnist, got {other:?}"
                )))
            }
        };
        let opt = |key: &str| lookup(key);
        let cfg = Self {
            task,
            model,
            widths,
            grid_size: match opt("grid_size") {
                Some(v) => parse_field("grid_size", v)?,
                None => 2,
            },
            degree: match opt("degree") {
                Some(v) => parse_field("degree", v)?,
                None => 2,
            },
            grid_lo: match opt("grid_lo") {
                Some(v) => parse_field("grid_lo", v)?,
                None => -1.0,
            },
            grid_hi: match opt("grid_hi") {
                Some(v) => parse_field("grid_hi", v)?,
                None => 1.0,
            },
            num_grids: match opt("num_grids") {
                Some(v) => parse_field("num_grids", v)?,
                None => 2,
            },
            grid_min: match opt("grid_min") {
                Some(v) => parse_field("grid_min", v)?,
                None => -1.2,
            },
            grid_max: match opt("grid_max") {
                Some(v) => parse_field("grid_max", v)?,
                None => 0.2,
            },
            inv_denominator: match opt("inv_denominator") {
                Some(v) => parse_field("inv_denominator", v)?,
                None => 0.5,
            },
            data,
            split_fraction: match opt("split_fraction") {
                Some(v) => parse_field("split_fraction", v)?,
                None => 0.2,
            },
            standardize: match opt("standardize") {
                Some(v) => parse_bool("standardize", v)?,
                None => true,
            },
            trials: match opt("trials") {
                Some(v) => parse_field("trials", v)?,
                None => 1,
            },
            seed: match opt("seed") {
                Some(v) => parse_field("seed", v)?,
                None => 0,
            },
            private: parse_bool("private", require("private")?)?,
            epochs: parse_field("epochs", require("epochs")?)?,
            learning_rate: parse_field("learning_rate", require("learning_rate")?)?,
            clip: match opt("clip") {
                Some(v) => parse_field("clip", v)?,
                None => 1.0,
            },
            noise_multiplier: match opt("noise_multiplier") {
                Some(v) => parse_field("noise_multiplier", v)?,
                None => 1.0,
            },
            batch_size: parse_field("batch_size", require("batch_size")?)?,
            delta: match opt("delta") {
                Some(v) => parse_field("delta", v)?,
                None => 1e-5,
            },
            weight_decay: match opt("weight_decay") {
                Some(v) => parse_field("weight_decay", v)?,
                None => 0.01,
            },
            batch_clip: match opt("batch_clip") {
                Some(v) => Some(parse_field("batch_clip", v)?),
                None => None,
            },
            echo: text.to_string(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Argument("trials must be >= 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "split_fraction must be in (0,1), got {}",
                self.split_fraction
            )));
        }
        match &self.data {
            DataSource::Csv { path, .. } => {
                if !path.exists() {
                    return Err(Error::Argument(format!(
                        "csv_path does not exist: {}",
                        path.display()
                    )));
                }
            }
            DataSource::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.exists() {
                        return Err(Error::Argument(format!(
                            "mnist path does not exist: {}",
                            p.display()
                        )));
                    }
                }
            }
            DataSource::Synthetic { n, d, .. } => {
                if *n == 0 || *d == 0 {
                    return Err(Error::Argument(
                        "synthetic_n and synthetic_d must be >= 1".into(),
                    ));
                }
            }
        }
        let loss = self.loss_kind();
        match (self.task, loss) {
            (Task::Regression, LossKind::Mse) | (Task::Classification, LossKind::CrossEntropy) => {}
            _ => unreachable!(),
        }
        self.dp_config(self.seed).validate()
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.task {
            Task::Regression => LossKind::Mse,
            Task::Classification => LossKind::CrossEntropy,
        }
    }

    pub fn dp_config(&self, seed: u64) -> DpSgdConfig {
        let mut dp = DpSgdConfig::new(self.private);
        dp.epochs = self.epochs;
        dp.learning_rate = self.learning_rate;
        dp.clipping_constant = self.clip;
        dp.noise_multiplier = self.noise_multiplier;
        dp.batch_size = self.batch_size;
        dp.delta = self.delta;
        dp.seed = seed;
        dp.weight_decay = if self.private { 0.0 } else { self.weight_decay };
        dp.non_private_batch_clip = self.batch_clip;
        dp.sampling = BatchSampling::Poisson;
        dp
    }

    pub fn build_model(&self) -> Result<Model> {
        match self.model {
            ModelKind::Linear => {
                if self.widths.len() != 2 {
                    return Err(Error::Argument(format!(
                        "linear model takes exactly [input, output] widths, got {}",
                        self.widths.len()
                    )));
                }
                build_linear(self.widths[0], self.widths[1])
            }
            ModelKind::Mlp => build_mlp(&self.widths),
            ModelKind::Kan => build_kan(
                &self.widths,
                self.grid_size,
                self.degree,
                self.grid_lo,
                self.grid_hi,
            ),
            ModelKind::FasterKan => build_fasterkan(
                &self.widths,
                self.num_grids,
                self.grid_min,
                self.grid_max,
                self.inv_denominator,
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub metric_name: String,
    pub per_trial: Vec<f64>,
    pub mean: f64,
    /// (max - min) / 2 over trials, the appendix table's +- style.
    pub half_range: f64,
    pub epsilon: Option<f64>,
    pub param_count: usize,
    pub wall_seconds: f64,
    pub seeds: Vec<u64>,
    pub config_echo: String,
}

/// Wall time is inherently non-reproducible, so equality skips it; every
/// other field must match bitwise.
impl PartialEq for RunReport {
    fn eq(&self, other: &Self) -> bool {
        self.metric_name == other.metric_name
            && self.per_trial == other.per_trial
            && self.mean == other.mean
            && self.half_range == other.half_range
            && self.epsilon == other.epsilon
            && self.param_count == other.param_count
            && self.seeds == other.seeds
            && self.config_echo == other.config_echo
    }
}

impl RunReport {
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report_version = 1");
        let _ = writeln!(out, "metric = {}", self.metric_name);
        let _ = writeln!(out, "trials = {}", self.per_trial.len());
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "seeds = {}", seeds.join(","));
        for (i, m) in self.per_trial.iter().enumerate() {
            let _ = writeln!(out, "trial_{i} = {m:.17e}");
        }
        let _ = writeln!(out, "mean = {:.17e}", self.mean);
        let _ = writeln!(out, "half_range = {:.17e}", self.half_range);
        let _ = writeln!(
            out,
            "epsilon = {}",
            self.epsilon
                .map(|e| format!("{e:.17e}"))
                .unwrap_or_else(|| "-".into())
        );
        let _ = writeln!(out, "param_count = {}", self.param_count);
        let _ = writeln!(out, "wall_seconds = {:.17e}", self.wall_seconds);
        let _ = writeln!(out, "config_begin");
        for line in self.config_echo.lines() {
            let _ = writeln!(out, "{line}");
        }
        let _ = writeln!(out, "config_end");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut fields: Vec<(String, String)> = Vec::new();
        let mut config_echo = String::new();
        let mut in_config = false;
        let mut saw_config = false;
        for line in lines.by_ref() {
            if in_config {
                if line == "config_end" {
                    in_config = false;
                    continue;
                }
                config_echo.push_str(line);
                config_echo.push('\n');
                continue;
            }
            if line == "config_begin" {
                in_config = true;
                saw_config = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse(format!("report line not key = value: {line:?}")));
            };
            fields.push((k.trim().to_string(), v.trim().to_string()));
        }
        if in_config || !saw_config {
            return Err(Error::Parse(
                "report missing balanced config_begin/config_end block".into(),
            ));
        }
        let get = |key: &str| {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Parse(format!("report missing field {key:?}")))
        };
        let version: u64 = parse_field("report_version", get("report_version")?)?;
        if version != 1 {
            return Err(Error::Parse(format!("unsupported report version {version}")));
        }
        let trials: usize = parse_field("trials", get("trials")?)?;
        let mut per_trial = Vec::with_capacity(trials);
        for i in 0..trials {
            per_trial.push(parse_field(&format!("trial_{i}"), get(&format!("trial_{i}"))?)?);
        }
        let seeds: Vec<u64> = get("seeds")?
            .split(',')
            .map(|s| parse_field("seeds", s.trim()))
            .collect::<Result<_>>()?;
        let epsilon = match get("epsilon")? {
            "-" => None,
            v => Some(parse_field("epsilon", v)?),
        };
        Ok(Self {
            metric_name: get("metric")?.to_string(),
            per_trial,
            mean: parse_field("mean", get("mean")?)?,
            half_range: parse_field("half_range", get("half_range")?)?,
            epsilon,
            param_count: parse_field("param_count", get("param_count")?)?,
            wall_seconds: parse_field("wall_seconds", get("wall_seconds")?)?,
            seeds,
            config_echo,
        })
    }
}

/// Table 1's derived column: relative quality loss from privacy, floored
/// at zero, in percent.
pub fn quality_drop_percent(non_private: f64, private: f64) -> f64 {
    if non_private <= 0.0 {
        return 0.0;
    }
    ((non_private - private) / non_private * 100.0).max(0.0)
}

struct TrialData {
    train: Dataset,
    test: Dataset,
}

fn load_trial_data(cfg: &ExperimentConfig, seed: u64) -> Result<TrialData> {
    match &cfg.data {
        DataSource::Synthetic { n, d, noise } => {
            let full = data::gen_synthetic(*n, *d, *noise, seed)?;
            let (train, test) = data::train_test_split(&full, cfg.split_fraction, seed)?;
            if cfg.standardize {
                let (train, mut others) = data::standardize(&train, &[&test])?;
                Ok(TrialData {
                    train,
                    test: others.pop().unwrap(),
                })
            } else {
                Ok(TrialData { train, test })
            }
        }
        DataSource::Csv {
            path,
            target,
            has_header,
        } => {
            let full = data::load_csv(path, target, *has_header)?;
            let (train, test) = data::train_test_split(&full, cfg.split_fraction, seed)?;
            if cfg.standardize {
                let (train, mut others) = data::standardize(&train, &[&test])?;
                Ok(TrialData {
                    train,
                    test: others.pop().unwrap(),
                })
            } else {
                Ok(TrialData { train, test })
            }
        }
        DataSource::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            subset,
        } => {
            // The IDX loader already applies the fixed standardization.
            let mut train = data::load_mnist_idx(train_images, train_labels)?;
            let test = data::load_mnist_idx(test_images, test_labels)?;
            if let Some(n) = subset {
                train = train.take(*n);
            }
            Ok(TrialData { train, test })
        }
    }
}

fn check_widths(cfg: &ExperimentConfig, train: &Dataset) -> Result<()> {
    if cfg.widths[0] != train.dim() {
        return Err(Error::Shape(format!(
            "first width {} vs data dimension {}",
            cfg.widths[0],
            train.dim()
        )));
    }
    let n_out = *cfg.widths.last().unwrap();
    match (&cfg.task, &train.targets) {
        (Task::Regression, data::Targets::Regression(_)) => {
            if n_out != 1 {
                return Err(Error::Shape(format!(
                    "regression needs output width 1, got {n_out}"
                )));
            }
        }
        (Task::Classification, data::Targets::Classification { n_classes, .. }) => {
            if n_out != *n_classes {
                return Err(Error::Shape(format!(
                    "output width {n_out} vs {n_classes} classes"
                )));
            }
        }
        _ => {
            return Err(Error::Argument(
                "config task does not match dataset targets".into(),
            ))
        }
    }
    Ok(())
}

/// Run `cfg.trials` trials with seeds seed, seed+1, ... and aggregate.
/// When `out_dir` is given, writes report.txt and log_trial<i>.txt there.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let kind = cfg.loss_kind();
    let mut per_trial = Vec::with_capacity(cfg.trials);
    let mut seeds = Vec::with_capacity(cfg.trials);
    let mut logs: Vec<TrainingLog> = Vec::with_capacity(cfg.trials);
    let mut epsilon = None;
    let mut param_count = 0;
    for i in 0..cfg.trials {
        let seed = cfg.seed + i as u64;
        seeds.push(seed);
        let trial = load_trial_data(cfg, seed)?;
        check_widths(cfg, &trial.train)?;
        let mut model = cfg.build_model()?;
        param_count = model.param_count();
        let mut init = RngState::new(seed).stream("model-init");
        model.init(&mut init);
        let dp = cfg.dp_config(seed);
        let (trained, log) = optim::train(&model, &trial.train, Some(&trial.test), &dp, kind)?;
        let metric = optim::evaluate_model(&trained, &trial.test, kind)?;
        per_trial.push(metric);
        if cfg.private {
            epsilon = log.final_epsilon;
        }
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            crate::serialize::save_model(&trained, &dir.join(format!("model_trial{i}.bin")))?;
        }
        logs.push(log);
    }
    let mean = per_trial.iter().sum::<f64>() / per_trial.len() as f64;
    let (lo, hi) = per_trial
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| {
            (lo.min(m), hi.max(m))
        });
    let report = RunReport {
        metric_name: match cfg.task {
            Task::Regression => "r2".to_string(),
            Task::Classification => "accuracy".to_string(),
        },
        per_trial,
        mean,
        half_range: (hi - lo) / 2.0,
        epsilon,
        param_count,
        wall_seconds: start.elapsed().as_secs_f64(),
        seeds,
        config_echo: cfg.echo.clone(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), report.emit())?;
        for (i, log) in logs.iter().enumerate() {
            std::fs::write(dir.join(format!("log_trial{i}.txt")), log.to_text())?;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: ModelKind,
    pub width: usize,
    pub param_count: usize,
    pub private: bool,
    pub mean: f64,
    pub half_range: f64,
    pub epsilon: Option<f64>,
}

/// One row per (width, privacy mode) using the template's model kind:
/// network [input, width, output], both private and non-private runs.
pub fn sweep(template: &ExperimentConfig, widths: &[usize]) -> Result<Vec<SweepRow>> {
    if template.task != Task::Classification {
        return Err(Error::Argument("sweep requires a classification task".into()));
    }
    if widths.is_empty() {
        return Err(Error::Argument("sweep needs at least one width".into()));
    }
    let (input, output) = (template.widths[0], *template.widths.last().unwrap());
    let mut rows = Vec::new();
    for &w in widths {
        for private in [false, true] {
            let mut cfg = template.clone();
            cfg.widths = vec![input, w, output];
            cfg.private = private;
            let report = run_experiment(&cfg, None)?;
            rows.push(SweepRow {
                model: cfg.model,
                width: w,
                param_count: report.param_count,
                private,
                mean: report.mean,
                half_range: report.half_range,
                epsilon: report.epsilon,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_to_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("model\twidth\tparams\tprivate\tmetric_mean\tmetric_half_range\tepsilon\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
            r.model.name(),
            r.width,
            r.param_count,
            r.private,
            r.mean,
            r.half_range,
            r.epsilon
                .map(|e| format!("{e:.4}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    out
}
