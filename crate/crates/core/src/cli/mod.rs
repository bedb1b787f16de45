//! Command-line surface: reproducible runs driven by flags and optional
//! JSON config files.
//!
//! Flags override config-file values, which override the built-in
//! defaults. The fully resolved configuration is echoed to the run
//! directory as `config.json` before anything executes, so every run is
//! reconstructible from that file plus its seed. Failures exit nonzero
//! with a machine-readable error JSON on stderr.

mod run;

pub use run::{execute, run_gradcheck_suite};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::losses::VaLossConfig;
use crate::training::TrainConfig;

#[derive(Parser, Debug)]
#[command(name = "fei3d", version, about = "Expression inference on 3D face parameters: training, fusion, evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Subcommand, Debug)]
pub enum CliCommand {
    /// Train a classifier or two-stage VA regressor on parameter vectors.
    #[command(name = "train-3d")]
    Train3d(Train3dArgs),
    /// Train the intermediate-fusion model over 2D features + 3D parameters.
    #[command(name = "train-intermediate")]
    TrainIntermediate(TrainIntermediateArgs),
    /// Combine two prediction sets and evaluate the fused predictions.
    #[command(name = "fuse-late")]
    FuseLate(FuseLateArgs),
    /// Evaluate one prediction set against labels.
    Evaluate(EvaluateArgs),
    /// Sweep the weighted-fusion weight over a grid.
    Sweep(SweepArgs),
    /// Finite-difference verification of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic parameter dataset.
    Synth(SynthArgs),
    /// Decode morphable-model parameters into an OBJ mesh.
    #[command(name = "decode-mesh")]
    DecodeMesh(DecodeMeshArgs),
}

// ---------------------------------------------------------------------------
// Resolved run configuration (echoed to config.json)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    #[serde(rename = "train-3d")]
    Train3d(Train3dConfig),
    #[serde(rename = "train-intermediate")]
    TrainIntermediate(TrainIntermediateConfig),
    #[serde(rename = "fuse-late")]
    FuseLate(FuseLateConfig),
    Evaluate(EvaluateConfig),
    Sweep(SweepConfig),
    Gradcheck(GradcheckConfig),
    Synth(SynthConfig),
    DecodeMesh(DecodeMeshConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Train3dConfig {
    pub data: PathBuf,
    pub val: PathBuf,
    pub kind: String,
    /// raf7 | affect8va | va2 | custom:N; empty string = inferred.
    pub head: String,
    /// ce | wce | composite (ignored when `two_stage` is set).
    pub loss: String,
    pub two_stage: bool,
    pub va: VaLossConfig,
    pub hidden_width: usize,
    pub dropout: (f64, f64),
    pub train: TrainConfig,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for Train3dConfig {
    fn default() -> Self {
        Train3dConfig {
            data: PathBuf::new(),
            val: PathBuf::new(),
            kind: String::new(),
            head: String::new(),
            loss: "ce".into(),
            two_stage: false,
            va: VaLossConfig::default(),
            hidden_width: 2048,
            dropout: (0.5, 0.4),
            train: TrainConfig::default(),
            threads: 1,
            out: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainIntermediateConfig {
    pub features2d: PathBuf,
    pub data: PathBuf,
    pub val_features2d: PathBuf,
    pub val_data: PathBuf,
    pub kind: String,
    pub head: String,
    pub loss: String,
    pub proj_dim: usize,
    pub hidden_width: usize,
    pub dropout: (f64, f64),
    pub va: VaLossConfig,
    pub train: TrainConfig,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for TrainIntermediateConfig {
    fn default() -> Self {
        TrainIntermediateConfig {
            features2d: PathBuf::new(),
            data: PathBuf::new(),
            val_features2d: PathBuf::new(),
            val_data: PathBuf::new(),
            kind: String::new(),
            head: String::new(),
            loss: "ce".into(),
            proj_dim: 256,
            hidden_width: 2048,
            dropout: (0.5, 0.4),
            va: VaLossConfig::default(),
            train: TrainConfig::default(),
            threads: 1,
            out: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FuseLateConfig {
    pub a: PathBuf,
    pub b: PathBuf,
    pub from_logits_a: bool,
    pub from_logits_b: bool,
    /// max | min | mean | weighted
    pub strategy: String,
    /// 3D share for the weighted strategy.
    pub w: f64,
    /// Optional dataset with labels (and VA targets) for evaluation.
    pub labels: Option<PathBuf>,
    pub kind: String,
    pub out: PathBuf,
}

impl Default for FuseLateConfig {
    fn default() -> Self {
        FuseLateConfig {
            a: PathBuf::new(),
            b: PathBuf::new(),
            from_logits_a: false,
            from_logits_b: false,
            strategy: "weighted".into(),
            w: 0.2,
            labels: None,
            kind: String::new(),
            out: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub pred: PathBuf,
    pub from_logits: bool,
    pub labels: PathBuf,
    pub kind: String,
    pub out: PathBuf,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            pred: PathBuf::new(),
            from_logits: false,
            labels: PathBuf::new(),
            kind: String::new(),
            out: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub a: PathBuf,
    pub b: PathBuf,
    pub from_logits_a: bool,
    pub from_logits_b: bool,
    pub labels: PathBuf,
    pub kind: String,
    /// `start:end:step` or a comma-separated list of weights.
    pub grid: String,
    /// accuracy | ccc | rmse
    pub objective: String,
    pub out: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            a: PathBuf::new(),
            b: PathBuf::new(),
            from_logits_a: false,
            from_logits_b: false,
            labels: PathBuf::new(),
            kind: String::new(),
            grid: "0:1:0.05".into(),
            objective: "accuracy".into(),
            out: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub batch: usize,
    pub h: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            input_dim: 12,
            hidden_width: 16,
            batch: 8,
            h: 1e-5,
            tolerance: 1e-5,
            seed: 7,
            out: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// When `val_out` is set, this many extra samples per class go into
    /// the validation file; both files share the generated VA map.
    pub val_per_class: usize,
    pub margin: f64,
    pub sigma: f64,
    pub label_space: String,
    pub with_va: bool,
    pub va_noise: f64,
    pub seed: u64,
    /// csv | bin
    pub format: String,
    pub out: PathBuf,
    pub val_out: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 8,
            dim: 156,
            per_class: 100,
            val_per_class: 0,
            margin: 6.0,
            sigma: 1.0,
            label_space: "affect8".into(),
            with_va: false,
            va_noise: 0.05,
            seed: 0,
            format: "csv".into(),
            out: PathBuf::new(),
            val_out: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeMeshConfig {
    pub asset: PathBuf,
    /// CSV with `shape,<floats...>` / `expr,<floats...>` lines.
    pub params: PathBuf,
    pub out: PathBuf,
}

impl Default for DecodeMeshConfig {
    fn default() -> Self {
        DecodeMeshConfig {
            asset: PathBuf::new(),
            params: PathBuf::new(),
            out: PathBuf::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// Raw clap argument structs (everything optional; merged over config files)
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Default)]
pub struct Train3dArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// emoca_short | emoca_full | smirk_short | smirk_full | custom:DIM
    #[arg(long)]
    pub kind: Option<String>,
    /// raf7 | affect8va | va2 | custom:N
    #[arg(long)]
    pub head: Option<String>,
    /// ce | wce | composite
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub two_stage: bool,
    #[arg(long)]
    pub w1: Option<f64>,
    #[arg(long)]
    pub w2: Option<f64>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub base_lr: Option<f64>,
    #[arg(long)]
    pub max_lr: Option<f64>,
    #[arg(long)]
    pub step_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct TrainIntermediateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub features2d: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub val_features2d: Option<PathBuf>,
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub proj_dim: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct FuseLateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub from_logits_a: bool,
    #[arg(long)]
    pub from_logits_b: bool,
    /// max | min | mean | weighted
    #[arg(long)]
    pub strategy: Option<String>,
    /// 3D share for the weighted strategy.
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub from_logits: bool,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub from_logits_a: bool,
    #[arg(long)]
    pub from_logits_b: bool,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub kind: Option<String>,
    /// `start:end:step` or comma-separated weights.
    #[arg(long)]
    pub grid: Option<String>,
    /// accuracy | ccc | rmse
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Extra validation samples per class, written to --val-out.
    #[arg(long)]
    pub val_per_class: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// raf7 | affect8
    #[arg(long)]
    pub label_space: Option<String>,
    #[arg(long)]
    pub with_va: bool,
    #[arg(long)]
    pub va_noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// csv | bin
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub val_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct DecodeMeshArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub asset: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Merge machinery: defaults < config file < flags
// ---------------------------------------------------------------------------

fn load_config_file(path: &Option<PathBuf>) -> Result<Value> {
    match path {
        None => Ok(Value::Object(Default::default())),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let v: Value = serde_json::from_str(&text)?;
            if !v.is_object() {
                return Err(Error::Config(format!(
                    "config file {} must hold a JSON object",
                    p.display()
                )));
            }
            Ok(v)
        }
    }
}

/// Sets `base[path[0]][path[1]]... = value`, creating objects on the way.
fn set_path(base: &mut Value, path: &[&str], value: Value) {
    let mut cur = base;
    for key in &path[..path.len() - 1] {
        if !cur.get(*key).map(Value::is_object).unwrap_or(false) {
            cur[*key] = Value::Object(Default::default());
        }
        cur = cur.get_mut(*key).unwrap();
    }
    cur[*path.last().unwrap()] = value;
}

fn over<T: Serialize>(base: &mut Value, path: &[&str], v: &Option<T>) {
    if let Some(val) = v {
        set_path(base, path, serde_json::to_value(val).expect("serializable"));
    }
}

fn over_flag(base: &mut Value, path: &[&str], set: bool) {
    if set {
        set_path(base, path, Value::Bool(true));
    }
}

fn require_path(p: &std::path::Path, flag: &str) -> Result<()> {
    if p.as_os_str().is_empty() {
        return Err(Error::Config(format!(
            "missing required --{flag} (or config key {flag:?})"
        )));
    }
    Ok(())
}

fn require_exists(p: &std::path::Path, flag: &str) -> Result<()> {
    require_path(p, flag)?;
    if !p.exists() {
        return Err(Error::Config(format!(
            "--{flag} path {} does not exist",
            p.display()
        )));
    }
    Ok(())
}

/// Parses argv and resolves the full run configuration
/// (defaults < config file < flags). Validates referenced input paths.
pub fn parse_and_validate<I, S>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Config(e.to_string()))?;
    resolve(cli.command)
}

pub fn resolve(command: CliCommand) -> Result<RunConfig> {
    let cfg = match command {
        CliCommand::Train3d(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["data"], &a.data);
            over(&mut v, &["val"], &a.val);
            over(&mut v, &["kind"], &a.kind);
            over(&mut v, &["head"], &a.head);
            over(&mut v, &["loss"], &a.loss);
            over_flag(&mut v, &["two_stage"], a.two_stage);
            over(&mut v, &["va", "w1"], &a.w1);
            over(&mut v, &["va", "w2"], &a.w2);
            over(&mut v, &["hidden_width"], &a.hidden_width);
            over(&mut v, &["train", "batch_size"], &a.batch);
            over(&mut v, &["train", "weight_decay"], &a.weight_decay);
            over(&mut v, &["train", "max_epochs"], &a.max_epochs);
            over(&mut v, &["train", "patience"], &a.patience);
            over(&mut v, &["train", "base_lr"], &a.base_lr);
            over(&mut v, &["train", "max_lr"], &a.max_lr);
            over(&mut v, &["train", "step_size"], &a.step_size);
            over(&mut v, &["train", "seed"], &a.seed);
            over(&mut v, &["threads"], &a.threads);
            over(&mut v, &["out"], &a.out);
            let c: Train3dConfig = serde_json::from_value(v)?;
            require_exists(&c.data, "data")?;
            require_exists(&c.val, "val")?;
            require_path(&c.out, "out")?;
            if c.kind.is_empty() {
                return Err(Error::Config("missing required --kind".into()));
            }
            RunConfig::Train3d(c)
        }
        CliCommand::TrainIntermediate(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["features2d"], &a.features2d);
            over(&mut v, &["data"], &a.data);
            over(&mut v, &["val_features2d"], &a.val_features2d);
            over(&mut v, &["val_data"], &a.val_data);
            over(&mut v, &["kind"], &a.kind);
            over(&mut v, &["head"], &a.head);
            over(&mut v, &["loss"], &a.loss);
            over(&mut v, &["proj_dim"], &a.proj_dim);
            over(&mut v, &["hidden_width"], &a.hidden_width);
            over(&mut v, &["train", "batch_size"], &a.batch);
            over(&mut v, &["train", "max_epochs"], &a.max_epochs);
            over(&mut v, &["train", "patience"], &a.patience);
            over(&mut v, &["train", "seed"], &a.seed);
            over(&mut v, &["threads"], &a.threads);
            over(&mut v, &["out"], &a.out);
            let c: TrainIntermediateConfig = serde_json::from_value(v)?;
            require_exists(&c.features2d, "features2d")?;
            require_exists(&c.data, "data")?;
            require_exists(&c.val_features2d, "val-features2d")?;
            require_exists(&c.val_data, "val-data")?;
            require_path(&c.out, "out")?;
            if c.kind.is_empty() {
                return Err(Error::Config("missing required --kind".into()));
            }
            RunConfig::TrainIntermediate(c)
        }
        CliCommand::FuseLate(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["a"], &a.a);
            over(&mut v, &["b"], &a.b);
            over_flag(&mut v, &["from_logits_a"], a.from_logits_a);
            over_flag(&mut v, &["from_logits_b"], a.from_logits_b);
            over(&mut v, &["strategy"], &a.strategy);
            over(&mut v, &["w"], &a.w);
            over(&mut v, &["labels"], &a.labels);
            over(&mut v, &["kind"], &a.kind);
            over(&mut v, &["out"], &a.out);
            let c: FuseLateConfig = serde_json::from_value(v)?;
            require_exists(&c.a, "a")?;
            require_exists(&c.b, "b")?;
            if let Some(l) = &c.labels {
                require_exists(l, "labels")?;
                if c.kind.is_empty() {
                    return Err(Error::Config(
                        "--kind is required when --labels is given".into(),
                    ));
                }
            }
            require_path(&c.out, "out")?;
            RunConfig::FuseLate(c)
        }
        CliCommand::Evaluate(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["pred"], &a.pred);
            over_flag(&mut v, &["from_logits"], a.from_logits);
            over(&mut v, &["labels"], &a.labels);
            over(&mut v, &["kind"], &a.kind);
            over(&mut v, &["out"], &a.out);
            let c: EvaluateConfig = serde_json::from_value(v)?;
            require_exists(&c.pred, "pred")?;
            require_exists(&c.labels, "labels")?;
            require_path(&c.out, "out")?;
            if c.kind.is_empty() {
                return Err(Error::Config("missing required --kind".into()));
            }
            RunConfig::Evaluate(c)
        }
        CliCommand::Sweep(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["a"], &a.a);
            over(&mut v, &["b"], &a.b);
            over_flag(&mut v, &["from_logits_a"], a.from_logits_a);
            over_flag(&mut v, &["from_logits_b"], a.from_logits_b);
            over(&mut v, &["labels"], &a.labels);
            over(&mut v, &["kind"], &a.kind);
            over(&mut v, &["grid"], &a.grid);
            over(&mut v, &["objective"], &a.objective);
            over(&mut v, &["out"], &a.out);
            let c: SweepConfig = serde_json::from_value(v)?;
            require_exists(&c.a, "a")?;
            require_exists(&c.b, "b")?;
            require_exists(&c.labels, "labels")?;
            require_path(&c.out, "out")?;
            if c.kind.is_empty() {
                return Err(Error::Config("missing required --kind".into()));
            }
            RunConfig::Sweep(c)
        }
        CliCommand::Gradcheck(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["input_dim"], &a.input_dim);
            over(&mut v, &["hidden_width"], &a.hidden_width);
            over(&mut v, &["batch"], &a.batch);
            over(&mut v, &["h"], &a.h);
            over(&mut v, &["tolerance"], &a.tolerance);
            over(&mut v, &["seed"], &a.seed);
            over(&mut v, &["out"], &a.out);
            let c: GradcheckConfig = serde_json::from_value(v)?;
            require_path(&c.out, "out")?;
            RunConfig::Gradcheck(c)
        }
        CliCommand::Synth(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["classes"], &a.classes);
            over(&mut v, &["dim"], &a.dim);
            over(&mut v, &["per_class"], &a.per_class);
            over(&mut v, &["val_per_class"], &a.val_per_class);
            over(&mut v, &["margin"], &a.margin);
            over(&mut v, &["sigma"], &a.sigma);
            over(&mut v, &["label_space"], &a.label_space);
            over_flag(&mut v, &["with_va"], a.with_va);
            over(&mut v, &["va_noise"], &a.va_noise);
            over(&mut v, &["seed"], &a.seed);
            over(&mut v, &["format"], &a.format);
            over(&mut v, &["out"], &a.out);
            over(&mut v, &["val_out"], &a.val_out);
            let c: SynthConfig = serde_json::from_value(v)?;
            require_path(&c.out, "out")?;
            if c.val_out.is_some() && c.val_per_class == 0 {
                return Err(Error::Config(
                    "--val-out needs --val-per-class >= 1".into(),
                ));
            }
            RunConfig::Synth(c)
        }
        CliCommand::DecodeMesh(a) => {
            let mut v = load_config_file(&a.config)?;
            over(&mut v, &["asset"], &a.asset);
            over(&mut v, &["params"], &a.params);
            over(&mut v, &["out"], &a.out);
            let c: DecodeMeshConfig = serde_json::from_value(v)?;
            require_exists(&c.asset, "asset")?;
            require_exists(&c.params, "params")?;
            require_path(&c.out, "out")?;
            RunConfig::DecodeMesh(c)
        }
    };
    Ok(cfg)
}

/// `FEI3D_THREADS` is the fallback when a command's `threads` is left at
/// its default of 1.
pub fn effective_threads(config_threads: usize) -> usize {
    if config_threads > 1 {
        return config_threads;
    }
    std::env::var("FEI3D_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&t: &usize| t >= 1)
        .unwrap_or(config_threads.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.csv");
        std::fs::write(
            &data,
            "# fei3d-dataset v1 label_space=raf7\nid,label,valence,arousal,p000\na,0,,,1.0\nb,1,,,2.0\n",
        )
        .unwrap();
        let cfg_path = dir.path().join("c.json");
        std::fs::write(
            &cfg_path,
            format!(
                "{{\"data\": {0:?}, \"val\": {0:?}, \"kind\": \"custom:1\", \"out\": \"run\", \"train\": {{\"batch_size\": 64}}}}",
                data.to_str().unwrap()
            ),
        )
        .unwrap();
        let cfg = parse_and_validate([
            "fei3d",
            "train-3d",
            "--config",
            cfg_path.to_str().unwrap(),
            "--batch",
            "32",
        ])
        .unwrap();
        match cfg {
            RunConfig::Train3d(c) => {
                assert_eq!(c.train.batch_size, 32);
                assert_eq!(c.kind, "custom:1");
                // untouched defaults stay at table values
                assert_eq!(c.train.weight_decay, 1e-5);
                assert_eq!(c.train.max_epochs, 100);
                assert_eq!(c.train.patience, 3);
            }
            other => panic!("wrong command: {other:?}"),
        }
    }

    #[test]
    fn missing_required_flag_names_it() {
        let err = parse_and_validate(["fei3d", "train-3d", "--kind", "emoca_short"]).unwrap_err();
        assert!(err.to_string().contains("--data"), "{err}");
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let err = parse_and_validate(["fei3d", "train-3d", "--bogus", "1"]).unwrap_err();
        assert!(err.to_string().contains("--bogus"), "{err}");
    }

    #[test]
    fn defaults_mirror_the_training_table() {
        let t = TrainConfig::default();
        assert_eq!(t.batch_size, 64);
        assert_eq!(t.weight_decay, 1e-5);
        assert_eq!(t.max_epochs, 100);
        assert_eq!(t.patience, 3);
        assert_eq!(t.base_lr, 1e-6);
        assert_eq!(t.max_lr, 1e-4);
        assert_eq!(t.step_size, None);
    }

    #[test]
    fn threads_env_fallback() {
        std::env::remove_var("FEI3D_THREADS");
        assert_eq!(effective_threads(1), 1);
        assert_eq!(effective_threads(4), 4);
        std::env::set_var("FEI3D_THREADS", "3");
        assert_eq!(effective_threads(1), 3);
        assert_eq!(effective_threads(2), 2);
        std::env::remove_var("FEI3D_THREADS");
    }
}
