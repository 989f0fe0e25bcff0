//! Experiment configuration: a TOML file with one table per section,
//! overridden by `--set section.key=value` and the named flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phyaug::field::{place_boundary_sensors, FieldConfig};
use phyaug::learn::{AugmentConfig, MlpHyper, Multiclass, SvmHyper};
use phyaug::locate::DeConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PHYAUG_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "phyaug-out";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub common: CommonConfig,
    pub tomo: TomoConfig,
    pub mlp: MlpConfig,
    pub svm: SvmConfig,
    pub augment: AugmentSection,
    pub de: DeSection,
    pub fig9: Fig9Config,
    pub ratio: RatioConfig,
    pub noise_sweep: NoiseSweepConfig,
    pub de_bench: DeBenchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommonConfig {
    pub width_km: f64,
    pub height_km: f64,
    pub grid_w1: usize,
    pub grid_w2: usize,
    pub xi: f64,
    pub source_sigma_km: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub test_events: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for CommonConfig {
    fn default() -> Self {
        Self {
            width_km: 1.0,
            height_km: 1.0,
            grid_w1: 20,
            grid_w2: 20,
            xi: 0.02,
            source_sigma_km: 0.2,
            seeds: 3,
            base_seed: 1,
            test_events: 2000,
            out_dir: None,
        }
    }
}

impl CommonConfig {
    pub fn field(&self) -> Result<FieldConfig<f64>> {
        Ok(FieldConfig::new(self.width_km, self.height_km, self.grid_w1, self.grid_w2)?)
    }

    /// Same geometry with a square `side × side` grid.
    pub fn field_with_side(&self, side: usize) -> Result<FieldConfig<f64>> {
        Ok(FieldConfig::new(self.width_km, self.height_km, side, side)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoConfig {
    /// Prior length scale in cell widths.
    pub smoothness_cells: f64,
    pub sigma_s: f64,
    pub clamp_min: f64,
}

impl Default for TomoConfig {
    fn default() -> Self {
        Self { smoothness_cells: 2.0, sigma_s: 0.05, clamp_min: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        let h = MlpHyper::default();
        Self {
            hidden: h.hidden,
            dropout: h.dropout,
            batch_size: h.batch_size,
            learning_rate: h.learning_rate,
            epochs: h.max_epochs,
            patience: h.patience,
            validation_fraction: h.validation_fraction,
        }
    }
}

impl MlpConfig {
    pub fn hyper(&self) -> MlpHyper {
        MlpHyper {
            hidden: self.hidden.clone(),
            dropout: self.dropout,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_epochs: self.epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub tolerance: f64,
    /// `ovr` or `ovo`.
    pub scheme: String,
    pub cv_max_samples: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        let h = SvmHyper::default();
        Self {
            c_grid: h.c_grid,
            gamma_grid: h.gamma_grid,
            folds: h.folds,
            tolerance: h.tolerance,
            scheme: Multiclass::OneVsOne.as_str().to_string(),
            cv_max_samples: Some(2000),
        }
    }
}

impl SvmConfig {
    pub fn hyper(&self) -> Result<SvmHyper> {
        Ok(SvmHyper {
            c_grid: self.c_grid.clone(),
            gamma_grid: self.gamma_grid.clone(),
            folds: self.folds,
            tolerance: self.tolerance,
            scheme: self.scheme.parse()?,
            cv_max_samples: self.cv_max_samples,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    /// Initial augmented volume; 0 means 100·N.
    pub initial: usize,
    pub threshold_points: f64,
    pub max_rounds: usize,
    /// Round cap for MLP trials, whose epochs grow with the augmented
    /// volume.
    pub mlp_max_rounds: usize,
    /// Add measurement noise at the experiment's ξ to synthetic times.
    pub inject_noise: bool,
    pub validation_fraction: f64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let a = AugmentConfig::default();
        Self {
            initial: 0,
            threshold_points: a.threshold_points,
            max_rounds: a.max_rounds,
            mlp_max_rounds: 1,
            inject_noise: true,
            validation_fraction: a.validation_fraction,
        }
    }
}

impl AugmentSection {
    pub fn schedule(&self, xi: f64) -> AugmentConfig {
        AugmentConfig {
            initial: (self.initial > 0).then_some(self.initial),
            growth: 2,
            threshold_points: self.threshold_points,
            max_rounds: self.max_rounds,
            inject_noise: self.inject_noise.then_some(xi),
            validation_fraction: self.validation_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeSection {
    pub population: usize,
    pub weight: f64,
    pub crossover: f64,
    pub max_generations: usize,
    pub patience: usize,
    pub snap_radius: usize,
}

impl Default for DeSection {
    fn default() -> Self {
        let d = DeConfig::default();
        Self {
            population: d.population,
            weight: d.weight,
            crossover: d.crossover,
            max_generations: d.max_generations,
            patience: d.patience,
            snap_radius: d.snap_radius,
        }
    }
}

impl DeSection {
    pub fn config(&self, seed: u64) -> DeConfig {
        DeConfig {
            population: self.population,
            weight: self.weight,
            crossover: self.crossover,
            max_generations: self.max_generations,
            patience: self.patience,
            snap_radius: self.snap_radius,
            seed,
            ..DeConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig9Config {
    /// `mlp`, `svm` or both.
    pub classifiers: Vec<String>,
    /// Real-sample counts without augmentation.
    pub l_values: Vec<usize>,
    /// Real-sample counts with augmentation.
    pub phyaug_l_values: Vec<usize>,
}

impl Default for Fig9Config {
    fn default() -> Self {
        Self {
            classifiers: vec!["svm".into(), "mlp".into()],
            l_values: vec![250, 500, 1000, 2000, 4000, 8000],
            phyaug_l_values: vec![25, 50, 100, 200, 400],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioConfig {
    pub levels: Vec<f64>,
    /// Existing `accuracy_vs_L.csv` to reuse instead of rerunning the sweep.
    pub input: Option<PathBuf>,
}

impl Default for RatioConfig {
    fn default() -> Self {
        Self { levels: (6..=18).map(|k| k as f64 * 0.05).collect(), input: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSweepConfig {
    pub xi_values: Vec<f64>,
    pub classifiers: Vec<String>,
    pub l_values: Vec<usize>,
    pub phyaug_l_values: Vec<usize>,
    /// The matched accuracy for the data ratio is this fraction of the
    /// lower of the two curves' final accuracies.
    pub matched_fraction: f64,
    /// Augmentation round cap for this sweep, in place of `augment.max_rounds`.
    pub max_rounds: usize,
    /// SVM cross-validation subsample for this sweep, in place of
    /// `svm.cv_max_samples`.
    pub cv_max_samples: usize,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            xi_values: vec![0.0, 0.02, 0.04, 0.06, 0.08],
            classifiers: vec!["svm".into()],
            l_values: vec![250, 500, 1000, 2000, 4000, 8000],
            phyaug_l_values: vec![10, 100],
            matched_fraction: 0.95,
            max_rounds: 3,
            cv_max_samples: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeBenchConfig {
    /// Grid sides; N = side².
    pub grid_sides: Vec<usize>,
    pub methods: Vec<String>,
    pub events: usize,
    /// Real events used for tomography and as labeled training data.
    pub real_events: usize,
    /// Augmented training samples per cell for the classifiers.
    pub samples_per_cell: usize,
    /// SVM is skipped above this many cells.
    pub svm_max_cells: usize,
    pub mlp_epochs: usize,
}

impl Default for DeBenchConfig {
    fn default() -> Self {
        Self {
            grid_sides: vec![10, 20, 30, 50],
            methods: vec!["de".into(), "svm".into(), "mlp".into()],
            events: 100,
            real_events: 200,
            samples_per_cell: 10,
            svm_max_cells: 400,
            mlp_epochs: 10,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), then applies `overrides` as `section.key`
    /// / value pairs. Values are parsed as TOML, falling back to strings.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>().with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            let Some((section, field)) = key.split_once('.') else {
                bail!("override key {key:?} must look like section.key");
            };
            let value = parse_value(raw);
            let slot = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(t) = slot else {
                bail!("config entry {section:?} is not a section");
            };
            t.insert(field.to_string(), value);
        }
        let cfg: Self = toml::Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.common;
        if c.seeds == 0 {
            bail!("common.seeds must be >= 1");
        }
        if !(c.xi >= 0.0) || !(c.source_sigma_km > 0.0) || c.test_events == 0 {
            bail!("common: xi must be >= 0, source_sigma_km > 0 and test_events >= 1");
        }
        c.field()?;
        let nonempty = [
            ("fig9.classifiers", self.fig9.classifiers.is_empty()),
            ("fig9.l_values", self.fig9.l_values.is_empty()),
            ("fig9.phyaug_l_values", self.fig9.phyaug_l_values.is_empty()),
            ("ratio.levels", self.ratio.levels.is_empty()),
            ("noise_sweep.xi_values", self.noise_sweep.xi_values.is_empty()),
            ("noise_sweep.classifiers", self.noise_sweep.classifiers.is_empty()),
            ("noise_sweep.l_values", self.noise_sweep.l_values.is_empty()),
            ("noise_sweep.phyaug_l_values", self.noise_sweep.phyaug_l_values.is_empty()),
            ("de_bench.grid_sides", self.de_bench.grid_sides.is_empty()),
            ("de_bench.methods", self.de_bench.methods.is_empty()),
            ("mlp.hidden", self.mlp.hidden.is_empty()),
            ("svm.c_grid", self.svm.c_grid.is_empty()),
            ("svm.gamma_grid", self.svm.gamma_grid.is_empty()),
        ];
        if let Some((name, _)) = nonempty.iter().find(|(_, empty)| *empty) {
            bail!("{name} must not be empty");
        }
        for name in self.fig9.classifiers.iter().chain(&self.noise_sweep.classifiers) {
            name.parse::<ClassifierKind>()?;
        }
        for name in &self.de_bench.methods {
            if !["de", "svm", "mlp"].contains(&name.as_str()) {
                bail!("unknown de_bench method {name:?}");
            }
        }
        if self.fig9.l_values.iter().chain(&self.fig9.phyaug_l_values).any(|l| *l == 0) {
            bail!("L values must be >= 1");
        }
        if self.augment.max_rounds == 0 || self.augment.mlp_max_rounds == 0 || self.noise_sweep.max_rounds == 0 {
            bail!("augment.max_rounds and augment.mlp_max_rounds must be >= 1");
        }
        self.svm.hyper()?;
        Ok(())
    }

    /// Output directory: config or flag, then the environment, then a
    /// fixed fallback.
    pub fn out_dir(&self) -> PathBuf {
        self.common
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
    }

    pub fn boundary_sensors(&self) -> Result<phyaug::SensorArray64> {
        Ok(place_boundary_sensors(&self.common.field()?))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    Mlp,
    Svm,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Svm => "svm",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ClassifierKind::Mlp),
            "svm" => Ok(ClassifierKind::Svm),
            other => bail!("unknown classifier {other:?} (expected mlp or svm)"),
        }
    }
}
