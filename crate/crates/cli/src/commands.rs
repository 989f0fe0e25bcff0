//! One function per subcommand. Each takes resolved arguments and returns
//! the paths it wrote, so tests can drive them without a process.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use phyaug::field::{FieldConfig, SlownessModel};
use phyaug::learn::{evaluate, generate_augmented, Classifier};
use phyaug::locate::{cell_localization_error, de_localize};
use phyaug::simulate::{
    dataset_from_events, read_events_csv, record_events, sample_real_events, sample_uniform_events, write_events_csv,
    Dataset, EventRecord, Provenance,
};
use phyaug::workflow_demo::demo_pipeline;
use phyaug::SensorArray64;
use serde::Serialize;

use crate::config::{ClassifierKind, ExperimentConfig};
use crate::experiments::{
    accuracy_sweep, de_bench, estimate_from_events, noise_rows, ratio_rows, AccuracyRow, Learners,
    NoiseCurveRow, World,
};
use crate::plot::{plot_csv, PlotSpec};

/// Writes serializable rows with a header line.
pub fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_rows<S: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<S>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().collect::<Result<_, _>>().with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn read_slowness(path: &Path) -> Result<SlownessModel<f64>> {
    SlownessModel::read_text(open(path)?).with_context(|| format!("reading slowness model {}", path.display()))
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord<f64>>> {
    read_events_csv(open(path)?).with_context(|| format!("reading events {}", path.display()))
}

pub fn read_dataset(path: &Path, field: FieldConfig<f64>) -> Result<Dataset<f64>> {
    Dataset::read_csv(open(path)?, field).with_context(|| format!("reading dataset {}", path.display()))
}

/// Geometry from a slowness file when given, else from the config.
pub fn geometry(cfg: &ExperimentConfig, field_file: Option<&Path>) -> Result<FieldConfig<f64>> {
    match field_file {
        Some(p) => Ok(*read_slowness(p)?.config()),
        None => cfg.common.field(),
    }
}

fn sensors_for(field: &FieldConfig<f64>) -> SensorArray64 {
    phyaug::field::place_boundary_sensors(field)
}

/// Ground-truth slowness model on the configured grid.
pub fn gen_field(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let world = World::new(cfg.common.field()?)?;
    world.truth.write_text(create(out)?).with_context(|| format!("writing {}", out.display()))?;
    Ok(out.to_path_buf())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SourceDistribution {
    Gaussian,
    Uniform,
}

/// Simulated events through a slowness model (the generated ground truth
/// when none is given). Optionally also writes the TDoA dataset.
pub fn simulate(
    cfg: &ExperimentConfig,
    field_file: Option<&Path>,
    count: usize,
    distribution: SourceDistribution,
    seed: u64,
    out: &Path,
    dataset_out: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    let truth = match field_file {
        Some(p) => read_slowness(p)?,
        None => World::new(cfg.common.field()?)?.truth,
    };
    let field = *truth.config();
    let sensors = sensors_for(&field);
    let mut rng = phyaug::rng_from_seed(seed);
    let sources = match distribution {
        SourceDistribution::Gaussian => sample_real_events(count, &field, cfg.common.source_sigma_km, &mut rng)?,
        SourceDistribution::Uniform => sample_uniform_events(count, &field, &mut rng),
    };
    let events = record_events(&sources, &truth, &sensors, cfg.common.xi, &mut rng)?;
    write_events_csv(&events, sensors.len(), create(out)?).with_context(|| format!("writing {}", out.display()))?;
    let mut written = vec![out.to_path_buf()];
    if let Some(path) = dataset_out {
        let data = dataset_from_events(&events, sensors.len(), &field, Provenance::Real)?;
        data.write_csv(create(path)?).with_context(|| format!("writing {}", path.display()))?;
        written.push(path.to_path_buf());
    }
    Ok(written)
}

/// Slowness estimate from measured events. Returns the relative error when
/// a ground-truth model is supplied.
pub fn tomo(
    cfg: &ExperimentConfig,
    events: &Path,
    field_file: Option<&Path>,
    truth_file: Option<&Path>,
    out: &Path,
) -> Result<Option<f64>> {
    let field = geometry(cfg, field_file.or(truth_file))?;
    let world = World { sensors: sensors_for(&field), truth: SlownessModel::uniform(field, 1.0)?, field };
    let s_hat = estimate_from_events(&world, &read_events(events)?, cfg.common.xi, &cfg.tomo)?;
    s_hat.write_text(create(out)?).with_context(|| format!("writing {}", out.display()))?;
    truth_file.map(|p| Ok(s_hat.relative_error(&read_slowness(p)?))).transpose()
}

/// Trains a classifier on a dataset CSV and writes the model.
pub fn train(cfg: &ExperimentConfig, data: &Path, field_file: Option<&Path>, kind: ClassifierKind, seed: u64, out: &Path) -> Result<()> {
    let data = read_dataset(data, geometry(cfg, field_file)?)?;
    let learners = Learners::from_config(cfg)?;
    let mut rng = phyaug::rng_from_seed(seed);
    let model = match kind {
        ClassifierKind::Mlp => Classifier::Mlp(phyaug::learn::train_mlp(&data, &learners.mlp, &mut rng)?),
        ClassifierKind::Svm => Classifier::Svm(phyaug::learn::train_svm(&data, &learners.svm, &mut rng)?),
    };
    model.write_text(create(out)?).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

/// Synthetic fingerprints from a slowness estimate.
pub fn augment(cfg: &ExperimentConfig, slowness: &Path, count: usize, inject_noise: bool, seed: u64, out: &Path) -> Result<()> {
    let s_hat = read_slowness(slowness)?;
    let sensors = sensors_for(s_hat.config());
    let mut rng = phyaug::rng_from_seed(seed);
    let noise = inject_noise.then_some(cfg.common.xi);
    let data = generate_augmented(&s_hat, count, &sensors, noise, &mut rng)?;
    data.write_csv(create(out)?).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

pub fn evaluate_model(cfg: &ExperimentConfig, model: &Path, data: &Path, field_file: Option<&Path>) -> Result<f64> {
    let model = Classifier::<f64>::read_text(open(model)?).with_context(|| format!("reading model {}", model.display()))?;
    let data = read_dataset(data, geometry(cfg, field_file)?)?;
    Ok(evaluate(&model, &data)?)
}

#[derive(Debug, Serialize)]
struct LocateRow {
    event: usize,
    src_x: f64,
    src_y: f64,
    x: f64,
    y: f64,
    cell: usize,
    cost: f64,
    error_km: f64,
}

/// DE localization of each event against a slowness estimate.
pub fn de_localize_events(cfg: &ExperimentConfig, slowness: &Path, events: &Path, seed: u64, out: &Path) -> Result<f64> {
    let s_hat = read_slowness(slowness)?;
    let field = *s_hat.config();
    let sensors = sensors_for(&field);
    let events = read_events(events)?;
    let data = dataset_from_events(&events, sensors.len(), &field, Provenance::Real)?;
    let mut rows = Vec::with_capacity(data.len());
    for (k, s) in data.samples.iter().enumerate() {
        let found = de_localize(&s.feature, &s_hat, &sensors, &cfg.de.config(seed + k as u64))?;
        rows.push(LocateRow {
            event: k,
            src_x: s.source.x,
            src_y: s.source.y,
            x: found.point.x,
            y: found.point.y,
            cell: found.cell,
            cost: found.cost,
            error_km: cell_localization_error(found.cell, &s.source, &field),
        });
    }
    write_rows(out, &rows)?;
    Ok(rows.iter().map(|r| r.error_km).sum::<f64>() / rows.len().max(1) as f64)
}

fn classifiers(names: &[String]) -> Result<Vec<ClassifierKind>> {
    names.iter().map(|n| n.parse()).collect()
}

/// Accuracy against real-sample count at the configured noise level.
pub fn fig9(cfg: &ExperimentConfig) -> Result<Vec<AccuracyRow>> {
    let world = World::new(cfg.common.field()?)?;
    accuracy_sweep(
        &world,
        &cfg.common,
        cfg.common.xi,
        &classifiers(&cfg.fig9.classifiers)?,
        &cfg.fig9.l_values,
        &cfg.fig9.phyaug_l_values,
        &Learners::from_config(cfg)?,
    )
}

pub fn cmd_fig9(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = cfg.out_dir().join("accuracy_vs_L.csv");
    write_rows(&path, &fig9(cfg)?)?;
    Ok(path)
}

/// Reuses `ratio.input` when set, otherwise runs the sweep first.
pub fn cmd_ratio(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let rows: Vec<AccuracyRow> = match &cfg.ratio.input {
        Some(p) => read_rows(p)?,
        None => {
            let p = cmd_fig9(cfg)?;
            let rows = read_rows(&p)?;
            written.push(p);
            rows
        }
    };
    let path = cfg.out_dir().join("ratio_vs_accuracy.csv");
    write_rows(&path, &ratio_rows(&rows, &cfg.ratio.levels))?;
    written.push(path);
    Ok(written)
}

pub fn cmd_noise_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ns = &cfg.noise_sweep;
    let world = World::new(cfg.common.field()?)?;
    let mut learners = Learners::from_config(cfg)?;
    learners.augment.max_rounds = ns.max_rounds;
    learners.svm.cv_max_samples = Some(ns.cv_max_samples);
    let kinds = classifiers(&ns.classifiers)?;
    let (mut summary, mut curves) = (Vec::new(), Vec::new());
    for &xi in &ns.xi_values {
        let rows = accuracy_sweep(&world, &cfg.common, xi, &kinds, &ns.l_values, &ns.phyaug_l_values, &learners)?;
        summary.extend(noise_rows(xi, &rows, ns.matched_fraction));
        curves.extend(rows.into_iter().map(|r| NoiseCurveRow {
            xi,
            classifier: r.classifier,
            phyaug: r.phyaug,
            l: r.l,
            seed: r.seed,
            accuracy: r.accuracy,
        }));
    }
    let dir = cfg.out_dir();
    let (a, b) = (dir.join("noise_sweep.csv"), dir.join("noise_sweep_curves.csv"));
    write_rows(&a, &summary)?;
    write_rows(&b, &curves)?;
    Ok(vec![a, b])
}

pub fn cmd_de_bench(cfg: &ExperimentConfig) -> Result<PathBuf> {
    // Single worker so timings are not skewed by contention.
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let rows = pool.install(|| de_bench(cfg))?;
    let path = cfg.out_dir().join("de_bench.csv");
    write_rows(&path, &rows)?;
    Ok(path)
}

/// One CSV row with the polynomial workflow demo's accuracies.
pub fn demo_polynomial(seed: u64, mut out: impl Write) -> Result<()> {
    let r = demo_pipeline(seed)?;
    writeln!(out, "seed,source_acc_on_target,phyaug_acc_on_target")?;
    writeln!(out, "{seed},{},{}", r.source_acc_on_target, r.phyaug_acc_on_target)?;
    Ok(())
}

/// Renders a CSV; the preset defaults to the one matching the file name.
pub fn plot(input: &Path, preset: Option<&str>, out: &Path) -> Result<()> {
    let spec = match preset {
        Some(p) => PlotSpec::preset(p)?,
        None => {
            let name = input.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            match PlotSpec::for_file(name) {
                Some(s) => s,
                None => bail!("no plot preset for {name:?}; pass --preset"),
            }
        }
    };
    let svg = plot_csv(open(input)?, &spec).with_context(|| format!("plotting {}", input.display()))?;
    let mut w = create(out)?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;
    Ok(())
}
