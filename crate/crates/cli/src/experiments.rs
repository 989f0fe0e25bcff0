//! Sweeps behind the figure commands.
//!
//! A trial is one (classifier, PhyAug flag, L, seed) combination. Trials run
//! on the rayon pool and are gathered by index, so output order does not
//! depend on scheduling. Every random draw comes from a ChaCha stream keyed
//! by the trial's seed and a fixed stream id.

use std::time::Instant;

use anyhow::{Context, Result};
use phyaug::field::{build_synthetic_slowness, place_boundary_sensors, FieldConfig, SensorArray, SlownessModel, WavyBarrierParams};
use phyaug::learn::{
    augmentation_schedule, evaluate, generate_augmented, train_mlp, train_svm, Classifier, MlpHyper, SvmHyper,
};
use phyaug::locate::{de_localize, DeConfig};
use phyaug::simulate::{dataset_from_events, record_events, sample_real_events, Dataset, EventRecord, Provenance};
use phyaug::tomo::{estimate_slowness, TomoInput, TomoPrior};
use phyaug::{Real, Rng};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ClassifierKind, CommonConfig, ExperimentConfig, TomoConfig};

const STREAM_REAL: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_TRAIN: u64 = 3;

/// Generator for one of a seed's independent streams.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground truth shared by all trials of a sweep.
#[derive(Clone, Debug)]
pub struct World {
    pub field: FieldConfig<f64>,
    pub truth: SlownessModel<f64>,
    pub sensors: SensorArray<f64>,
}

impl World {
    pub fn new(field: FieldConfig<f64>) -> Result<Self> {
        let truth = build_synthetic_slowness(&field, &WavyBarrierParams::default())?;
        Ok(Self { sensors: place_boundary_sensors(&field), field, truth })
    }
}

/// Real events and the test set drawn for one seed.
#[derive(Clone, Debug)]
pub struct SeedData {
    pub seed: u64,
    pub xi: f64,
    /// Longest real-event sequence needed; trials use prefixes.
    pub real: Vec<EventRecord<f64>>,
    pub test: Dataset<f64>,
}

impl SeedData {
    pub fn draw(world: &World, common: &CommonConfig, xi: f64, max_l: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, STREAM_REAL);
        let sources = sample_real_events(max_l.max(1), &world.field, common.source_sigma_km, &mut rng)?;
        let real = record_events(&sources, &world.truth, &world.sensors, xi, &mut rng)?;
        let mut rng = stream_rng(seed, STREAM_TEST);
        let sources = sample_real_events(common.test_events, &world.field, common.source_sigma_km, &mut rng)?;
        let test_events = record_events(&sources, &world.truth, &world.sensors, xi, &mut rng)?;
        let test = dataset_from_events(&test_events, world.sensors.len(), &world.field, Provenance::Real)?;
        Ok(Self { seed, xi, real, test })
    }
}

/// Learner settings shared by every trial of a sweep.
#[derive(Clone, Debug)]
pub struct Learners {
    pub mlp: MlpHyper,
    pub svm: SvmHyper,
    pub augment: crate::config::AugmentSection,
    pub tomo: TomoConfig,
}

impl Learners {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self { mlp: cfg.mlp.hyper(), svm: cfg.svm.hyper()?, augment: cfg.augment.clone(), tomo: cfg.tomo.clone() })
    }
}

/// Tomographic estimate from the given events.
pub fn estimate_from_events(world: &World, events: &[EventRecord<f64>], xi: f64, tomo: &TomoConfig) -> Result<SlownessModel<f64>> {
    let input = TomoInput::from_events(events, &world.sensors, &world.field)?;
    let prior = TomoPrior {
        smoothness_km: tomo.smoothness_cells * world.field.cell_width(),
        sigma_s: tomo.sigma_s,
        clamp_min: tomo.clamp_min,
        ..TomoPrior::defaults_for(&world.field)
    }
    .with_noise_level(xi, &input);
    Ok(estimate_slowness(&input, &prior)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub accuracy: f64,
    /// Augmented volume used by the final model (0 without PhyAug).
    pub augmented: usize,
    /// Validation accuracy of each augmentation round.
    pub rounds: Vec<f64>,
}

fn train_classifier<T: Real>(kind: ClassifierKind, data: &Dataset<T>, learners: &Learners, rng: &mut Rng) -> phyaug::Result<Classifier<T>> {
    match kind {
        ClassifierKind::Mlp => train_mlp(data, &learners.mlp, rng).map(Classifier::Mlp),
        ClassifierKind::Svm => train_svm(data, &learners.svm, rng).map(Classifier::Svm),
    }
}

fn trial_in<T: Real>(
    world: &World,
    data: &SeedData,
    l: usize,
    kind: ClassifierKind,
    s_hat: Option<&SlownessModel<f64>>,
    learners: &Learners,
) -> Result<TrialOutcome> {
    let real = dataset_from_events(&data.real[..l], world.sensors.len(), &world.field, Provenance::Real)?.cast::<T>();
    let stream = STREAM_TRAIN + 16 * (l as u64) + 2 * s_hat.is_some() as u64;
    let mut rng = stream_rng(data.seed, stream);
    let (model, augmented, rounds) = match s_hat {
        None => (train_classifier(kind, &real, learners, &mut rng)?, 0, Vec::new()),
        Some(s_hat) => {
            let mut trainer_rng = stream_rng(data.seed, stream + 1);
            // The SVM grid search runs on the first round only; later rounds
            // refit at the chosen (C, gamma).
            let mut schedule = learners.augment.schedule(data.xi);
            if kind == ClassifierKind::Mlp {
                schedule.max_rounds = schedule.max_rounds.min(learners.augment.mlp_max_rounds);
            }
            let mut learners = learners.clone();
            let mut trainer = |d: &Dataset<T>| {
                let model = train_classifier(kind, d, &learners, &mut trainer_rng)?;
                if let Classifier::Svm(m) = &model {
                    learners.svm.c_grid = vec![m.c.to_f64_lossy()];
                    learners.svm.gamma_grid = vec![m.gamma.to_f64_lossy()];
                }
                Ok(model)
            };
            let out = augmentation_schedule(&s_hat.cast(), &real, &world.sensors.cast(), &mut trainer, &schedule, &mut rng)?;
            (out.model, out.final_volume, out.rounds.iter().map(|r| r.validation_accuracy).collect())
        }
    };
    Ok(TrialOutcome { accuracy: evaluate(&model, &data.test.cast::<T>())?, augmented, rounds })
}

/// Trains one classifier on the first `l` real events of `data`, with or
/// without augmentation, and scores it on the seed's test set. MLPs train
/// in `f32`, SVMs in `f64`.
pub fn run_trial(
    world: &World,
    data: &SeedData,
    l: usize,
    kind: ClassifierKind,
    phyaug: bool,
    learners: &Learners,
) -> Result<TrialOutcome> {
    anyhow::ensure!(l >= 1 && l <= data.real.len(), "L = {l} outside 1..={}", data.real.len());
    let s_hat = if phyaug { Some(estimate_from_events(world, &data.real[..l], data.xi, &learners.tomo)?) } else { None };
    match kind {
        ClassifierKind::Mlp => trial_in::<f32>(world, data, l, kind, s_hat.as_ref(), learners),
        ClassifierKind::Svm => trial_in::<f64>(world, data, l, kind, s_hat.as_ref(), learners),
    }
}

/// One line of `accuracy_vs_L.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub classifier: String,
    pub phyaug: bool,
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
    pub accuracy: f64,
}

/// Accuracy against the number of real samples for each classifier, with
/// and without augmentation.
pub fn accuracy_sweep(
    world: &World,
    common: &CommonConfig,
    xi: f64,
    classifiers: &[ClassifierKind],
    l_values: &[usize],
    phyaug_l_values: &[usize],
    learners: &Learners,
) -> Result<Vec<AccuracyRow>> {
    let max_l = l_values.iter().chain(phyaug_l_values).copied().max().unwrap_or(1);
    let seeds: Vec<u64> = (0..common.seeds as u64).map(|k| common.base_seed + k).collect();
    let data: Vec<SeedData> = seeds
        .par_iter()
        .map(|&s| SeedData::draw(world, common, xi, max_l, s))
        .collect::<Result<_>>()?;

    let mut trials = Vec::new();
    for &kind in classifiers {
        for (phyaug, ls) in [(false, l_values), (true, phyaug_l_values)] {
            for &l in ls {
                for d in &data {
                    trials.push((kind, phyaug, l, d));
                }
            }
        }
    }
    trials
        .par_iter()
        .map(|&(kind, phyaug, l, d)| {
            let start = Instant::now();
            let label = format!("{} phyaug={phyaug} L={l} seed={} xi={xi}", kind.as_str(), d.seed);
            let out = run_trial(world, d, l, kind, phyaug, learners).with_context(|| label.clone())?;
            eprintln!(
                "{label}: accuracy {:.4}, augmented {}, rounds {:.3?}, {:.1}s",
                out.accuracy,
                out.augmented,
                out.rounds,
                start.elapsed().as_secs_f64()
            );
            Ok(AccuracyRow { classifier: kind.as_str().into(), phyaug, l, seed: d.seed, accuracy: out.accuracy })
        })
        .collect()
}

/// Seed-averaged accuracy per L, sorted by L.
pub fn mean_curve(rows: &[AccuracyRow], classifier: &str, phyaug: bool) -> Vec<(usize, f64)> {
    let mut by_l: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for r in rows.iter().filter(|r| r.classifier == classifier && r.phyaug == phyaug) {
        let e = by_l.entry(r.l).or_default();
        e.0 += r.accuracy;
        e.1 += 1;
    }
    by_l.into_iter().map(|(l, (sum, n))| (l, sum / n as f64)).collect()
}

/// Where a curve first reaches an accuracy level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Crossing {
    /// Between two sweep points; L interpolated linearly in log L.
    Between(f64),
    /// Already at the smallest swept L, so the true minimum is at most this.
    AtOrBelow(f64),
    Unreachable,
}

pub fn first_crossing(curve: &[(usize, f64)], level: f64) -> Crossing {
    let Some(k) = curve.iter().position(|(_, a)| *a >= level) else {
        return Crossing::Unreachable;
    };
    if k == 0 {
        return Crossing::AtOrBelow(curve[0].0 as f64);
    }
    let ((l0, a0), (l1, a1)) = (curve[k - 1], curve[k]);
    let (g0, g1) = ((l0 as f64).ln(), (l1 as f64).ln());
    let frac = if a1 > a0 { (level - a0) / (a1 - a0) } else { 1.0 };
    Crossing::Between((g0 + frac * (g1 - g0)).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioStatus {
    /// Both minima interpolated inside their sweeps.
    Ok,
    /// PhyAug reaches the level at its first point; the ratio is an upper
    /// bound.
    UpperBound,
    /// The baseline reaches the level at its first point; the ratio is a
    /// lower bound.
    LowerBound,
    /// Both at their first points; nothing can be said.
    Unresolved,
    /// One of the curves never reaches the level.
    Unreachable,
}

/// One line of `ratio_vs_accuracy.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub classifier: String,
    pub level: f64,
    pub l_baseline: Option<f64>,
    pub l_phyaug: Option<f64>,
    pub ratio: Option<f64>,
    pub status: RatioStatus,
}

pub fn ratio_at(classifier: &str, level: f64, baseline: &[(usize, f64)], phyaug: &[(usize, f64)]) -> RatioRow {
    let (b, p) = (first_crossing(baseline, level), first_crossing(phyaug, level));
    let (lb, lp, status) = match (b, p) {
        (Crossing::Unreachable, _) | (_, Crossing::Unreachable) => (None, None, RatioStatus::Unreachable),
        (Crossing::Between(lb), Crossing::Between(lp)) => (Some(lb), Some(lp), RatioStatus::Ok),
        (Crossing::Between(lb), Crossing::AtOrBelow(lp)) => (Some(lb), Some(lp), RatioStatus::UpperBound),
        (Crossing::AtOrBelow(lb), Crossing::Between(lp)) => (Some(lb), Some(lp), RatioStatus::LowerBound),
        (Crossing::AtOrBelow(lb), Crossing::AtOrBelow(lp)) => (Some(lb), Some(lp), RatioStatus::Unresolved),
    };
    let ratio = match (lb, lp) {
        (Some(b), Some(p)) => Some(p / b),
        _ => None,
    };
    RatioRow { classifier: classifier.into(), level, l_baseline: lb, l_phyaug: lp, ratio, status }
}

/// Real-data ratio with and without augmentation at each accuracy level,
/// from seed-averaged curves.
pub fn ratio_rows(rows: &[AccuracyRow], levels: &[f64]) -> Vec<RatioRow> {
    let mut classifiers: Vec<&str> = rows.iter().map(|r| r.classifier.as_str()).collect();
    classifiers.sort_unstable();
    classifiers.dedup();
    let mut out = Vec::new();
    for c in classifiers {
        let (b, p) = (mean_curve(rows, c, false), mean_curve(rows, c, true));
        out.extend(levels.iter().map(|&level| ratio_at(c, level, &b, &p)));
    }
    out
}

/// One line of `noise_sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub xi: f64,
    pub classifier: String,
    pub seed: u64,
    /// Accuracy at the largest baseline L.
    pub accuracy_baseline: f64,
    /// Accuracy at the largest PhyAug L.
    pub accuracy_phyaug: f64,
    pub matched_accuracy: f64,
    pub l_baseline: Option<f64>,
    pub l_phyaug: Option<f64>,
    pub ratio: Option<f64>,
    pub status: RatioStatus,
}

/// Per-seed summary of one noise level's sweep.
pub fn noise_rows(xi: f64, rows: &[AccuracyRow], matched_fraction: f64) -> Vec<NoiseRow> {
    let mut keys: Vec<(&str, u64)> = rows.iter().map(|r| (r.classifier.as_str(), r.seed)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(c, seed)| {
            let mine: Vec<AccuracyRow> = rows.iter().filter(|r| r.classifier == c && r.seed == seed).cloned().collect();
            let (b, p) = (mean_curve(&mine, c, false), mean_curve(&mine, c, true));
            let last = |curve: &[(usize, f64)]| curve.last().map_or(0.0, |x| x.1);
            let (ab, ap) = (last(&b), last(&p));
            let matched = matched_fraction * ab.min(ap);
            let r = ratio_at(c, matched, &b, &p);
            NoiseRow {
                xi,
                classifier: c.into(),
                seed,
                accuracy_baseline: ab,
                accuracy_phyaug: ap,
                matched_accuracy: matched,
                l_baseline: r.l_baseline,
                l_phyaug: r.l_phyaug,
                ratio: r.ratio,
                status: r.status,
            }
        })
        .collect()
}

/// One line of `noise_sweep_curves.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurveRow {
    pub xi: f64,
    pub classifier: String,
    pub phyaug: bool,
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
    pub accuracy: f64,
}

/// One line of `de_bench.csv`. Times are wall-clock seconds per inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub method: String,
    pub events: usize,
    pub mean_time_s: f64,
    pub mean_error_km: f64,
}

/// Times DE and the classifiers on the same test events for each grid size.
/// Classifiers are trained with augmentation from a tomographic estimate;
/// DE minimizes its residual against the same estimate. All answers are
/// cell centers.
pub fn de_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let bench = &cfg.de_bench;
    let common = &cfg.common;
    let mut out = Vec::new();
    for &side in &bench.grid_sides {
        let world = World::new(common.field_with_side(side)?)?;
        let n = world.field.cell_count();
        let seed = common.base_seed;
        let mut rng = stream_rng(seed, STREAM_REAL);
        let sources = sample_real_events(bench.real_events, &world.field, common.source_sigma_km, &mut rng)?;
        let real = record_events(&sources, &world.truth, &world.sensors, common.xi, &mut rng)?;
        let s_hat = estimate_from_events(&world, &real, common.xi, &cfg.tomo)?;
        let mut rng = stream_rng(seed, STREAM_TEST);
        let sources = sample_real_events(bench.events, &world.field, common.source_sigma_km, &mut rng)?;
        let test_events = record_events(&sources, &world.truth, &world.sensors, common.xi, &mut rng)?;
        let test = dataset_from_events(&test_events, world.sensors.len(), &world.field, Provenance::Real)?;

        let cell_error = |cells: &[usize]| -> f64 {
            let total: f64 = cells
                .iter()
                .zip(&test.samples)
                .map(|(c, s)| world.field.cell_center(*c).distance(&s.source))
                .sum();
            total / cells.len() as f64
        };

        for method in &bench.methods {
            let row = match method.as_str() {
                "de" => {
                    let mut cells = Vec::with_capacity(test.len());
                    let start = Instant::now();
                    for (k, s) in test.samples.iter().enumerate() {
                        let de_cfg: DeConfig = cfg.de.config(seed + k as u64);
                        cells.push(de_localize(&s.feature, &s_hat, &world.sensors, &de_cfg)?.cell);
                    }
                    let time = start.elapsed().as_secs_f64() / test.len() as f64;
                    Some((time, cell_error(&cells)))
                }
                "svm" | "mlp" if method == "svm" && n > bench.svm_max_cells => None,
                "svm" | "mlp" => {
                    let kind: ClassifierKind = method.parse()?;
                    let mut train = dataset_from_events(&real, world.sensors.len(), &world.field, Provenance::Real)?;
                    let mut rng = stream_rng(seed, STREAM_TRAIN);
                    let noise = cfg.augment.inject_noise.then_some(common.xi);
                    train.extend_from(&generate_augmented(&s_hat, bench.samples_per_cell * n, &world.sensors, noise, &mut rng)?)?;
                    let learners = Learners {
                        mlp: MlpHyper { max_epochs: bench.mlp_epochs, ..cfg.mlp.hyper() },
                        ..Learners::from_config(cfg)?
                    };
                    Some(match kind {
                        ClassifierKind::Mlp => time_classifier::<f32>(kind, &train, &test, &learners, &mut rng)?,
                        ClassifierKind::Svm => time_classifier::<f64>(kind, &train, &test, &learners, &mut rng)?,
                    })
                    .map(|(time, cells)| (time, cell_error(&cells)))
                }
                other => anyhow::bail!("unknown de_bench method {other:?}"),
            };
            if let Some((mean_time_s, mean_error_km)) = row {
                out.push(BenchRow { n, method: method.clone(), events: test.len(), mean_time_s, mean_error_km });
            }
        }
    }
    Ok(out)
}

/// Per-inference time of batched prediction, and the predicted cells.
fn time_classifier<T: Real>(
    kind: ClassifierKind,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    learners: &Learners,
    rng: &mut Rng,
) -> Result<(f64, Vec<usize>)> {
    let model = train_classifier(kind, &train.cast::<T>(), learners, rng)?;
    let test = test.cast::<T>();
    let feats: Vec<&[T]> = test.samples.iter().map(|s| s.feature.as_slice()).collect();
    let start = Instant::now();
    let cells = model.predict_batch(&feats)?;
    Ok((start.elapsed().as_secs_f64() / feats.len() as f64, cells))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
