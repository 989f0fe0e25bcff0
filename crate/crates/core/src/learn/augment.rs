//! Augmented fingerprints synthesized from an estimated slowness model and
//! the doubling schedule that decides how many to use.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{SensorArray, SlownessModel};
use crate::learn::{evaluate, Classifier};
use crate::raytrace::RayTracer;
use crate::scalar::Real;
use crate::simulate::{add_noise, tdoa_from_times, Dataset, Provenance, TdoaSample};

/// `X` uniformly placed synthetic events, fingerprinted through `s_hat`.
/// With `noise_xi` set, measurement noise at that level is added to the
/// synthetic arrival times.
pub fn generate_augmented<T: Real, R: Rng + ?Sized>(
    s_hat: &SlownessModel<T>,
    count: usize,
    sensors: &SensorArray<T>,
    noise_xi: Option<f64>,
    rng: &mut R,
) -> Result<Dataset<T>> {
    if count == 0 {
        return Err(Error::InvalidParameter("augmented sample count must be >= 1".into()));
    }
    let cfg = *s_hat.config();
    let sources = crate::simulate::sample_uniform_events(count, &cfg, rng);
    let mut tracer = RayTracer::new();
    let mut times = Vec::with_capacity(sensors.len());
    let mut samples = Vec::with_capacity(count);
    for src in sources {
        tracer.times_into(&src, sensors, &cfg, s_hat.flattened(), &mut times);
        let measured = match noise_xi {
            Some(xi) if xi > 0.0 => add_noise(&times, xi, rng),
            _ => times.clone(),
        };
        samples.push(TdoaSample {
            feature: tdoa_from_times(&measured)?,
            label: cfg.cell_of_unchecked(&src),
            source: src,
            provenance: Provenance::Augmented,
        });
    }
    Ok(Dataset { samples, sensor_count: sensors.len(), config: cfg })
}

/// Doubling schedule for the augmented volume.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    /// First volume `X`; `None` means `100 * N`.
    pub initial: Option<usize>,
    pub growth: usize,
    /// Minimum validation-accuracy gain, in percentage points, to keep
    /// doubling.
    pub threshold_points: f64,
    pub max_rounds: usize,
    /// Noise level added to synthetic times; `None` keeps them clean.
    pub inject_noise: Option<f64>,
    /// Share of the augmented pool held out for validation.
    pub validation_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            initial: None,
            growth: 2,
            threshold_points: 0.5,
            max_rounds: 6,
            inject_noise: None,
            validation_fraction: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn initial_volume(&self, cells: usize) -> usize {
        self.initial.unwrap_or(100 * cells)
    }

    pub fn validate(&self, cells: usize) -> Result<()> {
        if self.initial_volume(cells) < cells {
            return Err(Error::InvalidParameter("initial augmented volume must be >= N".into()));
        }
        if !(self.threshold_points >= 0.0) || self.max_rounds == 0 || self.growth < 2 {
            return Err(Error::InvalidParameter("bad augmentation schedule".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidParameter("validation fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleRound {
    pub volume: usize,
    pub validation_accuracy: f64,
}

#[derive(Debug)]
pub struct ScheduleOutcome<T> {
    pub model: Classifier<T>,
    pub final_volume: usize,
    pub rounds: Vec<ScheduleRound>,
}

/// Trains on the real samples plus `X` augmented ones, growing `X` while
/// held-out validation accuracy keeps improving by more than the
/// threshold. Returns the model of the last round trained.
pub fn augmentation_schedule<T: Real, R: Rng + ?Sized>(
    s_hat: &SlownessModel<T>,
    real_train: &Dataset<T>,
    sensors: &SensorArray<T>,
    trainer: &mut dyn FnMut(&Dataset<T>) -> Result<Classifier<T>>,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<ScheduleOutcome<T>> {
    let cells = s_hat.config().cell_count();
    config.validate(cells)?;
    let mut volume = config.initial_volume(cells);
    let mut pool = generate_augmented(s_hat, volume, sensors, config.inject_noise, rng)?;
    let mut best_acc = 0.0f64;
    let mut rounds = Vec::new();
    loop {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.shuffle(rng);
        let n_val = ((pool.len() as f64) * config.validation_fraction).round() as usize;
        let validation = pool.subset(&idx[..n_val]);
        let mut train = real_train.clone();
        train.extend_from(&pool.subset(&idx[n_val..]))?;

        let model = trainer(&train)?;
        let acc = if validation.is_empty() { 0.0 } else { evaluate(&model, &validation)? };
        rounds.push(ScheduleRound { volume, validation_accuracy: acc });
        let gain_points = (acc - best_acc) * 100.0;
        if gain_points <= config.threshold_points || rounds.len() >= config.max_rounds {
            return Ok(ScheduleOutcome { model, final_volume: volume, rounds });
        }
        best_acc = acc;
        let extra = volume * (config.growth - 1);
        pool.extend_from(&generate_augmented(s_hat, extra, sensors, config.inject_noise, rng)?)?;
        volume += extra;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_synthetic_slowness, place_boundary_sensors, FieldConfig, WavyBarrierParams};
    use crate::learn::{fit_svm, Multiclass};
    use crate::simulate::{make_dataset, NoiseSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(n: usize) -> (SlownessModel<f64>, SensorArray<f64>) {
        let cfg = FieldConfig::<f64>::unit(n, n).unwrap();
        (build_synthetic_slowness(&cfg, &WavyBarrierParams::default()).unwrap(), place_boundary_sensors(&cfg))
    }

    #[test]
    fn augmented_equals_clean_real_fingerprint() {
        let (s, sensors) = world(10);
        let aug = generate_augmented(&s, 50, &sensors, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let sources: Vec<_> = aug.samples.iter().map(|x| x.source).collect();
        let real = make_dataset(&sources, &s, &sensors, &NoiseSpec { xi: 0.0, seed: 0 }, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (a, r) in aug.samples.iter().zip(&real.samples) {
            assert_eq!(a.feature, r.feature);
            assert_eq!(a.label, r.label);
            assert_eq!(a.provenance, Provenance::Augmented);
        }
    }

    #[test]
    fn coverage_and_reproducibility() {
        let (s, sensors) = world(20);
        let a = generate_augmented(&s, 40_000, &sensors, None, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut seen = vec![false; 400];
        a.samples.iter().for_each(|x| seen[x.label] = true);
        assert!(seen.iter().filter(|v| **v).count() as f64 >= 0.99 * 400.0);
        let b = generate_augmented(&s, 40_000, &sensors, None, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(generate_augmented(&s, 0, &sensors, None, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    fn quick_trainer() -> impl FnMut(&Dataset<f64>) -> Result<Classifier<f64>> {
        |d: &Dataset<f64>| fit_svm(d, 16.0, 8.0, Multiclass::OneVsOne, 1e-3).map(Classifier::Svm)
    }

    #[test]
    fn huge_threshold_stops_after_one_round() {
        let (s, sensors) = world(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let real = generate_augmented(&s, 20, &sensors, Some(0.02), &mut rng).unwrap();
        let cfg = AugmentConfig { threshold_points: 100.0, ..Default::default() };
        let out = augmentation_schedule(&s, &real, &sensors, &mut quick_trainer(), &cfg, &mut rng).unwrap();
        assert_eq!(out.rounds.len(), 1);
        assert_eq!(out.final_volume, 1600);
    }

    #[test]
    fn single_round_limit() {
        let (s, sensors) = world(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let real = generate_augmented(&s, 20, &sensors, Some(0.02), &mut rng).unwrap();
        let cfg = AugmentConfig { max_rounds: 1, threshold_points: 0.0, ..Default::default() };
        let out = augmentation_schedule(&s, &real, &sensors, &mut quick_trainer(), &cfg, &mut rng).unwrap();
        assert_eq!((out.rounds.len(), out.final_volume), (1, 1600));
    }

    #[test]
    fn trace_increases_until_stop() {
        let (s, sensors) = world(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let real = generate_augmented(&s, 30, &sensors, Some(0.02), &mut rng).unwrap();
        let cfg = AugmentConfig { initial: Some(100), ..Default::default() };
        let out = augmentation_schedule(&s, &real, &sensors, &mut quick_trainer(), &cfg, &mut rng).unwrap();
        assert!(out.rounds.len() <= 6);
        let acc: Vec<f64> = out.rounds.iter().map(|r| r.validation_accuracy).collect();
        for w in acc[..acc.len() - 1].windows(2) {
            assert!(w[1] > w[0]);
        }
        for (k, r) in out.rounds.iter().enumerate() {
            assert_eq!(r.volume, 100 << k);
        }
    }
}
