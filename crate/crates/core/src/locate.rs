//! Least-squares localization by differential evolution, and error metrics.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::field::{FieldConfig, Point, SensorArray, SlownessModel};
use crate::raytrace::RayTracer;
use crate::scalar::Real;

/// DE/rand/1/bin settings.
#[derive(Clone, Debug, PartialEq)]
pub struct DeConfig {
    pub population: usize,
    pub weight: f64,
    pub crossover: f64,
    pub max_generations: usize,
    /// Generations without a best-cost improvement above `improvement`
    /// before stopping.
    pub patience: usize,
    pub improvement: f64,
    /// Half-width, in cells, of the neighborhood around the best point's
    /// cell whose centers are compared for the grid-granular answer.
    pub snap_radius: usize,
    pub seed: u64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self { population: 30, weight: 0.7, crossover: 0.9, max_generations: 200, patience: 30, improvement: 1e-12, snap_radius: 1, seed: 0 }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::InvalidParameter("DE population must be >= 4".into()));
        }
        if !(self.weight > 0.0 && self.weight < 2.0) {
            return Err(Error::InvalidParameter("DE weight must be in (0, 2)".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::InvalidParameter("DE crossover rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Squared residual between an observed TDoA vector and the one predicted
/// at `p` through `s_hat`.
pub fn de_cost<T: Real>(p: &Point<T>, f_obs: &[T], s_hat: &SlownessModel<T>, sensors: &SensorArray<T>) -> Result<T> {
    s_hat.config().check_inside(p)?;
    if f_obs.len() + 1 != sensors.len() {
        return Err(Error::Arity { expected: sensors.len() - 1, actual: f_obs.len() });
    }
    let mut eval = CostEval::new(f_obs, s_hat, sensors);
    Ok(eval.cost(p))
}

struct CostEval<'a, T> {
    f_obs: &'a [T],
    s_hat: &'a SlownessModel<T>,
    sensors: &'a SensorArray<T>,
    tracer: RayTracer<T>,
    times: Vec<T>,
}

impl<'a, T: Real> CostEval<'a, T> {
    fn new(f_obs: &'a [T], s_hat: &'a SlownessModel<T>, sensors: &'a SensorArray<T>) -> Self {
        Self { f_obs, s_hat, sensors, tracer: RayTracer::new(), times: Vec::with_capacity(sensors.len()) }
    }

    fn cost(&mut self, p: &Point<T>) -> T {
        self.tracer.times_into(p, self.sensors, self.s_hat.config(), self.s_hat.flattened(), &mut self.times);
        let t0 = self.times[0];
        self.times[1..].iter().zip(self.f_obs).map(|(t, f)| (*f - (*t - t0)).powi(2)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeOutcome<T> {
    /// Best continuous position found.
    pub point: Point<T>,
    /// Grid-granular answer: the lowest-cost cell center near `point`.
    pub cell: usize,
    /// Cell containing `point`.
    pub containing_cell: usize,
    pub cost: T,
    /// Best cost after initialization and after each generation.
    pub history: Vec<T>,
}

/// Minimizes [`de_cost`] over the continuous field box, then snaps the best
/// point to the cell whose center scores lowest within `snap_radius` cells
/// of the one containing it.
pub fn de_localize<T: Real>(
    f_obs: &[T],
    s_hat: &SlownessModel<T>,
    sensors: &SensorArray<T>,
    cfg: &DeConfig,
) -> Result<DeOutcome<T>> {
    cfg.validate()?;
    if f_obs.len() + 1 != sensors.len() {
        return Err(Error::Arity { expected: sensors.len() - 1, actual: f_obs.len() });
    }
    let field = *s_hat.config();
    let mut rng = crate::Rng::seed_from_u64(cfg.seed);
    let mut eval = CostEval::new(f_obs, s_hat, sensors);
    let extent = [field.width_km, field.height_km];
    let np = cfg.population;
    let (f, cr) = (T::lit(cfg.weight), cfg.crossover);

    let mut pop: Vec<[T; 2]> = (0..np)
        .map(|_| [T::lit(rng.gen::<f64>()) * extent[0], T::lit(rng.gen::<f64>()) * extent[1]])
        .collect();
    let mut costs: Vec<T> = pop.iter().map(|x| eval.cost(&Point::new(x[0], x[1]))).collect();
    let mut best = argmin(&costs);
    let mut history = vec![costs[best]];
    let mut stale = 0;

    for _ in 0..cfg.max_generations {
        let before = costs[best];
        for i in 0..np {
            let r = pick_three(&mut rng, np, i);
            let forced = rng.gen_range(0..2);
            let mut trial = pop[i];
            for d in 0..2 {
                if d == forced || rng.gen::<f64>() < cr {
                    let v = pop[r[0]][d] + f * (pop[r[1]][d] - pop[r[2]][d]);
                    trial[d] = v.max(T::zero()).min(extent[d]);
                }
            }
            let c = eval.cost(&Point::new(trial[0], trial[1]));
            if c <= costs[i] {
                pop[i] = trial;
                costs[i] = c;
            }
        }
        best = argmin(&costs);
        history.push(costs[best]);
        if (before - costs[best]).to_f64_lossy() > cfg.improvement {
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let point = Point::new(pop[best][0], pop[best][1]);
    let containing_cell = field.cell_of_unchecked(&point);
    let cell = snap_to_cell(&mut eval, &field, containing_cell, cfg.snap_radius);
    Ok(DeOutcome { point, cell, containing_cell, cost: costs[best], history })
}

fn snap_to_cell<T: Real>(eval: &mut CostEval<'_, T>, field: &FieldConfig<T>, around: usize, radius: usize) -> usize {
    let (ci, cj) = field.cell_coords(around);
    let mut best = (around, T::infinity());
    for i in ci.saturating_sub(radius)..=(ci + radius).min(field.grid_w1 - 1) {
        for j in cj.saturating_sub(radius)..=(cj + radius).min(field.grid_w2 - 1) {
            let cell = field.flat_index(i, j);
            let c = eval.cost(&field.cell_center(cell));
            if c < best.1 || (c == best.1 && cell < best.0) {
                best = (cell, c);
            }
        }
    }
    best.0
}

fn argmin<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (k, c) in v.iter().enumerate() {
        if *c < v[best] {
            best = k;
        }
    }
    best
}

/// Three distinct indices, all different from `exclude`.
fn pick_three<R: Rng>(rng: &mut R, n: usize, exclude: usize) -> [usize; 3] {
    let picked = sample(rng, n - 1, 3);
    let mut out = [0; 3];
    for (slot, k) in out.iter_mut().zip(picked.iter()) {
        *slot = if k >= exclude { k + 1 } else { k };
    }
    out
}

/// Euclidean distance in km.
pub fn localization_error<T: Real>(predicted: &Point<T>, true_src: &Point<T>) -> T {
    predicted.distance(true_src)
}

/// Error of a cell answer, measured from the cell center.
pub fn cell_localization_error<T: Real>(cell: usize, true_src: &Point<T>, config: &FieldConfig<T>) -> T {
    config.cell_center(cell).distance(true_src)
}

/// Mean error over paired predictions and truths.
pub fn mean_localization_error<T: Real>(predicted: &[Point<T>], truth: &[Point<T>]) -> Result<T> {
    if predicted.len() != truth.len() {
        return Err(Error::Arity { expected: truth.len(), actual: predicted.len() });
    }
    if truth.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let total: T = predicted.iter().zip(truth).map(|(p, t)| localization_error(p, t)).sum();
    Ok(total / T::from_usize_lossy(truth.len()))
}

/// Cell whose center has the lowest [`de_cost`]; ties go to the lower index.
pub fn exhaustive_cell_argmin<T: Real>(f_obs: &[T], s_hat: &SlownessModel<T>, sensors: &SensorArray<T>) -> Result<usize> {
    let field = *s_hat.config();
    let mut best = (0, T::infinity());
    for cell in 0..field.cell_count() {
        let c = de_cost(&field.cell_center(cell), f_obs, s_hat, sensors)?;
        if c < best.1 {
            best = (cell, c);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_synthetic_slowness, place_boundary_sensors, WavyBarrierParams};
    use crate::raytrace::assemble_event_matrix;
    use crate::simulate::{add_noise, propagation_times, tdoa_from_times};
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn world(n: usize) -> (SlownessModel<f64>, SensorArray<f64>) {
        let cfg = FieldConfig::<f64>::unit(n, n).unwrap();
        (build_synthetic_slowness(&cfg, &WavyBarrierParams::default()).unwrap(), place_boundary_sensors(&cfg))
    }

    fn fingerprint(p: &Point<f64>, s: &SlownessModel<f64>, sensors: &SensorArray<f64>) -> Vec<f64> {
        let a = assemble_event_matrix(p, sensors, s.config()).unwrap();
        tdoa_from_times(&propagation_times(&a, s).unwrap()).unwrap()
    }

    #[test]
    fn zero_cost_at_the_source() {
        let (s, sensors) = world(10);
        let p = Point::new(0.31, 0.77);
        assert_eq!(de_cost(&p, &fingerprint(&p, &s, &sensors), &s, &sensors).unwrap(), 0.0);
        assert!(de_cost(&Point::new(1.2, 0.5), &fingerprint(&p, &s, &sensors), &s, &sensors).is_err());
    }

    #[test]
    fn cost_ignores_common_time_shift() {
        let (s, sensors) = world(10);
        let p = Point::new(0.6, 0.2);
        let a = assemble_event_matrix(&p, &sensors, s.config()).unwrap();
        let t = propagation_times(&a, &s).unwrap();
        let shifted: Vec<f64> = t.iter().map(|v| v + 3.25).collect();
        let q = Point::new(0.4, 0.45);
        let c1 = de_cost(&q, &tdoa_from_times(&t).unwrap(), &s, &sensors).unwrap();
        let c2 = de_cost(&q, &tdoa_from_times(&shifted).unwrap(), &s, &sensors).unwrap();
        assert!((c1 - c2).abs() <= 1e-12 * c1.max(1.0));
    }

    #[test]
    fn two_by_two_by_hand() {
        // Slowness 1, 2 / 3, 4 on a unit field; sensors at (0,0), (1,0), (1,1).
        let cfg = FieldConfig::<f64>::unit(2, 2).unwrap();
        let s = SlownessModel::from_flat(cfg, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let sensors = SensorArray::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)], &cfg).unwrap();
        let p = Point::new(0.25, 0.25);
        // To (0,0): diagonal inside cell 0, length sqrt(0.125).
        let t0 = 0.125f64.sqrt() * 1.0;
        // To (1,0): along y = ... slope -0.25/0.75, crossing x = 0.5 at y = 1/6.
        let d1 = (0.75f64.powi(2) + 0.25f64.powi(2)).sqrt();
        let t1 = d1 / 3.0 * 1.0 + d1 * 2.0 / 3.0 * 3.0;
        // To (1,1): diagonal, half in cell 0 and half in cell 3.
        let d2 = 0.75 * 2f64.sqrt();
        let t2 = d2 / 3.0 * 1.0 + d2 * 2.0 / 3.0 * 4.0;
        let f_obs = [0.1, 0.2];
        let expect = (0.1 - (t1 - t0)).powi(2) + (0.2 - (t2 - t0)).powi(2);
        let got = de_cost(&p, &f_obs, &s, &sensors).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect, "{got} vs {expect}");
    }

    #[test]
    fn recovers_cell_of_noise_free_center_source() {
        let (s, sensors) = world(10);
        for cell in [0, 37, 55, 99] {
            let f = fingerprint(&s.config().cell_center(cell), &s, &sensors);
            let out = de_localize(&f, &s, &sensors, &DeConfig { seed: cell as u64, ..Default::default() }).unwrap();
            assert_eq!(out.cell, cell);
        }
    }

    #[test]
    fn zero_snap_radius_keeps_the_containing_cell() {
        let (s, sensors) = world(10);
        let f = fingerprint(&Point::new(0.47, 0.52), &s, &sensors);
        let out = de_localize(&f, &s, &sensors, &DeConfig { snap_radius: 0, seed: 5, ..Default::default() }).unwrap();
        assert_eq!(out.cell, out.containing_cell);
        assert_eq!(crate::field::cell_of(&out.point, s.config()).unwrap(), out.cell);
    }

    #[test]
    fn seeded_runs_repeat_and_history_never_rises() {
        let (s, sensors) = world(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Point::new(0.42, 0.13);
        let a = assemble_event_matrix(&p, &sensors, s.config()).unwrap();
        let f = tdoa_from_times(&add_noise(&propagation_times(&a, &s).unwrap(), 0.02, &mut rng)).unwrap();
        let cfg = DeConfig { seed: 11, ..Default::default() };
        let first = de_localize(&f, &s, &sensors, &cfg).unwrap();
        assert_eq!(first, de_localize(&f, &s, &sensors, &cfg).unwrap());
        assert!(first.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(s.config().contains(&first.point));
        assert_eq!(*first.history.last().unwrap(), first.cost);
    }

    #[test]
    fn config_validation() {
        assert!(DeConfig { population: 3, ..Default::default() }.validate().is_err());
        assert!(DeConfig { weight: 2.0, ..Default::default() }.validate().is_err());
        assert!(DeConfig { crossover: 1.5, ..Default::default() }.validate().is_err());
        assert!(DeConfig::default().validate().is_ok());
    }

    #[test]
    fn error_metrics() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 1.0);
        assert_eq!(localization_error(&a, &a), 0.0);
        assert!((localization_error(&a, &b) - 2f64.sqrt()).abs() < 1e-15);
        let preds: Vec<_> = (0..100).map(|k| Point::new(k as f64 / 100.0, 0.0)).collect();
        let truth = vec![a; 100];
        let manual: f64 = preds.iter().map(|p| p.x).sum::<f64>() / 100.0;
        assert!((mean_localization_error(&preds, &truth).unwrap() - manual).abs() < 1e-15);
        let cfg = FieldConfig::<f64>::unit(2, 2).unwrap();
        assert!((cell_localization_error(3, &Point::new(0.75, 0.75), &cfg)).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn population_stays_inside(seed in 0u64..1000, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let (s, sensors) = world(6);
            let f = fingerprint(&Point::new(x, y), &s, &sensors);
            let cfg = DeConfig { seed, max_generations: 40, ..Default::default() };
            let out = de_localize(&f, &s, &sensors, &cfg).unwrap();
            prop_assert!(s.config().contains(&out.point));
            prop_assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
