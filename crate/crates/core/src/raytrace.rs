//! Straight-ray path lengths through the grid.
//!
//! The segment is cut at every gridline crossing (parametric traversal in
//! the style of Siddon's method) and every sub-segment is credited to the
//! cell containing its midpoint.

use crate::error::Result;
use crate::field::{FieldConfig, Point, SensorArray};
use crate::scalar::Real;

/// Per-cell path lengths of one ray, sorted by cell index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RayRow<T> {
    pub entries: Vec<(usize, T)>,
    pub total_length: T,
}

impl<T: Real> RayRow<T> {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `a . s` for a flattened slowness vector.
    pub fn dot(&self, flat: &[T]) -> T {
        self.entries.iter().map(|&(c, len)| len * flat[c]).sum()
    }

    pub fn length_in(&self, cell: usize) -> T {
        self.entries
            .binary_search_by_key(&cell, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or_else(|_| T::zero())
    }
}

/// One row per sensor, in sensor order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RayMatrix<T> {
    pub rows: Vec<RayRow<T>>,
}

impl<T: Real> RayMatrix<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Traces the straight segment `src -> dst`.
pub fn trace_ray<T: Real>(src: &Point<T>, dst: &Point<T>, config: &FieldConfig<T>) -> Result<RayRow<T>> {
    config.check_inside(src)?;
    config.check_inside(dst)?;
    let mut row = RayRow::default();
    let mut scratch = Vec::new();
    trace_into(src, dst, config, &mut scratch, &mut row);
    Ok(row)
}

/// Allocation-reusing core of [`trace_ray`]; endpoints must already be
/// inside the field.
pub(crate) fn trace_into<T: Real>(
    src: &Point<T>,
    dst: &Point<T>,
    config: &FieldConfig<T>,
    scratch: &mut Vec<T>,
    row: &mut RayRow<T>,
) {
    row.entries.clear();
    row.total_length = T::zero();
    // Always walk from the lexicographically smaller endpoint so that a ray
    // and its reverse produce bit-identical rows.
    let (a, b) = if (dst.x, dst.y) < (src.x, src.y) { (dst, src) } else { (src, dst) };
    let length = a.distance(b);
    if length == T::zero() {
        return;
    }
    let (dx, dy) = (b.x - a.x, b.y - a.y);

    scratch.clear();
    scratch.push(T::zero());
    push_crossings(a.x, dx, config.cell_width(), config.grid_w1, scratch);
    push_crossings(a.y, dy, config.cell_height(), config.grid_w2, scratch);
    scratch.push(T::one());
    scratch.sort_unstable_by(|p, q| p.partial_cmp(q).expect("finite ray parameters"));

    let half = T::lit(0.5);
    for w in scratch.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= t0 {
            continue;
        }
        let tm = (t0 + t1) * half;
        let mid = Point::new(a.x + tm * dx, a.y + tm * dy);
        let cell = config.cell_of_unchecked(&mid);
        let seg = (t1 - t0) * length;
        match row.entries.last_mut() {
            Some(last) if last.0 == cell => last.1 = last.1 + seg,
            _ => row.entries.push((cell, seg)),
        }
    }
    row.entries.sort_unstable_by_key(|e| e.0);
    // Merge the rare duplicates left by rounding at grid corners.
    row.entries.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 = earlier.1 + later.1;
            true
        } else {
            false
        }
    });
    row.total_length = length;
}

/// Pushes the ray parameters in (0, 1) where `start + t * delta` crosses an
/// interior gridline `k * size`, `k = 1..count`.
fn push_crossings<T: Real>(start: T, delta: T, size: T, count: usize, out: &mut Vec<T>) {
    if delta == T::zero() {
        return;
    }
    for k in 1..count {
        let t = (T::from_usize_lossy(k) * size - start) / delta;
        if t > T::zero() && t < T::one() {
            out.push(t);
        }
    }
}

/// Ray rows from `src` to every sensor.
pub fn assemble_event_matrix<T: Real>(
    src: &Point<T>,
    sensors: &SensorArray<T>,
    config: &FieldConfig<T>,
) -> Result<RayMatrix<T>> {
    config.check_inside(src)?;
    let mut scratch = Vec::new();
    let rows = sensors
        .positions()
        .iter()
        .map(|dst| {
            let mut row = RayRow::default();
            trace_into(src, dst, config, &mut scratch, &mut row);
            row
        })
        .collect();
    Ok(RayMatrix { rows })
}

/// Reusable buffers for evaluating many events against one sensor array.
#[derive(Debug, Default)]
pub struct RayTracer<T> {
    scratch: Vec<T>,
    row: RayRow<T>,
}

impl<T: Real> RayTracer<T> {
    pub fn new() -> Self {
        Self { scratch: Vec::new(), row: RayRow::default() }
    }

    /// Writes `A_p s` into `times` without materializing the ray matrix.
    pub fn times_into(
        &mut self,
        src: &Point<T>,
        sensors: &SensorArray<T>,
        config: &FieldConfig<T>,
        flat_slowness: &[T],
        times: &mut Vec<T>,
    ) {
        times.clear();
        for dst in sensors.positions() {
            trace_into(src, dst, config, &mut self.scratch, &mut self.row);
            times.push(self.row.dot(flat_slowness));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::place_boundary_sensors;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn unit(n: usize) -> FieldConfig<f64> {
        FieldConfig::<f64>::unit(n, n).unwrap()
    }

    /// Accumulates `ds` for `samples` equally spaced midpoints along the
    /// segment, per containing cell.
    fn sampled_lengths(a: Point<f64>, b: Point<f64>, cfg: &FieldConfig<f64>, samples: usize) -> BTreeMap<usize, f64> {
        let len = a.distance(&b);
        let ds = len / samples as f64;
        let mut map = BTreeMap::new();
        for k in 0..samples {
            let t = (k as f64 + 0.5) / samples as f64;
            let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            *map.entry(cfg.cell_of_unchecked(&p)).or_insert(0.0) += ds;
        }
        map
    }

    #[test]
    fn degenerate_ray_is_empty() {
        let p = Point::new(0.5, 0.5);
        let row = trace_ray(&p, &p, &unit(10)).unwrap();
        assert!(row.is_empty());
        assert_eq!(row.total_length, 0.0);
    }

    #[test]
    fn axis_aligned_ray_along_bottom_row() {
        let row = trace_ray(&Point::new(0.05, 0.05), &Point::new(0.95, 0.05), &unit(10)).unwrap();
        let cells: Vec<usize> = row.entries.iter().map(|e| e.0).collect();
        assert_eq!(cells, (0..10).map(|i| i * 10).collect::<Vec<_>>());
        for (k, (_, len)) in row.entries.iter().enumerate() {
            let expect = if k == 0 || k == 9 { 0.05 } else { 0.10 };
            assert!((len - expect).abs() < 1e-12, "cell {k}: {len}");
        }
        assert!((row.total_length - 0.9).abs() < 1e-12);
    }

    #[test]
    fn oblique_ray_matches_fine_sampling() {
        let (a, b) = (Point::new(0.12, 0.33), Point::new(0.87, 0.61));
        let cfg = unit(10);
        let row = trace_ray(&a, &b, &cfg).unwrap();
        let oracle = sampled_lengths(a, b, &cfg, 1_000_000);
        assert_eq!(row.entries.len(), oracle.len());
        for (cell, len) in &row.entries {
            assert!((len - oracle[cell]).abs() <= 1e-4, "cell {cell}");
        }
    }

    #[test]
    fn outside_endpoint_rejected() {
        assert!(trace_ray(&Point::new(-0.1, 0.2), &Point::new(0.5, 0.5), &unit(4)).is_err());
    }

    #[test]
    fn ray_on_interior_gridline_goes_to_larger_index() {
        let cfg = unit(4);
        let row = trace_ray(&Point::new(0.5, 0.1), &Point::new(0.5, 0.9), &cfg).unwrap();
        assert!(row.entries.iter().all(|(c, _)| cfg.cell_coords(*c).0 == 2));
        assert!((row.entries.iter().map(|e| e.1).sum::<f64>() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn event_matrix_from_center() {
        let cfg = unit(10);
        let sensors = place_boundary_sensors(&cfg);
        let m = assemble_event_matrix(&cfg.center(), &sensors, &cfg).unwrap();
        assert_eq!(m.len(), 8);
        for (k, row) in m.rows.iter().enumerate() {
            let expect = if k < 4 { 0.5f64.sqrt() } else { 0.5 };
            assert!((row.total_length - expect).abs() < 1e-12);
            let sum: f64 = row.entries.iter().map(|e| e.1).sum();
            assert!((sum - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn event_at_sensor_has_empty_row() {
        let cfg = unit(10);
        let sensors = place_boundary_sensors(&cfg);
        let m = assemble_event_matrix(&sensors.positions()[0], &sensors, &cfg).unwrap();
        assert!(m.rows[0].is_empty());
        assert_eq!(m.rows[0].total_length, 0.0);
    }

    #[test]
    fn random_event_totals_equal_distance() {
        let cfg = unit(20);
        let sensors = place_boundary_sensors(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = Point::new(rng.gen::<f64>(), rng.gen::<f64>());
            let m = assemble_event_matrix(&p, &sensors, &cfg).unwrap();
            for (row, s) in m.rows.iter().zip(sensors.positions()) {
                let d = ((p.x - s.x).powi(2) + (p.y - s.y).powi(2)).sqrt();
                let sum: f64 = row.entries.iter().map(|e| e.1).sum();
                assert!((sum - d).abs() <= 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn reversed_ray_is_identical(ax in 0.0f64..=1.0, ay in 0.0f64..=1.0, bx in 0.0f64..=1.0, by in 0.0f64..=1.0, n in 2usize..30) {
            let cfg = unit(n);
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            prop_assert_eq!(trace_ray(&a, &b, &cfg).unwrap(), trace_ray(&b, &a, &cfg).unwrap());
        }

        #[test]
        fn credited_cells_are_crossed(ax in 0.0f64..=1.0, ay in 0.0f64..=1.0, bx in 0.0f64..=1.0, by in 0.0f64..=1.0) {
            let cfg = unit(8);
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            let row = trace_ray(&a, &b, &cfg).unwrap();
            let oracle = sampled_lengths(a, b, &cfg, 20_000);
            let tol = 2.0 * a.distance(&b) / 20_000.0 + 1e-12;
            for (cell, len) in &row.entries {
                let o = oracle.get(cell).copied().unwrap_or(0.0);
                prop_assert!((len - o).abs() <= tol, "cell {} len {} oracle {}", cell, len, o);
            }
            for (cell, o) in &oracle {
                prop_assert!((row.length_in(*cell) - o).abs() <= tol);
            }
        }
    }
}
