//! Event sampling, propagation times, measurement noise and TDoA
//! fingerprints.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{cell_of, FieldConfig, Point, SensorArray, SlownessModel};
use crate::raytrace::{RayMatrix, RayTracer};
use crate::scalar::Real;

/// Measurement noise: Gaussian with std `xi * mean(t)` per event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub xi: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { xi: 0.02, seed: 0 }
    }
}

impl NoiseSpec {
    pub fn new(xi: f64, seed: u64) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {xi}")));
        }
        Ok(Self { xi, seed })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Real,
    Augmented,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Augmented => "augmented",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Provenance::Real),
            "augmented" => Ok(Provenance::Augmented),
            other => Err(Error::Format(format!("unknown provenance {other:?}"))),
        }
    }
}

/// A labeled fingerprint.
#[derive(Clone, Debug, PartialEq)]
pub struct TdoaSample<T> {
    /// `M - 1` time differences relative to sensor 0, seconds.
    pub feature: Vec<T>,
    pub source: Point<T>,
    pub label: usize,
    pub provenance: Provenance,
}

/// A measured event: source position and noisy absolute arrival times.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord<T> {
    pub source: Point<T>,
    pub times: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub samples: Vec<TdoaSample<T>>,
    pub sensor_count: usize,
    pub config: FieldConfig<T>,
}

impl<T: Real> Dataset<T> {
    pub fn empty(sensor_count: usize, config: FieldConfig<T>) -> Self {
        Self { samples: Vec::new(), sensor_count, config }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.sensor_count - 1
    }

    pub fn class_count(&self) -> usize {
        self.config.cell_count()
    }

    /// Appends `other`; both must share sensor count and field.
    pub fn extend_from(&mut self, other: &Dataset<T>) -> Result<()> {
        if other.sensor_count != self.sensor_count || other.config != self.config {
            return Err(Error::ConfigMismatch("datasets differ in sensors or field".into()));
        }
        self.samples.extend(other.samples.iter().cloned());
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            sensor_count: self.sensor_count,
            config: self.config,
        }
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| TdoaSample {
                    feature: s.feature.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
                    source: s.source.cast(),
                    label: s.label,
                    provenance: s.provenance,
                })
                .collect(),
            sensor_count: self.sensor_count,
            config: self.config.cast(),
        }
    }

    /// Writes the CSV form `label,src_x,src_y,provenance,f1,...,f{M-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "label,src_x,src_y,provenance")?;
        for k in 1..self.sensor_count {
            write!(out, ",f{k}")?;
        }
        writeln!(out)?;
        for s in &self.samples {
            write!(out, "{},{},{},{}", s.label, s.source.x, s.source.y, s.provenance.as_str())?;
            for v in &s.feature {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads the CSV form; the field configuration is not part of the file.
    pub fn read_csv<R: BufRead>(input: R, config: FieldConfig<T>) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 5 || cols[..4] != ["label", "src_x", "src_y", "provenance"] {
            return Err(Error::Format(format!("bad dataset header {header:?}")));
        }
        for (k, c) in cols[4..].iter().enumerate() {
            if *c != format!("f{}", k + 1) {
                return Err(Error::Format(format!("unexpected column {c:?}")));
            }
        }
        let dim = cols.len() - 4;
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Format(format!("row {} has {} fields", n + 1, f.len())));
            }
            let num = |s: &str| -> Result<T> {
                s.parse().map_err(|_| Error::Format(format!("row {}: bad number {s:?}", n + 1)))
            };
            let source = Point::new(num(f[1])?, num(f[2])?);
            let label: usize =
                f[0].parse().map_err(|_| Error::Format(format!("row {}: bad label", n + 1)))?;
            if label >= config.cell_count() {
                return Err(Error::Format(format!("row {}: label {label} out of range", n + 1)));
            }
            samples.push(TdoaSample {
                label,
                source,
                provenance: f[3].parse()?,
                feature: f[4..].iter().map(|s| num(s)).collect::<Result<_>>()?,
            });
        }
        Ok(Self { samples, sensor_count: dim + 1, config })
    }
}

/// `t = A s`.
pub fn propagation_times<T: Real>(a: &RayMatrix<T>, s: &SlownessModel<T>) -> Result<Vec<T>> {
    let n = s.config().cell_count();
    if let Some(bad) = a.rows.iter().flat_map(|r| &r.entries).find(|e| e.0 >= n) {
        return Err(Error::ConfigMismatch(format!("ray matrix touches cell {} of {n}", bad.0)));
    }
    Ok(a.rows.iter().map(|r| r.dot(s.flattened())).collect())
}

/// Adds i.i.d. Gaussian noise with std `xi * mean(t)`.
pub fn add_noise<T: Real, R: Rng + ?Sized>(t: &[T], xi: f64, rng: &mut R) -> Vec<T> {
    if t.is_empty() {
        return Vec::new();
    }
    let mean = t.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / t.len() as f64;
    let sigma = xi * mean;
    if sigma == 0.0 {
        return t.to_vec();
    }
    t.iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            *v + T::lit(sigma * e)
        })
        .collect()
}

/// TDoA feature relative to sensor 0.
pub fn tdoa_from_times<T: Real>(t: &[T]) -> Result<Vec<T>> {
    if t.len() < 2 {
        return Err(Error::Arity { expected: 2, actual: t.len() });
    }
    Ok(t[1..].iter().map(|v| *v - t[0]).collect())
}

/// Isotropic Gaussian sources around the field center, resampled until
/// inside the field.
pub fn sample_real_events<T: Real, R: Rng + ?Sized>(
    count: usize,
    field: &FieldConfig<T>,
    sigma_km: f64,
    rng: &mut R,
) -> Result<Vec<Point<T>>> {
    if count == 0 {
        return Err(Error::InvalidParameter("event count must be >= 1".into()));
    }
    if !(sigma_km > 0.0) {
        return Err(Error::InvalidParameter("source std must be positive".into()));
    }
    let c = field.center();
    let (cx, cy) = (c.x.to_f64_lossy(), c.y.to_f64_lossy());
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let ex: f64 = StandardNormal.sample(rng);
        let ey: f64 = StandardNormal.sample(rng);
        let p = Point::new(T::lit(cx + sigma_km * ex), T::lit(cy + sigma_km * ey));
        if field.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Uniform sources over the whole field.
pub fn sample_uniform_events<T: Real, R: Rng + ?Sized>(
    count: usize,
    field: &FieldConfig<T>,
    rng: &mut R,
) -> Vec<Point<T>> {
    let (w, h) = (field.width_km.to_f64_lossy(), field.height_km.to_f64_lossy());
    (0..count)
        .map(|_| Point::new(T::lit(rng.gen::<f64>() * w), T::lit(rng.gen::<f64>() * h)))
        .collect()
}

/// Noisy absolute arrival times for each source.
pub fn record_events<T: Real, R: Rng + ?Sized>(
    sources: &[Point<T>],
    s: &SlownessModel<T>,
    sensors: &SensorArray<T>,
    xi: f64,
    rng: &mut R,
) -> Result<Vec<EventRecord<T>>> {
    let cfg = s.config();
    let mut tracer = RayTracer::new();
    let mut clean = Vec::with_capacity(sensors.len());
    sources
        .iter()
        .map(|src| {
            cfg.check_inside(src)?;
            tracer.times_into(src, sensors, cfg, s.flattened(), &mut clean);
            Ok(EventRecord { source: *src, times: add_noise(&clean, xi, rng) })
        })
        .collect()
}

/// Labeled fingerprints built from measured events.
pub fn dataset_from_events<T: Real>(
    events: &[EventRecord<T>],
    sensor_count: usize,
    config: &FieldConfig<T>,
    provenance: Provenance,
) -> Result<Dataset<T>> {
    let samples = events
        .iter()
        .map(|e| {
            if e.times.len() != sensor_count {
                return Err(Error::Arity { expected: sensor_count, actual: e.times.len() });
            }
            Ok(TdoaSample {
                feature: tdoa_from_times(&e.times)?,
                source: e.source,
                label: cell_of(&e.source, config)?,
                provenance,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset { samples, sensor_count, config: *config })
}

/// Simulates one real fingerprint per source.
pub fn make_dataset<T: Real, R: Rng + ?Sized>(
    sources: &[Point<T>],
    s: &SlownessModel<T>,
    sensors: &SensorArray<T>,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<Dataset<T>> {
    let events = record_events(sources, s, sensors, spec.xi, rng)?;
    dataset_from_events(&events, sensors.len(), s.config(), Provenance::Real)
}

/// Writes `src_x,src_y,t1,...,tM` rows.
pub fn write_events_csv<T: Real, W: Write>(events: &[EventRecord<T>], sensor_count: usize, mut out: W) -> Result<()> {
    write!(out, "src_x,src_y")?;
    for k in 1..=sensor_count {
        write!(out, ",t{k}")?;
    }
    writeln!(out)?;
    for e in events {
        write!(out, "{},{}", e.source.x, e.source.y)?;
        for t in &e.times {
            write!(out, ",{t}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_events_csv<T: Real, R: BufRead>(input: R) -> Result<Vec<EventRecord<T>>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty events file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 4 || cols[..2] != ["src_x", "src_y"] {
        return Err(Error::Format(format!("bad events header {header:?}")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .trim()
            .split(',')
            .map(|s| s.parse::<T>().map_err(|_| Error::Format(format!("row {}: bad number {s:?}", n + 1))))
            .collect::<Result<Vec<T>>>()?;
        if vals.len() != cols.len() {
            return Err(Error::Format(format!("row {} has {} fields", n + 1, vals.len())));
        }
        out.push(EventRecord { source: Point::new(vals[0], vals[1]), times: vals[2..].to_vec() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_synthetic_slowness, place_boundary_sensors, WavyBarrierParams};
    use crate::raytrace::{assemble_event_matrix, RayRow};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn uniform_field_times_scale_distance() {
        let cfg = FieldConfig::<f64>::unit(10, 10).unwrap();
        let s = SlownessModel::uniform(cfg, 0.4).unwrap();
        let sensors = place_boundary_sensors(&cfg);
        let src = Point::new(0.31, 0.77);
        let t = propagation_times(&assemble_event_matrix(&src, &sensors, &cfg).unwrap(), &s).unwrap();
        for (tm, p) in t.iter().zip(sensors.positions()) {
            assert!((tm - 0.4 * src.distance(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn source_at_sensor_has_zero_time() {
        let cfg = FieldConfig::<f64>::unit(10, 10).unwrap();
        let s = build_synthetic_slowness(&cfg, &WavyBarrierParams::default()).unwrap();
        let sensors = place_boundary_sensors(&cfg);
        let src = sensors.positions()[5];
        let t = propagation_times(&assemble_event_matrix(&src, &sensors, &cfg).unwrap(), &s).unwrap();
        assert_eq!(t[5], 0.0);
    }

    #[test]
    fn hand_built_two_by_two() {
        let cfg = FieldConfig::<f64>::unit(2, 2).unwrap();
        let s = SlownessModel::from_flat(cfg, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = RayMatrix {
            rows: vec![
                RayRow { entries: vec![(0, 0.5)], total_length: 0.5 },
                RayRow { entries: vec![(3, 0.25)], total_length: 0.25 },
                RayRow { entries: vec![(2, 0.7)], total_length: 0.7 },
            ],
        };
        let t = propagation_times(&a, &s).unwrap();
        assert_eq!(t, vec![0.5 * 0.1, 0.25 * 0.4, 0.7 * 0.3]);
    }

    #[test]
    fn mismatched_ray_matrix_rejected() {
        let cfg = FieldConfig::<f64>::unit(2, 2).unwrap();
        let s = SlownessModel::uniform(cfg, 0.1).unwrap();
        let a = RayMatrix { rows: vec![RayRow { entries: vec![(9, 0.5)], total_length: 0.5 }] };
        assert!(matches!(propagation_times(&a, &s), Err(Error::ConfigMismatch(_))));
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = vec![0.1, 0.2, 0.3];
        assert_eq!(add_noise(&t, 0.0, &mut rng(1)), t);
        assert_eq!(add_noise(&[0.0; 4], 0.05, &mut rng(1)), vec![0.0; 4]);
    }

    #[test]
    fn noise_std_matches_level() {
        let t = vec![0.2, 0.25, 0.3, 0.35];
        let mean = 0.275;
        let mut r = rng(7);
        for xi in [0.01, 0.02, 0.04] {
            let draws = 25_000;
            let mut acc = Vec::with_capacity(draws * t.len());
            for _ in 0..draws {
                let noisy = add_noise(&t, xi, &mut r);
                acc.extend(noisy.iter().zip(&t).map(|(a, b)| a - b));
            }
            let m = acc.iter().sum::<f64>() / acc.len() as f64;
            let sd = (acc.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (acc.len() - 1) as f64).sqrt();
            assert!((sd / (xi * mean) - 1.0).abs() < 0.02, "xi {xi}: {sd}");
        }
    }

    #[test]
    fn tdoa_examples() {
        assert_eq!(tdoa_from_times(&[0.7; 5]).unwrap(), vec![0.0; 4]);
        let f = tdoa_from_times(&[0.1f64, 0.3, 0.25]).unwrap();
        assert!((f[0] - 0.2).abs() < 1e-15 && (f[1] - 0.15).abs() < 1e-15);
        assert!(matches!(tdoa_from_times(&[0.1]), Err(Error::Arity { .. })));
    }

    #[test]
    fn tdoa_is_shift_invariant_for_dyadic_shift() {
        let t = [0.125, 0.5, 0.375, 0.25];
        let shifted: Vec<f64> = t.iter().map(|v| v + 2.0).collect();
        assert_eq!(tdoa_from_times(&t).unwrap(), tdoa_from_times(&shifted).unwrap());
    }

    #[test]
    fn gaussian_sources_stay_inside_and_center() {
        let cfg = FieldConfig::<f64>::unit(10, 10).unwrap();
        let pts: Vec<Point<f64>> = sample_real_events(100_000, &cfg, 0.2, &mut rng(11)).unwrap();
        assert!(pts.iter().all(|p| cfg.contains(p)));
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
        assert!((mx - 0.5).abs() < 0.01 && (my - 0.5).abs() < 0.01);
        let tight: Vec<Point<f64>> = sample_real_events(10, &cfg, 1e-12, &mut rng(2)).unwrap();
        assert!(tight.iter().all(|p| p.distance(&cfg.center()) < 1e-9));
        assert!(sample_real_events::<f64, _>(0, &cfg, 0.2, &mut rng(2)).is_err());
    }

    #[test]
    fn noise_free_center_feature_closed_form() {
        let cfg = FieldConfig::<f64>::unit(10, 10).unwrap();
        let s = SlownessModel::uniform(cfg, 0.3).unwrap();
        let sensors = place_boundary_sensors(&cfg);
        let ds = make_dataset(&[cfg.center()], &s, &sensors, &NoiseSpec::new(0.0, 0).unwrap(), &mut rng(0)).unwrap();
        let corner = 0.3 * 0.5f64.sqrt();
        let expect = [0.0, 0.0, 0.0, 0.15 - corner, 0.15 - corner, 0.15 - corner, 0.15 - corner];
        for (f, e) in ds.samples[0].feature.iter().zip(expect) {
            assert!((f - e).abs() < 1e-12);
        }
        assert_eq!(ds.samples[0].label, 55);
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = FieldConfig::<f64>::unit(20, 20).unwrap();
        let s = build_synthetic_slowness(&cfg, &WavyBarrierParams::default()).unwrap();
        let sensors = place_boundary_sensors(&cfg);
        let build = |seed| {
            let mut r = rng(seed);
            let src = sample_real_events(100, &cfg, 0.2, &mut r).unwrap();
            make_dataset(&src, &s, &sensors, &NoiseSpec::default(), &mut r).unwrap()
        };
        let a = build(5);
        assert_eq!(a.len(), 100);
        assert!(a.samples.iter().all(|x| x.feature.len() == 7 && x.provenance == Provenance::Real));
        assert!(a.samples.iter().all(|x| x.label == cell_of(&x.source, &cfg).unwrap()));
        assert_eq!(a, build(5));
        assert_ne!(a, build(6));
    }

    #[test]
    fn csv_round_trip() {
        let cfg = FieldConfig::<f64>::unit(20, 20).unwrap();
        let s = build_synthetic_slowness(&cfg, &WavyBarrierParams::default()).unwrap();
        let sensors = place_boundary_sensors(&cfg);
        let mut r = rng(9);
        let src = sample_real_events(20, &cfg, 0.2, &mut r).unwrap();
        let ds = make_dataset(&src, &s, &sensors, &NoiseSpec::default(), &mut r).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("label,src_x,src_y,provenance,f1,f2,f3,f4,f5,f6,f7\n"));
        assert_eq!(Dataset::read_csv(buf.as_slice(), cfg).unwrap(), ds);

        let events = record_events(&src, &s, &sensors, 0.02, &mut r).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&events, 8, &mut buf).unwrap();
        assert_eq!(read_events_csv::<f64, _>(buf.as_slice()).unwrap(), events);
    }
}
