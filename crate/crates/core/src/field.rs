//! Field geometry, grid indexing, the synthetic ground-truth slowness
//! model and sensor placement.
//!
//! Cells are indexed row-wise: cell `(i, j)`, with `i` counting cells along
//! x and `j` along y, has flat index `i * grid_w2 + j`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A position in the field, in km.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn cast<U: Real>(&self) -> Point<U> {
        Point::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()))
    }
}

/// Rectangular field divided into `grid_w1 x grid_w2` cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig<T> {
    pub width_km: T,
    pub height_km: T,
    /// Cells along x.
    pub grid_w1: usize,
    /// Cells along y.
    pub grid_w2: usize,
}

impl<T: Real> FieldConfig<T> {
    pub fn new(width_km: T, height_km: T, grid_w1: usize, grid_w2: usize) -> Result<Self> {
        let cfg = Self { width_km, height_km, grid_w1, grid_w2 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Unit square field with a `w1 x w2` grid.
    pub fn unit(w1: usize, w2: usize) -> Result<Self> {
        Self::new(T::one(), T::one(), w1, w2)
    }

    /// Square grid with `n` cells on a unit field; `n` must be a perfect square.
    pub fn unit_square_cells(n: usize) -> Result<Self> {
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n {
            return Err(Error::InvalidParameter(format!("{n} is not a perfect square")));
        }
        Self::unit(side, side)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_w1 < 2 || self.grid_w2 < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 2x2, got {}x{}",
                self.grid_w1, self.grid_w2
            )));
        }
        if !(self.width_km > T::zero() && self.height_km > T::zero())
            || !self.width_km.is_finite()
            || !self.height_km.is_finite()
        {
            return Err(Error::InvalidParameter("field dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Number of cells `N`.
    pub fn cell_count(&self) -> usize {
        self.grid_w1 * self.grid_w2
    }

    pub fn cell_width(&self) -> T {
        self.width_km / T::from_usize_lossy(self.grid_w1)
    }

    pub fn cell_height(&self) -> T {
        self.height_km / T::from_usize_lossy(self.grid_w2)
    }

    pub fn center(&self) -> Point<T> {
        let two = T::lit(2.0);
        Point::new(self.width_km / two, self.height_km / two)
    }

    pub fn contains(&self, p: &Point<T>) -> bool {
        p.x >= T::zero() && p.x <= self.width_km && p.y >= T::zero() && p.y <= self.height_km
    }

    pub fn check_inside(&self, p: &Point<T>) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfField {
                x: p.x.to_f64_lossy(),
                y: p.y.to_f64_lossy(),
                width: self.width_km.to_f64_lossy(),
                height: self.height_km.to_f64_lossy(),
            })
        }
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        i * self.grid_w2 + j
    }

    /// `(i, j)` of a flat cell index.
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.grid_w2, cell % self.grid_w2)
    }

    /// Column index along x; gridline points go to the larger index and the
    /// max boundary clamps to the last column.
    pub(crate) fn column_of(&self, x: T) -> usize {
        axis_index(x, self.cell_width(), self.grid_w1)
    }

    pub(crate) fn row_of(&self, y: T) -> usize {
        axis_index(y, self.cell_height(), self.grid_w2)
    }

    /// Cell containing `p`, without the inside check.
    pub(crate) fn cell_of_unchecked(&self, p: &Point<T>) -> usize {
        self.flat_index(self.column_of(p.x), self.row_of(p.y))
    }

    pub fn cell_center(&self, cell: usize) -> Point<T> {
        let (i, j) = self.cell_coords(cell);
        let half = T::lit(0.5);
        Point::new(
            (T::from_usize_lossy(i) + half) * self.cell_width(),
            (T::from_usize_lossy(j) + half) * self.cell_height(),
        )
    }

    pub fn cast<U: Real>(&self) -> FieldConfig<U> {
        FieldConfig {
            width_km: U::lit(self.width_km.to_f64_lossy()),
            height_km: U::lit(self.height_km.to_f64_lossy()),
            grid_w1: self.grid_w1,
            grid_w2: self.grid_w2,
        }
    }
}

fn axis_index<T: Real>(v: T, size: T, count: usize) -> usize {
    let k = (v / size).floor();
    if k <= T::zero() {
        0
    } else {
        k.to_usize().unwrap_or(usize::MAX).min(count - 1)
    }
}

/// Row-wise cell index of `position`.
pub fn cell_of<T: Real>(position: &Point<T>, config: &FieldConfig<T>) -> Result<usize> {
    config.check_inside(position)?;
    Ok(config.cell_of_unchecked(position))
}

/// Parameters of the wavy-plus-barrier ground-truth field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WavyBarrierParams<T> {
    /// Background slowness `s0`, s/km.
    pub base: T,
    /// Wave amplitude, s/km.
    pub amplitude: T,
    /// Number of half-waves across the field along each axis.
    pub wave_count: T,
    /// Barrier band along y, km. `None` disables the barrier.
    pub barrier: Option<(T, T)>,
    pub barrier_slowness: T,
}

impl<T: Real> Default for WavyBarrierParams<T> {
    fn default() -> Self {
        Self {
            base: T::lit(0.30),
            amplitude: T::lit(0.08),
            wave_count: T::lit(3.0),
            barrier: Some((T::lit(0.475), T::lit(0.525))),
            barrier_slowness: T::lit(0.50),
        }
    }
}

/// Per-cell slowness values (s/km) stored flattened row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct SlownessModel<T> {
    config: FieldConfig<T>,
    values: Vec<T>,
}

impl<T: Real> SlownessModel<T> {
    /// Wraps a flattened value vector; every value must be positive and finite.
    pub fn from_flat(config: FieldConfig<T>, values: Vec<T>) -> Result<Self> {
        config.validate()?;
        if values.len() != config.cell_count() {
            return Err(Error::Arity { expected: config.cell_count(), actual: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "slowness at cell {bad} is {}, must be positive",
                values[bad]
            )));
        }
        Ok(Self { config, values })
    }

    pub fn uniform(config: FieldConfig<T>, value: T) -> Result<Self> {
        Self::from_flat(config, vec![value; config.cell_count()])
    }

    /// Builds the model from a `grid_w1 x grid_w2` matrix.
    pub fn from_matrix(config: FieldConfig<T>, matrix: &[Vec<T>]) -> Result<Self> {
        if matrix.len() != config.grid_w1 {
            return Err(Error::Arity { expected: config.grid_w1, actual: matrix.len() });
        }
        let mut flat = Vec::with_capacity(config.cell_count());
        for row in matrix {
            if row.len() != config.grid_w2 {
                return Err(Error::Arity { expected: config.grid_w2, actual: row.len() });
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(config, flat)
    }

    pub fn config(&self) -> &FieldConfig<T> {
        &self.config
    }

    /// The flattened column vector `s`.
    pub fn flattened(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[self.config.flat_index(i, j)]
    }

    /// The `grid_w1 x grid_w2` matrix form.
    pub fn to_matrix(&self) -> Vec<Vec<T>> {
        self.values.chunks(self.config.grid_w2).map(<[T]>::to_vec).collect()
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `||self - other||_2 / ||other||_2`.
    pub fn relative_error(&self, truth: &Self) -> T {
        let num: T = self.values.iter().zip(&truth.values).map(|(a, b)| (*a - *b).powi(2)).sum();
        let den: T = truth.values.iter().map(|b| b.powi(2)).sum();
        (num / den).sqrt()
    }

    /// Writes the plain-text model file: a `W1 W2 width height` header, then
    /// `W1` lines of `W2` values.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{} {} {} {}",
            self.config.grid_w1, self.config.grid_w2, self.config.width_km, self.config.height_km
        )?;
        let mut line = String::new();
        for row in self.values.chunks(self.config.grid_w2) {
            line.clear();
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                write!(line, "{v}").expect("writing to a String");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty slowness file".into()))??;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 4 {
            return Err(Error::Format(format!("bad header line: {header:?}")));
        }
        let w1 = parse_field::<usize>(head[0], "W1")?;
        let w2 = parse_field::<usize>(head[1], "W2")?;
        let width = parse_field::<T>(head[2], "width_km")?;
        let height = parse_field::<T>(head[3], "height_km")?;
        let config = FieldConfig::new(width, height, w1, w2)?;
        let mut values = Vec::with_capacity(config.cell_count());
        for i in 0..w1 {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing row {i} of {w1}")))??;
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(parse_field::<T>(tok, "slowness")?);
            }
            if values.len() - before != w2 {
                return Err(Error::Format(format!(
                    "row {i} has {} values, expected {w2}",
                    values.len() - before
                )));
            }
        }
        Self::from_flat(config, values)
    }

    pub fn cast<U: Real>(&self) -> SlownessModel<U> {
        SlownessModel {
            config: self.config.cast(),
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

fn parse_field<V: std::str::FromStr>(tok: &str, what: &str) -> Result<V> {
    tok.parse().map_err(|_| Error::Format(format!("cannot parse {what} from {tok:?}")))
}

/// Evaluates the wavy pattern at every cell center and overrides the
/// barrier band.
pub fn build_synthetic_slowness<T: Real>(
    config: &FieldConfig<T>,
    params: &WavyBarrierParams<T>,
) -> Result<SlownessModel<T>> {
    config.validate()?;
    if !(params.base > T::zero()) {
        return Err(Error::InvalidParameter("base slowness must be positive".into()));
    }
    if params.amplitude.abs() >= params.base {
        return Err(Error::InvalidParameter("wave amplitude must be smaller than base slowness".into()));
    }
    if let Some((lo, hi)) = params.barrier {
        if !(lo <= hi && lo >= T::zero() && hi <= config.height_km) {
            return Err(Error::InvalidParameter("barrier band must lie inside the field".into()));
        }
        if !(params.barrier_slowness > T::zero()) {
            return Err(Error::InvalidParameter("barrier slowness must be positive".into()));
        }
    }
    let pi = T::lit(std::f64::consts::PI);
    let k_pi = params.wave_count * pi;
    let tol = T::lit(1e-12) * config.height_km;
    let values = (0..config.cell_count())
        .map(|cell| {
            let c = config.cell_center(cell);
            match params.barrier {
                Some((lo, hi)) if c.y >= lo - tol && c.y <= hi + tol => params.barrier_slowness,
                _ => {
                    params.base
                        + params.amplitude
                            * (k_pi * c.x / config.width_km).sin()
                            * (k_pi * c.y / config.height_km).sin()
                }
            }
        })
        .collect();
    SlownessModel::from_flat(*config, values)
}

/// A set of sensors; sensor 0 is the TDoA reference.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorArray<T> {
    positions: Vec<Point<T>>,
}

impl<T: Real> SensorArray<T> {
    pub fn new(positions: Vec<Point<T>>, config: &FieldConfig<T>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidParameter("at least two sensors are required".into()));
        }
        for p in &positions {
            config.check_inside(p)?;
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Point<T>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn cast<U: Real>(&self) -> SensorArray<U> {
        SensorArray { positions: self.positions.iter().map(Point::cast).collect() }
    }
}

/// The four corners followed by the four edge midpoints.
pub fn place_boundary_sensors<T: Real>(config: &FieldConfig<T>) -> SensorArray<T> {
    let (w, h) = (config.width_km, config.height_km);
    let two = T::lit(2.0);
    let z = T::zero();
    let positions = vec![
        Point::new(z, z),
        Point::new(w, z),
        Point::new(z, h),
        Point::new(w, h),
        Point::new(w / two, z),
        Point::new(w / two, h),
        Point::new(z, h / two),
        Point::new(w, h / two),
    ];
    SensorArray { positions }
}
