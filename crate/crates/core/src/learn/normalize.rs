use crate::scalar::Real;

/// Smallest standard deviation a feature may be scaled by.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-dimension z-score statistics taken from a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> Normalizer<T> {
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [T]>) -> Self {
        let mut sum = vec![0.0f64; dim];
        let mut sq = vec![0.0f64; dim];
        let mut count = 0usize;
        for row in rows {
            for (k, v) in row.iter().enumerate() {
                let v = v.to_f64_lossy();
                sum[k] += v;
                sq[k] += v * v;
            }
            count += 1;
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| T::lit((q / n - m * m).max(0.0).sqrt().max(STD_FLOOR)))
            .collect();
        Self { mean: mean.into_iter().map(T::lit).collect(), std }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![T::zero(); dim], std: vec![T::one(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, x: &[T], out: &mut [T]) {
        for ((o, v), (m, s)) in out.iter_mut().zip(x).zip(self.mean.iter().zip(&self.std)) {
            *o = (*v - *m) / *s;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn is_valid(&self) -> bool {
        self.mean.len() == self.std.len()
            && self.mean.iter().all(|m| m.is_finite())
            && self.std.iter().all(|s| s.is_finite() && *s >= T::lit(STD_FLOOR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_columns() {
        let rows = [vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let n = Normalizer::<f64>::fit(2, rows.iter().map(|r| r.as_slice()));
        assert_eq!(n.mean, vec![3.0, 10.0]);
        assert!((n.std[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(n.std[1], STD_FLOOR);
        assert!(n.is_valid());
        let z = n.apply(&[3.0, 10.0]);
        assert_eq!(z, vec![0.0, 0.0]);
    }
}
