//! RBF-kernel soft-margin SVM trained by sequential minimal optimization,
//! combined into a multiclass cell classifier.
//!
//! The binary solver follows the working-set selection that uses
//! second-order information (Fan, Chen and Lin, 2005), without shrinking.
//! Kernel rows are computed lazily and cached.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learn::normalize::Normalizer;
use crate::scalar::Real;
use crate::simulate::Dataset;

/// Default stopping tolerance on the maximal KKT violation.
pub const KKT_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;
/// Memory budget for cached kernel rows of one binary problem.
const KERNEL_CACHE_BYTES: usize = 256 << 20;

/// How binary machines are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Multiclass {
    /// One machine per class against all others; predict the largest
    /// decision value.
    #[default]
    OneVsRest,
    /// One machine per class pair; predict by majority vote.
    OneVsOne,
}

impl Multiclass {
    pub fn as_str(self) -> &'static str {
        match self {
            Multiclass::OneVsRest => "ovr",
            Multiclass::OneVsOne => "ovo",
        }
    }
}

impl std::str::FromStr for Multiclass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ovr" | "one-vs-rest" => Ok(Self::OneVsRest),
            "ovo" | "one-vs-one" => Ok(Self::OneVsOne),
            other => Err(Error::InvalidParameter(format!("unknown multiclass scheme {other:?}"))),
        }
    }
}

/// Grid-search and solver settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmHyper {
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub tolerance: f64,
    pub scheme: Multiclass,
    /// Cross-validation runs on a random subset of at most this many
    /// samples; the final model always uses the full set.
    pub cv_max_samples: Option<usize>,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            c_grid: (-2..=6).map(|e| 2f64.powi(e)).collect(),
            gamma_grid: (-4..=4).map(|e| 2f64.powi(e)).collect(),
            folds: 3,
            tolerance: KKT_TOLERANCE,
            scheme: Multiclass::OneVsRest,
            cv_max_samples: None,
        }
    }
}

#[inline]
fn rbf<T: Real>(a: &[T], b: &[T], gamma: T) -> T {
    let d2: T = a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
    (-gamma * d2).exp()
}

/// Samples per kernel block at prediction time.
const PREDICT_BLOCK: usize = 64;

/// Problems up to this size get their whole kernel matrix up front.
const DENSE_KERNEL_MAX: usize = 256;

/// Kernel matrix of one binary problem: dense for small problems, rows
/// evaluated on demand otherwise.
struct KernelRows<'a, T> {
    points: &'a [&'a [T]],
    gamma: T,
    dense: Vec<T>,
    rows: HashMap<usize, Vec<T>>,
    capacity: usize,
}

impl<'a, T: Real> KernelRows<'a, T> {
    fn new(points: &'a [&'a [T]], gamma: T) -> Self {
        let n = points.len();
        let per_row = n.max(1) * std::mem::size_of::<T>();
        let mut dense = Vec::new();
        if n <= DENSE_KERNEL_MAX {
            dense = vec![T::one(); n * n];
            for i in 0..n {
                for j in 0..i {
                    let k = rbf(points[i], points[j], gamma);
                    dense[i * n + j] = k;
                    dense[j * n + i] = k;
                }
            }
        }
        Self { points, gamma, dense, rows: HashMap::new(), capacity: (KERNEL_CACHE_BYTES / per_row).max(2) }
    }

    fn ensure(&mut self, i: usize) {
        if !self.dense.is_empty() || self.rows.contains_key(&i) {
            return;
        }
        if self.rows.len() >= self.capacity {
            self.rows.clear();
        }
        let xi = self.points[i];
        let row = self.points.iter().map(|xj| rbf(xi, xj, self.gamma)).collect();
        self.rows.insert(i, row);
    }

    fn cached(&self, i: usize) -> &[T] {
        if self.dense.is_empty() {
            &self.rows[&i]
        } else {
            let n = self.points.len();
            &self.dense[i * n..(i + 1) * n]
        }
    }

    fn row(&mut self, i: usize) -> &[T] {
        self.ensure(i);
        self.cached(i)
    }

    fn pair(&mut self, i: usize, j: usize) -> (&[T], &[T]) {
        self.ensure(i);
        self.ensure(j);
        if self.dense.is_empty() && !self.rows.contains_key(&i) {
            // `ensure(j)` evicted row i.
            self.rows.clear();
            self.ensure(i);
            self.ensure(j);
        }
        (self.cached(i), self.cached(j))
    }
}

/// Dual solution of one binary problem.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution<T> {
    pub alpha: Vec<T>,
    /// Decision function is `sum_i alpha_i y_i K(x_i, x) - rho`.
    pub rho: T,
    pub iterations: usize,
}

/// Solves `min 1/2 a^T Q a - e^T a` s.t. `y^T a = 0`, `0 <= a <= C` with
/// `Q_ij = y_i y_j K(x_i, x_j)`.
pub fn solve_binary<T: Real>(points: &[&[T]], y: &[i8], c: T, gamma: T, tolerance: T) -> Result<BinarySolution<T>> {
    if points.len() != y.len() {
        return Err(Error::Arity { expected: points.len(), actual: y.len() });
    }
    solve_with(KernelRows::new(points, gamma), y, c, tolerance)
}

fn solve_with<T: Real>(mut kernel: KernelRows<'_, T>, y: &[i8], c: T, tolerance: T) -> Result<BinarySolution<T>> {
    let n = kernel.points.len();
    if n != y.len() {
        return Err(Error::Arity { expected: n, actual: y.len() });
    }
    if !y.iter().any(|v| *v > 0) || !y.iter().any(|v| *v < 0) {
        return Err(Error::TrainingInput("binary problem needs both classes".into()));
    }
    let yf: Vec<T> = y.iter().map(|v| if *v > 0 { T::one() } else { -T::one() }).collect();
    let mut alpha = vec![T::zero(); n];
    let mut grad = vec![-T::one(); n];
    let tau = T::lit(TAU);
    let max_iter = (100 * n).max(10_000_000);
    let mut iterations = 0;

    let in_up = |a: T, yv: T| (yv > T::zero() && a < c) || (yv < T::zero() && a > T::zero());
    let in_low = |a: T, yv: T| (yv > T::zero() && a > T::zero()) || (yv < T::zero() && a < c);

    loop {
        // i maximizes -y_t G_t over I_up.
        let mut gmax = T::neg_infinity();
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], yf[t]) {
                let v = -yf[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        if i_sel == usize::MAX {
            break;
        }
        let ki = kernel.row(i_sel);
        let mut gmin = T::infinity();
        let mut j_sel = usize::MAX;
        let mut best_obj = T::infinity();
        for t in 0..n {
            if !in_low(alpha[t], yf[t]) {
                continue;
            }
            let v = -yf[t] * grad[t];
            if v < gmin {
                gmin = v;
            }
            let b = gmax - v;
            if b > T::zero() {
                let mut a = ki[i_sel] + T::one() - T::lit(2.0) * ki[t];
                if a <= T::zero() {
                    a = tau;
                }
                let obj = -(b * b) / a;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = t;
                }
            }
        }
        if gmax - gmin < tolerance || j_sel == usize::MAX {
            break;
        }
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::Numerical(format!("SMO did not converge in {max_iter} iterations")));
        }
        let (i, j) = (i_sel, j_sel);
        let (qi, qj) = kernel.pair(i, j);
        let (yi, yj) = (yf[i], yf[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let kij = qi[j];
        let mut quad = qi[i] + qj[j] - T::lit(2.0) * kij;
        if quad <= T::zero() {
            quad = tau;
        }
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] = alpha[i] + delta;
            alpha[j] = alpha[j] + delta;
            if diff > T::zero() {
                if alpha[j] < T::zero() {
                    alpha[j] = T::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = -diff;
            }
            if diff > T::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] = alpha[i] - delta;
            alpha[j] = alpha[j] + delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < T::zero() {
                alpha[j] = T::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        // G_t += Q_ti dai + Q_tj daj
        for t in 0..n {
            grad[t] = grad[t] + yf[t] * (yi * qi[t] * dai + yj * qj[t] * daj);
        }
    }

    Ok(BinarySolution { rho: compute_rho(&alpha, &yf, &grad, c), alpha, iterations })
}

fn compute_rho<T: Real>(alpha: &[T], y: &[T], grad: &[T], c: T) -> T {
    let (mut ub, mut lb) = (T::infinity(), T::neg_infinity());
    let (mut sum, mut free) = (T::zero(), 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < T::zero() { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= T::zero() {
            if y[t] > T::zero() { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free += 1;
            sum = sum + yg;
        }
    }
    if free > 0 {
        sum / T::from_usize_lossy(free)
    } else {
        (ub + lb) / T::lit(2.0)
    }
}

/// Maximal KKT violation `m(a) - M(a)` recomputed from scratch.
pub fn kkt_gap<T: Real>(points: &[&[T]], y: &[i8], alpha: &[T], c: T, gamma: T) -> T {
    let n = points.len();
    let yf: Vec<T> = y.iter().map(|v| if *v > 0 { T::one() } else { -T::one() }).collect();
    let (mut up, mut low) = (T::neg_infinity(), T::infinity());
    for t in 0..n {
        let g = (0..n)
            .filter(|&s| alpha[s] > T::zero())
            .map(|s| yf[t] * yf[s] * alpha[s] * rbf(points[t], points[s], gamma))
            .sum::<T>()
            - T::one();
        let v = -yf[t] * g;
        let (a, yv) = (alpha[t], yf[t]);
        if (yv > T::zero() && a < c) || (yv < T::zero() && a > T::zero()) {
            up = up.max(v);
        }
        if (yv > T::zero() && a > T::zero()) || (yv < T::zero() && a < c) {
            low = low.min(v);
        }
    }
    (up - low).max(T::zero())
}

/// One trained binary machine.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMachine<T> {
    /// Label predicted by a positive decision value.
    pub positive: usize,
    /// Opposing label for one-vs-one machines.
    pub negative: Option<usize>,
    /// Indices into the model's support-vector store.
    pub support: Vec<usize>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<T>,
    pub rho: T,
}

/// Multiclass RBF SVM over normalized TDoA features.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel<T> {
    pub normalizer: Normalizer<T>,
    pub c: T,
    pub gamma: T,
    pub scheme: Multiclass,
    pub class_count: usize,
    /// Labels seen in training, ascending.
    pub classes: Vec<usize>,
    /// Normalized support vectors, `n_sv x dim`.
    pub support_vectors: Vec<T>,
    /// Position of each support vector in the training set.
    pub support_origin: Vec<usize>,
    pub machines: Vec<BinaryMachine<T>>,
}

impl<T: Real> SvmModel<T> {
    pub fn feature_dim(&self) -> usize {
        self.normalizer.dim()
    }

    /// Labels for a block of normalized features (`rows x dim`, row major).
    ///
    /// Kernel values come from one matrix product against the support
    /// vectors; decision values then accumulate across the block so the
    /// inner loop runs over samples.
    fn predict_block(&self, z: &[T], rows: usize, sv_norms: &[T]) -> Vec<usize> {
        let d = self.feature_dim();
        let n = self.support_origin.len();
        let mut kt = vec![T::zero(); n * rows];
        T::gemm(n, d, rows, T::one(), &self.support_vectors, (d as isize, 1), z, (1, d as isize), T::zero(), &mut kt, (rows as isize, 1));
        let z_norms: Vec<T> = z.chunks_exact(d).map(|r| r.iter().map(|x| *x * *x).sum()).collect();
        let two = T::one() + T::one();
        for (s, row) in kt.chunks_exact_mut(rows).enumerate() {
            for (k, zn) in row.iter_mut().zip(&z_norms) {
                let d2 = (sv_norms[s] + *zn - two * *k).max(T::zero());
                *k = (-self.gamma * d2).exp();
            }
        }
        let mut acc = vec![T::zero(); rows];
        let decide = |m: &BinaryMachine<T>, acc: &mut [T]| {
            acc.iter_mut().for_each(|a| *a = -m.rho);
            for (s, c) in m.support.iter().zip(&m.coef) {
                for (a, k) in acc.iter_mut().zip(&kt[s * rows..(s + 1) * rows]) {
                    *a = *a + *c * *k;
                }
            }
        };
        match self.scheme {
            Multiclass::OneVsRest => {
                let mut best = vec![(T::neg_infinity(), 0usize); rows];
                for m in &self.machines {
                    decide(m, &mut acc);
                    for (b, a) in best.iter_mut().zip(&acc) {
                        if *a > b.0 {
                            *b = (*a, m.positive);
                        }
                    }
                }
                best.into_iter().map(|b| b.1).collect()
            }
            Multiclass::OneVsOne => {
                let k = self.class_count;
                let mut votes = vec![0u32; rows * k];
                for m in &self.machines {
                    decide(m, &mut acc);
                    let loser = m.negative.unwrap_or(m.positive);
                    for (j, a) in acc.iter().enumerate() {
                        votes[j * k + if *a > T::zero() { m.positive } else { loser }] += 1;
                    }
                }
                // Most votes, ties to the smaller label.
                votes
                    .chunks_exact(k)
                    .map(|v| self.classes.iter().copied().max_by(|a, b| v[*a].cmp(&v[*b]).then(b.cmp(a))).unwrap_or(0))
                    .collect()
            }
        }
    }

    fn sv_norms(&self) -> Vec<T> {
        self.support_vectors.chunks_exact(self.feature_dim().max(1)).map(|r| r.iter().map(|x| *x * *x).sum()).collect()
    }

    pub fn predict(&self, feature: &[T]) -> Result<usize> {
        Ok(self.predict_batch(&[feature])?[0])
    }

    pub fn predict_batch<F: AsRef<[T]> + Sync>(&self, features: &[F]) -> Result<Vec<usize>> {
        if let Some(f) = features.iter().find(|f| f.as_ref().len() != self.feature_dim()) {
            return Err(Error::Arity { expected: self.feature_dim(), actual: f.as_ref().len() });
        }
        let norms = self.sv_norms();
        Ok(features
            .par_chunks(PREDICT_BLOCK)
            .flat_map_iter(|block| {
                let z: Vec<T> = block.iter().flat_map(|f| self.normalizer.apply(f.as_ref())).collect();
                self.predict_block(&z, block.len(), &norms)
            })
            .collect())
    }

    /// Box-constraint and KKT audit of every machine against the training
    /// set it was fitted on. Returns the largest KKT gap.
    pub fn audit(&self, train: &Dataset<T>) -> Result<T> {
        let points: Vec<Vec<T>> = train.samples.iter().map(|s| self.normalizer.apply(&s.feature)).collect();
        let mut worst = T::zero();
        for m in &self.machines {
            let members: Vec<usize> = (0..train.len())
                .filter(|&i| {
                    let l = train.samples[i].label;
                    m.negative.is_none_or(|neg| l == m.positive || l == neg)
                })
                .collect();
            let position: HashMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
            let mut alpha = vec![T::zero(); members.len()];
            for (s, coef) in m.support.iter().zip(&m.coef) {
                let k = *position.get(&self.support_origin[*s]).ok_or_else(|| {
                    Error::Numerical("support vector outside its machine's training subset".into())
                })?;
                alpha[k] = coef.abs();
                if alpha[k] > self.c * (T::one() + T::lit(1e-12)) {
                    return Err(Error::Numerical(format!("dual {} exceeds C = {}", alpha[k], self.c)));
                }
            }
            let pts: Vec<&[T]> = members.iter().map(|&i| points[i].as_slice()).collect();
            let y: Vec<i8> = members.iter().map(|&i| if train.samples[i].label == m.positive { 1 } else { -1 }).collect();
            worst = worst.max(kkt_gap(&pts, &y, &alpha, self.c, self.gamma));
        }
        Ok(worst)
    }
}

/// Trains a multiclass model for fixed `(C, gamma)`.
pub fn fit_svm<T: Real>(train: &Dataset<T>, c: f64, gamma: f64, scheme: Multiclass, tolerance: f64) -> Result<SvmModel<T>> {
    super::check_training_set(train)?;
    let d = train.feature_dim();
    let normalizer = Normalizer::fit(d, train.samples.iter().map(|s| s.feature.as_slice()));
    let points: Vec<Vec<T>> = train.samples.iter().map(|s| normalizer.apply(&s.feature)).collect();
    let labels: Vec<usize> = train.samples.iter().map(|s| s.label).collect();
    let mut classes = labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let (ct, gt, tol) = (T::lit(c), T::lit(gamma), T::lit(tolerance));

    let problems: Vec<(usize, Option<usize>, Vec<usize>)> = match scheme {
        Multiclass::OneVsRest => classes.iter().map(|&k| (k, None, (0..points.len()).collect())).collect(),
        Multiclass::OneVsOne => {
            let mut by_class: HashMap<usize, Vec<usize>> = HashMap::new();
            for (i, l) in labels.iter().enumerate() {
                by_class.entry(*l).or_default().push(i);
            }
            let mut out = Vec::new();
            for (a, &ka) in classes.iter().enumerate() {
                for &kb in &classes[a + 1..] {
                    let mut members = by_class[&ka].clone();
                    members.extend(&by_class[&kb]);
                    out.push((ka, Some(kb), members));
                }
            }
            out
        }
    };

    let solved: Vec<(usize, Option<usize>, Vec<usize>, BinarySolution<T>)> = problems
        .into_par_iter()
        .map(|(pos, neg, members)| {
            let pts: Vec<&[T]> = members.iter().map(|&i| points[i].as_slice()).collect();
            let y: Vec<i8> = members.iter().map(|&i| if labels[i] == pos { 1 } else { -1 }).collect();
            let sol = solve_binary(&pts, &y, ct, gt, tol)?;
            Ok((pos, neg, members, sol))
        })
        .collect::<Result<_>>()?;

    let mut store_index: HashMap<usize, usize> = HashMap::new();
    let mut support_vectors = Vec::new();
    let mut support_origin = Vec::new();
    let mut machines = Vec::with_capacity(solved.len());
    for (pos, neg, members, sol) in solved {
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for (k, &i) in members.iter().enumerate() {
            if sol.alpha[k] > T::zero() {
                let slot = *store_index.entry(i).or_insert_with(|| {
                    support_vectors.extend_from_slice(&points[i]);
                    support_origin.push(i);
                    support_origin.len() - 1
                });
                support.push(slot);
                coef.push(if labels[i] == pos { sol.alpha[k] } else { -sol.alpha[k] });
            }
        }
        machines.push(BinaryMachine { positive: pos, negative: neg, support, coef, rho: sol.rho });
    }
    Ok(SvmModel {
        normalizer,
        c: ct,
        gamma: gt,
        scheme,
        class_count: train.class_count(),
        classes,
        support_vectors,
        support_origin,
        machines,
    })
}

/// Cross-validated accuracy for every grid point, in `(C, gamma)` order.
pub fn grid_search<T: Real, R: Rng + ?Sized>(
    train: &Dataset<T>,
    hyper: &SvmHyper,
    rng: &mut R,
) -> Result<Vec<(f64, f64, f64)>> {
    if hyper.folds < 2 || hyper.c_grid.is_empty() || hyper.gamma_grid.is_empty() {
        return Err(Error::InvalidParameter("grid search needs >= 2 folds and a non-empty grid".into()));
    }
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(rng);
    if let Some(cap) = hyper.cv_max_samples {
        idx.truncate(cap.max(hyper.folds));
    }
    let folds: Vec<(Dataset<T>, Dataset<T>)> = (0..hyper.folds)
        .map(|f| {
            let held: Vec<usize> = idx.iter().enumerate().filter(|(k, _)| k % hyper.folds == f).map(|(_, &i)| i).collect();
            let kept: Vec<usize> = idx.iter().enumerate().filter(|(k, _)| k % hyper.folds != f).map(|(_, &i)| i).collect();
            (train.subset(&kept), train.subset(&held))
        })
        .collect();
    let mut grid = Vec::new();
    for &c in &hyper.c_grid {
        for &g in &hyper.gamma_grid {
            grid.push((c, g));
        }
    }
    grid.into_par_iter()
        .map(|(c, g)| {
            let mut correct = 0usize;
            let mut total = 0usize;
            for (fit, held) in &folds {
                if held.is_empty() {
                    continue;
                }
                let model = match fit_svm(fit, c, g, hyper.scheme, hyper.tolerance) {
                    Ok(m) => m,
                    Err(Error::TrainingInput(_)) => continue,
                    Err(e) => return Err(e),
                };
                let feats: Vec<&[T]> = held.samples.iter().map(|s| s.feature.as_slice()).collect();
                let pred = model.predict_batch(&feats)?;
                correct += pred.iter().zip(&held.samples).filter(|(p, s)| **p == s.label).count();
                total += held.len();
            }
            Ok((c, g, if total == 0 { 0.0 } else { correct as f64 / total as f64 }))
        })
        .collect()
}

/// Grid search over `(C, gamma)` followed by a final fit on the full set.
/// Ties go to the smaller `C`, then the smaller `gamma`.
pub fn train_svm<T: Real, R: Rng + ?Sized>(train: &Dataset<T>, hyper: &SvmHyper, rng: &mut R) -> Result<SvmModel<T>> {
    super::check_training_set(train)?;
    if let ([c], [g]) = (hyper.c_grid.as_slice(), hyper.gamma_grid.as_slice()) {
        return fit_svm(train, *c, *g, hyper.scheme, hyper.tolerance);
    }
    let scores = grid_search(train, hyper, rng)?;
    let mut best: Option<(f64, f64, f64)> = None;
    for (c, g, acc) in scores {
        let better = match best {
            None => true,
            Some((bc, bg, bacc)) => acc > bacc || (acc == bacc && (c < bc || (c == bc && g < bg))),
        };
        if better {
            best = Some((c, g, acc));
        }
    }
    let (c, g, _) = best.expect("non-empty grid");
    fit_svm(train, c, g, hyper.scheme, hyper.tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use crate::simulate::{Provenance, TdoaSample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(points: Vec<(Vec<f64>, usize)>, classes: usize) -> Dataset<f64> {
        let cfg = FieldConfig::<f64>::unit(classes, 2).unwrap();
        Dataset {
            samples: points
                .into_iter()
                .map(|(feature, label)| TdoaSample { source: cfg.cell_center(label), feature, label, provenance: Provenance::Real })
                .collect(),
            sensor_count: 3,
            config: cfg,
        }
    }

    fn accuracy(model: &SvmModel<f64>, ds: &Dataset<f64>) -> f64 {
        let feats: Vec<&[f64]> = ds.samples.iter().map(|s| s.feature.as_slice()).collect();
        let pred = model.predict_batch(&feats).unwrap();
        pred.iter().zip(&ds.samples).filter(|(p, s)| **p == s.label).count() as f64 / ds.len() as f64
    }

    #[test]
    fn separable_clusters_are_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = (0..60)
            .map(|i| {
                let l = i % 2;
                let base = if l == 0 { -2.0 } else { 2.0 };
                (vec![base + rng.gen::<f64>() * 0.5, rng.gen::<f64>()], l)
            })
            .collect();
        let ds = dataset(pts, 2);
        for scheme in [Multiclass::OneVsRest, Multiclass::OneVsOne] {
            for gamma in [0.25, 1.0, 4.0] {
                let m = fit_svm(&ds, 64.0, gamma, scheme, KKT_TOLERANCE).unwrap();
                assert_eq!(accuracy(&m, &ds), 1.0);
            }
        }
    }

    #[test]
    fn xor_needs_the_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = (0..200)
            .map(|_| {
                let (x, y) = (rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
                (vec![x, y], usize::from((x > 0.0) != (y > 0.0)))
            })
            .collect();
        let ds = dataset(pts, 2);
        let m = train_svm(&ds, &SvmHyper::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(accuracy(&m, &ds) >= 0.95);
    }

    #[test]
    fn duals_respect_box_and_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = (0..120)
            .map(|i| {
                let l = i % 4;
                let (cx, cy) = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)][l];
                (vec![cx + 0.4 * rng.gen::<f64>(), cy + 0.4 * rng.gen::<f64>()], l)
            })
            .collect();
        let ds = dataset(pts, 4);
        for scheme in [Multiclass::OneVsRest, Multiclass::OneVsOne] {
            let m = fit_svm(&ds, 2.0, 2.0, scheme, KKT_TOLERANCE).unwrap();
            for machine in &m.machines {
                assert!(machine.coef.iter().all(|c| c.abs() > 0.0 && c.abs() <= 2.0 + 1e-12));
            }
            assert!(m.audit(&ds).unwrap() <= 1e-3);
        }
    }

    #[test]
    fn degenerate_training_set_rejected() {
        let ds = dataset(vec![(vec![0.0, 1.0], 1), (vec![1.0, 1.0], 1)], 2);
        assert!(matches!(fit_svm(&ds, 1.0, 1.0, Multiclass::OneVsRest, 1e-3), Err(Error::TrainingInput(_))));
    }

    #[test]
    fn grid_ties_prefer_small_c_then_gamma() {
        let pts = (0..30).map(|i| (vec![if i % 2 == 0 { -5.0 } else { 5.0 }, 0.0], i % 2)).collect();
        let ds = dataset(pts, 2);
        let hyper = SvmHyper { c_grid: vec![4.0, 1.0], gamma_grid: vec![2.0, 0.5], ..Default::default() };
        let m = train_svm(&ds, &hyper, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!((m.c, m.gamma), (1.0, 0.5));
    }
}
