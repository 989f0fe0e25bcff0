//! Fingerprint classifiers and physics-directed augmentation.

mod augment;
mod mlp;
mod model_io;
mod normalize;
mod svm;

pub use augment::{augmentation_schedule, generate_augmented, AugmentConfig, ScheduleOutcome, ScheduleRound};
pub use mlp::{train_mlp, train_mlp_logged, Dense, EpochLog, Gradients, MlpHyper, MlpModel, Network};
pub use normalize::{Normalizer, STD_FLOOR};
pub use svm::{
    fit_svm, grid_search, kkt_gap, solve_binary, train_svm, BinaryMachine, BinarySolution, Multiclass,
    SvmHyper, SvmModel, KKT_TOLERANCE,
};

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simulate::Dataset;

/// A trained grid-cell classifier.
#[derive(Clone, Debug, PartialEq)]
pub enum Classifier<T> {
    Mlp(MlpModel<T>),
    Svm(SvmModel<T>),
}

impl<T: Real> Classifier<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Mlp(_) => "mlp",
            Classifier::Svm(_) => "svm",
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Classifier::Mlp(m) => m.feature_dim(),
            Classifier::Svm(m) => m.feature_dim(),
        }
    }

    pub fn predict(&self, feature: &[T]) -> Result<usize> {
        match self {
            Classifier::Mlp(m) => m.predict(feature),
            Classifier::Svm(m) => m.predict(feature),
        }
    }

    pub fn predict_batch<F: AsRef<[T]> + Sync>(&self, features: &[F]) -> Result<Vec<usize>> {
        match self {
            Classifier::Mlp(m) => m.predict_batch(features),
            Classifier::Svm(m) => m.predict_batch(features),
        }
    }

    pub fn write_text<W: Write>(&self, out: W) -> Result<()> {
        model_io::write_classifier(self, out)
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        model_io::read_classifier(input)
    }
}

/// Grid-wise accuracy: share of samples whose predicted cell is the true cell.
pub fn evaluate<T: Real>(model: &Classifier<T>, test: &Dataset<T>) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let feats: Vec<&[T]> = test.samples.iter().map(|s| s.feature.as_slice()).collect();
    let pred = model.predict_batch(&feats)?;
    let hits = pred.iter().zip(&test.samples).filter(|(p, s)| **p == s.label).count();
    Ok(hits as f64 / test.len() as f64)
}

/// Training sets need at least two distinct labels and consistent feature
/// lengths.
pub(crate) fn check_training_set<T: Real>(train: &Dataset<T>) -> Result<()> {
    let dim = train.feature_dim();
    if let Some(bad) = train.samples.iter().find(|s| s.feature.len() != dim) {
        return Err(Error::Arity { expected: dim, actual: bad.feature.len() });
    }
    if let Some(bad) = train.samples.iter().find(|s| s.label >= train.class_count()) {
        return Err(Error::TrainingInput(format!("label {} out of range", bad.label)));
    }
    let first = train.samples.first().map(|s| s.label);
    if train.samples.iter().all(|s| Some(s.label) == first) {
        return Err(Error::TrainingInput("training set needs at least two distinct labels".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldConfig, Point};
    use crate::simulate::{Provenance, TdoaSample};

    fn constant_mlp(label: usize, classes: usize) -> Classifier<f64> {
        // Zero weights, bias peaked at `label`.
        let mut bias = vec![0.0; classes];
        bias[label] = 1.0;
        Classifier::Mlp(MlpModel {
            normalizer: Normalizer::identity(2),
            network: Network { layers: vec![Dense { inputs: 2, outputs: classes, weights: vec![0.0; 2 * classes], bias }] },
        })
    }

    #[test]
    fn evaluate_edge_cases() {
        let cfg = FieldConfig::<f64>::unit(2, 2).unwrap();
        let model = constant_mlp(3, 4);
        let empty = Dataset::<f64>::empty(3, cfg);
        assert!(matches!(evaluate(&model, &empty), Err(Error::EmptyEvaluation)));
        let mut ds = Dataset::empty(3, cfg);
        for k in 0..5 {
            ds.samples.push(TdoaSample { feature: vec![k as f64, 1.0], source: Point::new(0.9, 0.9), label: 3, provenance: Provenance::Real });
        }
        assert_eq!(evaluate(&model, &ds).unwrap(), 1.0);
        ds.samples[0].feature.push(0.0);
        assert!(matches!(evaluate(&model, &ds), Err(Error::Arity { .. })));
    }
}
