//! End to end on a small grid: real events, tomography, augmentation,
//! training and localization.

use phyaug::field::{build_synthetic_slowness, place_boundary_sensors, FieldConfig, WavyBarrierParams};
use phyaug::learn::{augmentation_schedule, evaluate, fit_svm, AugmentConfig, Classifier, Multiclass};
use phyaug::locate::{de_localize, mean_localization_error, DeConfig};
use phyaug::simulate::{dataset_from_events, record_events, sample_real_events, Provenance};
use phyaug::tomo::{estimate_slowness, TomoInput, TomoPrior};
use phyaug::{rng_from_seed, Point64};

#[test]
fn augmentation_beats_few_real_samples() {
    let field = FieldConfig::new(1.0, 1.0, 6, 6).unwrap();
    let truth = build_synthetic_slowness(&field, &WavyBarrierParams::default()).unwrap();
    let sensors = place_boundary_sensors(&field);
    let mut rng = rng_from_seed(2024);
    let xi = 0.02;

    let sources = sample_real_events(30, &field, 0.2, &mut rng).unwrap();
    let real_events = record_events(&sources, &truth, &sensors, xi, &mut rng).unwrap();
    let real = dataset_from_events(&real_events, sensors.len(), &field, Provenance::Real).unwrap();
    let sources = sample_real_events(600, &field, 0.2, &mut rng).unwrap();
    let test_events = record_events(&sources, &truth, &sensors, xi, &mut rng).unwrap();
    let test = dataset_from_events(&test_events, sensors.len(), &field, Provenance::Real).unwrap();

    let input = TomoInput::from_events(&real_events, &sensors, &field).unwrap();
    let s_hat = estimate_slowness(&input, &TomoPrior::defaults_for(&field).with_noise_level(xi, &input)).unwrap();
    assert!(s_hat.relative_error(&truth) < 0.2);

    let baseline = Classifier::Svm(fit_svm(&real, 8.0, 1.0, Multiclass::OneVsOne, 1e-3).unwrap());
    let mut trainer = |d: &_| fit_svm(d, 8.0, 1.0, Multiclass::OneVsOne, 1e-3).map(Classifier::Svm);
    let schedule = AugmentConfig { max_rounds: 2, inject_noise: Some(xi), ..AugmentConfig::default() };
    let out = augmentation_schedule(&s_hat, &real, &sensors, &mut trainer, &schedule, &mut rng).unwrap();
    assert!(out.final_volume >= 100 * field.cell_count());

    let (acc_real, acc_aug) = (evaluate(&baseline, &test).unwrap(), evaluate(&out.model, &test).unwrap());
    assert!(acc_aug > acc_real + 0.05, "real-only {acc_real}, augmented {acc_aug}");

    // DE against the same estimate lands near the true sources.
    let found: Vec<Point64> = test.samples[..20]
        .iter()
        .enumerate()
        .map(|(k, s)| de_localize(&s.feature, &s_hat, &sensors, &DeConfig { seed: k as u64, ..DeConfig::default() }).unwrap().point)
        .collect();
    let truth_pts: Vec<Point64> = test.samples[..20].iter().map(|s| s.source).collect();
    assert!(mean_localization_error(&found, &truth_pts).unwrap() < 0.1);
}
