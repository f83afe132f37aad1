mod common;

use std::sync::Arc;

use common::{corpus, pattern, SEED};
use deepssim::dataset::{EvalRecord, Polarity};
use deepssim::distort::gaussian_blur;
use deepssim::eval::evaluate;
use deepssim::{deepssim, deepssim_lite, DeepSsim, Error, Image, SimilarityConfig, WeightContainer};

fn seeded() -> &'static WeightContainer {
    static W: std::sync::OnceLock<WeightContainer> = std::sync::OnceLock::new();
    W.get_or_init(|| WeightContainer::seeded(SEED))
}

#[test]
fn self_similarity_is_one() {
    for (w, h) in [(32, 32), (45, 70), (96, 64)] {
        let img = pattern(w, h, w as u64);
        let q = deepssim(&img, &img, seeded(), &SimilarityConfig::default()).unwrap();
        assert!((q.value() - 1.0).abs() <= 1e-6, "{w}x{h}: {q}");
    }
}

#[test]
fn different_resolutions_compare() {
    let reference = pattern(128, 128, 4);
    let scorer = DeepSsim::new(seeded(), SimilarityConfig::default()).unwrap();
    for (w, h) in [(64, 64), (40, 90), (130, 127)] {
        let q = scorer.score(&reference, &pattern(w, h, 4)).unwrap().value();
        assert!(q.is_finite() && q <= 1.0 + 1e-9, "{w}x{h}: {q}");
    }
}

#[test]
fn undersized_input_is_rejected() {
    let small = Image::filled(31, 64, [0.5; 3]).unwrap();
    let ok = Image::filled(32, 64, [0.5; 3]).unwrap();
    let err = deepssim(&small, &ok, seeded(), &SimilarityConfig::default()).unwrap_err();
    assert!(matches!(err, Error::ImageTooSmall { width: 31, height: 64, min: 32 }));
}

#[test]
fn lite_equals_single_full_window() {
    let (x, y) = (pattern(48, 48, 1), pattern(48, 48, 2));
    let lite = deepssim_lite(&x, &y, seeded()).unwrap();
    let full = SimilarityConfig { window: 512, stride: 512, ..Default::default() };
    assert_eq!(lite, deepssim(&x, &y, seeded(), &full).unwrap());
}

#[test]
fn lite_regression_anchor() {
    let x = Image::filled(64, 64, [0.5, 0.5, 0.5]).unwrap();
    let y = Image::filled(64, 64, [0.25, 0.25, 0.25]).unwrap();
    let q = deepssim_lite(&x, &y, seeded()).unwrap().value();
    assert!((q - LITE_ANCHOR).abs() <= 1e-6, "{q}");
}

// Frozen from the seeded container.
const LITE_ANCHOR: f64 = 0.136_614_496_578;

#[test]
fn feature_hook_applies_before_gram() {
    let (x, y) = (pattern(48, 48, 1), pattern(48, 48, 5));
    let plain = DeepSsim::new(seeded(), SimilarityConfig::default()).unwrap();
    let zeroing = DeepSsim::new(seeded(), SimilarityConfig::default())
        .unwrap()
        .with_feature_hook(Arc::new(|f| f.data_mut().iter_mut().for_each(|v| *v = 0.0)));
    assert!(plain.score(&x, &y).unwrap().value() < 1.0);
    // all-zero features give identical (zero) Gram matrices
    assert_eq!(zeroing.score(&x, &y).unwrap().value(), 1.0);
}

#[test]
fn blur_ladder_ranks_with_subjective_scores() {
    let images = corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for (name, img) in images.iter().take(3) {
        let ref_path = dir.path().join(format!("{name}.png"));
        img.save(&ref_path).unwrap();
        for (i, sigma) in [0.5f32, 1.5, 3.0].into_iter().enumerate() {
            let test_path = dir.path().join(format!("{name}_{i}.png"));
            gaussian_blur(img, sigma).unwrap().save(&test_path).unwrap();
            records.push(EvalRecord {
                ref_path: ref_path.clone(),
                test_path,
                subjective: sigma as f64 * 10.0,
                polarity: Polarity::LowerBetter,
                group_id: Some(name.clone()),
            });
        }
    }
    let scorer = DeepSsim::new(seeded(), SimilarityConfig::default()).unwrap();
    let report = evaluate(
        |r: &EvalRecord| Ok(scorer.score(&Image::open(&r.ref_path)?, &Image::open(&r.test_path)?)?.value()),
        &records,
    )
    .unwrap();
    assert!(report.subjective_negated);
    assert_eq!(report.per_group_krcc.as_deref(), Some(&[1.0, 1.0, 1.0][..]));
    assert_eq!(report.krcc_std, 0.0);
}
