#![no_main]

use evidencer::models::{EnsembleModel, FeatureMatrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = EnsembleModel::from_json(text, None) {
        // a validated model must predict without panicking
        let width = model.feature_names.len();
        let x = FeatureMatrix::from_dense(&[vec![0.0; width], vec![1.0; width]]).unwrap();
        for p in model.predict_proba(&x).unwrap() {
            assert!((0.0..=1.0).contains(&p), "probability {p}");
        }
    }
});
