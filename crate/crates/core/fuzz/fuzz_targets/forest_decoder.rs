#![no_main]

use libfuzzer_sys::fuzz_target;
use survshape::forest::{decode_forest, encode_forest};
use survshape::survival::ChfPredictor;

fuzz_target!(|data: &[u8]| {
    let Ok(forest) = decode_forest(data) else { return };
    // A decoded forest must predict without panicking and re-encode losslessly.
    let x = vec![0.0; forest.n_features()];
    let _ = forest.predict_chf(&x);
    assert_eq!(decode_forest(&encode_forest(&forest)).unwrap(), forest);
});
