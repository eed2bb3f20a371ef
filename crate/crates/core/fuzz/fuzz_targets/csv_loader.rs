#![no_main]

use libfuzzer_sys::fuzz_target;
use survshape::data::{DatasetSchema, Encoder, RawDataset};

const SCHEMA: &str = "time = t\nevent = e\nnumeric = x\ncategorical = g\nbinary = b\nindicator = f\n";

fuzz_target!(|data: &[u8]| {
    let schema: DatasetSchema = SCHEMA.parse().unwrap();
    let Ok(raw) = RawDataset::from_reader(data, &schema) else { return };
    let Ok(encoder) = Encoder::fit(&raw) else { return };
    if let Ok(ds) = encoder.transform(&raw) {
        assert_eq!(ds.n(), raw.len());
        assert!(ds.samples().iter().all(|s| s.features.iter().all(|v| v.is_finite())));
    }
});
