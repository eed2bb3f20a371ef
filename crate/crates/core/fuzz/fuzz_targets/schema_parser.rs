#![no_main]

use libfuzzer_sys::fuzz_target;
use survshape::data::DatasetSchema;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(schema) = text.parse::<DatasetSchema>() {
        // Anything accepted must print back to an equivalent schema.
        let again: DatasetSchema = schema.to_string().parse().expect("display output must parse");
        assert_eq!(again, schema);
    }
});
