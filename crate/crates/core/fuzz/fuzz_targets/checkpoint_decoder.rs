#![no_main]

use libfuzzer_sys::fuzz_target;
use survshape::nam::decode_checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(checkpoint) = decode_checkpoint(text) else { return };
    let x = vec![0.0; checkpoint.model.m()];
    let _ = checkpoint.model.psi(&x);
});
