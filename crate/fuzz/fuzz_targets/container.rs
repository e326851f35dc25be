#![no_main]

use asaukit::datasets::{decode_container, encode_container, LabeledSet, MaskSet};
use libfuzzer_sys::fuzz_target;

fn reencode(tensors: &[(String, asaukit::Tensor)]) -> Vec<u8> {
    let named: Vec<_> = tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    encode_container(&named).expect("decoded tensors re-encode")
}

// Byte comparison, since payloads may hold NaN.
fuzz_target!(|data: &[u8]| {
    if let Ok(tensors) = decode_container(data) {
        let bytes = reencode(&tensors);
        assert_eq!(reencode(&decode_container(&bytes).expect("round trip")), bytes);
    }
    let _ = LabeledSet::from_container(data);
    let _ = MaskSet::from_container(data);
});
