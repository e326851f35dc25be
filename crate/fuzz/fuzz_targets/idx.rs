#![no_main]

use asaukit::datasets::{encode_idx, parse_idx};
use libfuzzer_sys::fuzz_target;

// First two bytes pick where the image file ends and the label file begins.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let cut = (u16::from_le_bytes([data[0], data[1]]) as usize).min(data.len() - 2);
    let (images, labels) = data[2..].split_at(cut);
    if let Ok(set) = parse_idx(images, labels) {
        let (i, l) = encode_idx(&set).expect("decoded sets re-encode");
        assert!(parse_idx(&i, &l).expect("re-encoded sets decode") == set);
    }
});
