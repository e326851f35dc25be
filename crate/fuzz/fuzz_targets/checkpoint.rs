#![no_main]

use asaukit::nn::{from_checkpoint, to_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(net) = from_checkpoint(text) {
        let again = to_checkpoint(&net);
        let back = from_checkpoint(&again).expect("written checkpoints load");
        assert_eq!(to_checkpoint(&back), again);
    }
});
