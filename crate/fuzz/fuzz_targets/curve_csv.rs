#![no_main]

use asaukit::approx::CurveTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = CurveTable::from_csv(text) {
        let csv = table.to_csv();
        assert_eq!(CurveTable::from_csv(&csv).expect("written tables parse").to_csv(), csv);
    }
});
