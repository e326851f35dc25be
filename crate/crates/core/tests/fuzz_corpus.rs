//! Replays the checked-in fuzz seeds through the same round-trip checks the
//! fuzz targets make, so regressions show up under plain `cargo test`.

use std::path::PathBuf;

use asaukit::approx::CurveTable;
use asaukit::datasets::{decode_container, encode_container, encode_idx, parse_idx, LabeledSet, MaskSet};
use asaukit::nn::{from_checkpoint, to_checkpoint};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn idx_seeds() {
    let mut decoded = 0;
    for (name, data) in seeds("idx") {
        let cut = (u16::from_le_bytes([data[0], data[1]]) as usize).min(data.len() - 2);
        let (images, labels) = data[2..].split_at(cut);
        if let Ok(set) = parse_idx(images, labels) {
            let (i, l) = encode_idx(&set).unwrap();
            assert!(parse_idx(&i, &l).unwrap() == set, "{name}");
            decoded += 1;
        }
    }
    assert!(decoded >= 3);
}

#[test]
fn container_seeds() {
    let reencode = |t: &[(String, asaukit::Tensor)]| {
        let named: Vec<_> = t.iter().map(|(n, t)| (n.as_str(), t)).collect();
        encode_container(&named).unwrap()
    };
    for (name, data) in seeds("container") {
        if let Ok(t) = decode_container(&data) {
            let bytes = reencode(&t);
            assert_eq!(reencode(&decode_container(&bytes).unwrap()), bytes, "{name}");
        }
        let _ = LabeledSet::from_container(&data);
        let _ = MaskSet::from_container(&data);
    }
    assert!(LabeledSet::from_container(&seeds("container").iter().find(|s| s.0 == "labeled").unwrap().1).is_ok());
}

#[test]
fn checkpoint_seeds() {
    let mut loaded = 0;
    for (name, data) in seeds("checkpoint") {
        let Ok(text) = String::from_utf8(data) else { continue };
        if let Ok(net) = from_checkpoint(&text) {
            let again = to_checkpoint(&net);
            assert_eq!(to_checkpoint(&from_checkpoint(&again).unwrap()), again, "{name}");
            loaded += 1;
        }
    }
    assert!(loaded >= 5, "{loaded}");
}

#[test]
fn curve_csv_seeds() {
    for (name, data) in seeds("curve_csv") {
        let Ok(text) = String::from_utf8(data) else { continue };
        if let Ok(table) = CurveTable::from_csv(&text) {
            let csv = table.to_csv();
            assert_eq!(CurveTable::from_csv(&csv).unwrap().to_csv(), csv, "{name}");
        }
    }
}
