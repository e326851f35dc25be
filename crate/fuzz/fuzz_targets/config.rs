#![no_main]

use asaukit_cli::config::{parse_override, resolve};
use libfuzzer_sys::fuzz_target;

// Line one onwards is the JSON config, except that lines starting with
// `--override ` are pulled out as overrides.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (overrides, body): (Vec<&str>, Vec<&str>) = text.lines().partition(|l| l.starts_with("--override "));
    let overrides: Vec<String> = overrides.iter().map(|l| l["--override ".len()..].to_string()).collect();
    for o in &overrides {
        let _ = parse_override(o);
    }
    let _ = resolve(Some(&body.join("\n")), &overrides, None, None);
});
