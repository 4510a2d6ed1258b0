#![no_main]

use libfuzzer_sys::fuzz_target;
use qswitch_cli::{resolve, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::from_toml(text) else {
        return;
    };
    // Accepted documents survive a manifest round trip unchanged.
    let resolved = resolve(&cfg);
    let again = ExperimentConfig::from_toml(&resolved.to_toml()).expect("manifest reparses");
    assert_eq!(resolve(&again), resolved);
});
