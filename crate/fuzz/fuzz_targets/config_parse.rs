#![no_main]

use fujita_lab::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        let again = ExperimentConfig::parse(&cfg.serialize()).expect("serialized config must parse");
        assert_eq!(cfg, again);
        let _ = cfg.run_config();
        let _ = cfg.weight();
    }
});
