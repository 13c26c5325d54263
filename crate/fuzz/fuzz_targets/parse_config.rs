#![no_main]

use csso::harness::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        if cfg.validate().is_ok() {
            let _ = cfg.schema();
            let _ = cfg.model_config();
            let _ = cfg.train_config();
            let _ = cfg.sim_config();
        }
    }
});
