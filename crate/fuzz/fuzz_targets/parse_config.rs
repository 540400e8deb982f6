#![no_main]
use espar_core::sweep::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(s) {
        assert!(!cfg.power_db.is_empty());
        assert!(cfg.power_db.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }
});
