#![no_main]
use espar_core::text::parse_power_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_power_list(s) {
        assert!(!values.is_empty());
        assert!(values.iter().all(|v| v.is_finite()));
    }
});
