#![no_main]
use espar_core::coupling::CouplingMatrix;
use espar_core::text::{parse_matrix, write_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(m) = parse_matrix(s) else { return };
    assert!(m.is_square());
    assert_eq!(parse_matrix(&write_matrix(&m)).unwrap(), m);
    if let Ok(z) = CouplingMatrix::from_text(s) {
        assert_eq!(CouplingMatrix::from_text(&z.to_text()).unwrap(), z);
    }
});
