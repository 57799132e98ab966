#![no_main]

use libfuzzer_sys::fuzz_target;
use pme::cli::{parse_matrix, parse_trim};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_matrix(s) {
        assert!(m.nrows() > 0 && m.ncols() > 0);
        assert!(m.iter().all(|v| v.is_finite()));
    }
    if let Ok(t) = parse_trim(s) {
        assert!(t.lower_pct <= t.upper_pct);
    }
});
