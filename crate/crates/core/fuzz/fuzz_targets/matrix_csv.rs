#![no_main]

use libfuzzer_sys::fuzz_target;
use storage_bounds::system::io::{read_matrix_csv, write_matrix_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = read_matrix_csv(text) {
        if m.iter().flatten().all(|x| x.is_finite()) {
            let again = read_matrix_csv(&write_matrix_csv(&m)).expect("written matrix parses");
            assert_eq!(again.len(), m.len());
        }
    }
});
