#![no_main]

use libfuzzer_sys::fuzz_target;
use storage_bounds::qp::QpProblem;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = QpProblem::from_dump(text) {
        QpProblem::from_dump(&p.to_dump()).expect("written dump parses");
    }
});
