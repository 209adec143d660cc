#![no_main]

use libfuzzer_sys::fuzz_target;
use storage_bounds::price::PriceScenarioSet;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = PriceScenarioSet::from_csv(text) {
        PriceScenarioSet::from_csv(&set.to_csv()).expect("written scenarios parse");
    }
});
