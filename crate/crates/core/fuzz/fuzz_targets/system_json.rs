#![no_main]

use libfuzzer_sys::fuzz_target;
use storage_bounds::config::SystemDocument;
use storage_bounds::system::validate_system;

const MU: &str = "node,0,1\n0,10,20\n1,5,5\n";
const SIGMA: &str = "node,0,1\n0,1,1\n1,0,2\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = SystemDocument::from_json(text) else { return };
    let sidecar = |name: &str| -> storage_bounds::Result<String> {
        Ok(if name.contains("sigma") { SIGMA } else { MU }.to_string())
    };
    if let Ok(loaded) = doc.resolve(&sidecar) {
        let _ = validate_system(&loaded.system, &loaded.netload);
    }
});
