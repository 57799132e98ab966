#![no_main]

use libfuzzer_sys::fuzz_target;
use pme::sim::Design;

fuzz_target!(|data: &[u8]| {
    let Ok(design) = serde_json::from_slice::<Design>(data) else {
        return;
    };
    let json = serde_json::to_string(&design).unwrap();
    assert_eq!(serde_json::from_str::<Design>(&json).unwrap(), design);
});
