#![no_main]

use libfuzzer_sys::fuzz_target;
use traj_anticipation::datasets::Manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::from_json(data) {
        Manifest::from_json(&m.to_json().unwrap()).unwrap();
    }
});
