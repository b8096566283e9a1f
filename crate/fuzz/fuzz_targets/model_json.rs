#![no_main]

use libfuzzer_sys::fuzz_target;
use traj_anticipation::model::{model_from_json, model_to_json};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = model_from_json(data) {
        model_from_json(&model_to_json(&model).unwrap()).unwrap();
    }
});
