#![no_main]

use libfuzzer_sys::fuzz_target;
use traj_anticipation::datasets::idx::{decode_mnist, encode_idx_labels, parse_idx_labels};

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = parse_idx_labels(data) {
        assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
    }
    // split the input into an image file and a label file
    if data.len() > 2 {
        let cut = (data[0] as usize * 256 + data[1] as usize) % data.len();
        let _ = decode_mnist(&data[2..cut.max(2)], &data[cut.max(2)..]);
    }
});
