#![no_main]

use libfuzzer_sys::fuzz_target;
use traj_anticipation::datasets::idx::{encode_idx_images, parse_idx_images};

fuzz_target!(|data: &[u8]| {
    if let Ok(imgs) = parse_idx_images(data) {
        let images: Vec<Vec<u8>> = (0..imgs.count).map(|i| imgs.image(i).to_vec()).collect();
        let again = parse_idx_images(&encode_idx_images(imgs.rows, imgs.cols, &images)).unwrap();
        assert_eq!(again, imgs);
    }
});
