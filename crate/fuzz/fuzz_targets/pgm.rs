#![no_main]

use libfuzzer_sys::fuzz_target;
use traj_anticipation::frame::GrayFrame;

fuzz_target!(|data: &[u8]| {
    if let Ok(frame) = GrayFrame::from_pgm(data) {
        assert_eq!(GrayFrame::from_pgm(&frame.to_pgm()).unwrap(), frame);
    }
});
