#![no_main]

use evidencer::features::read_triplets;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_triplets(data);
});
