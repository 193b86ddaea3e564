#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = gpmvc::dataio::parse_view_csv(data, 0, None);
    let _ = gpmvc::dataio::parse_view_csv(data, 0, Some(3));
});
