#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = gpmvc::report::parse_sweep_spec(data) {
        assert!(spec.repeats >= 1);
        assert!(spec.ratios.iter().all(|r| (0.0..=1.0).contains(r)));
    }
});
