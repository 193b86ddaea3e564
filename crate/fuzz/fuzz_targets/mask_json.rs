#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(split) = gpmvc::dataio::parse_mask(data) {
        // A parsed mask must satisfy the partition invariants.
        let n = split.num_samples();
        assert_eq!(
            split.paired_idx.len() + split.unpaired.len(),
            n,
            "partition sizes"
        );
        for &i in split.paired_idx.iter().chain(split.unpaired.keys()) {
            assert!(i < n);
        }
        // Round-trip through the serializer parses back.
        let bytes = split.to_json();
        let again = gpmvc::dataio::parse_mask(&bytes).expect("roundtrip");
        assert_eq!(split, again);
    }
});
