#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = gpmvc::checkpoint::decode_checkpoint(data) {
        // Anything that decodes must re-encode to identical bytes.
        let bytes = gpmvc::checkpoint::encode_checkpoint(
            &ckpt.model,
            ckpt.meta.k,
            ckpt.centroids.as_ref(),
        );
        let again = gpmvc::checkpoint::decode_checkpoint(&bytes).expect("roundtrip");
        assert_eq!(again.meta.dims, ckpt.meta.dims);
    }
});
