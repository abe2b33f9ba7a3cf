#![no_main]
use bnplc::io::parse_dendrogram_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = parse_dendrogram_json(data, "fuzz") {
        let n = f.dendrogram.n;
        assert_eq!(f.patient_ids.len(), n);
        if let Some(last) = f.dendrogram.merges.last() {
            assert_eq!(last.size, n);
        }
    }
});
