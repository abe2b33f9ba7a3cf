#![no_main]
use bnplc::io::parse_partition_csv;
use bnplc::partition::relabel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = parse_partition_csv(data, "fuzz") {
        assert_eq!(p.patient_ids.len(), p.labels.len());
        assert!(p.labels.iter().all(|&l| l >= 1));
        let r = relabel(&p.labels);
        assert!(r.iter().all(|&l| l >= 1 && l <= p.labels.len()));
    }
});
