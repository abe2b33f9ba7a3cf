#![no_main]
use bnplc::io::{parse_trace, write_trace_to, TraceFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(file) = parse_trace(data, "fuzz") else {
        return;
    };
    if let TraceFile::Mixture { trace, .. } = &file {
        for d in &trace.draws {
            assert_eq!(d.state.assignments.len(), trace.patient_ids.len());
            let _ = d.state.cluster_counts();
        }
    }
    let mut buf = Vec::new();
    write_trace_to(&mut buf, &file).unwrap();
    assert_eq!(parse_trace(buf.as_slice(), "fuzz").unwrap(), file);
});
