// cargo +nightly fuzz run csv_loader

#![no_main]
use bnplc::io::{parse_longitudinal, write_longitudinal, LoadOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let log = data.first().is_some_and(|b| b & 1 == 1);
    let Ok(loaded) = parse_longitudinal(data, "fuzz", LoadOptions { log }) else {
        return;
    };
    for p in &loaded.patients {
        assert!(p.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.times.len(), p.values.len());
    }
    // Whatever loads must survive a write and reload unchanged.
    let mut buf = Vec::new();
    write_longitudinal(&mut buf, &loaded.patients, None).unwrap();
    let back = parse_longitudinal(buf.as_slice(), "fuzz", LoadOptions::default()).unwrap();
    assert_eq!(back.patients, loaded.patients);
});
