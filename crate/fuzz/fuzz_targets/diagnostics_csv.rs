#![no_main]

use ekflow::output::{csv_record, parse_diagnostics, write_diagnostics};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_diagnostics(data) {
        if rows.is_empty() {
            return;
        }
        let mut buf = Vec::new();
        write_diagnostics(&mut buf, &rows).unwrap();
        let back = parse_diagnostics(&buf).expect("written table parses");
        assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(csv_record(a), csv_record(b));
        }
    }
});
