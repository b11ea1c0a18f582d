#![no_main]

use ekflow::snapshot::Snapshot;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(snap) = Snapshot::decode(data) {
        assert_eq!(snap.encode(), data);
        if let Ok(model) = ekflow::config::parse_config_str(&snap.config).and_then(|c| c.model()) {
            let _ = snap.to_state(&model);
        }
    }
});
