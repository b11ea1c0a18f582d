#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ekflow::config::parse_config_str(text) {
        // Anything accepted must echo to a config that parses to the same value.
        let echo = cfg.to_toml();
        let again = ekflow::config::parse_config_str(&echo).expect("echo parses");
        assert_eq!(again, cfg);
    }
});
