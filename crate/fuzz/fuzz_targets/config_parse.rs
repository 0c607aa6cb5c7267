#![no_main]

use fbi_cli::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        // whatever parses must survive a write and reparse unchanged
        let canon = cfg.to_text();
        let again = RunConfig::parse(&canon).expect("canonical text reparses");
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), canon);
    }
});
