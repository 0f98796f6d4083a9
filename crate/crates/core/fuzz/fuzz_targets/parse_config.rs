#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = docbin::config::Config::parse(text) {
        config.search_space().expect("accepted config yields a search space");
        assert!(config.budget.n_init >= 2);
    }
});
