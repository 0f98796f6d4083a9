#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(params) = text.parse::<docbin::pipeline::ParamVector>() {
        let printed = params.to_string();
        let again: docbin::pipeline::ParamVector = printed.parse().expect("printed params parse");
        assert_eq!(again, params);
    }
    let _ = docbin::config::parse_budget(text);
});
