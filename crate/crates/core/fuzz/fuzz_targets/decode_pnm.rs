#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(image) = docbin::pnm::decode(data) {
        assert_eq!(image.data().len(), image.width() * image.height());
        // Whatever decodes must survive a round trip through the encoder.
        let again = docbin::pnm::decode(&docbin::pnm::encode(&image)).expect("re-decode");
        assert_eq!(again, image);
    }
});
