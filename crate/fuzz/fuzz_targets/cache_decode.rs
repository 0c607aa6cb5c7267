#![no_main]

use fbi_cli::cache::{decode, decode_payload, encode_payload, Kind, HEADER_LEN};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((_, payload)) = decode(data) {
        // accepted files are canonical
        assert_eq!(encode_payload(&payload), &data[HEADER_LEN..]);
    }

    // bare payloads, kind taken from the first byte
    if let Some((&k, body)) = data.split_first() {
        if let Some(kind) = Kind::from_byte(k % 4) {
            if let Ok(payload) = decode_payload(kind, body) {
                assert_eq!(encode_payload(&payload), body);
            }
        }
    }
});
