use fbi::bands::{build_bundle_with_tol, find_magic_alpha, BlochBundle, MagicAlpha};
use fbi::form_factors::{compute_table, extend_flavor, Flavor, FormFactorTable};
use fbi::{build_kgrid, build_lattice, Convention};
use fbi_cli::cache::*;
use proptest::prelude::*;
use std::sync::OnceLock;

/// Small, coarse data: two momenta, a three-shell disk, loose flatness.
fn bundle() -> &'static BlochBundle {
    static B: OnceLock<BlochBundle> = OnceLock::new();
    B.get_or_init(|| {
        let lattice = build_lattice(Convention::Standard);
        let radius = 3.0 * lattice.g_norm();
        let alpha = find_magic_alpha(&lattice, radius, (0.3, 0.9), 1e-2).unwrap().alpha;
        let grid = build_kgrid(&lattice, 2, 1).unwrap();
        build_bundle_with_tol(&grid, alpha, radius, 1e-2).unwrap()
    })
}

fn table() -> &'static FormFactorTable {
    static T: OnceLock<FormFactorTable> = OnceLock::new();
    T.get_or_init(|| compute_table(bundle(), 2.0 * bundle().lattice().g_norm()))
}

fn magic() -> MagicAlpha {
    MagicAlpha { alpha: 0.5857, residual: 3.25e-16, evaluations: 77 }
}

fn same_bundle(a: &BlochBundle, b: &BlochBundle) {
    assert_eq!(a.grid, b.grid);
    assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
    assert_eq!(a.radius.to_bits(), b.radius.to_bits());
    assert_eq!(a.valley, b.valley);
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(x.k, y.k);
        assert_eq!(x.basis.g_list(), y.basis.g_list());
        assert_eq!(x.w, y.w);
        assert_eq!(x.residual.to_bits(), y.residual.to_bits());
        assert_eq!(x.next_singular.to_bits(), y.next_singular.to_bits());
        assert_eq!(x.offsets, y.offsets);
    }
}

fn same_table(a: &FormFactorTable, b: &FormFactorTable) {
    assert_eq!(a.grid(), b.grid());
    assert_eq!(a.flavor(), b.flavor());
    assert_eq!(a.radius().to_bits(), b.radius().to_bits());
    assert_eq!(a.transfers(), b.transfers());
    assert_eq!(a.entries(), b.entries());
    assert_eq!(a.tail_norm().to_bits(), b.tail_norm().to_bits());
}

#[test]
fn header_layout_is_bit_exact() {
    let bytes = encode("key", &Payload::Magic(magic()));
    assert_eq!(&bytes[0..4], b"FBI1");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), VERSION);
    assert_eq!(bytes[6], 1);
    assert_eq!(bytes[7], 0);
    assert_eq!(&bytes[8..40], &key_hash("key"));
    let len = u64::from_le_bytes(bytes[40..48].try_into().unwrap());
    assert_eq!(len as usize, bytes.len() - HEADER_LEN);
    assert_eq!(len, 24);
    let h = decode_header(&bytes).unwrap();
    assert_eq!(h.kind, Kind::Magic);
    assert_eq!(h.len, 24);
}

#[test]
fn round_trips_are_exact() {
    let (_, p) = decode(&encode("m", &Payload::Magic(magic()))).unwrap();
    match p {
        Payload::Magic(m) => assert_eq!(m, magic()),
        _ => panic!("wrong kind"),
    }
    let (h, p) = decode(&encode("b", &Payload::Bundle(bundle().clone()))).unwrap();
    assert_eq!(h.kind, Kind::Bundle);
    match p {
        Payload::Bundle(b) => same_bundle(&b, bundle()),
        _ => panic!("wrong kind"),
    }
    for flavor in [Flavor::Spinless, Flavor::Valley, Flavor::ValleySpin] {
        let t = extend_flavor(table(), bundle(), flavor).unwrap();
        let (_, p) = decode(&encode("t", &Payload::Table(t.clone()))).unwrap();
        match p {
            Payload::Table(back) => same_table(&back, &t),
            _ => panic!("wrong kind"),
        }
    }
}

#[test]
fn time_reversed_bundle_round_trips() {
    let partner = bundle().time_reversed_partner();
    let (_, p) = decode(&encode("b", &Payload::Bundle(partner.clone()))).unwrap();
    match p {
        Payload::Bundle(b) => same_bundle(&b, &partner),
        _ => panic!("wrong kind"),
    }
}

#[test]
fn corruption_is_detected() {
    let good = encode("t", &Payload::Table(table().clone()));
    assert!(decode(&good).is_ok());

    assert_eq!(decode(&good[..3]).unwrap_err(), CacheError::Truncated);
    assert_eq!(decode(&good[..50]).unwrap_err(), CacheError::Truncated);

    let mut bad = good.clone();
    bad[0] = b'X';
    assert_eq!(decode(&bad).unwrap_err(), CacheError::BadMagic);

    let mut bad = good.clone();
    bad[4] = 9;
    assert_eq!(decode(&bad).unwrap_err(), CacheError::Version(9));

    let mut bad = good.clone();
    bad[6] = 7;
    assert_eq!(decode(&bad).unwrap_err(), CacheError::UnknownKind(7));

    let mut bad = good.clone();
    bad[7] = 1;
    assert!(matches!(decode(&bad).unwrap_err(), CacheError::Malformed(_)));

    let mut bad = good.clone();
    bad.pop();
    assert!(matches!(decode(&bad).unwrap_err(), CacheError::Length { .. }));

    let mut bad = good.clone();
    let last = bad.len() - 1;
    bad[last] ^= 1;
    assert_eq!(decode(&bad).unwrap_err(), CacheError::Checksum);

    let mut bad = good.clone();
    bad[50] ^= 1;
    assert_eq!(decode(&bad).unwrap_err(), CacheError::Checksum);
}

#[test]
fn inconsistent_payloads_are_rejected() {
    let body = encode_payload(&Payload::Table(table().clone()));
    // flavor byte says valley but the entries are 2x2
    let mut b = body.clone();
    b[17] = 1;
    assert!(decode_payload(Kind::Table, &b).is_err());
    // grid dimension changed
    let mut b = body.clone();
    b[1] = 3;
    assert!(decode_payload(Kind::Table, &b).is_err());
    // a transfer index moved
    let mut b = body.clone();
    b[34 + 8] ^= 1;
    assert!(decode_payload(Kind::Table, &b).is_err());
    // trailing bytes
    let mut b = body.clone();
    b.push(0);
    assert!(decode_payload(Kind::Table, &b).is_err());
    // a bundle body read as a table
    let bb = encode_payload(&Payload::Bundle(bundle().clone()));
    assert!(decode_payload(Kind::Table, &bb).is_err());
    // radius out of range
    let mut b = bb.clone();
    b[25..33].copy_from_slice(&1e9f64.to_le_bytes());
    assert!(decode_payload(Kind::Bundle, &b).is_err());
    // non-finite coefficient
    let mut m = encode_payload(&Payload::Magic(magic()));
    m[0..8].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(decode_payload(Kind::Magic, &m).is_err());
}

#[test]
fn store_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let mut cache = Cache::new(dir.path().join("nested"));
    assert!(cache.load(Kind::Magic, "k").unwrap().is_none());
    assert_eq!(cache.stats.misses, 1);
    let path = cache.store("k", &Payload::Magic(magic())).unwrap();
    assert_eq!(path, cache.path_for(Kind::Magic, "k"));
    assert!(matches!(cache.load(Kind::Magic, "k").unwrap(), Some(Payload::Magic(m)) if m == magic()));
    assert_eq!(cache.stats.hits, 1);
    // no temporary files left behind
    assert_eq!(std::fs::read_dir(cache.dir()).unwrap().count(), 1);

    // another version is stale, not corrupt
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4] = 0;
    std::fs::write(&path, &bytes).unwrap();
    assert!(cache.load(Kind::Magic, "k").unwrap().is_none());
    assert_eq!(cache.stats.stale, 1);

    // a flipped payload bit is an error
    let mut bytes = encode("k", &Payload::Magic(magic()));
    let n = bytes.len();
    bytes[n - 1] ^= 0x80;
    std::fs::write(&path, &bytes).unwrap();
    assert_eq!(cache.load(Kind::Magic, "k").unwrap_err(), CacheError::Checksum);

    // a file stored under the wrong name
    std::fs::write(&path, encode("other", &Payload::Magic(magic()))).unwrap();
    assert_eq!(cache.load(Kind::Magic, "k").unwrap_err(), CacheError::KeyMismatch);
    std::fs::write(&path, encode("k", &Payload::Table(table().clone()))).unwrap();
    assert!(matches!(cache.load(Kind::Magic, "k").unwrap_err(), CacheError::WrongKind { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decode_never_panics_on_noise(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = decode(&bytes);
        for kind in [Kind::Magic, Kind::Bundle, Kind::Table] {
            let _ = decode_payload(kind, &bytes);
        }
    }

    #[test]
    fn mutated_payloads_never_panic(pos in any::<prop::sample::Index>(), byte in any::<u8>(), cut in any::<prop::sample::Index>()) {
        for body in [
            encode_payload(&Payload::Table(table().clone())),
            encode_payload(&Payload::Bundle(bundle().clone())),
        ] {
            let mut b = body.clone();
            let i = pos.index(b.len());
            b[i] = byte;
            let _ = decode_payload(Kind::Table, &b);
            let _ = decode_payload(Kind::Bundle, &b);
            let _ = decode_payload(Kind::Bundle, &body[..cut.index(body.len())]);
            let _ = decode_payload(Kind::Table, &body[..cut.index(body.len())]);
        }
    }

    #[test]
    fn any_single_bit_flip_is_caught(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let good = encode("t", &Payload::Table(table().clone()));
        let mut bad = good.clone();
        let i = pos.index(bad.len());
        bad[i] ^= 1 << bit;
        // the key hash is checked by the cache, not by the decoder
        match decode(&bad) {
            Err(_) => {}
            Ok((h, _)) => prop_assert_ne!(h.key_hash, key_hash("t")),
        }
    }
}

/// The checked-in fuzz seeds hold the invariants the fuzz targets assert.
#[test]
fn fuzz_seeds_decode_canonically() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut kinds = Vec::new();
    for entry in std::fs::read_dir(root.join("cache_decode")).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        let (h, p) = decode(&bytes).unwrap();
        assert_eq!(encode_payload(&p), &bytes[HEADER_LEN..]);
        kinds.push(h.kind);
    }
    for k in [Kind::Magic, Kind::Bundle, Kind::Table] {
        assert!(kinds.contains(&k), "no {} seed", k.name());
    }
    for entry in std::fs::read_dir(root.join("config_parse")).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        if let Ok(cfg) = fbi_cli::config::RunConfig::parse(&text) {
            assert_eq!(fbi_cli::config::RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
