//! Byte-level BPE against fixtures produced by a reference tokenizer.

use std::path::PathBuf;

use cma::tokenizer::TokenizerMode;
use cma::Vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(serde::Deserialize)]
struct Fixture {
    text: String,
    ids: Vec<u32>,
}

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bpe")
}

fn load() -> Vocabulary {
    Vocabulary::load(&dir().join("vocab.txt"), Some(&dir().join("merges.txt"))).unwrap()
}

fn fixtures() -> Vec<Fixture> {
    std::fs::read_to_string(dir().join("fixtures.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn fixture_ids_match() {
    let v = load();
    assert_eq!(v.mode(), TokenizerMode::ByteBpe);
    let fx = fixtures();
    assert!(fx.len() >= 30);
    for f in &fx {
        assert_eq!(v.encode(&f.text).unwrap(), f.ids, "{:?}", f.text);
        assert_eq!(v.decode(&f.ids).unwrap(), f.text);
    }
}

#[test]
fn random_ascii_round_trips() {
    let v = load();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let n = rng.gen_range(0..40);
        let s: String = (0..n).map(|_| rng.gen_range(9u8..127) as char).collect();
        assert_eq!(v.decode(&v.encode(&s).unwrap()).unwrap(), s);
    }
}

#[test]
fn save_load_is_byte_identical() {
    let v = load();
    let tmp = tempfile::tempdir().unwrap();
    let (vp, mp) = (tmp.path().join("vocab.txt"), tmp.path().join("merges.txt"));
    v.save(&vp, Some(&mp)).unwrap();
    assert_eq!(std::fs::read(&vp).unwrap(), std::fs::read(dir().join("vocab.txt")).unwrap());
    assert_eq!(std::fs::read(&mp).unwrap(), std::fs::read(dir().join("merges.txt")).unwrap());
    let again = Vocabulary::load(&vp, Some(&mp)).unwrap();
    for f in fixtures() {
        assert_eq!(again.encode(&f.text).unwrap(), f.ids);
    }
}

#[test]
fn word_level_round_trip() {
    let v = cma::toy::vocabulary();
    let text = "The nurse examined the farmer for injuries because she";
    let ids = v.encode(text).unwrap();
    assert_eq!(ids.len(), 9);
    assert_eq!(v.decode(&ids).unwrap(), text);
    assert!(v.encode("The zebra").is_err());
}
