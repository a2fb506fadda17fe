use std::fs;

use proptest::prelude::*;
use xmodal_core::dsp::{load_wav, log_mel, save_wav, MelParams, MelSpectrogram};
use xmodal_core::embedding::{load_embeddings, save_embeddings, EmbeddingMatrix, HEADER_LEN};
use xmodal_core::nn::{load_checkpoint, save_checkpoint, Parameters, ProjectionParams, ProjectionShape};
use xmodal_core::pairing::{PairRecord, PairingManifest, Split};
use xmodal_core::{AudioBuffer64, Error};

/// Independent little-endian encoder for the container layout.
fn encode_oracle(ids: &[String], dim: usize, data: &[f32]) -> Vec<u8> {
    let mut out = b"EMB1".to_vec();
    out.extend(1u32.to_le_bytes());
    out.extend((dim as u32).to_le_bytes());
    out.extend((ids.len() as u64).to_le_bytes());
    for id in ids {
        out.extend((id.len() as u16).to_le_bytes());
        out.extend(id.as_bytes());
    }
    for x in data {
        out.extend(x.to_le_bytes());
    }
    out
}

#[test]
fn header_layout() {
    let m = EmbeddingMatrix::from_rows([("ab", vec![1.0f32, -2.0])]).unwrap();
    let b = m.to_bytes();
    assert_eq!(HEADER_LEN, 20);
    assert_eq!(&b[..4], b"EMB1");
    assert_eq!(b.len(), 20 + 2 + 2 + 8);
    assert_eq!(&b[20..24], &[2, 0, b'a', b'b']);
    assert_eq!(b, encode_oracle(&["ab".into()], 2, &[1.0, -2.0]));
}

#[test]
fn rejects_damaged_containers() {
    let m = EmbeddingMatrix::from_rows([("x", vec![0.5f32; 3]), ("y", vec![0.25; 3])]).unwrap();
    let b = m.to_bytes();
    for cut in [3, 10, 19, 21, b.len() - 1] {
        assert!(EmbeddingMatrix::from_bytes(&b[..cut]).is_err(), "cut at {cut}");
    }
    let mut bad = b.clone();
    bad[0] = b'X';
    assert!(matches!(EmbeddingMatrix::from_bytes(&bad), Err(Error::Format(_))));
    let mut longer = b.clone();
    longer.push(0);
    assert!(EmbeddingMatrix::from_bytes(&longer).is_err());
    let mut v2 = b;
    v2[4] = 2;
    assert!(EmbeddingMatrix::from_bytes(&v2).is_err());
}

#[test]
fn manifest_file_roundtrip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = PairRecord::new("art/1", "mus \"quoted\"", 0.123456789012345);
    a.style = Some("Impressionism".into());
    a.description = Some("Étang aux nymphéas, soir".into());
    a.split = Split::Val;
    let b = PairRecord::new("art/2", "mus-2", -0.5);
    let m = PairingManifest::new(vec![a, b]);
    let path = dir.path().join("pairs.jsonl");
    m.save(&path).unwrap();
    let first = fs::read(&path).unwrap();
    let back = PairingManifest::load(&path).unwrap();
    assert_eq!(back, m);
    back.save(&path).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn manifest_defaults_fill_missing_fields() {
    let m = PairingManifest::from_jsonl("{\"artwork_id\":\"a\",\"music_id\":\"m\",\"similarity\":0.5}\n").unwrap();
    let r = &m.records[0];
    assert_eq!(r.split, Split::Train);
    assert_eq!(r.prompt, "Music representing the content of this artwork");
    assert_eq!(r.negative_prompt, "Low quality");
    let dup = "{\"artwork_id\":\"a\",\"music_id\":\"m\",\"similarity\":0.5}\n{\"artwork_id\":\"a\",\"music_id\":\"n\",\"similarity\":0.5}\n";
    assert!(matches!(PairingManifest::from_jsonl(dup), Err(Error::DuplicateId(_))));
    assert!(matches!(PairingManifest::from_jsonl("{nope"), Err(Error::Format(_))));
}

#[test]
fn wav_roundtrip_within_one_quantum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let a = AudioBuffer64::sine(440.0, 0.8, 4000, 16_000).unwrap();
    save_wav(&a, &path).unwrap();
    let b = load_wav::<f64>(&path, 16_000).unwrap();
    assert_eq!(b.samples.len(), a.samples.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((x - y).abs() <= 1.0 / 32768.0);
    }
}

#[test]
fn truncated_wav_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.wav");
    save_wav(&AudioBuffer64::sine(220.0, 0.5, 2000, 16_000).unwrap(), &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() / 2 + 1]).unwrap();
    assert!(load_wav::<f64>(&path, 16_000).is_err());
}

#[test]
fn mel_spectrogram_persists_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.emb");
    let a = AudioBuffer64::sine(1000.0, 0.3, 4000, 16_000).unwrap();
    let mel = log_mel(&a, &MelParams::default()).unwrap();
    mel.save(&path).unwrap();
    let back = MelSpectrogram::<f64>::load(&path).unwrap();
    assert_eq!(back.params, mel.params);
    for (x, y) in back.data.as_slice().iter().zip(mel.data.as_slice()) {
        assert_eq!(*x, (*y as f32) as f64);
    }
}

#[test]
fn checkpoint_roundtrip() {
    use rand::SeedableRng;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("proj.ckpt");
    let shape = ProjectionShape {
        in_dim: 4,
        hidden_dim: 3,
        n_tokens: 2,
        token_dim: 2,
        ..Default::default()
    };
    let p = ProjectionParams::<f32>::random(shape, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1)).unwrap();
    save_checkpoint(&p, &path).unwrap();
    let mut q = ProjectionParams::<f32>::zeros(shape).unwrap();
    load_checkpoint(&mut q, &path).unwrap();
    assert_eq!(p.flatten(), q.flatten());
    let mut wrong = ProjectionParams::<f32>::zeros(ProjectionShape { in_dim: 5, ..shape }).unwrap();
    assert!(load_checkpoint(&mut wrong, &path).is_err());
}

fn matrix_strategy() -> impl Strategy<Value = (Vec<String>, usize, Vec<f32>)> {
    (0usize..6, 1usize..5).prop_flat_map(|(n, d)| {
        (
            prop::collection::hash_set("[a-zA-Z0-9_é/ -]{1,12}", n).prop_map(|s| s.into_iter().collect::<Vec<_>>()),
            Just(d),
            prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), n * d),
        )
    })
}

proptest! {
    #[test]
    fn emb1_roundtrip_is_bit_exact((ids, dim, data) in matrix_strategy()) {
        let m = EmbeddingMatrix::new(ids.clone(), dim, data.clone()).unwrap();
        let bytes = m.to_bytes();
        prop_assert_eq!(&bytes, &encode_oracle(&ids, dim, &data));
        prop_assert_eq!(bytes.len(), m.encoded_len());
        let back = EmbeddingMatrix::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.data()), bits(&data));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb");
        save_embeddings(&m, &path).unwrap();
        prop_assert_eq!(fs::read(&path).unwrap(), m.to_bytes());
        let loaded = load_embeddings(&path).unwrap();
        prop_assert_eq!(loaded.ids(), m.ids());
    }
}
