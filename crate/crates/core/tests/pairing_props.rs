use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmodal_core::embedding::{cosine_similarity, similarity_matrix, EmbeddingMatrix, SimilarityMatrix};
use xmodal_core::pairing::{
    greedy_match, greedy_pair, optimal_pair_oracle, similarity_stats, stratified_split, train_count, PairRecord,
    PairingManifest, Split,
};

/// Replays the greedy rule from scratch: at step `i` the chosen column must
/// hold the row's maximum among the columns still free, lowest index first.
fn replay(sim: &SimilarityMatrix) -> Vec<(usize, f64)> {
    let mut free: Vec<usize> = (0..sim.cols()).collect();
    let mut out = Vec::new();
    for i in 0..sim.rows() {
        let mut best = 0;
        for k in 1..free.len() {
            if sim.get(i, free[k]) > sim.get(i, free[best]) {
                best = k;
            }
        }
        let j = free.remove(best);
        out.push((j, sim.get(i, j)));
    }
    out
}

fn random_sim(rng: &mut ChaCha8Rng) -> SimilarityMatrix {
    let rows = rng.random_range(1..=8);
    let cols = rng.random_range(rows..=10);
    // Coarse values force plenty of ties.
    let data = (0..rows * cols).map(|_| rng.random_range(-10..=10) as f64 / 10.0).collect();
    SimilarityMatrix::from_vec(rows, cols, data).unwrap()
}

#[test]
fn greedy_never_beats_the_optimum_and_replays() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let sim = random_sim(&mut rng);
        let greedy = greedy_match(&sim).unwrap();
        let cols: HashSet<usize> = greedy.iter().map(|a| a.music).collect();
        assert_eq!(cols.len(), sim.rows());
        let replayed = replay(&sim);
        for (a, (j, s)) in greedy.iter().zip(&replayed) {
            assert_eq!((a.music, a.similarity), (*j, *s));
        }
        let total: f64 = greedy.iter().map(|a| a.similarity).sum();
        let best = optimal_pair_oracle(&sim).unwrap();
        assert!(total <= best.total + 1e-12);
        let oracle_cols: HashSet<usize> = best.assignment.iter().copied().collect();
        assert_eq!(oracle_cols.len(), sim.rows());
    }
}

#[test]
fn greedy_is_suboptimal_on_the_textbook_instance() {
    let sim = SimilarityMatrix::from_rows(&[vec![0.9, 0.8], vec![0.85, 0.2]]).unwrap();
    let g: f64 = greedy_match(&sim).unwrap().iter().map(|a| a.similarity).sum();
    assert!((g - 1.1).abs() < 1e-12);
    let o = optimal_pair_oracle(&sim).unwrap();
    assert!((o.total - 1.65).abs() < 1e-12);
    assert_eq!(o.assignment, vec![1, 0]);
}

#[test]
fn oracle_refuses_large_instances() {
    let sim = SimilarityMatrix::from_vec(2, 11, vec![0.0; 22]).unwrap();
    assert!(optimal_pair_oracle(&sim).is_err());
}

#[test]
fn greedy_pair_builds_a_valid_manifest() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mk = |prefix: &str, n: usize, rng: &mut ChaCha8Rng| {
        EmbeddingMatrix::from_rows(
            (0..n).map(|i| (format!("{prefix}{i}"), (0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>())),
        )
        .unwrap()
    };
    let art = mk("art", 30, &mut rng);
    let mus = mk("mus", 45, &mut rng);
    let m = greedy_pair(&art, &mus).unwrap();
    m.validate().unwrap();
    assert_eq!(m.len(), 30);
    for r in &m.records {
        let expected = cosine_similarity(art.get(&r.artwork_id).unwrap(), mus.get(&r.music_id).unwrap()).unwrap();
        assert_eq!(r.similarity, expected);
    }
    let short = mk("mus", 10, &mut rng);
    assert!(greedy_pair(&art, &short).is_err());
}

/// Two-pass reference: mean first, then a strict comparison count.
fn stats_oracle(v: &[f64]) -> (f64, f64, f64, usize) {
    let (mut max, mut min, mut sum) = (v[0], v[0], 0.0);
    for &x in v {
        max = max.max(x);
        min = min.min(x);
        sum += x;
    }
    let avg = sum / v.len() as f64;
    (max, min, avg, v.iter().filter(|&&x| x > avg).count())
}

#[test]
fn stats_match_oracle_on_ten_thousand_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let v: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = similarity_stats(&v).unwrap();
    let (max, min, avg, above) = stats_oracle(&v);
    assert_eq!((s.max, s.min), (max, min));
    assert!((s.avg - avg).abs() < 1e-9);
    assert_eq!(s.above_avg, above);
    assert_eq!(s.above_avg + s.below_avg, s.n);

    let json = serde_json::to_value(s).unwrap();
    for key in ["max_sim", "min_sim", "avg_sim", "above_avg", "below_avg"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn similarity_matrix_matches_pairwise_cosines() {
    let a = EmbeddingMatrix::from_rows([("a", vec![1.0f32, 0.0]), ("b", vec![1.0, 1.0])]).unwrap();
    let m = EmbeddingMatrix::from_rows([("x", vec![0.0f32, 2.0]), ("y", vec![-3.0, 0.0]), ("z", vec![1.0, 1.0])]).unwrap();
    let s = similarity_matrix(&a, &m).unwrap();
    for i in 0..2 {
        for j in 0..3 {
            assert!((s.get(i, j) - cosine_similarity(a.row(i), m.row(j)).unwrap()).abs() < 1e-15);
        }
    }
}

fn styled_manifest(sizes: &[(&str, usize)]) -> PairingManifest {
    let mut records = Vec::new();
    for (style, n) in sizes {
        for i in 0..*n {
            let mut r = PairRecord::new(format!("{style}-a{i}"), format!("{style}-m{i}"), 0.1);
            r.style = Some(style.to_string());
            records.push(r);
        }
    }
    PairingManifest::new(records)
}

#[test]
fn split_is_stratified_and_seeded() {
    let m = styled_manifest(&[("baroque", 25), ("cubism", 7), ("ukiyo-e", 3)]);
    let s = stratified_split(&m, 0.8, 4, 123).unwrap();
    let mut per_style: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &s.records {
        let e = per_style.entry(r.style.clone().unwrap()).or_default();
        e.1 += 1;
        if r.split == Split::Train {
            e.0 += 1;
        }
    }
    assert_eq!(per_style["baroque"], (20, 25));
    assert_eq!(per_style["cubism"], (train_count(7, 0.8), 7));
    assert_eq!(train_count(7, 0.8), 6);
    assert_eq!(per_style["ukiyo-e"], (2, 3));
    assert_eq!(s.count(Split::Val), 4);
    assert_eq!(s, stratified_split(&m, 0.8, 4, 123).unwrap());
    assert!(stratified_split(&m, 0.8, 100, 1).is_err());
    assert!(stratified_split(&m, 1.0, 0, 1).is_err());
    assert!(stratified_split(&PairingManifest::new(vec![PairRecord::new("a", "m", 0.0)]), 0.5, 0, 1).is_err());
}

fn sim_strategy() -> impl Strategy<Value = SimilarityMatrix> {
    (1usize..=6)
        .prop_flat_map(|r| (Just(r), r..=7))
        .prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-1.0f64..1.0, r * c)))
        .prop_map(|(r, c, d)| SimilarityMatrix::from_vec(r, c, d).unwrap())
}

proptest! {
    #[test]
    fn greedy_is_one_to_one_and_bounded(sim in sim_strategy()) {
        let g = greedy_match(&sim).unwrap();
        let cols: HashSet<usize> = g.iter().map(|a| a.music).collect();
        prop_assert_eq!(cols.len(), sim.rows());
        let total: f64 = g.iter().map(|a| a.similarity).sum();
        prop_assert!(total <= optimal_pair_oracle(&sim).unwrap().total + 1e-12);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        a in prop::collection::vec(-10.0f64..10.0, 1..12),
        seed in any::<u64>(),
        k in 0.01f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.random_range(-10.0..10.0)).collect();
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let ab = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() < 1e-12);
    }

    #[test]
    fn stats_partition_holds(v in prop::collection::vec(-1.0f64..1.0, 1..300)) {
        let s = similarity_stats(&v).unwrap();
        prop_assert_eq!(s.above_avg + s.below_avg, v.len());
        prop_assert!(s.min <= s.avg && s.avg <= s.max);
    }

    #[test]
    fn split_only_touches_the_split_field(sizes in prop::collection::vec(1usize..20, 1..5), seed in any::<u64>()) {
        let names = ["a", "b", "c", "d", "e"];
        let spec: Vec<(&str, usize)> = names.iter().copied().zip(sizes.iter().copied()).collect();
        let m = styled_manifest(&spec);
        let s = stratified_split(&m, 0.7, 0, seed).unwrap();
        prop_assert_eq!(s.len(), m.len());
        for (x, y) in m.records.iter().zip(&s.records) {
            let mut y2 = y.clone();
            y2.split = x.split;
            prop_assert_eq!(x, &y2);
        }
        let expected: usize = sizes.iter().map(|&n| train_count(n, 0.7)).sum();
        prop_assert_eq!(s.count(Split::Train), expected);
    }
}
