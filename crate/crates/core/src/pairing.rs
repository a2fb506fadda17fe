//! Artwork/music pairing, similarity statistics and stratified splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{similarity_matrix, EmbeddingMatrix, SimilarityMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_PROMPT: &str = "Music representing the content of this artwork";
pub const DEFAULT_NEGATIVE_PROMPT: &str = "Low quality";

/// Largest matrix side the exhaustive oracle accepts.
pub const ORACLE_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        })
    }
}

fn default_prompt() -> String {
    DEFAULT_PROMPT.to_owned()
}

fn default_negative_prompt() -> String {
    DEFAULT_NEGATIVE_PROMPT.to_owned()
}

/// One line of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub artwork_id: String,
    pub music_id: String,
    pub similarity: f64,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub style: Option<String>,
    #[serde(default)]
    pub split: Split,
    #[serde(default = "default_prompt")]
    pub prompt: String,
    #[serde(default = "default_negative_prompt")]
    pub negative_prompt: String,
}

impl PairRecord {
    pub fn new(artwork_id: impl Into<String>, music_id: impl Into<String>, similarity: f64) -> Self {
        Self {
            artwork_id: artwork_id.into(),
            music_id: music_id.into(),
            similarity,
            description: None,
            style: None,
            split: Split::Train,
            prompt: default_prompt(),
            negative_prompt: default_negative_prompt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairingManifest {
    pub records: Vec<PairRecord>,
    /// Identifiers of the embedding stores the pairs were built from.
    pub created_from: Vec<String>,
}

impl PairingManifest {
    pub fn new(records: Vec<PairRecord>) -> Self {
        Self {
            records,
            created_from: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks record invariants and that the matching is one-to-one.
    pub fn validate(&self) -> Result<()> {
        let mut arts = HashSet::new();
        let mut music = HashSet::new();
        for r in &self.records {
            if !r.similarity.is_finite() || !(-1.0..=1.0).contains(&r.similarity) {
                return Err(Error::Data(format!(
                    "similarity {} of {} outside [-1, 1]",
                    r.similarity, r.artwork_id
                )));
            }
            if !arts.insert(r.artwork_id.as_str()) {
                return Err(Error::DuplicateId(r.artwork_id.clone()));
            }
            if !music.insert(r.music_id.as_str()) {
                return Err(Error::DuplicateId(r.music_id.clone()));
            }
        }
        Ok(())
    }

    pub fn similarities(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.similarity).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read_lines(text.lines().map(|l| Ok(l.to_owned())))
    }

    fn read_lines(lines: impl Iterator<Item = Result<String>>) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PairRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("manifest line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        let m = Self::new(records);
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_lines(
            BufReader::new(f)
                .lines()
                .map(|l| l.map_err(|e| Error::io(path, e))),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(self.to_jsonl()?.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// One step of a matching: row `artwork` took column `music`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub artwork: usize,
    pub music: usize,
    pub similarity: f64,
}

/// Greedy assignment with exclusion over a precomputed similarity matrix.
///
/// Rows are visited in order; each takes the highest-similarity column not
/// yet taken, ties going to the lowest column index.
pub fn greedy_match(sim: &SimilarityMatrix) -> Result<Vec<Assignment>> {
    if sim.cols() < sim.rows() {
        return Err(Error::InsufficientPool {
            artworks: sim.rows(),
            pool: sim.cols(),
        });
    }
    let mut taken = vec![false; sim.cols()];
    let mut out = Vec::with_capacity(sim.rows());
    for i in 0..sim.rows() {
        let mut best: Option<(usize, f64)> = None;
        for (j, &s) in sim.row(i).iter().enumerate() {
            if taken[j] {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        let (j, s) = best.expect("pool is at least as large as the artwork set");
        taken[j] = true;
        out.push(Assignment {
            artwork: i,
            music: j,
            similarity: s,
        });
    }
    Ok(out)
}

/// Pairs every artwork with its most similar still-unassigned music track.
pub fn greedy_pair(artworks: &EmbeddingMatrix, music: &EmbeddingMatrix) -> Result<PairingManifest> {
    if artworks.dim() != music.dim() {
        return Err(Error::Dim {
            expected: artworks.dim(),
            actual: music.dim(),
        });
    }
    if music.len() < artworks.len() {
        return Err(Error::InsufficientPool {
            artworks: artworks.len(),
            pool: music.len(),
        });
    }
    let sim = similarity_matrix(artworks, music)?;
    let records = greedy_match(&sim)?
        .into_iter()
        .map(|a| {
            PairRecord::new(
                artworks.ids()[a.artwork].clone(),
                music.ids()[a.music].clone(),
                a.similarity,
            )
        })
        .collect();
    Ok(PairingManifest::new(records))
}

/// Maximum-total perfect matching by exhaustive search over permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatching {
    /// `assignment[i]` is the column matched to row `i`.
    pub assignment: Vec<usize>,
    pub total: f64,
}

/// Exhaustive search; rows must not outnumber columns and neither side may
/// exceed [`ORACLE_MAX`]. Among equal totals the lexicographically first
/// assignment wins.
pub fn optimal_pair_oracle(sim: &SimilarityMatrix) -> Result<OracleMatching> {
    let (rows, cols) = (sim.rows(), sim.cols());
    if rows > ORACLE_MAX || cols > ORACLE_MAX {
        return Err(Error::OracleSize {
            rows,
            cols,
            max: ORACLE_MAX,
        });
    }
    if cols < rows {
        return Err(Error::InsufficientPool {
            artworks: rows,
            pool: cols,
        });
    }

    // Exhaustive depth-first enumeration of injective row -> column maps;
    // `used` is a column bitmask, so one level costs a scan of `cols` bits.
    struct Search<'a> {
        sim: &'a [f64],
        rows: usize,
        cols: usize,
        current: Vec<usize>,
        best_total: f64,
        best: Vec<usize>,
    }

    impl Search<'_> {
        fn go(&mut self, row: usize, used: u32, total: f64) {
            if row == self.rows {
                if total > self.best_total {
                    self.best_total = total;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            let base = row * self.cols;
            for j in 0..self.cols {
                if used & (1 << j) != 0 {
                    continue;
                }
                self.current.push(j);
                self.go(row + 1, used | (1 << j), total + self.sim[base + j]);
                self.current.pop();
            }
        }
    }

    let mut s = Search {
        sim: sim.as_slice(),
        rows,
        cols,
        current: Vec::with_capacity(rows),
        best_total: f64::NEG_INFINITY,
        best: Vec::new(),
    };
    s.go(0, 0, 0.0);
    Ok(OracleMatching {
        assignment: s.best,
        total: s.best_total,
    })
}

/// Summary of a set of pair similarities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    #[serde(rename = "max_sim")]
    pub max: f64,
    #[serde(rename = "min_sim")]
    pub min: f64,
    #[serde(rename = "avg_sim")]
    pub avg: f64,
    pub above_avg: usize,
    pub below_avg: usize,
    pub n: usize,
}

/// Values equal to the average count as below it.
pub fn similarity_stats(values: &[f64]) -> Result<SimilarityStats> {
    if values.is_empty() {
        return Err(Error::EmptyInput("similarity_stats needs at least one value"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite similarity {v}")));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    // rounding in the mean can land a hair outside [min, max]
    let avg = avg.clamp(min, max);
    let above_avg = values.iter().filter(|&&v| v > avg).count();
    Ok(SimilarityStats {
        max,
        min,
        avg,
        above_avg,
        below_avg: values.len() - above_avg,
        n: values.len(),
    })
}

/// Reassigns `split` on every record, stratified by style.
///
/// Per style, `floor(train_fraction * count + 0.5)` records (chosen by a
/// seeded shuffle) become train and the rest test; then `val_count` test
/// records, sampled uniformly across the whole test set, become val. Record
/// order and all other fields are preserved.
pub fn stratified_split(
    manifest: &PairingManifest,
    train_fraction: f64,
    val_count: usize,
    seed: u64,
) -> Result<PairingManifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_style: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let style = r
            .style
            .as_deref()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::MissingStyle(r.artwork_id.clone()))?;
        by_style.entry(style).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Test; manifest.len()];
    let mut test = Vec::new();
    for members in by_style.values() {
        let n_train = train_count(members.len(), train_fraction);
        let mut order = members.clone();
        order.shuffle(&mut rng);
        for &i in &order[..n_train] {
            splits[i] = Split::Train;
        }
        test.extend_from_slice(&order[n_train..]);
    }

    if val_count > test.len() {
        return Err(Error::Split(format!(
            "cannot move {val_count} records to val from a test set of {}",
            test.len()
        )));
    }
    test.sort_unstable();
    for &i in test.choose_multiple(&mut rng, val_count) {
        splits[i] = Split::Val;
    }

    let mut out = manifest.clone();
    for (r, s) in out.records.iter_mut().zip(splits) {
        r.split = s;
    }
    Ok(out)
}

/// Round-half-up share of a style group assigned to train.
pub fn train_count(group: usize, train_fraction: f64) -> usize {
    ((train_fraction * group as f64) + 0.5).floor() as usize
}
