//! Named embedding vectors and the EMB1 binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0..4    b"EMB1"
//! 4..8    u32 version (= 1)
//! 8..12   u32 dim
//! 12..20  u64 count
//! ids     count x (u16 byte length, UTF-8 bytes)
//! data    count x dim f32, row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Ordered, uniquely named rows of `dim` f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

/// An owned, named vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Validates every container invariant. Zero-norm rows are allowed.
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("dim must be at least 1".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::Data(format!(
                "{} ids x dim {} needs {} values, got {}",
                ids.len(),
                dim,
                ids.len() * dim,
                data.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::Data(format!("row {i} has an empty id")));
            }
            if id.len() > u16::MAX as usize {
                return Err(Error::Data(format!("id of row {i} exceeds 65535 bytes")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in row {} ({})",
                pos / dim,
                ids[pos / dim]
            )));
        }
        Ok(Self {
            ids,
            dim,
            data,
            index,
        })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), dim, Vec::new())
    }

    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (id, row) in rows {
            let id = id.into();
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::Dim {
                        expected: d,
                        actual: row.len(),
                    })
                }
                _ => {}
            }
            ids.push(id);
            data.extend_from_slice(&row);
        }
        let dim = dim.ok_or(Error::EmptyInput("from_rows needs at least one row"))?;
        Self::new(ids, dim, data)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim).take(self.ids.len())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn vector(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector {
            id: self.ids[i].clone(),
            values: self.row(i).to_vec(),
        }
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.ids.iter().map(|id| 2 + id.len()).sum::<usize>() + self.data.len() * 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected EMB1")));
        }
        let version = u32::from_le_bytes(r.array("version")?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported EMB1 version {version}")));
        }
        let dim = u32::from_le_bytes(r.array("dim")?) as usize;
        if dim == 0 {
            return Err(Error::Format("dim is zero".into()));
        }
        let count = u64::from_le_bytes(r.array("count")?);
        let count = usize::try_from(count)
            .map_err(|_| Error::Truncation(format!("count {count} exceeds address space")))?;

        // Each id takes at least two bytes; reject absurd counts before allocating.
        if count > bytes.len() / 2 {
            return Err(Error::Truncation(format!(
                "declared {count} records but file holds {} bytes",
                bytes.len()
            )));
        }
        let mut ids = Vec::with_capacity(count);
        for i in 0..count {
            let n = u16::from_le_bytes(r.array("id length")?) as usize;
            let raw = r.take(n, "id bytes")?;
            let id = std::str::from_utf8(raw)
                .map_err(|e| Error::Format(format!("id {i} is not UTF-8: {e}")))?;
            ids.push(id.to_owned());
        }
        let payload = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Truncation("payload size overflows".into()))?;
        let raw = r.take(payload, "data block")?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after data block",
                bytes.len() - r.pos
            )));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(ids, dim, data)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncation(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let s = self.take(N, what)?;
        Ok(s.try_into().expect("length checked"))
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&m.to_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Cosine similarity accumulated in f64 and clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dim {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Dense row-major matrix of f64 similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dim {
                expected: cols,
                actual: bad.len(),
            });
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// All-pairs cosine similarity: entry `(i, j)` compares `rows[i]` with `cols[j]`.
///
/// Norms are computed once per row, so the batched path does fewer
/// operations than calling [`cosine_similarity`] per entry; the dot products
/// and the final division are evaluated in the same order, and the results
/// agree with the per-entry call bit for bit.
pub fn similarity_matrix(rows: &EmbeddingMatrix, cols: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    if rows.dim() != cols.dim() {
        return Err(Error::Dim {
            expected: rows.dim(),
            actual: cols.dim(),
        });
    }
    let norm = |v: &[f32]| -> Result<f64> {
        let s: f64 = v.iter().map(|&x| (x as f64) * (x as f64)).sum();
        if s == 0.0 {
            Err(Error::ZeroNorm)
        } else {
            Ok(s.sqrt())
        }
    };
    let row_norms = rows.rows().map(norm).collect::<Result<Vec<_>>>()?;
    let col_norms = cols.rows().map(norm).collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for (a, &na) in rows.rows().zip(&row_norms) {
        for (b, &nb) in cols.rows().zip(&col_norms) {
            let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
            data.push((dot / (na * nb)).clamp(-1.0, 1.0));
        }
    }
    SimilarityMatrix::from_vec(rows.len(), cols.len(), data)
}
