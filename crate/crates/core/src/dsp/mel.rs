use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stft::{Stft, StftParams};
use super::AudioBuffer;
use crate::embedding::{load_embeddings, save_embeddings, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Floor applied to mel power before taking the log.
pub const LOG_FLOOR: f64 = 1e-5;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, `n_mels` x `(n_fft/2 + 1)`, with peak weight 1 at
/// centres equally spaced in mel between `fmin` and `fmax`.
pub fn mel_filterbank<T: Scalar>(
    sample_rate: u32,
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<Matrix<T>> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels == 0 {
        return Err(Error::Band("n_mels must be at least 1".into()));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(Error::Band(format!(
            "need 0 <= fmin < fmax <= {nyquist}, got fmin={fmin} fmax={fmax}"
        )));
    }
    if n_fft < 2 {
        return Err(Error::Band(format!("n_fft {n_fft} too small")));
    }
    let bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;

    let mut fb = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let up = (f - left) / (centre - left);
            let down = (right - f) / (right - centre);
            let w = up.min(down).max(0.0);
            fb[(m, k)] = T::of(w);
        }
        if fb.row(m).iter().all(|&w| w == T::zero()) {
            return Err(Error::Band(format!(
                "mel band {m} ({left:.1}-{right:.1} Hz) falls between FFT bins; use fewer mels or a larger n_fft"
            )));
        }
    }
    Ok(fb)
}

/// Extraction parameters persisted next to every spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelParams {
    pub sample_rate: u32,
    pub stft: StftParams,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            stft: StftParams::default(),
            n_mels: 64,
            fmin: 0.0,
            fmax: 8_000.0,
            log_floor: LOG_FLOOR,
        }
    }
}

/// Natural-log mel power, frames x n_mels.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<T> {
    pub data: Matrix<T>,
    pub params: MelParams,
}

impl<T: Scalar> MelSpectrogram<T> {
    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.data.cols()
    }

    /// Rows named `frame_00000`, `frame_00001`, ... in an EMB1 container.
    pub fn to_embeddings(&self) -> Result<EmbeddingMatrix> {
        let ids = (0..self.frames()).map(|i| format!("frame_{i:05}")).collect();
        let data = self.data.as_slice().iter().map(|&x| x.as_f64() as f32).collect();
        EmbeddingMatrix::new(ids, self.n_mels(), data)
    }

    /// Writes `<path>` (EMB1) and `<path>.json` (parameters).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        save_embeddings(&self.to_embeddings()?, path)?;
        let side = sidecar_path(path);
        fs::write(&side, serde_json::to_string_pretty(&self.params)?).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let m = load_embeddings(path)?;
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let params: MelParams = serde_json::from_str(&text)?;
        if params.n_mels != m.dim() {
            return Err(Error::Dim {
                expected: params.n_mels,
                actual: m.dim(),
            });
        }
        let data = Matrix::from_vec(m.len(), m.dim(), m.data().iter().map(|&x| T::of(x as f64)).collect())?;
        Ok(Self { data, params })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Computes `ln(max(filterbank · |STFT|², floor))` for every frame.
pub struct MelExtractor<T: Scalar> {
    stft: Stft<T>,
    filterbank: Matrix<T>,
    params: MelParams,
}

impl<T: Scalar> MelExtractor<T> {
    pub fn new(params: MelParams) -> Result<Self> {
        if !(params.log_floor > 0.0) {
            return Err(Error::Config("log floor must be positive".into()));
        }
        Ok(Self {
            stft: Stft::new(params.stft)?,
            filterbank: mel_filterbank(params.sample_rate, params.stft.n_fft, params.n_mels, params.fmin, params.fmax)?,
            params,
        })
    }

    pub fn filterbank(&self) -> &Matrix<T> {
        &self.filterbank
    }

    pub fn extract(&self, audio: &AudioBuffer<T>) -> Result<MelSpectrogram<T>> {
        if audio.sample_rate != self.params.sample_rate {
            return Err(Error::Config(format!(
                "audio at {} Hz but extractor expects {} Hz",
                audio.sample_rate, self.params.sample_rate
            )));
        }
        let mag = self.stft.magnitude(&audio.samples)?;
        let floor = T::of(self.params.log_floor);
        let mut data = Matrix::zeros(mag.rows(), self.params.n_mels);
        let mut power = vec![T::zero(); mag.cols()];
        for f in 0..mag.rows() {
            for (p, &m) in power.iter_mut().zip(mag.row(f)) {
                *p = m * m;
            }
            let mel = self.filterbank.matvec(&power);
            for (d, v) in data.row_mut(f).iter_mut().zip(mel) {
                *d = v.max(floor).ln();
            }
        }
        Ok(MelSpectrogram {
            data,
            params: self.params,
        })
    }
}

pub fn log_mel<T: Scalar>(audio: &AudioBuffer<T>, params: &MelParams) -> Result<MelSpectrogram<T>> {
    MelExtractor::new(*params)?.extract(audio)
}
