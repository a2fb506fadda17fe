use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

use super::mel::{mel_filterbank, MelSpectrogram};
use super::stft::{magnitudes, Stft, StftParams};
use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GriffinLimOutput<T> {
    pub audio: AudioBuffer<T>,
    /// `‖|STFT(x_k)| - S‖ / ‖S‖` for the estimate after each iteration; the
    /// last entry is the error of `audio`. Zero when the target is zero.
    pub errors: Vec<T>,
}

/// Phase reconstruction from a linear magnitude spectrogram
/// (frames x (n_fft/2 + 1)) by alternating projections, starting from
/// uniformly random phase drawn from `seed`.
pub fn griffin_lim<T: Scalar>(
    target: &Matrix<T>,
    params: &StftParams,
    sample_rate: u32,
    iterations: usize,
    seed: u64,
) -> Result<GriffinLimOutput<T>> {
    if iterations == 0 {
        return Err(Error::Config("griffin-lim needs at least one iteration".into()));
    }
    let stft = Stft::<T>::new(*params)?;
    let bins = params.n_bins();
    if target.cols() != bins {
        return Err(Error::Dim {
            expected: bins,
            actual: target.cols(),
        });
    }
    if target.rows() == 0 {
        return Err(Error::EmptyInput("griffin-lim target has no frames"));
    }
    if !target.is_finite() || target.as_slice().iter().any(|&m| m < T::zero()) {
        return Err(Error::Data("magnitudes must be finite and non-negative".into()));
    }

    let target_norm = target.frobenius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectra: Vec<Vec<Complex<T>>> = (0..target.rows())
        .map(|f| {
            target
                .row(f)
                .iter()
                .map(|&m| {
                    let phi = T::of(rng.random::<f64>() * std::f64::consts::TAU);
                    Complex::from_polar(m, phi)
                })
                .collect()
        })
        .collect();

    let mut errors = Vec::with_capacity(iterations);
    let mut signal = Vec::new();
    for _ in 0..iterations {
        signal = stft.inverse(&spectra);
        let rebuilt = stft.forward(&signal)?;
        let mag = magnitudes(&rebuilt, bins);
        errors.push(if target_norm > T::zero() {
            mag.sub(target).frobenius() / target_norm
        } else {
            T::zero()
        });
        for ((dst, src), (m_row, t_row)) in spectra
            .iter_mut()
            .zip(&rebuilt)
            .zip((0..target.rows()).map(|f| (mag.row(f), target.row(f))))
        {
            for (((d, s), &m), &t) in dst.iter_mut().zip(src).zip(m_row).zip(t_row) {
                *d = if m > T::zero() {
                    *s * (t / m)
                } else {
                    Complex::new(t, T::zero())
                };
            }
        }
    }
    Ok(GriffinLimOutput {
        audio: AudioBuffer::new(signal, sample_rate)?,
        errors,
    })
}

/// Approximate linear magnitudes from a log-mel spectrogram by spreading
/// each band's mean power back over its filter. Flat spectra map back
/// exactly; bins outside every filter get zero.
pub fn mel_to_linear<T: Scalar>(mel: &MelSpectrogram<T>) -> Result<Matrix<T>> {
    let p = &mel.params;
    let fb: Matrix<T> = mel_filterbank(p.sample_rate, p.stft.n_fft, p.n_mels, p.fmin, p.fmax)?;
    let row_sums: Vec<T> = (0..fb.rows()).map(|m| fb.row(m).iter().copied().sum()).collect();
    let col_sums = fb.matvec_t(&vec![T::one(); fb.rows()]);
    let mut out = Matrix::zeros(mel.frames(), fb.cols());
    for f in 0..mel.frames() {
        let band_mean: Vec<T> = mel
            .data
            .row(f)
            .iter()
            .zip(&row_sums)
            .map(|(&l, &s)| l.exp() / s)
            .collect();
        let spread = fb.matvec_t(&band_mean);
        for ((o, v), &c) in out.row_mut(f).iter_mut().zip(spread).zip(&col_sums) {
            *o = if c > T::zero() { (v / c).sqrt() } else { T::zero() };
        }
    }
    Ok(out)
}

pub fn griffin_lim_mel<T: Scalar>(
    mel: &MelSpectrogram<T>,
    iterations: usize,
    seed: u64,
) -> Result<GriffinLimOutput<T>> {
    let linear = mel_to_linear(mel)?;
    griffin_lim(&linear, &mel.params.stft, mel.params.sample_rate, iterations, seed)
}
