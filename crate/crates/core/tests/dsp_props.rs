use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xmodal_core::diffusion::standard_normal;
use xmodal_core::dsp::{
    griffin_lim, log_mel, resample_linear, stft_magnitude, MelParams, Stft, StftParams, WindowKind,
};
use xmodal_core::AudioBuffer64;

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[test]
fn sine_peaks_at_expected_bin_in_every_frame() {
    let a = AudioBuffer64::sine(440.0, 1.0, 16_000, 16_000).unwrap();
    let mag = stft_magnitude(&a, &StftParams::default()).unwrap();
    assert!(mag.rows() > 0);
    for f in 0..mag.rows() {
        assert_eq!(argmax(mag.row(f)), 28, "frame {f}");
    }
}

/// Σ|w·x|² = (1/N) Σ_k |X_k|² over the full spectrum, rebuilt from the
/// one-sided half by Hermitian symmetry.
#[test]
fn parseval_holds_per_frame() {
    let params = StftParams::default();
    let stft = Stft::<f64>::new(params).unwrap();
    let x: Vec<f64> = standard_normal(&mut ChaCha8Rng::seed_from_u64(1), 8000);
    let spectra = stft.forward(&x).unwrap();
    let w = WindowKind::Hann.coefficients::<f64>(params.n_fft);
    let n = params.n_fft;
    for (f, spec) in spectra.iter().enumerate() {
        let start = f * params.hop;
        let time: f64 = (0..n).map(|i| (w[i] * x[start + i]).powi(2)).sum();
        let mut freq = spec[0].norm_sqr() + spec[n / 2].norm_sqr();
        freq += 2.0 * spec[1..n / 2].iter().map(|c| c.norm_sqr()).sum::<f64>();
        freq /= n as f64;
        assert!((time - freq).abs() <= 1e-6 * time, "frame {f}");
    }
}

#[test]
fn ten_seconds_give_994_frames() {
    let a = AudioBuffer64::silence(160_000, 16_000).unwrap();
    let mel = log_mel(&a, &MelParams::default()).unwrap();
    assert_eq!((mel.frames(), mel.n_mels()), (994, 64));
}

#[test]
fn resampled_sine_keeps_its_frequency() {
    let src = AudioBuffer64::sine(1000.0, 0.5, 8000, 8000).unwrap();
    let up = resample_linear(&src.samples, 8000, 16_000);
    assert_eq!(up.len(), (8000 - 1) * 2 + 1);
    let mag = Stft::<f64>::new(StftParams::default()).unwrap().magnitude(&up).unwrap();
    // 1000 Hz at 16 kHz with n_fft 1024 sits at bin 64.
    for f in 0..mag.rows() {
        assert!((argmax(mag.row(f)) as i64 - 64).abs() <= 1, "frame {f}");
    }
}

#[test]
fn griffin_lim_recovers_sine_magnitude() {
    let params = StftParams::default();
    let a = AudioBuffer64::sine(440.0, 0.5, 16_000, 16_000).unwrap();
    let target = stft_magnitude(&a, &params).unwrap();
    let out = griffin_lim(&target, &params, 16_000, 32, 0).unwrap();
    assert_eq!(out.errors.len(), 32);
    let last = *out.errors.last().unwrap();
    assert!(last < 0.10, "final error {last}");
    assert!(out.errors.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{:?}", out.errors);
    let mag = stft_magnitude(&out.audio, &params).unwrap();
    let rel = mag.sub(&target).frobenius() / target.frobenius();
    assert!(rel < 0.10, "re-analysed error {rel}");
}

#[test]
fn stft_is_linear() {
    let stft = Stft::<f64>::new(StftParams::new(256, 64).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = standard_normal(&mut rng, 1024);
    let y: Vec<f64> = standard_normal(&mut rng, 1024);
    let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
    let (sx, sy, sz) = (stft.forward(&x).unwrap(), stft.forward(&y).unwrap(), stft.forward(&z).unwrap());
    for ((fx, fy), fz) in sx.iter().zip(&sy).zip(&sz) {
        for ((a, b), c) in fx.iter().zip(fy).zip(fz) {
            assert!((a * 2.0 - b * 0.5 - c).norm() < 1e-9);
        }
    }
}

#[test]
fn log_mel_single_precision_tracks_double() {
    let a64 = AudioBuffer64::sine(700.0, 0.4, 8000, 16_000).unwrap();
    let a32 = xmodal_core::AudioBuffer32::new(a64.samples.iter().map(|&x| x as f32).collect(), 16_000).unwrap();
    let m64 = log_mel(&a64, &MelParams::default()).unwrap();
    let m32 = log_mel(&a32, &MelParams::default()).unwrap();
    for (x, y) in m32.data.as_slice().iter().zip(m64.data.as_slice()) {
        // log domain: absolute error is relative error of the power
        assert!((*x as f64 - y).abs() < 1e-3, "{x} vs {y}");
    }
}

proptest! {
    #[test]
    fn frame_count_formula(n in 1024usize..40_000, hop in 1usize..1024) {
        let p = StftParams::new(1024, hop).unwrap();
        prop_assert_eq!(p.frame_count(n), 1 + (n - 1024) / hop);
        let x = vec![0.0f64; n];
        let s = Stft::<f64>::new(p).unwrap().forward(&x).unwrap();
        prop_assert_eq!(s.len(), 1 + (n - 1024) / hop);
    }

    #[test]
    fn log_mel_is_floored(amp in 0.0f64..1.0) {
        let a = AudioBuffer64::sine(300.0, amp, 2048, 16_000).unwrap();
        let m = log_mel(&a, &MelParams::default()).unwrap();
        let floor = 1e-5f64.ln();
        prop_assert!(m.data.as_slice().iter().all(|&v| v >= floor - 1e-12));
    }
}
