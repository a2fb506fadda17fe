//! WAV ingestion and 16-bit export.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Truncation(format!("{}: {io}", path.display()))
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::UnsupportedCodec(format!("{}: codec not supported", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a PCM-16 or float-32 WAV with one or two channels, averages the
/// channels and linearly resamples to `target_rate`.
pub fn load_wav<T: Scalar>(path: impl AsRef<Path>, target_rate: u32) -> Result<AudioBuffer<T>> {
    let path = path.as_ref();
    if target_rate == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedCodec(format!(
            "{}: {channels} channels, expected 1 or 2",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    }
    .map_err(|e| map_hound(path, e))?;

    if interleaved.len() % channels != 0 {
        return Err(Error::Truncation(format!(
            "{}: partial frame at end of data",
            path.display()
        )));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if let Some(i) = mono.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("{}: non-finite sample at {i}", path.display())));
    }
    let resampled = resample_linear(&mono, spec.sample_rate, target_rate);
    AudioBuffer::new(resampled.into_iter().map(T::of).collect(), target_rate)
}

/// Writes mono 16-bit PCM. Samples are clamped to the representable range.
pub fn save_wav<T: Scalar>(audio: &AudioBuffer<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &audio.samples {
        let v = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

/// Linear-interpolation resampling. Output sample `i` sits at input
/// position `i * from / to`; the output covers the same time span.
pub fn resample_linear(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || x.len() < 2 {
        return x.to_vec();
    }
    let ratio = from as f64 / to as f64;
    let n_out = ((x.len() - 1) as f64 / ratio).floor() as usize + 1;
    (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            if k + 1 >= x.len() {
                return x[x.len() - 1];
            }
            let frac = pos - k as f64;
            x[k] + (x[k + 1] - x[k]) * frac
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_i16(path: &Path, channels: u16, rate: u32, samples: &[i16]) {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn silence_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        write_i16(&p, 1, 16000, &[0; 500]);
        let a: AudioBuffer<f64> = load_wav(&p, 16000).unwrap();
        assert_eq!(a.samples.len(), 500);
        assert!(a.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stereo_opposite_channels_cancel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let frames: Vec<i16> = (0..400).flat_map(|_| [16384i16, -16384]).collect();
        write_i16(&p, 2, 16000, &frames);
        let a: AudioBuffer<f32> = load_wav(&p, 16000).unwrap();
        assert_eq!(a.samples.len(), 400);
        assert!(a.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn float_wav_and_unsupported_depth() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for s in [0.25f32, -0.5, 0.75] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let a: AudioBuffer<f64> = load_wav(&p, 8000).unwrap();
        assert_eq!(a.samples, vec![0.25, -0.5, 0.75]);

        let p8 = dir.path().join("b.wav");
        let spec = WavSpec {
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
            ..spec
        };
        let mut w = WavWriter::create(&p8, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav::<f64>(&p8, 8000), Err(Error::UnsupportedCodec(_))));
    }

    #[test]
    fn malformed_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"definitely not a riff file").unwrap();
        assert!(matches!(load_wav::<f64>(&junk, 16000), Err(Error::Format(_))));

        let p = dir.path().join("t.wav");
        write_i16(&p, 1, 16000, &[100; 1000]);
        let bytes = std::fs::read(&p).unwrap();
        let cut = dir.path().join("cut.wav");
        std::fs::write(&cut, &bytes[..bytes.len() - 901]).unwrap();
        assert!(load_wav::<f64>(&cut, 16000).is_err());
    }

    #[test]
    fn resample_endpoints_and_midpoints() {
        let up = resample_linear(&[0.0, 1.0, 2.0], 1, 2);
        assert_eq!(up, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let down = resample_linear(&[0.0, 1.0, 2.0, 3.0, 4.0], 2, 1);
        assert_eq!(down, vec![0.0, 2.0, 4.0]);
    }
}
