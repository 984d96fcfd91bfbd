//! Waveform container, 16-bit PCM WAV I/O, framing and energy.

use std::path::Path;

use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

const PCM_SCALE: f64 = 32768.0;

/// Mono PCM signal with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn energy(&self) -> Result<f64> {
        signal_energy(&self.samples)
    }

    /// Copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// A window into a source signal.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub samples: &'a [f64],
    pub start: usize,
    pub hop: usize,
}

impl Frame<'_> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One past the last sample covered by this frame in the source.
    pub fn end(&self) -> usize {
        self.start + self.samples.len()
    }
}

/// Outcome of [`save_wav`]; `clipped` counts samples outside `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaveReport {
    pub clipped: usize,
}

/// Reads a 16-bit PCM mono WAV recorded at 16 kHz.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|source| match source {
        hound::Error::IoError(e) => Error::io(path, e),
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedWav {
            path: path.to_path_buf(),
            reason: format!(
                "expected 16-bit integer PCM, found {:?} {}-bit",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav {
            path: path.to_path_buf(),
            reason: format!("expected mono, found {} channels", spec.channels),
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(spec.sample_rate));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| f64::from(v) / PCM_SCALE).map_err(|source| Error::Wav {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    Waveform::new(samples, spec.sample_rate)
}

fn quantize(x: f64) -> (i16, bool) {
    let clipped = !(-1.0..=1.0).contains(&x);
    let q = (x * PCM_SCALE).round().clamp(-32768.0, 32767.0);
    (q as i16, clipped)
}

/// Writes `w` as 16-bit PCM mono, clamping out-of-range samples.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<SaveReport> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source: hound::Error| match source {
        hound::Error::IoError(e) => Error::io(path, e),
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let mut report = SaveReport::default();
    for &s in &w.samples {
        let (q, clipped) = quantize(s);
        report.clipped += usize::from(clipped);
        writer.write_sample(q).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(report)
}

/// Cuts `samples` into frames of `frame_len` spaced `hop` apart. A trailing
/// remainder shorter than `frame_len` is dropped.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<Frame<'_>>> {
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidArgument(
            "frame length and hop must be positive".into(),
        ));
    }
    if frame_len > samples.len() {
        return Err(Error::FrameTooLong {
            frame_len,
            len: samples.len(),
        });
    }
    let count = (samples.len() - frame_len) / hop + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * hop;
            Frame {
                samples: &samples[start..start + frame_len],
                start,
                hop,
            }
        })
        .collect())
}

/// Number of frames [`frame_signal`] yields, or 0 if the signal is too short.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if frame_len == 0 || hop == 0 || frame_len > len {
        0
    } else {
        (len - frame_len) / hop + 1
    }
}

/// Sum of squared samples.
pub fn signal_energy(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(x.iter().map(|v| v * v).sum())
}
