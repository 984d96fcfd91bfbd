//! MFCC front end.
//!
//! Per frame: pre-emphasis, Hamming window, zero-padded FFT power spectrum,
//! triangular mel filterbank, floored natural log, orthonormal DCT-II.
//! The zeroth cepstral coefficient is dropped so the retained coefficients
//! do not depend on signal gain.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlannerScalar};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{frame_count, Waveform};
use crate::usable::UsableSegment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_filters: usize,
    /// Cepstral coefficients kept, starting at c1.
    pub n_coeffs: usize,
    pub pre_emphasis: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_len: 400,
            hop: 160,
            n_fft: 512,
            n_filters: 26,
            n_coeffs: 16,
            pre_emphasis: 0.97,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-10,
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSequence {
    dim: usize,
    data: Vec<f64>,
}

impl ObservationSequence {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut seq = Self::new(dim);
        for row in rows {
            seq.push(&row)?;
        }
        Ok(seq)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn extend(&mut self, other: &ObservationSequence) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Precomputed window, filterbank, DCT basis and FFT plan.
#[derive(Clone)]
pub struct MfccExtractor {
    config: MfccConfig,
    window: Vec<f64>,
    /// `n_filters` rows of `n_fft / 2 + 1` weights.
    filterbank: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    /// `n_coeffs` rows of `n_filters` DCT weights, for c1.. onward.
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor").field("config", &self.config).finish()
    }
}

impl MfccExtractor {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self> {
        let MfccConfig {
            frame_len,
            n_fft,
            n_filters,
            n_coeffs,
            f_min,
            f_max,
            ..
        } = config;
        if frame_len == 0 || frame_len > n_fft || config.hop == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid MFCC framing: frame_len {frame_len}, n_fft {n_fft}, hop {}",
                config.hop
            )));
        }
        if n_filters < 2 || n_coeffs == 0 || n_coeffs >= n_filters {
            return Err(Error::InvalidArgument(format!(
                "need 0 < n_coeffs < n_filters, got {n_coeffs} and {n_filters}"
            )));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "mel range {f_min}..{f_max} Hz invalid for {sample_rate} Hz audio"
            )));
        }

        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
            .collect();

        let mel_lo = hz_to_mel(f_min);
        let mel_hi = hz_to_mel(f_max);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_filters + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = f64::from(sample_rate) / n_fft as f64;
        let filterbank = (0..n_filters)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= center {
                            (f - lo) / (center - lo)
                        } else {
                            (hi - f) / (hi - center)
                        }
                    })
                    .collect()
            })
            .collect();
        let centers_hz = edges[1..=n_filters].to_vec();

        let scale = (2.0 / n_filters as f64).sqrt();
        let dct = (1..=n_coeffs)
            .map(|q| {
                (0..n_filters)
                    .map(|m| scale * (PI * q as f64 * (m as f64 + 0.5) / n_filters as f64).cos())
                    .collect()
            })
            .collect();

        let fft = FftPlannerScalar::new().plan_fft_forward(n_fft);
        Ok(Self {
            config,
            window,
            filterbank,
            centers_hz,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn filter_centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Mel filter energies (before the log) for one frame.
    pub fn filter_energies(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.config.frame_len {
            return Err(Error::InvalidArgument(format!(
                "MFCC frame has {} samples, expected {}",
                frame.len(),
                self.config.frame_len
            )));
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.config.n_fft];
        let a = self.config.pre_emphasis;
        for n in 0..frame.len() {
            let emphasized = if n == 0 { frame[0] } else { frame[n] - a * frame[n - 1] };
            buf[n] = Complex::new(emphasized * self.window[n], 0.0);
        }
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..self.config.n_fft / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        Ok(self
            .filterbank
            .iter()
            .map(|w| w.iter().zip(&power).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Coefficients c1..c{n_coeffs} for one frame.
    pub fn mfcc_frame(&self, frame: &[f64]) -> Result<Vec<f64>> {
        let floor = self.config.log_floor;
        let log_energies: Vec<f64> = self
            .filter_energies(frame)?
            .into_iter()
            .map(|e| e.max(floor).ln())
            .collect();
        Ok(self
            .dct
            .iter()
            .map(|basis| basis.iter().zip(&log_energies).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// MFCC frames over `samples[span]` with the configured hop.
    pub fn features(&self, samples: &[f64]) -> Result<ObservationSequence> {
        let MfccConfig { frame_len, hop, .. } = self.config;
        let count = frame_count(samples.len(), frame_len, hop);
        if count == 0 {
            return Err(Error::FrameTooLong {
                frame_len,
                len: samples.len(),
            });
        }
        let mut seq = ObservationSequence::new(self.config.n_coeffs);
        for i in 0..count {
            seq.push(&self.mfcc_frame(&samples[i * hop..i * hop + frame_len])?)?;
        }
        Ok(seq)
    }

    pub fn waveform_features(&self, w: &Waveform) -> Result<ObservationSequence> {
        self.features(&w.samples)
    }

    pub fn segment_features(&self, w: &Waveform, seg: &UsableSegment) -> Result<ObservationSequence> {
        if seg.end_sample > w.len() || seg.start_sample >= seg.end_sample {
            return Err(Error::InvalidArgument(format!(
                "segment span {}..{} outside waveform of {} samples",
                seg.start_sample,
                seg.end_sample,
                w.len()
            )));
        }
        self.features(&w.samples[seg.span()])
    }
}

/// One 16 kHz frame with the default configuration.
pub fn mfcc_frame(frame: &[f64], sample_rate: u32) -> Result<Vec<f64>> {
    MfccExtractor::new(MfccConfig::default(), sample_rate)?.mfcc_frame(frame)
}

pub fn segment_features(w: &Waveform, seg: &UsableSegment) -> Result<ObservationSequence> {
    MfccExtractor::new(MfccConfig::default(), w.sample_rate)?.segment_features(w, seg)
}

/// CSV with one row per frame and 9 significant digits per coefficient.
pub fn features_csv(seq: &ObservationSequence) -> String {
    let mut out = (1..=seq.dim())
        .map(|i| format!("c{i}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in seq.rows() {
        let line = row
            .iter()
            .map(|v| format!("{v:.8e}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}
