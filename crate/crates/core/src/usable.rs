//! Usable-speech detection.
//!
//! A frame is usable when its signal is periodic in some low-frequency
//! wavelet band. For each scale `j = 1..=j_max` the frame's approximation
//! coefficients are autocorrelated, the three strongest autocorrelation
//! peaks are picked, and the frame is declared periodic when the two gaps
//! between consecutive peaks agree to within `lag_threshold` samples. The
//! first scale that passes wins; a frame that fails at every scale is
//! unusable. Consecutive usable frames are merged into segments.

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlannerScalar};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{frame_count, Frame, Waveform};
use crate::wavelet::{dwt_step, WaveletFilters, WaveletKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Analysis frame length in samples; must be divisible by `2^j_max`.
    pub frame_len: usize,
    pub hop: usize,
    /// Minimum peak height as a fraction of the zero-lag autocorrelation.
    pub amp_threshold: f64,
    /// Allowed mismatch between the two peak gaps, in samples at the analyzed scale.
    pub lag_threshold: usize,
    pub j_max: u32,
    pub min_segment_frames: usize,
    pub wavelet: WaveletKind,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 160,
            amp_threshold: 0.30,
            lag_threshold: 2,
            j_max: 4,
            min_segment_frames: 3,
            wavelet: WaveletKind::Db4,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amp_threshold > 0.0 && self.amp_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "amp_threshold {} must lie in (0, 1)",
                self.amp_threshold
            )));
        }
        if self.j_max == 0 || self.j_max > 16 {
            return Err(Error::InvalidArgument("j_max must be in 1..=16".into()));
        }
        if self.min_segment_frames == 0 {
            return Err(Error::InvalidArgument(
                "min_segment_frames must be at least 1".into(),
            ));
        }
        if self.hop == 0 {
            return Err(Error::InvalidArgument("hop must be positive".into()));
        }
        let factor = 1usize << self.j_max;
        if self.frame_len == 0 || !self.frame_len.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "frame_len {} is not divisible by 2^{}",
                self.frame_len, self.j_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameVerdict {
    pub frame_index: usize,
    pub start_sample: usize,
    pub usable: bool,
    /// Scale at which periodicity was found; `None` iff unusable.
    pub detection_scale: Option<u32>,
    /// Peaks at the detection scale, or at the last scale tried.
    pub peak_lags: Vec<usize>,
}

/// A maximal run of usable frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsableSegment {
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    pub start_sample: usize,
    /// Exclusive.
    pub end_sample: usize,
    pub verdicts: Vec<FrameVerdict>,
    /// Ground-truth origin (0 = target, 1 = interferer), evaluation only.
    pub truth_label: Option<u8>,
}

impl UsableSegment {
    pub fn n_frames(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn span(&self) -> std::ops::Range<usize> {
        self.start_sample..self.end_sample
    }
}

type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// FFT-backed biased autocorrelation with plans cached per input length.
#[derive(Clone)]
pub struct Autocorrelator {
    plans: HashMap<usize, FftPair>,
}

impl std::fmt::Debug for Autocorrelator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut lens: Vec<_> = self.plans.keys().collect();
        lens.sort();
        f.debug_struct("Autocorrelator").field("lengths", &lens).finish()
    }
}

impl Autocorrelator {
    pub fn for_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        // The scalar planner keeps results identical across CPUs.
        let mut planner = FftPlannerScalar::new();
        let plans = lengths
            .into_iter()
            .map(|len| {
                let n = fft_len(len);
                (len, (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            })
            .collect();
        Self { plans }
    }

    /// Normalized autocorrelation `r[τ] / r[0]` for `τ = 0..len`.
    pub fn compute(&self, x: &[f64]) -> Result<Vec<f64>> {
        let len = x.len();
        if len < 4 {
            return Err(Error::InvalidArgument(format!(
                "autocorrelation needs at least 4 samples, got {len}"
            )));
        }
        if x.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroSignal);
        }
        let (fwd, inv) = match self.plans.get(&len) {
            Some((f, i)) => (Arc::clone(f), Arc::clone(i)),
            None => {
                let mut planner = FftPlannerScalar::new();
                let n = fft_len(len);
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            }
        };
        let n = fwd.len();
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        fwd.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        inv.process(&mut buf);
        let r0 = buf[0].re;
        Ok(buf[..len].iter().map(|c| c.re / r0).collect())
    }
}

fn fft_len(len: usize) -> usize {
    (2 * len).next_power_of_two()
}

/// Biased autocorrelation normalized so that `acf[0] == 1`.
pub fn autocorrelation(x: &[f64]) -> Result<Vec<f64>> {
    Autocorrelator::for_lengths([x.len()]).compute(x)
}

/// The (up to) three highest strict local maxima at lags `>= 2` whose height
/// reaches `amp_threshold`, returned in ascending lag order. Equal heights
/// prefer the smaller lag.
pub fn find_three_maxima(acf: &[f64], amp_threshold: f64) -> Vec<usize> {
    let mut peaks: Vec<(f64, usize)> = (2..acf.len().saturating_sub(1))
        .filter(|&t| acf[t - 1] < acf[t] && acf[t] > acf[t + 1] && acf[t] >= amp_threshold)
        .map(|t| (acf[t], t))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut lags: Vec<usize> = peaks.into_iter().take(3).map(|(_, t)| t).collect();
    lags.sort_unstable();
    lags
}

/// True when three ascending lags are evenly spaced to within `lag_threshold`.
pub fn periodicity_decision(lags: &[usize], lag_threshold: usize) -> bool {
    match lags {
        [a, b, c] => (b - a).abs_diff(c - b) <= lag_threshold,
        _ => false,
    }
}

/// Reusable classifier holding the filter bank and FFT plans for one config.
#[derive(Debug, Clone)]
pub struct UsableDetector {
    filters: WaveletFilters,
    config: DetectionConfig,
    acf: Autocorrelator,
}

/// Per-frame verdicts plus the segments derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub verdicts: Vec<FrameVerdict>,
    pub segments: Vec<UsableSegment>,
}

impl UsableDetector {
    pub fn new(config: DetectionConfig) -> Result<Self> {
        Self::with_filters(WaveletFilters::of_kind(config.wavelet), config)
    }

    pub fn with_filters(filters: WaveletFilters, config: DetectionConfig) -> Result<Self> {
        config.validate()?;
        let acf = Autocorrelator::for_lengths((1..=config.j_max).map(|j| config.frame_len >> j));
        Ok(Self {
            filters,
            config,
            acf,
        })
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.config
    }

    /// Classifies one frame of exactly `frame_len` samples.
    pub fn classify(&self, frame: &Frame<'_>, frame_index: usize) -> Result<FrameVerdict> {
        if frame.len() != self.config.frame_len {
            return Err(Error::InvalidArgument(format!(
                "frame has {} samples, detector expects {}",
                frame.len(),
                self.config.frame_len
            )));
        }
        let mut verdict = FrameVerdict {
            frame_index,
            start_sample: frame.start,
            usable: false,
            detection_scale: None,
            peak_lags: Vec::new(),
        };
        let mut approx = frame.samples.to_vec();
        for scale in 1..=self.config.j_max {
            approx = dwt_step(&approx, &self.filters)?.0;
            let acf = match self.acf.compute(&approx) {
                Ok(acf) => acf,
                Err(Error::ZeroSignal) => return Ok(verdict),
                Err(e) => return Err(e),
            };
            let lags = find_three_maxima(&acf, self.config.amp_threshold);
            let periodic = periodicity_decision(&lags, self.config.lag_threshold);
            verdict.peak_lags = lags;
            if periodic {
                verdict.usable = true;
                verdict.detection_scale = Some(scale);
                break;
            }
        }
        Ok(verdict)
    }

    /// Classifies every frame of `w` and merges usable runs into segments.
    pub fn detect(&self, w: &Waveform) -> Result<Detection> {
        let DetectionConfig {
            frame_len, hop, ..
        } = self.config;
        if frame_count(w.len(), frame_len, hop) == 0 {
            return Err(Error::FrameTooLong {
                frame_len,
                len: w.len(),
            });
        }
        let verdicts = crate::signal::frame_signal(&w.samples, frame_len, hop)?
            .iter()
            .enumerate()
            .map(|(i, f)| self.classify(f, i))
            .collect::<Result<Vec<_>>>()?;
        let segments = segments_from_verdicts(&verdicts, &self.config);
        Ok(Detection { verdicts, segments })
    }
}

/// Classifies a single frame with a throwaway detector.
pub fn classify_frame(
    frame: &Frame<'_>,
    filters: &WaveletFilters,
    config: &DetectionConfig,
) -> Result<FrameVerdict> {
    let config = DetectionConfig {
        frame_len: frame.len(),
        ..*config
    };
    UsableDetector::with_filters(filters.clone(), config)?.classify(frame, 0)
}

/// Merges maximal runs of usable verdicts of at least `min_segment_frames`.
pub fn segments_from_verdicts(verdicts: &[FrameVerdict], config: &DetectionConfig) -> Vec<UsableSegment> {
    let mut segments = Vec::new();
    let mut i = 0;
    while i < verdicts.len() {
        if !verdicts[i].usable {
            i += 1;
            continue;
        }
        let start = i;
        while i < verdicts.len() && verdicts[i].usable {
            i += 1;
        }
        if i - start >= config.min_segment_frames {
            let run = &verdicts[start..i];
            segments.push(UsableSegment {
                start_frame: run[0].frame_index,
                end_frame: run[run.len() - 1].frame_index,
                start_sample: run[0].start_sample,
                end_sample: run[run.len() - 1].start_sample + config.frame_len,
                verdicts: run.to_vec(),
                truth_label: None,
            });
        }
    }
    segments
}

/// Convenience wrapper: detection with `filters` and `config` on a whole waveform.
pub fn extract_usable_segments(
    w: &Waveform,
    filters: &WaveletFilters,
    config: &DetectionConfig,
) -> Result<Vec<UsableSegment>> {
    Ok(UsableDetector::with_filters(filters.clone(), *config)?
        .detect(w)?
        .segments)
}

/// Frame rows for the `detect` CSV.
pub fn verdicts_csv(verdicts: &[FrameVerdict]) -> String {
    let mut out = String::from("frame_index,start_sample,usable,detection_scale,lag1,lag2,lag3\n");
    for v in verdicts {
        let lag = |k: usize| v.peak_lags.get(k).map_or(-1, |&l| l as i64);
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            v.frame_index,
            v.start_sample,
            u8::from(v.usable),
            v.detection_scale.map_or(-1, i64::from),
            lag(0),
            lag(1),
            lag(2)
        ));
    }
    out
}

/// Segment rows for the `detect` CSV; `end_sample` is exclusive.
pub fn segments_csv(segments: &[UsableSegment]) -> String {
    let mut out = String::from("seg_index,start_frame,end_frame,start_sample,end_sample\n");
    for (i, s) in segments.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{}\n",
            s.start_frame, s.end_frame, s.start_sample, s.end_sample
        ));
    }
    out
}
