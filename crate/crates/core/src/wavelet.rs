//! Periodic dyadic wavelet decomposition.
//!
//! Only the analysis side is needed: each level splits a signal into a
//! half-length approximation (low band) and detail (high band) by circular
//! correlation with an orthonormal quadrature-mirror filter pair followed by
//! downsampling by two.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Daubechies wavelet with four vanishing moments (8 taps), low-pass scaling
// filter normalized to sum sqrt(2).
#[allow(clippy::excessive_precision)]
const DB4: [f64; 8] = [
    0.230_377_813_308_896_500_86,
    0.714_846_570_552_915_647_09,
    0.630_880_767_929_858_907_88,
    -0.027_983_769_416_859_854_211,
    -0.187_034_811_719_093_084_08,
    0.030_841_381_835_560_763_627,
    0.032_883_011_666_885_199_735,
    -0.010_597_401_785_069_032_105,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Haar,
    #[default]
    Db4,
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WaveletKind::Haar => "haar",
            WaveletKind::Db4 => "db4",
        })
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(WaveletKind::Haar),
            "db4" => Ok(WaveletKind::Db4),
            other => Err(Error::InvalidArgument(format!("unknown wavelet '{other}'"))),
        }
    }
}

/// Orthonormal two-channel analysis filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilters {
    low_pass: Vec<f64>,
    high_pass: Vec<f64>,
}

impl WaveletFilters {
    /// Builds the pair from a low-pass filter; the high-pass branch is its
    /// quadrature mirror `g[k] = (-1)^k h[L-1-k]`.
    pub fn from_low_pass(low_pass: Vec<f64>) -> Result<Self> {
        let n = low_pass.len();
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "wavelet filter length must be even and nonzero".into(),
            ));
        }
        let high_pass = (0..n)
            .map(|k| {
                let v = low_pass[n - 1 - k];
                if k % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect::<Vec<_>>();
        let norm: f64 = low_pass.iter().chain(&high_pass).map(|c| c * c).sum();
        if (norm - 2.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "filter pair is not orthonormal (squared norm {norm})"
            )));
        }
        Ok(Self {
            low_pass,
            high_pass,
        })
    }

    pub fn haar() -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_low_pass(vec![c, c]).expect("haar filters are orthonormal")
    }

    pub fn db4() -> Self {
        Self::from_low_pass(DB4.to_vec()).expect("db4 filters are orthonormal")
    }

    pub fn of_kind(kind: WaveletKind) -> Self {
        match kind {
            WaveletKind::Haar => Self::haar(),
            WaveletKind::Db4 => Self::db4(),
        }
    }

    pub fn low_pass(&self) -> &[f64] {
        &self.low_pass
    }

    pub fn high_pass(&self) -> &[f64] {
        &self.high_pass
    }

    pub fn len(&self) -> usize {
        self.low_pass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low_pass.is_empty()
    }
}

/// Output of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDecomposition {
    pub scale: u32,
    pub approximation: Vec<f64>,
    pub detail: Vec<f64>,
}

/// One analysis level: circular correlation with each filter, keeping every
/// second output. Returns `(approximation, detail)`, each half as long as `x`.
pub fn dwt_step(x: &[f64], filters: &WaveletFilters) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = x.len();
    if !len.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "dwt input length {len} is odd"
        )));
    }
    if len < filters.len() {
        return Err(Error::InvalidArgument(format!(
            "dwt input length {len} is shorter than the filter ({})",
            filters.len()
        )));
    }
    let half = len / 2;
    let mut approx = Vec::with_capacity(half);
    let mut detail = Vec::with_capacity(half);
    for n in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (k, (h, g)) in filters.low_pass.iter().zip(&filters.high_pass).enumerate() {
            let v = x[(2 * n + k) % len];
            a += h * v;
            d += g * v;
        }
        approx.push(a);
        detail.push(d);
    }
    Ok((approx, detail))
}

/// Approximation coefficients after `scale` levels of decomposition.
pub fn approximation_at_scale(x: &[f64], scale: u32, filters: &WaveletFilters) -> Result<Vec<f64>> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be at least 1".into()));
    }
    check_divisible(x.len(), scale)?;
    let mut current = x.to_vec();
    for _ in 0..scale {
        current = dwt_step(&current, filters)?.0;
    }
    Ok(current)
}

/// All levels `1..=levels`, each computed from the previous approximation.
pub fn decompose(x: &[f64], levels: u32, filters: &WaveletFilters) -> Result<Vec<ScaleDecomposition>> {
    check_divisible(x.len(), levels)?;
    let mut out = Vec::with_capacity(levels as usize);
    let mut current = x.to_vec();
    for scale in 1..=levels {
        let (approximation, detail) = dwt_step(&current, filters)?;
        current.clone_from(&approximation);
        out.push(ScaleDecomposition {
            scale,
            approximation,
            detail,
        });
    }
    Ok(out)
}

fn check_divisible(len: usize, scale: u32) -> Result<()> {
    let factor = 1usize
        .checked_shl(scale)
        .ok_or_else(|| Error::InvalidArgument(format!("scale {scale} too large")))?;
    if len == 0 || !len.is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "length {len} is not divisible by 2^{scale}"
        )));
    }
    Ok(())
}

/// Coefficient listing used by the CLI diagnostic, 17 significant digits.
pub fn format_filters(filters: &WaveletFilters) -> String {
    let mut s = String::new();
    for (k, (h, g)) in filters.low_pass.iter().zip(&filters.high_pass).enumerate() {
        s.push_str(&format!("{k},{h:.16e},{g:.16e}\n"));
    }
    s
}
