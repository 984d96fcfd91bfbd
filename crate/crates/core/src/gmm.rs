//! Diagonal-covariance Gaussian mixture speaker models.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObservationSequence;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One speaker model.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    speaker_id: String,
    dim: usize,
    weights: Vec<f64>,
    /// `k * dim` row-major.
    means: Vec<f64>,
    variances: Vec<f64>,
    /// `ln w_k - (dim ln 2π + Σ ln σ²) / 2`, cached per component.
    log_norms: Vec<f64>,
    inv_variances: Vec<f64>,
}

impl GmmModel {
    pub fn new(
        speaker_id: impl Into<String>,
        dim: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || dim == 0 {
            return Err(Error::InvalidArgument("model needs at least one component and dimension".into()));
        }
        if means.len() != k * dim || variances.len() != k * dim {
            return Err(Error::DimensionMismatch {
                expected: k * dim,
                got: means.len().min(variances.len()),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("means must be finite and variances positive".into()));
        }
        let speaker_id = speaker_id.into();
        if speaker_id.is_empty() || speaker_id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "speaker id '{speaker_id}' must be nonempty without whitespace"
            )));
        }
        let log_norms = (0..k)
            .map(|c| {
                let log_det: f64 = variances[c * dim..(c + 1) * dim].iter().map(|v| v.ln()).sum();
                weights[c].ln() - 0.5 * (dim as f64 * LN_2PI + log_det)
            })
            .collect();
        let inv_variances = variances.iter().map(|v| 1.0 / v).collect();
        Ok(Self {
            speaker_id,
            dim,
            weights,
            means,
            variances,
            log_norms,
            inv_variances,
        })
    }

    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    pub fn with_speaker_id(mut self, id: impl Into<String>) -> Self {
        self.speaker_id = id.into();
        self
    }

    /// Per-component `ln w_k + ln N(x; μ_k, σ²_k)` written into `out`.
    fn component_log_terms(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (k, slot) in out.iter_mut().enumerate() {
            let mean = &self.means[k * d..(k + 1) * d];
            let inv = &self.inv_variances[k * d..(k + 1) * d];
            let mut mahal = 0.0;
            for i in 0..d {
                let diff = x[i] - mean[i];
                mahal += diff * diff * inv[i];
            }
            *slot = self.log_norms[k] - 0.5 * mahal;
        }
    }

    /// `ln p(x | λ)`, evaluated with log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut terms = vec![0.0; self.n_components()];
        self.component_log_terms(x, &mut terms);
        Ok(log_sum_exp(&terms))
    }

    /// `Σ_m ln p(o_m | λ)`, summed in frame order.
    pub fn sequence_log_likelihood(&self, obs: &ObservationSequence) -> Result<f64> {
        if obs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if obs.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: obs.dim(),
            });
        }
        let mut terms = vec![0.0; self.n_components()];
        let mut total = 0.0;
        for x in obs.rows() {
            self.component_log_terms(x, &mut terms);
            total += log_sum_exp(&terms);
        }
        Ok(total)
    }

    /// Text form: a header line `K dim speaker_id`, one line of weights,
    /// then K mean rows and K variance rows, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.n_components(), self.dim, self.speaker_id);
        let row = |vals: &[f64]| vals.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{}", row(&self.weights));
        for k in 0..self.n_components() {
            let _ = writeln!(s, "{}", row(self.mean(k)));
        }
        for k in 0..self.n_components() {
            let _ = writeln!(s, "{}", row(self.variance(k)));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::parse("model file", reason);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [k, dim, id] = fields[..] else {
            return Err(bad(format!("header '{header}' is not 'K dim speaker_id'")));
        };
        let k: usize = k.parse().map_err(|_| bad(format!("bad component count '{k}'")))?;
        let dim: usize = dim.parse().map_err(|_| bad(format!("bad dimension '{dim}'")))?;
        let mut parse_row = |want: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad("file truncated".into()))?;
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number '{t}'"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != want {
                return Err(bad(format!("row has {} values, expected {want}", vals.len())));
            }
            Ok(vals)
        };
        let weights = parse_row(k)?;
        let mut means = Vec::with_capacity(k * dim);
        for _ in 0..k {
            means.extend(parse_row(dim)?);
        }
        let mut variances = Vec::with_capacity(k * dim);
        for _ in 0..k {
            variances.extend(parse_row(dim)?);
        }
        if lines.next().is_some() {
            return Err(bad("trailing data after variances".into()));
        }
        Self::new(id, dim, weights, means, variances)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// The enrolled speaker set, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSet {
    models: Vec<GmmModel>,
}

impl SpeakerSet {
    pub fn new(models: Vec<GmmModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidArgument("speaker set is empty".into()));
        }
        let dim = models[0].dim();
        for (i, m) in models.iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
            if models[..i].iter().any(|o| o.speaker_id() == m.speaker_id()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate speaker id '{}'",
                    m.speaker_id()
                )));
            }
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[GmmModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn id(&self, index: usize) -> &str {
        self.models[index].speaker_id()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.speaker_id() == id)
    }

    /// Loads every `*.gmm` file in `dir`, ordered by file name.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "gmm"))
            .collect::<Vec<_>>();
        paths.sort();
        Self::new(paths.iter().map(GmmModel::load).collect::<Result<Vec<_>>>()?)
    }

    /// Writes `<speaker_id>.gmm` per model into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for m in &self.models {
            m.save(dir.join(format!("{}.gmm", m.speaker_id())))?;
        }
        Ok(())
    }
}

/// Index of the model with the highest sequence log-likelihood; ties go to
/// the lowest index.
pub fn sid_decide(speakers: &SpeakerSet, obs: &ObservationSequence) -> Result<usize> {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, m) in speakers.models().iter().enumerate() {
        let score = m.sequence_log_likelihood(obs)?;
        if score > best.1 {
            best = (i, score);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_components: usize,
    pub max_iters: usize,
    /// Stop once the mean per-frame log-likelihood gains less than this.
    pub tol: f64,
    /// Variance floor as a fraction of the per-dimension global variance.
    pub variance_floor_ratio: f64,
    /// Lloyd iterations run after k-means++ seeding.
    pub kmeans_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_components: 16,
            max_iters: 100,
            tol: 1e-5,
            variance_floor_ratio: 1e-3,
            kmeans_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    /// Mean per-frame log-likelihood before each M-step, then once more for
    /// the returned model.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Components reset after losing (almost) all responsibility.
    pub resets: usize,
}

// A component with less total responsibility than this is considered collapsed.
const COLLAPSE_MASS: f64 = 1.0;
const RESET_VARIANCE_INFLATION: f64 = 2.0;

/// Fits a `n_components` mixture to `data` with EM from a seeded k-means++ start.
pub fn train_gmm(
    speaker_id: &str,
    data: &ObservationSequence,
    config: &TrainConfig,
    seed: u64,
) -> Result<(GmmModel, TrainStats)> {
    let k = config.n_components;
    let d = data.dim();
    let n = data.len();
    if k == 0 || d == 0 {
        return Err(Error::InvalidArgument("need at least one component and dimension".into()));
    }
    if n < 10 * k {
        return Err(Error::NotEnoughData { got: n, need: 10 * k });
    }
    let x = data.as_flat();

    let mut global_mean = vec![0.0; d];
    for row in data.rows() {
        for i in 0..d {
            global_mean[i] += row[i];
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut global_var = vec![0.0; d];
    for row in data.rows() {
        for i in 0..d {
            let diff = row[i] - global_mean[i];
            global_var[i] += diff * diff;
        }
    }
    global_var.iter_mut().for_each(|v| *v /= n as f64);
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (config.variance_floor_ratio * v).max(1e-12))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut weights, mut means, mut variances) = kmeans_init(data, k, config.kmeans_iters, &floor, &global_var, &mut rng);

    let mut stats = TrainStats {
        log_likelihood: Vec::new(),
        iterations: 0,
        converged: false,
        resets: 0,
    };
    let mut resp = vec![0.0; n * k];
    let mut prev = f64::NEG_INFINITY;
    loop {
        let model = GmmModel::new(speaker_id, d, weights.clone(), means.clone(), variances.clone())?;
        let ll = e_step(&model, data, &mut resp);
        stats.log_likelihood.push(ll);
        if ll - prev < config.tol {
            stats.converged = true;
            return Ok((model, stats));
        }
        if stats.iterations == config.max_iters {
            return Ok((model, stats));
        }
        prev = ll;
        stats.iterations += 1;

        // M-step, accumulated in index order.
        let mut mass = vec![0.0; k];
        let mut sum = vec![0.0; k * d];
        for t in 0..n {
            let row = &x[t * d..(t + 1) * d];
            for c in 0..k {
                let g = resp[t * k + c];
                mass[c] += g;
                for i in 0..d {
                    sum[c * d + i] += g * row[i];
                }
            }
        }
        for c in 0..k {
            if mass[c] >= COLLAPSE_MASS {
                for i in 0..d {
                    means[c * d + i] = sum[c * d + i] / mass[c];
                }
            }
        }
        let mut sq = vec![0.0; k * d];
        for t in 0..n {
            let row = &x[t * d..(t + 1) * d];
            for c in 0..k {
                let g = resp[t * k + c];
                for i in 0..d {
                    let diff = row[i] - means[c * d + i];
                    sq[c * d + i] += g * diff * diff;
                }
            }
        }
        let mut reset_any = false;
        for c in 0..k {
            if mass[c] >= COLLAPSE_MASS {
                weights[c] = mass[c] / n as f64;
                for i in 0..d {
                    variances[c * d + i] = (sq[c * d + i] / mass[c]).max(floor[i]);
                }
            } else {
                stats.resets += 1;
                reset_any = true;
                weights[c] = 1.0 / k as f64;
                means[c * d..(c + 1) * d].copy_from_slice(&global_mean);
                for i in 0..d {
                    variances[c * d + i] = (RESET_VARIANCE_INFLATION * global_var[i]).max(floor[i]);
                }
            }
        }
        normalize(&mut weights);
        if reset_any {
            // A reset can lower the likelihood; restart the convergence test.
            prev = f64::NEG_INFINITY;
        }
    }
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
}

/// Fills `resp` with posteriors and returns the mean per-frame log-likelihood.
fn e_step(model: &GmmModel, data: &ObservationSequence, resp: &mut [f64]) -> f64 {
    let k = model.n_components();
    let mut total = 0.0;
    for (t, row) in data.rows().enumerate() {
        let slot = &mut resp[t * k..(t + 1) * k];
        model.component_log_terms(row, slot);
        let lse = log_sum_exp(slot);
        for v in slot.iter_mut() {
            *v = (*v - lse).exp();
        }
        total += lse;
    }
    total / data.len() as f64
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_init(
    data: &ObservationSequence,
    k: usize,
    lloyd_iters: usize,
    floor: &[f64],
    global_var: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = data.len();
    let d = data.dim();

    // k-means++ seeding.
    let mut centers = Vec::with_capacity(k * d);
    centers.extend_from_slice(data.row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = data.rows().map(|r| sq_dist(r, &centers[..d])).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = centers.len() / d;
        centers.extend_from_slice(data.row(pick));
        for (i, row) in data.rows().enumerate() {
            dist[i] = dist[i].min(sq_dist(row, &centers[c * d..(c + 1) * d]));
        }
    }

    let mut labels = vec![0usize; n];
    let assign = |centers: &[f64], labels: &mut [usize]| {
        for (i, row) in data.rows().enumerate() {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let dd = sq_dist(row, &centers[c * d..(c + 1) * d]);
                if dd < best.1 {
                    best = (c, dd);
                }
            }
            labels[i] = best.0;
        }
    };
    assign(&centers, &mut labels);
    for _ in 0..lloyd_iters {
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (row, &c) in data.rows().zip(&labels) {
            counts[c] += 1;
            for i in 0..d {
                sums[c * d + i] += row[i];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for i in 0..d {
                    centers[c * d + i] = sums[c * d + i] / counts[c] as f64;
                }
            }
        }
        let before = labels.clone();
        assign(&centers, &mut labels);
        if before == labels {
            break;
        }
    }

    let mut counts = vec![0usize; k];
    let mut sq = vec![0.0; k * d];
    for (row, &c) in data.rows().zip(&labels) {
        counts[c] += 1;
        for i in 0..d {
            let diff = row[i] - centers[c * d + i];
            sq[c * d + i] += diff * diff;
        }
    }
    let mut weights = vec![0.0; k];
    let mut variances = vec![0.0; k * d];
    for c in 0..k {
        weights[c] = counts[c].max(1) as f64;
        for i in 0..d {
            variances[c * d + i] = if counts[c] > 1 {
                (sq[c * d + i] / counts[c] as f64).max(floor[i])
            } else {
                global_var[i].max(floor[i])
            };
        }
    }
    normalize(&mut weights);
    (weights, centers, variances)
}
