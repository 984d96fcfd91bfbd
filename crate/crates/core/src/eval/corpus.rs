//! Corpus manifests and a seeded synthetic-voice corpus generator.
//!
//! A synthetic speaker is a harmonic source at a fixed base pitch shaped by
//! a speaker-specific envelope of eight resonances, plus a little breath
//! noise. Utterances alternate voiced spans with short pauses; each voiced
//! span perturbs the resonance gains (a different "vowel"), offsets the
//! pitch slightly and adds slow pitch drift.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{save_wav, Waveform};
use crate::SAMPLE_RATE;

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub speaker_id: String,
    /// Relative to the corpus root unless absolute.
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let path = root.join(MANIFEST_FILE);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let entries = csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let mut w = csv::Writer::from_path(&path)?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Speaker ids in first-appearance order.
    pub fn speakers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.speaker_id) {
                out.push(e.speaker_id.clone());
            }
        }
        out
    }

    pub fn files(&self, speaker: &str, split: Split) -> Vec<PathBuf> {
        self.entries
            .iter()
            .filter(|e| e.speaker_id == speaker && e.split == split)
            .map(|e| self.resolve(&e.path))
            .collect()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    /// `manifest.csv` under `root` if present, else a scan of speaker
    /// directories (see [`Manifest::from_speaker_dirs`]).
    pub fn open(root: impl AsRef<Path>, train_files: usize) -> Result<Self> {
        let root = root.as_ref();
        if root.join(MANIFEST_FILE).is_file() {
            Self::load(root)
        } else {
            Self::from_speaker_dirs(root, train_files)
        }
    }

    /// Builds a manifest from `root/<speaker>/*.wav`: the first `train_files`
    /// files of each speaker (by name) train, the rest test.
    pub fn from_speaker_dirs(root: impl AsRef<Path>, train_files: usize) -> Result<Self> {
        let root = root.as_ref();
        let read = |dir: &Path| -> Result<Vec<PathBuf>> {
            let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            v.sort();
            Ok(v)
        };
        let mut entries = Vec::new();
        for dir in read(root)?.into_iter().filter(|p| p.is_dir()) {
            let speaker_id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let wavs = read(&dir)?
                .into_iter()
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")));
            for (i, wav) in wavs.enumerate() {
                entries.push(ManifestEntry {
                    speaker_id: speaker_id.clone(),
                    path: wav.strip_prefix(root).unwrap_or(&wav).to_path_buf(),
                    split: if i < train_files { Split::Train } else { Split::Test },
                });
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }
}

/// splitmix64 over `(seed, stream, index)`, used to give every speaker and
/// file its own independent generator.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const NOMINAL_RESONANCES_HZ: [f64; 8] = [320.0, 850.0, 1350.0, 1950.0, 2650.0, 3400.0, 4300.0, 5500.0];
const MAX_HARMONIC_HZ: f64 = 7000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub speaker_id: String,
    pub f0_hz: f64,
    pub resonance_hz: [f64; 8],
    /// Linear gains.
    pub resonance_gain: [f64; 8],
    pub resonance_bw_hz: [f64; 8],
    /// Harmonic roll-off exponent.
    pub tilt: f64,
    /// Breath noise level relative to the voiced level.
    pub breathiness: f64,
}

impl VoiceProfile {
    /// `vtl` scales every resonance frequency (shorter tract, higher value).
    pub fn random(speaker_id: impl Into<String>, f0_hz: f64, vtl: f64, rng: &mut impl Rng) -> Self {
        let mut resonance_hz = [0.0; 8];
        let mut resonance_gain = [0.0; 8];
        let mut resonance_bw_hz = [0.0; 8];
        for r in 0..8 {
            resonance_hz[r] = NOMINAL_RESONANCES_HZ[r] * vtl * rng.random_range(0.93..1.07);
            resonance_gain[r] = db_to_linear(rng.random_range(-15.0..5.0));
            resonance_bw_hz[r] = 60.0 + 0.08 * resonance_hz[r];
        }
        Self {
            speaker_id: speaker_id.into(),
            f0_hz,
            resonance_hz,
            resonance_gain,
            resonance_bw_hz,
            tilt: rng.random_range(0.5..1.0),
            breathiness: rng.random_range(0.005..0.02),
        }
    }

    fn envelope(&self, f: f64, gains: &[f64; 8]) -> f64 {
        let mut e = 0.02;
        for ((fr, bw), g) in self.resonance_hz.iter().zip(&self.resonance_bw_hz).zip(gains) {
            let x = (f - fr) / bw;
            e += g / (1.0 + x * x);
        }
        e
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub waveform: Waveform,
    /// Sample ranges where the voice is active.
    pub voiced_spans: Vec<Range<usize>>,
}

/// Renders one utterance of `duration_s` seconds for `profile`.
pub fn synth_utterance(profile: &VoiceProfile, duration_s: f64, seed: u64) -> Utterance {
    let fs = f64::from(SAMPLE_RATE);
    let total = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = (0..total)
        .map(|_| 3e-4 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut voiced_spans = Vec::new();

    let mut pos = (rng.random_range(0.05..0.2) * fs) as usize;
    while pos < total {
        let len = ((rng.random_range(0.2..0.5) * fs) as usize).min(total - pos);
        if len < (0.1 * fs) as usize {
            break;
        }
        let f0 = profile.f0_hz * rng.random_range(0.95..1.05);
        let drift_rate = rng.random_range(0.5..2.0);
        let drift_phase = rng.random_range(0.0..2.0 * PI);
        let level = rng.random_range(0.6..1.0);
        let mut gains = profile.resonance_gain;
        for g in gains.iter_mut() {
            *g *= db_to_linear(rng.random_range(-3.0..3.0));
        }
        let n_harm = (MAX_HARMONIC_HZ / (f0 * 1.03)).floor() as usize;
        let amps: Vec<f64> = (1..=n_harm)
            .map(|k| profile.envelope(k as f64 * f0, &gains) * (k as f64).powf(-profile.tilt))
            .collect();
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let ramp = (0.025 * fs) as usize;

        let mut phase = 0.0;
        for n in 0..len {
            let t = n as f64 / fs;
            let inst_f0 = f0 * (1.0 + 0.02 * (2.0 * PI * drift_rate * t + drift_phase).sin());
            phase += 2.0 * PI * inst_f0 / fs;
            let voiced: f64 = amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(k, (a, p))| a * ((k + 1) as f64 * phase + p).sin())
                .sum::<f64>()
                / norm;
            let breath: f64 = profile.breathiness * rng.sample::<f64, _>(StandardNormal);
            let edge = n.min(len - 1 - n);
            let shape = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            samples[pos + n] += level * shape * (voiced + breath);
        }
        voiced_spans.push(pos..pos + len);
        pos += len + (rng.random_range(0.08..0.25) * fs) as usize;
    }

    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|v| *v *= 0.6 / peak);
    }
    Utterance {
        waveform: Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        },
        voiced_spans,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub files_per_speaker: usize,
    pub train_files: usize,
    pub duration_s: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 10,
            files_per_speaker: 10,
            train_files: 5,
            duration_s: 3.0,
            f0_min_hz: 85.0,
            f0_max_hz: 255.0,
        }
    }
}

const VTL_RANGE: (f64, f64) = (0.8, 1.25);

/// Draws one point from each of `n` equal sub-bands of `[lo, hi)`, in
/// shuffled order.
fn stratified(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut bands: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        bands.swap(i, rng.random_range(0..=i));
    }
    let width = (hi - lo) / n as f64;
    bands
        .into_iter()
        .map(|b| lo + (b as f64 + rng.random_range(0.25..0.75)) * width)
        .collect()
}

/// Voice profiles for a synthetic corpus. Base pitch and vocal-tract scale
/// are each stratified across speakers (independently shuffled), so no two
/// speakers share either.
pub fn synth_profiles(seed: u64, config: &SynthConfig) -> Vec<VoiceProfile> {
    let n = config.n_speakers;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let f0s = stratified(n, config.f0_min_hz, config.f0_max_hz, &mut rng);
    let vtls = stratified(n, VTL_RANGE.0, VTL_RANGE.1, &mut rng);
    (0..n)
        .map(|s| {
            let mut voice_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, s as u64));
            VoiceProfile::random(format!("spk{s:02}"), f0s[s], vtls[s], &mut voice_rng)
        })
        .collect()
}

/// Writes `<out>/<speaker>/<speaker>_<k>.wav` for every speaker and file
/// plus `manifest.csv`, and returns the manifest.
pub fn synth_corpus(out: impl AsRef<Path>, seed: u64, config: &SynthConfig) -> Result<Manifest> {
    let out = out.as_ref();
    if config.n_speakers < 2 {
        return Err(Error::InvalidArgument("synthetic corpus needs at least 2 speakers".into()));
    }
    if config.files_per_speaker <= config.train_files || config.train_files == 0 {
        return Err(Error::InvalidArgument(
            "files_per_speaker must exceed train_files, which must be positive".into(),
        ));
    }
    if config.duration_s.is_nan() || config.duration_s < 0.5 {
        return Err(Error::InvalidArgument("utterances must last at least 0.5 s".into()));
    }
    let profiles = synth_profiles(seed, config);
    let jobs: Vec<(usize, usize)> = (0..config.n_speakers)
        .flat_map(|s| (0..config.files_per_speaker).map(move |f| (s, f)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(s, f)| {
            let profile = &profiles[s];
            let dir = out.join(&profile.speaker_id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let rel = PathBuf::from(&profile.speaker_id).join(format!("{}_{f:02}.wav", profile.speaker_id));
            let utt = synth_utterance(profile, config.duration_s, derive_seed(seed, 3 + s as u64, f as u64));
            save_wav(&utt.waveform, out.join(&rel))?;
            Ok(ManifestEntry {
                speaker_id: profile.speaker_id.clone(),
                path: rel,
                split: if f < config.train_files { Split::Train } else { Split::Test },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.save()?;
    Ok(manifest)
}
