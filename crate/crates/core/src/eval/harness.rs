//! Enrollment, condition planning and the two experiment drivers.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::corpus::{derive_seed, Manifest, Split};
use super::report::{pct, ConditionRow, EvalReport, RowStatus};
use crate::assignment::{agreement, build_score_table, exhaustive_pair_search};
use crate::error::{Error, Result};
use crate::features::{MfccExtractor, ObservationSequence};
use crate::gmm::{sid_decide, train_gmm, GmmModel, SpeakerSet, TrainStats};
use crate::mixer::{mix_at_tir, MixtureSpec, MixtureTruth};
use crate::signal::{load_wav, Waveform};
use crate::usable::{UsableDetector, UsableSegment};

// Seed streams; every stochastic step draws from its own stream.
const STREAM_TRAIN: u64 = 10;
const STREAM_PLAN: u64 = 11;
const STREAM_COIN: u64 = 12;

/// The assignment experiment always mixes at equal energy.
pub const ASSIGNMENT_TIR_DB: f64 = 0.0;

/// Speakers and their train/test files, resolved from a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub speakers: Vec<String>,
    pub train: Vec<Vec<PathBuf>>,
    pub test: Vec<Vec<PathBuf>>,
}

impl CorpusSplit {
    pub fn from_manifest(manifest: &Manifest, config: &ExperimentConfig) -> Result<Self> {
        let speakers = if config.speakers.is_empty() {
            manifest.speakers()
        } else {
            config.speakers.clone()
        };
        if speakers.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 speakers".into()));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for s in &speakers {
            let tr = manifest.files(s, Split::Train);
            let te = manifest.files(s, Split::Test);
            if tr.len() < config.train_files || te.len() < config.test_files {
                return Err(Error::NotEnoughData {
                    got: tr.len().min(te.len()),
                    need: config.train_files.max(config.test_files),
                });
            }
            if let Some(p) = tr.iter().find(|p| te.contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "{} is both a training and a test file for {s}",
                    p.display()
                )));
            }
            train.push(tr[..config.train_files].to_vec());
            test.push(te[..config.test_files].to_vec());
        }
        Ok(Self { speakers, train, test })
    }

    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        Self::from_manifest(&Manifest::open(&config.corpus_root, config.train_files)?, config)
    }
}

/// Frames the models see: MFCCs over the usable segments of each file.
/// Falls back to every frame of a file in which nothing is usable.
pub fn training_features(
    files: &[PathBuf],
    detector: &UsableDetector,
    extractor: &MfccExtractor,
) -> Result<ObservationSequence> {
    let mut all = ObservationSequence::new(extractor.config().n_coeffs);
    for path in files {
        let w = load_wav(path)?;
        let segments = detector.detect(&w)?.segments;
        if segments.is_empty() {
            all.extend(&extractor.waveform_features(&w)?)?;
        }
        for seg in &segments {
            all.extend(&extractor.segment_features(&w, seg)?)?;
        }
    }
    Ok(all)
}

/// Trains one model per speaker, in parallel; each speaker's seed depends
/// only on the master seed and its position.
pub fn train_speaker_models(split: &CorpusSplit, config: &ExperimentConfig) -> Result<(SpeakerSet, Vec<TrainStats>)> {
    let detector = UsableDetector::new(config.detection)?;
    let extractor = MfccExtractor::new(config.features, crate::SAMPLE_RATE)?;
    let trained = split
        .speakers
        .par_iter()
        .zip(&split.train)
        .enumerate()
        .map(|(i, (id, files))| {
            let data = training_features(files, &detector, &extractor)?;
            train_gmm(id, &data, &config.gmm, derive_seed(config.seed, STREAM_TRAIN, i as u64))
        })
        .collect::<Result<Vec<(GmmModel, TrainStats)>>>()?;
    let (models, stats) = trained.into_iter().unzip();
    Ok((SpeakerSet::new(models)?, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub index: usize,
    pub target: usize,
    pub interferer: usize,
    pub target_file: usize,
    pub interferer_file: usize,
    pub tir_db: f64,
}

/// Every speaker is the target once, with one randomly chosen test file,
/// mixed with one randomly chosen test file of every other speaker at every
/// ratio. File choices do not depend on the ratio grid.
pub fn plan_conditions(split: &CorpusSplit, tirs: &[f64], seed: u64) -> Vec<Condition> {
    let n = split.speakers.len();
    let mut out = Vec::new();
    for t in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_PLAN, t as u64));
        let target_file = rng.random_range(0..split.test[t].len());
        let picks: Vec<usize> = (0..n).map(|s| rng.random_range(0..split.test[s].len())).collect();
        for i in (0..n).filter(|&i| i != t) {
            for &tir_db in tirs {
                out.push(Condition {
                    index: out.len(),
                    target: t,
                    interferer: i,
                    target_file,
                    interferer_file: picks[i],
                    tir_db,
                });
            }
        }
    }
    out
}

/// Truth label per segment: 0 where the target carries at least as much
/// energy as the interferer over the segment's span, else 1.
pub fn dominant_energy_labels(truth: &MixtureTruth, segments: &[UsableSegment]) -> Vec<u8> {
    let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    segments
        .iter()
        .map(|s| {
            let et = energy(&truth.scaled_target.samples[s.span()]);
            let ei = energy(&truth.scaled_interferer.samples[s.span()]);
            u8::from(ei > et)
        })
        .collect()
}

/// Everything needed to evaluate conditions against a fixed enrolled set.
pub struct Evaluator {
    config: ExperimentConfig,
    split: CorpusSplit,
    speakers: SpeakerSet,
    detector: UsableDetector,
    extractor: MfccExtractor,
    test_audio: Vec<Vec<std::result::Result<Waveform, String>>>,
    /// Index into `speakers` for each corpus speaker.
    model_index: Vec<usize>,
}

impl Evaluator {
    pub fn new(config: ExperimentConfig, split: CorpusSplit, speakers: SpeakerSet) -> Result<Self> {
        config.validate()?;
        let model_index = split
            .speakers
            .iter()
            .map(|s| {
                speakers
                    .index_of(s)
                    .ok_or_else(|| Error::InvalidArgument(format!("no model for speaker {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let test_audio = split
            .test
            .iter()
            .map(|files| files.iter().map(|p| load_wav(p).map_err(|e| e.to_string())).collect())
            .collect();
        Ok(Self {
            detector: UsableDetector::new(config.detection)?,
            extractor: MfccExtractor::new(config.features, crate::SAMPLE_RATE)?,
            config,
            split,
            speakers,
            test_audio,
            model_index,
        })
    }

    /// Loads the corpus and trains the enrolled set from the config alone.
    pub fn train(config: ExperimentConfig) -> Result<Self> {
        let split = CorpusSplit::load(&config)?;
        let (speakers, _) = train_speaker_models(&split, &config)?;
        Self::new(config, split, speakers)
    }

    pub fn speakers(&self) -> &SpeakerSet {
        &self.speakers
    }

    pub fn split(&self) -> &CorpusSplit {
        &self.split
    }

    pub fn plan(&self, tirs: &[f64]) -> Vec<Condition> {
        plan_conditions(&self.split, tirs, self.config.seed)
    }

    /// Evaluates conditions in parallel; rows come back in condition order.
    pub fn run(&self, title: &str, conditions: &[Condition]) -> EvalReport {
        EvalReport {
            title: title.to_string(),
            rows: conditions.par_iter().map(|c| self.run_condition(c)).collect(),
        }
    }

    pub fn run_condition(&self, c: &Condition) -> ConditionRow {
        let mut row = ConditionRow::new(
            c.index,
            &self.split.speakers[c.target],
            &self.split.speakers[c.interferer],
            c.tir_db,
        );
        row.target_file = display_rel(&self.config.corpus_root, &self.split.test[c.target][c.target_file]);
        row.interferer_file =
            display_rel(&self.config.corpus_root, &self.split.test[c.interferer][c.interferer_file]);
        if let Err(e) = self.fill_row(c, &mut row) {
            row.status = RowStatus::Failed;
            row.note = e;
        }
        row
    }

    fn fill_row(&self, c: &Condition, row: &mut ConditionRow) -> std::result::Result<(), String> {
        let target = self.test_audio[c.target][c.target_file].as_ref()?;
        let interferer = self.test_audio[c.interferer][c.interferer_file].as_ref()?;
        let err = |e: Error| e.to_string();
        let truth = mix_at_tir(&MixtureSpec {
            target: target.clone(),
            interferer: interferer.clone(),
            tir_db: c.tir_db,
            target_id: row.target_id.clone(),
            interferer_id: row.interferer_id.clone(),
        })
        .map_err(err)?;

        let baseline_features = self.extractor.waveform_features(&truth.mixture).map_err(err)?;
        let baseline = sid_decide(&self.speakers, &baseline_features).map_err(err)?;
        row.baseline_id = Some(self.speakers.id(baseline).to_string());
        row.baseline_correct = baseline == self.model_index[c.target];

        let segments = self.detector.detect(&truth.mixture).map_err(err)?.segments;
        row.n_segments = segments.len();
        if segments.is_empty() {
            row.status = RowStatus::Skipped;
            row.note = "no usable segments".into();
            return Ok(());
        }
        let features = segments
            .iter()
            .map(|s| self.extractor.segment_features(&truth.mixture, s))
            .collect::<Result<Vec<_>>>()
            .map_err(err)?;
        let table = build_score_table(&self.speakers, &features).map_err(err)?;
        let result = exhaustive_pair_search(&table).map_err(err)?;
        row.speaker_i = Some(self.speakers.id(result.speaker_i).to_string());
        row.speaker_ii = Some(self.speakers.id(result.speaker_ii).to_string());
        row.proposed_correct = result.contains(self.model_index[c.target]);

        let labels = dominant_energy_labels(&truth, &segments);
        let weights: Vec<usize> = segments.iter().map(UsableSegment::n_frames).collect();
        let (agree, total) = agreement(&result.labeling, &labels, &weights).map_err(err)?;
        row.n_frames = total;
        row.search_agree_frames = agree.max(total - agree);
        row.oracle_agree_frames = agreement(&labels, &labels, &weights).map_err(err)?.0;
        row.assignment_accuracy = Some(pct(row.search_agree_frames, total));

        let mut coin = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, STREAM_COIN, c.index as u64));
        row.random_agree_frames = labels
            .iter()
            .zip(&weights)
            .map(|(&label, &w)| (0..w).filter(|_| u8::from(coin.random_bool(0.5)) == label).count())
            .sum();
        row.status = RowStatus::Ok;
        Ok(())
    }

    /// Equal-energy mixtures of every target with every other speaker.
    pub fn run_assignment_eval(&self) -> EvalReport {
        self.run("assignment evaluation", &self.plan(&[ASSIGNMENT_TIR_DB]))
    }

    /// Every target/interferer pairing at every ratio of the configured grid.
    pub fn run_sid_eval(&self) -> EvalReport {
        self.run("target SID evaluation", &self.plan(&self.config.tir_grid))
    }
}

fn display_rel(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

pub fn run_assignment_eval(config: &ExperimentConfig) -> Result<EvalReport> {
    Ok(Evaluator::train(config.clone())?.run_assignment_eval())
}

pub fn run_sid_eval(config: &ExperimentConfig) -> Result<EvalReport> {
    Ok(Evaluator::train(config.clone())?.run_sid_eval())
}
