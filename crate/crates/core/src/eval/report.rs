//! Per-condition result rows, their aggregates, and the on-disk report.
//!
//! Rows keep integer frame counts rather than only percentages so that every
//! aggregate in the summary can be recomputed exactly from the CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// The mixture produced no usable segments.
    Skipped,
    /// The condition could not be evaluated (unreadable file, ...).
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: usize,
    pub target_id: String,
    pub interferer_id: String,
    pub tir_db: f64,
    pub target_file: String,
    pub interferer_file: String,
    pub status: RowStatus,
    pub n_segments: usize,
    /// Usable detection frames over all segments.
    pub n_frames: usize,
    /// Frames whose search label matches the truth, after the better of the
    /// two label-name mappings.
    pub search_agree_frames: usize,
    /// Frames where a fair coin (1 = interferer) matches the truth.
    pub random_agree_frames: usize,
    pub oracle_agree_frames: usize,
    pub assignment_accuracy: Option<f64>,
    pub speaker_i: Option<String>,
    pub speaker_ii: Option<String>,
    pub proposed_correct: bool,
    pub baseline_id: Option<String>,
    pub baseline_correct: bool,
    pub note: String,
}

impl ConditionRow {
    pub fn new(condition: usize, target_id: &str, interferer_id: &str, tir_db: f64) -> Self {
        Self {
            condition,
            target_id: target_id.to_string(),
            interferer_id: interferer_id.to_string(),
            tir_db,
            target_file: String::new(),
            interferer_file: String::new(),
            status: RowStatus::Failed,
            n_segments: 0,
            n_frames: 0,
            search_agree_frames: 0,
            random_agree_frames: 0,
            oracle_agree_frames: 0,
            assignment_accuracy: None,
            speaker_i: None,
            speaker_ii: None,
            proposed_correct: false,
            baseline_id: None,
            baseline_correct: false,
            note: String::new(),
        }
    }
}

pub const COLUMNS: [&str; 19] = [
    "condition",
    "target_id",
    "interferer_id",
    "tir_db",
    "target_file",
    "interferer_file",
    "status",
    "n_segments",
    "n_frames",
    "search_agree_frames",
    "random_agree_frames",
    "oracle_agree_frames",
    "assignment_accuracy",
    "speaker_i",
    "speaker_ii",
    "proposed_correct",
    "baseline_id",
    "baseline_correct",
    "note",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub title: String,
    pub rows: Vec<ConditionRow>,
}

impl EvalReport {
    pub fn summary(&self) -> Summary {
        Summary::from_rows(&self.rows)
    }

    pub fn all_attempted_produced_rows(&self) -> bool {
        self.rows.iter().all(|r| r.status != RowStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TirSummary {
    pub tir_db: f64,
    /// Conditions evaluated at this ratio (failed ones excluded).
    pub n: usize,
    pub proposed_correct: usize,
    pub baseline_correct: usize,
}

impl TirSummary {
    pub fn proposed_rate(&self) -> f64 {
        rate(self.proposed_correct, self.n)
    }

    pub fn baseline_rate(&self) -> f64 {
        rate(self.baseline_correct, self.n)
    }

    pub fn proposed_se(&self) -> f64 {
        std_error(self.proposed_correct, self.n)
    }

    pub fn baseline_se(&self) -> f64 {
        std_error(self.baseline_correct, self.n)
    }
}

fn rate(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Standard error of a proportion with the Agresti-Coull adjustment (two
/// pseudo-successes and two pseudo-failures), which stays positive at
/// `k = 0` and `k = n` where the plain binomial estimate collapses to zero.
fn std_error(k: usize, n: usize) -> f64 {
    let n = n as f64 + 4.0;
    let p = (k as f64 + 2.0) / n;
    (p * (1.0 - p) / n).sqrt()
}

/// `100 k / n`; the one place percentages are computed, so rows and the
/// summary agree bit for bit.
pub fn pct(k: usize, n: usize) -> f64 {
    100.0 * rate(k, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub conditions: usize,
    pub ok: usize,
    pub skipped: usize,
    pub failed: usize,
    pub usable_frames: usize,
    pub search_agree_frames: usize,
    pub random_agree_frames: usize,
    pub oracle_agree_frames: usize,
    /// Unweighted mean of the per-condition accuracies, in percent.
    pub mean_condition_accuracy: Option<f64>,
    /// Sorted by ratio.
    pub per_tir: Vec<TirSummary>,
}

impl Summary {
    pub fn from_rows(rows: &[ConditionRow]) -> Self {
        let count = |s: RowStatus| rows.iter().filter(|r| r.status == s).count();
        let ok: Vec<&ConditionRow> = rows.iter().filter(|r| r.status == RowStatus::Ok).collect();
        let sum = |f: fn(&ConditionRow) -> usize| ok.iter().map(|r| f(r)).sum::<usize>();
        let accs: Vec<f64> = ok.iter().map(|r| pct(r.search_agree_frames, r.n_frames)).collect();
        let mean_condition_accuracy = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);

        let mut tirs: Vec<f64> = rows.iter().map(|r| r.tir_db).collect();
        tirs.sort_by(f64::total_cmp);
        tirs.dedup();
        let per_tir = tirs
            .into_iter()
            .map(|tir| {
                let at: Vec<&ConditionRow> = rows
                    .iter()
                    .filter(|r| r.tir_db == tir && r.status != RowStatus::Failed)
                    .collect();
                TirSummary {
                    tir_db: tir,
                    n: at.len(),
                    proposed_correct: at.iter().filter(|r| r.proposed_correct).count(),
                    baseline_correct: at.iter().filter(|r| r.baseline_correct).count(),
                }
            })
            .collect();

        Self {
            conditions: rows.len(),
            ok: ok.len(),
            skipped: count(RowStatus::Skipped),
            failed: count(RowStatus::Failed),
            usable_frames: sum(|r| r.n_frames),
            search_agree_frames: sum(|r| r.search_agree_frames),
            random_agree_frames: sum(|r| r.random_agree_frames),
            oracle_agree_frames: sum(|r| r.oracle_agree_frames),
            mean_condition_accuracy,
            per_tir,
        }
    }

    /// Frame-weighted search accuracy over all conditions, in percent.
    pub fn search_accuracy(&self) -> f64 {
        pct(self.search_agree_frames, self.usable_frames)
    }

    pub fn random_accuracy(&self) -> f64 {
        pct(self.random_agree_frames, self.usable_frames)
    }

    pub fn oracle_accuracy(&self) -> f64 {
        pct(self.oracle_agree_frames, self.usable_frames)
    }

    /// Every ratio where the proposed method is below the baseline.
    pub fn proposed_below_baseline(&self) -> Vec<f64> {
        self.per_tir
            .iter()
            .filter(|t| t.proposed_correct < t.baseline_correct)
            .map(|t| t.tir_db)
            .collect()
    }

    /// Adjacent ratio pairs where the proposed rate drops by more than the
    /// combined standard error.
    pub fn proposed_monotonicity_violations(&self) -> Vec<(f64, f64)> {
        self.per_tir
            .windows(2)
            .filter(|w| {
                let slack = w[0].proposed_se().hypot(w[1].proposed_se());
                w[1].proposed_rate() < w[0].proposed_rate() - slack
            })
            .map(|w| (w[0].tir_db, w[1].tir_db))
            .collect()
    }

    pub fn render(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {title}");
        let _ = writeln!(s, "# search: exhaustive pair search over all enrolled speakers, frame-weighted,");
        let _ = writeln!(s, "#   best of the two label-name mappings per condition");
        let _ = writeln!(s, "# random: independent fair coin per usable frame (1 = interferer)");
        let _ = writeln!(s, "# oracle (upper bound): ground-truth segment labels");
        let _ = writeln!(s, "# proposed SID is correct when the target is one of the two returned speakers;");
        let _ = writeln!(s, "#   baseline SID is correct when whole-mixture identification returns the target");
        let _ = writeln!(s, "conditions={}", self.conditions);
        let _ = writeln!(s, "ok={}", self.ok);
        let _ = writeln!(s, "skipped={}", self.skipped);
        let _ = writeln!(s, "failed={}", self.failed);
        let _ = writeln!(s, "usable_frames={}", self.usable_frames);
        let _ = writeln!(s, "search_agree_frames={}", self.search_agree_frames);
        let _ = writeln!(s, "random_agree_frames={}", self.random_agree_frames);
        let _ = writeln!(s, "oracle_agree_frames={}", self.oracle_agree_frames);
        let _ = writeln!(s, "search_accuracy_pct={:.4}", self.search_accuracy());
        let _ = writeln!(s, "random_accuracy_pct={:.4}", self.random_accuracy());
        let _ = writeln!(s, "oracle_accuracy_pct={:.4}", self.oracle_accuracy());
        match self.mean_condition_accuracy {
            Some(m) => writeln!(s, "mean_condition_accuracy_pct={m:.4}"),
            None => writeln!(s, "mean_condition_accuracy_pct="),
        }
        .ok();
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "tir_db,n,proposed_correct,baseline_correct,proposed_rate,proposed_se,baseline_rate,baseline_se"
        );
        for t in &self.per_tir {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
                t.tir_db,
                t.n,
                t.proposed_correct,
                t.baseline_correct,
                t.proposed_rate(),
                t.proposed_se(),
                t.baseline_rate(),
                t.baseline_se()
            );
        }
        s
    }
}

pub fn rows_to_csv(rows: &[ConditionRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::parse("report csv", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::parse("report csv", e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ConditionRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::parse("report csv", "unexpected header"));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<ConditionRow>, _>>()?)
}

/// Summary path written next to a report CSV.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.txt")
}

/// Writes the rows CSV and a summary beside it. The summary is recomputed
/// from the CSV text as written and must agree with the in-memory rows.
pub fn emit_report(report: &EvalReport, csv_path: impl AsRef<Path>) -> Result<Summary> {
    let csv_path = csv_path.as_ref();
    for r in &report.rows {
        if r.status == RowStatus::Ok {
            let want = pct(r.search_agree_frames, r.n_frames);
            if r.assignment_accuracy != Some(want) || r.oracle_agree_frames != r.n_frames {
                return Err(Error::InvalidArgument(format!(
                    "condition {} is internally inconsistent",
                    r.condition
                )));
            }
        }
    }
    let text = rows_to_csv(&report.rows)?;
    let summary = report.summary();
    if Summary::from_rows(&rows_from_csv(&text)?) != summary {
        return Err(Error::InvalidArgument(
            "summary does not match the rows as written".into(),
        ));
    }
    std::fs::write(csv_path, &text).map_err(|e| Error::io(csv_path, e))?;
    let sp = summary_path(csv_path);
    std::fs::write(&sp, summary.render(&report.title)).map_err(|e| Error::io(&sp, e))?;
    Ok(summary)
}
