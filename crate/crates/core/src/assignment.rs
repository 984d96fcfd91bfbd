//! Joint choice of a speaker pair and a two-way segment labeling.
//!
//! With segments independent given the models, the joint log-likelihood of
//! a pair `(I, II)` and labeling `y` is
//!
//! ```text
//! score(I, II, y) = Σ_{i: y_i = 0} table[i][I] + Σ_{i: y_i = 1} table[i][II]
//! ```
//!
//! Every segment is scored once against every model into a [`ScoreTable`];
//! the searches below only do table lookups. For a fixed pair the best `y`
//! takes the better of the two models per segment, so
//! [`exhaustive_pair_search`] visits every unordered pair in `O(S² N)`.
//! [`brute_force_search`] enumerates all `2^N` labelings per pair and is
//! kept as the reference the fast path is tested against.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::ObservationSequence;
use crate::gmm::SpeakerSet;

/// Largest segment count [`brute_force_search`] accepts.
pub const BRUTE_FORCE_MAX_SEGMENTS: usize = 20;

/// Per-segment log-likelihoods under every enrolled model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    n_segments: usize,
    n_speakers: usize,
    /// Row-major `n_segments x n_speakers`.
    scores: Vec<f64>,
    frame_counts: Vec<usize>,
}

impl ScoreTable {
    pub fn from_rows(rows: Vec<Vec<f64>>, frame_counts: Vec<usize>) -> Result<Self> {
        let n_segments = rows.len();
        if n_segments == 0 {
            return Err(Error::InvalidArgument("score table needs at least one segment".into()));
        }
        let n_speakers = rows[0].len();
        if rows.iter().any(|r| r.len() != n_speakers) {
            return Err(Error::InvalidArgument("score table rows differ in length".into()));
        }
        if frame_counts.len() != n_segments {
            return Err(Error::DimensionMismatch {
                expected: n_segments,
                got: frame_counts.len(),
            });
        }
        let scores: Vec<f64> = rows.into_iter().flatten().collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("score table entries must be finite".into()));
        }
        Ok(Self {
            n_segments,
            n_speakers,
            scores,
            frame_counts,
        })
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn n_speakers(&self) -> usize {
        self.n_speakers
    }

    pub fn score(&self, segment: usize, speaker: usize) -> f64 {
        self.scores[segment * self.n_speakers + speaker]
    }

    pub fn row(&self, segment: usize) -> &[f64] {
        &self.scores[segment * self.n_speakers..(segment + 1) * self.n_speakers]
    }

    pub fn frame_counts(&self) -> &[usize] {
        &self.frame_counts
    }

    /// Joint score of a labeling, summed in segment order.
    pub fn labeling_score(&self, speaker_i: usize, speaker_ii: usize, labeling: &[u8]) -> f64 {
        labeling
            .iter()
            .enumerate()
            .map(|(seg, &y)| self.score(seg, if y == 0 { speaker_i } else { speaker_ii }))
            .sum()
    }
}

/// Fills a table by calling `score(segment, speaker)` exactly once per cell.
pub fn build_score_table_with<F>(
    n_segments: usize,
    n_speakers: usize,
    frame_counts: Vec<usize>,
    mut score: F,
) -> Result<ScoreTable>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    if n_speakers < 2 {
        return Err(Error::InvalidArgument(format!(
            "assignment needs at least 2 enrolled speakers, got {n_speakers}"
        )));
    }
    let rows = (0..n_segments)
        .map(|seg| (0..n_speakers).map(|spk| score(seg, spk)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    ScoreTable::from_rows(rows, frame_counts)
}

/// Scores every segment's features under every model in `speakers`.
pub fn build_score_table(speakers: &SpeakerSet, segments: &[ObservationSequence]) -> Result<ScoreTable> {
    if let Some(empty) = segments.iter().position(ObservationSequence::is_empty) {
        return Err(Error::InvalidArgument(format!("segment {empty} has no feature frames")));
    }
    let counts = segments.iter().map(ObservationSequence::len).collect();
    build_score_table_with(segments.len(), speakers.len(), counts, |seg, spk| {
        speakers.models()[spk].sequence_log_likelihood(&segments[seg])
    })
}

/// Chosen pair (`speaker_i < speaker_ii`) and labeling; label 0 goes to
/// `speaker_i`, label 1 to `speaker_ii`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentResult {
    pub speaker_i: usize,
    pub speaker_ii: usize,
    pub labeling: Vec<u8>,
    pub total_log_score: f64,
}

impl AssignmentResult {
    pub fn ones(&self) -> usize {
        self.labeling.iter().filter(|&&y| y == 1).count()
    }

    pub fn contains(&self, speaker: usize) -> bool {
        self.speaker_i == speaker || self.speaker_ii == speaker
    }
}

/// Per-segment argmax between two models; ties go to label 0.
pub fn best_labeling_for_pair(table: &ScoreTable, s1: usize, s2: usize) -> Result<(Vec<u8>, f64)> {
    if s1 == s2 {
        return Err(Error::InvalidArgument("pair must name two different speakers".into()));
    }
    if s1.max(s2) >= table.n_speakers() {
        return Err(Error::InvalidArgument(format!(
            "speaker index out of range for {} speakers",
            table.n_speakers()
        )));
    }
    let mut labeling = Vec::with_capacity(table.n_segments());
    let mut total = 0.0;
    for seg in 0..table.n_segments() {
        let (a, b) = (table.score(seg, s1), table.score(seg, s2));
        if a >= b {
            labeling.push(0);
            total += a;
        } else {
            labeling.push(1);
            total += b;
        }
    }
    Ok((labeling, total))
}

/// Best pair and labeling over all `S(S-1)/2` unordered pairs. Pairs are
/// visited in lexicographic order and only a strictly better score
/// replaces the incumbent.
pub fn exhaustive_pair_search(table: &ScoreTable) -> Result<AssignmentResult> {
    let s = table.n_speakers();
    if s < 2 {
        return Err(Error::InvalidArgument("need at least 2 speakers".into()));
    }
    let mut best: Option<AssignmentResult> = None;
    for s1 in 0..s {
        for s2 in s1 + 1..s {
            let (labeling, score) = best_labeling_for_pair(table, s1, s2)?;
            if best.as_ref().is_none_or(|b| score > b.total_log_score) {
                best = Some(AssignmentResult {
                    speaker_i: s1,
                    speaker_ii: s2,
                    labeling,
                    total_log_score: score,
                });
            }
        }
    }
    Ok(best.expect("at least one pair"))
}

/// Literal search over pairs and all `2^N` labelings. Ties prefer the
/// lexicographically smaller pair, then fewer 1-labels, then the labeling
/// that is lexicographically smaller.
pub fn brute_force_search(table: &ScoreTable) -> Result<AssignmentResult> {
    let n = table.n_segments();
    let s = table.n_speakers();
    if n > BRUTE_FORCE_MAX_SEGMENTS {
        return Err(Error::InvalidArgument(format!(
            "brute force limited to {BRUTE_FORCE_MAX_SEGMENTS} segments, got {n}"
        )));
    }
    if s < 2 {
        return Err(Error::InvalidArgument("need at least 2 speakers".into()));
    }
    let mut best: Option<(AssignmentResult, usize)> = None;
    let mut labeling = vec![0u8; n];
    for s1 in 0..s {
        for s2 in s1 + 1..s {
            for mask in 0u32..(1u32 << n) {
                for (seg, y) in labeling.iter_mut().enumerate() {
                    *y = ((mask >> seg) & 1) as u8;
                }
                let score = table.labeling_score(s1, s2, &labeling);
                let ones = mask.count_ones() as usize;
                let better = match &best {
                    None => true,
                    Some((b, b_ones)) => {
                        score > b.total_log_score
                            || (score == b.total_log_score
                                && (s1, s2) == (b.speaker_i, b.speaker_ii)
                                && (ones < *b_ones || (ones == *b_ones && labeling < b.labeling)))
                    }
                };
                if better {
                    best = Some((
                        AssignmentResult {
                            speaker_i: s1,
                            speaker_ii: s2,
                            labeling: labeling.clone(),
                            total_log_score: score,
                        },
                        ones,
                    ));
                }
            }
        }
    }
    Ok(best.expect("at least one candidate").0)
}

/// Weighted agreement between two labelings, maximized over swapping the
/// label names, in percent.
pub fn assignment_accuracy(predicted: &[u8], truth: &[u8], weights: &[usize]) -> Result<f64> {
    let (agree, total) = agreement(predicted, truth, weights)?;
    Ok(100.0 * agree.max(total - agree) as f64 / total as f64)
}

/// `(Σ w_i [p_i = t_i], Σ w_i)` without the label swap.
pub fn agreement(predicted: &[u8], truth: &[u8], weights: &[usize]) -> Result<(usize, usize)> {
    if predicted.len() != truth.len() || predicted.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len().min(weights.len()),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: usize = weights.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let agree = predicted
        .iter()
        .zip(truth)
        .zip(weights)
        .filter(|((p, t), _)| p == t)
        .map(|(_, w)| w)
        .sum();
    Ok((agree, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::GmmModel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(rows: Vec<Vec<f64>>) -> ScoreTable {
        let n = rows.len();
        ScoreTable::from_rows(rows, vec![1; n]).unwrap()
    }

    fn random_table(rng: &mut ChaCha8Rng, n: usize, s: usize) -> ScoreTable {
        table(
            (0..n)
                .map(|_| (0..s).map(|_| rng.random_range(-500.0..-10.0)).collect())
                .collect(),
        )
    }

    /// Enumerates every labeling of one pair; independent of the per-segment rule.
    fn enumerate_pair(t: &ScoreTable, s1: usize, s2: usize) -> (Vec<u8>, f64) {
        let n = t.n_segments();
        let mut best = (vec![], f64::NEG_INFINITY, usize::MAX);
        for mask in 0u32..(1 << n) {
            let y: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let score = t.labeling_score(s1, s2, &y);
            let ones = mask.count_ones() as usize;
            if score > best.1 || (score == best.1 && ones < best.2) {
                best = (y, score, ones);
            }
        }
        (best.0, best.1)
    }

    #[test]
    fn single_segment_pair() {
        let t = table(vec![vec![-10.0, -5.0]]);
        assert_eq!(best_labeling_for_pair(&t, 0, 1).unwrap(), (vec![1], -5.0));
        let t = table(vec![vec![-7.0, -7.0]]);
        assert_eq!(best_labeling_for_pair(&t, 0, 1).unwrap(), (vec![0], -7.0));
        assert!(best_labeling_for_pair(&t, 1, 1).is_err());
        assert!(best_labeling_for_pair(&t, 0, 2).is_err());
    }

    #[test]
    fn pair_labeling_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let t = random_table(&mut rng, n, 2);
            assert_eq!(best_labeling_for_pair(&t, 0, 1).unwrap(), enumerate_pair(&t, 0, 1));
        }
    }

    #[test]
    fn two_speakers_reduce_to_the_pair_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_table(&mut rng, 6, 2);
        let r = exhaustive_pair_search(&t).unwrap();
        let (y, score) = best_labeling_for_pair(&t, 0, 1).unwrap();
        assert_eq!((r.speaker_i, r.speaker_ii, r.labeling, r.total_log_score), (0, 1, y, score));
    }

    #[test]
    fn dominant_pair_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..10).map(|_| rng.random_range(-200.0..-100.0)).collect())
            .collect();
        for (i, row) in rows.iter_mut().enumerate() {
            row[if i % 3 == 0 { 7 } else { 3 }] = -20.0;
        }
        let r = exhaustive_pair_search(&table(rows)).unwrap();
        assert_eq!((r.speaker_i, r.speaker_ii), (3, 7));
        assert_eq!(r.labeling, vec![1, 0, 0, 1, 0, 0, 1, 0]);
    }

    #[test]
    fn dominant_single_speaker_gives_all_zero_labels() {
        let rows = vec![vec![-50.0, -10.0, -60.0], vec![-40.0, -12.0, -70.0], vec![-30.0, -11.0, -90.0]];
        let t = table(rows);
        let r = exhaustive_pair_search(&t).unwrap();
        // Speaker 1 wins everywhere; pairs (0,1) and (1,2) tie, the smaller pair
        // is kept and speaker 1 is its second member.
        assert_eq!((r.speaker_i, r.speaker_ii), (0, 1));
        assert_eq!(r.labeling, vec![1, 1, 1]);
        assert_eq!(brute_force_search(&t).unwrap(), r);

        let rows = vec![vec![-10.0, -50.0, -60.0], vec![-12.0, -40.0, -70.0]];
        let r = brute_force_search(&table(rows)).unwrap();
        assert_eq!(r.labeling, vec![0, 0]);
        assert_eq!((r.speaker_i, r.speaker_ii), (0, 1));
    }

    #[test]
    fn brute_force_guards_size() {
        let t = table(vec![vec![-1.0, -2.0]; 21]);
        assert!(brute_force_search(&t).is_err());
        let t = table(vec![vec![-1.0, -2.0]]);
        let r = brute_force_search(&t).unwrap();
        assert_eq!(r.labeling, vec![0]);
    }

    #[test]
    fn searches_agree_on_seeded_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_table(&mut rng, 10, 5);
        assert_eq!(exhaustive_pair_search(&t).unwrap(), brute_force_search(&t).unwrap());
        // Integer-valued tables exercise exact ties.
        for _ in 0..100 {
            let n = rng.random_range(1..=8);
            let s = rng.random_range(2..=4);
            let t = table(
                (0..n)
                    .map(|_| (0..s).map(|_| -f64::from(rng.random_range(1u8..4))).collect())
                    .collect(),
            );
            assert_eq!(exhaustive_pair_search(&t).unwrap(), brute_force_search(&t).unwrap());
        }
    }

    #[test]
    fn table_build_calls_scorer_once_per_cell() {
        let mut calls = 0;
        let t = build_score_table_with(5, 4, vec![1; 5], |seg, spk| {
            calls += 1;
            Ok(-((seg * 4 + spk) as f64))
        })
        .unwrap();
        assert_eq!(calls, 20);
        assert_eq!(t.score(3, 2), -14.0);
        assert!(build_score_table_with(1, 1, vec![1], |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn table_matches_direct_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let models: Vec<GmmModel> = (0..3)
            .map(|s| {
                let means = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                GmmModel::new(format!("s{s}"), 2, vec![0.5, 0.5], means, vec![1.0; 4]).unwrap()
            })
            .collect();
        let set = SpeakerSet::new(models).unwrap();
        let segs: Vec<ObservationSequence> = (0..4)
            .map(|i| {
                ObservationSequence::from_rows(
                    2,
                    (0..=i).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]),
                )
                .unwrap()
            })
            .collect();
        let t = build_score_table(&set, &segs).unwrap();
        for (i, seg) in segs.iter().enumerate() {
            for s in 0..3 {
                assert_eq!(t.score(i, s), set.models()[s].sequence_log_likelihood(seg).unwrap());
            }
        }
        assert_eq!(t.frame_counts(), &[1, 2, 3, 4]);
        let mut bad = segs.clone();
        bad.push(ObservationSequence::new(2));
        assert!(build_score_table(&set, &bad).is_err());
    }

    #[test]
    fn table_rejects_non_finite() {
        assert!(ScoreTable::from_rows(vec![vec![f64::NEG_INFINITY, 0.0]], vec![1]).is_err());
        assert!(ScoreTable::from_rows(vec![vec![0.0, 0.0], vec![0.0]], vec![1, 1]).is_err());
        assert!(ScoreTable::from_rows(vec![], vec![]).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let truth = [0, 1, 1, 0];
        let w = [3, 4, 5, 6];
        assert_eq!(assignment_accuracy(&truth, &truth, &w).unwrap(), 100.0);
        assert_eq!(assignment_accuracy(&[1, 0, 0, 1], &truth, &w).unwrap(), 100.0);
        // Disagreement weight 4 of 18.
        let acc = assignment_accuracy(&[0, 0, 1, 0], &truth, &w).unwrap();
        assert!((acc - 100.0 * 14.0 / 18.0).abs() < 1e-12);
        assert!(assignment_accuracy(&[0], &truth, &w).is_err());
        assert!(assignment_accuracy(&[], &[], &[]).is_err());
    }

    #[test]
    fn random_labels_score_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200_000;
        let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let acc = assignment_accuracy(&pred, &truth, &vec![1; n]).unwrap();
        assert!((acc - 50.0).abs() < 0.5, "{acc}");
    }

    proptest! {
        #[test]
        fn fast_and_brute_force_agree(
            seed in any::<u64>(),
            n in 1usize..=10,
            s in 2usize..=5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_table(&mut rng, n, s);
            let fast = exhaustive_pair_search(&t).unwrap();
            prop_assert_eq!(&fast, &brute_force_search(&t).unwrap());
            prop_assert_eq!(fast.total_log_score, t.labeling_score(fast.speaker_i, fast.speaker_ii, &fast.labeling));
            prop_assert!(fast.speaker_i < fast.speaker_ii);
        }

        #[test]
        fn swapping_the_pair_preserves_the_score(seed in any::<u64>(), n in 1usize..=12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_table(&mut rng, n, 4);
            let r = exhaustive_pair_search(&t).unwrap();
            let flipped: Vec<u8> = r.labeling.iter().map(|y| 1 - y).collect();
            prop_assert_eq!(t.labeling_score(r.speaker_ii, r.speaker_i, &flipped), r.total_log_score);
        }

        #[test]
        fn row_offsets_do_not_change_the_argmax(
            seed in any::<u64>(),
            n in 1usize..=10,
            row in 0usize..10,
            offset in -1000i32..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_table(&mut rng, n, 4);
            let row = row % n;
            let shifted = table(
                (0..n)
                    .map(|i| base.row(i).iter().map(|v| if i == row { v + f64::from(offset) } else { *v }).collect())
                    .collect(),
            );
            let a = exhaustive_pair_search(&base).unwrap();
            let b = exhaustive_pair_search(&shifted).unwrap();
            prop_assert_eq!((a.speaker_i, a.speaker_ii, &a.labeling), (b.speaker_i, b.speaker_ii, &b.labeling));
        }
    }
}
