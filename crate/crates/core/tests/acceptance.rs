//! End-to-end acceptance run: one line per criterion, non-zero exit on any
//! failure that is not a documented limitation.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cochannel::assignment::{best_labeling_for_pair, brute_force_search, exhaustive_pair_search, ScoreTable};
use cochannel::eval::{synth_corpus, Evaluator, ExperimentConfig, SynthConfig};
use cochannel::features::{features_csv, MfccConfig, MfccExtractor};
use cochannel::gmm::{train_gmm, GmmModel, TrainConfig};
use cochannel::mixer::{mix_at_tir, MixtureSpec};
use cochannel::signal::{load_wav, Frame, Waveform};
use cochannel::usable::{DetectionConfig, UsableDetector};
use cochannel::wavelet::{approximation_at_scale, dwt_step, WaveletFilters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

const TIR_GRID: [f64; 7] = [-20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0];
const CORPUS_SEED: u64 = 1;

/// Criteria whose failure is analysed in the project notes and therefore
/// reported without failing the run.
const DOCUMENTED_LIMITATIONS: &[u32] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_table(rng: &mut impl Rng, n: usize, s: usize) -> ScoreTable {
    let rows = (0..n)
        .map(|_| (0..s).map(|_| rng.random_range(-500.0..-50.0)).collect())
        .collect();
    let counts = (0..n).map(|_| rng.random_range(1..40)).collect();
    ScoreTable::from_rows(rows, counts).unwrap()
}

fn c1_search_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut mismatches = 0;
    let trials = 250;
    for _ in 0..trials {
        let n = rng.random_range(1..=12);
        let s = rng.random_range(2..=6);
        let table = random_table(&mut rng, n, s);
        if exhaustive_pair_search(&table).unwrap() != brute_force_search(&table).unwrap() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{trials} tables (N<=12, S<=6), {mismatches} mismatches, {elapsed:.2?} (limit 10 s)"),
    )
}

fn c2_pair_labeling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let start = Instant::now();
    let mut mismatches = 0;
    let trials = 250;
    for _ in 0..trials {
        let n = rng.random_range(1..=12);
        let table = random_table(&mut rng, n, 2);
        let (labels, score) = best_labeling_for_pair(&table, 0, 1).unwrap();
        let mut best = (f64::NEG_INFINITY, 0u32);
        for mask in 0u32..(1 << n) {
            let total: f64 = (0..n).map(|seg| table.score(seg, ((mask >> seg) & 1) as usize)).sum();
            if total > best.0 {
                best = (total, mask);
            }
        }
        let want: Vec<u8> = (0..n).map(|seg| ((best.1 >> seg) & 1) as u8).collect();
        if labels != want || (score - best.0).abs() > 1e-9 * best.0.abs() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(5),
        format!("{trials} instances (N<=12) vs 2^N enumeration, {mismatches} mismatches, {elapsed:.2?} (limit 5 s)"),
    )
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn c3_parseval() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut composition_ok = true;
    for filters in [WaveletFilters::db4(), WaveletFilters::haar()] {
        for _ in 0..1000 {
            let x: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut a = x.clone();
            for _ in 0..4 {
                let (next, d) = dwt_step(&a, &filters).unwrap();
                let rel = (energy(&next) + energy(&d) - energy(&a)).abs() / energy(&a);
                worst = worst.max(rel);
                a = next;
            }
            composition_ok &= approximation_at_scale(&x, 4, &filters).unwrap() == a;
        }
    }
    outcome(
        worst <= 1e-9 && composition_ok,
        format!(
            "1000 frames x 4 levels x {{db4, haar}}: worst relative energy error {worst:.2e} (limit 1e-9); \
             4-level composition exact: {composition_ok}"
        ),
    )
}

fn harmonic_frame(rng: &mut impl Rng, f0: f64, len: usize) -> Vec<f64> {
    let harmonics = ((4000.0 / f0) as usize).max(3);
    let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    (0..len)
        .map(|n| {
            let t = n as f64 / 16_000.0;
            phases
                .iter()
                .enumerate()
                .map(|(k, p)| ((k + 1) as f64 * std::f64::consts::TAU * f0 * t + p).sin() / (k + 1) as f64)
                .sum()
        })
        .collect()
}

fn c4_detection() -> Outcome {
    let config = DetectionConfig::default();
    let detector = UsableDetector::new(config).unwrap();
    let classify = |x: &[f64]| {
        detector
            .classify(&Frame { samples: x, start: 0, hop: config.hop }, 0)
            .unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut voiced_total, mut voiced_usable) = (0, 0);
    for i in 0..20 {
        let f0 = 80.0 + 220.0 * i as f64 / 19.0;
        for _ in 0..10 {
            let v = classify(&harmonic_frame(&mut rng, f0, config.frame_len));
            voiced_total += 1;
            voiced_usable += usize::from(v.usable && v.detection_scale.is_some_and(|s| s <= 4));
        }
    }
    let mut noise_unusable = 0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..config.frame_len).map(|_| rng.sample(StandardNormal)).collect();
        noise_unusable += usize::from(!classify(&x).usable);
    }
    let sens = voiced_usable as f64 / voiced_total as f64;
    let spec = noise_unusable as f64 / 1000.0;
    outcome(
        sens >= 0.95 && spec >= 0.95,
        format!(
            "harmonic frames, 20 f0 in 80-300 Hz: {voiced_usable}/{voiced_total} usable ({:.1}%); \
             white noise: {noise_unusable}/1000 unusable ({:.1}%); both need >= 95%",
            100.0 * sens,
            100.0 * spec
        ),
    )
}

fn same_model(a: &GmmModel, b: &GmmModel) -> bool {
    a.weights() == b.weights()
        && (0..a.n_components()).all(|k| a.mean(k) == b.mean(k) && a.variance(k) == b.variance(k))
}

fn c5_em() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    // Overlapping clusters and a mis-specified K keep EM busy for many iterations.
    let centers = [[-1.0, 0.0, 0.5], [1.0, 1.0, -0.5], [0.0, -1.2, 0.0]];
    let mut data = cochannel::features::ObservationSequence::new(3);
    for i in 0..3000 {
        let c = centers[i % 3];
        let row: Vec<f64> = c.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();
        data.push(&row).unwrap();
    }
    let cfg = TrainConfig {
        n_components: 4,
        ..TrainConfig::default()
    };
    let (model, stats) = train_gmm("m", &data, &cfg, 7).unwrap();
    let worst_drop = stats
        .log_likelihood
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    let monotone = stats.resets == 0 && worst_drop <= 1e-8;
    let (again, _) = train_gmm("m", &data, &cfg, 7).unwrap();
    let deterministic = same_model(&model, &again);

    let (mu, sigma, n) = (1.5, 0.8, 5000);
    let normal = Normal::new(mu, sigma).unwrap();
    let mut single = cochannel::features::ObservationSequence::new(2);
    for _ in 0..n {
        single.push(&[normal.sample(&mut rng), normal.sample(&mut rng)]).unwrap();
    }
    let one = TrainConfig {
        n_components: 1,
        ..TrainConfig::default()
    };
    let (m1, _) = train_gmm("k1", &single, &one, 3).unwrap();
    let mean_bound = 3.0 * sigma / (n as f64).sqrt();
    let recovered = (0..2).all(|d| {
        (m1.mean(0)[d] - mu).abs() <= mean_bound && (m1.variance(0)[d] / (sigma * sigma) - 1.0).abs() <= 0.2
    });
    outcome(
        monotone && deterministic && recovered,
        format!(
            "EM over {} iterations, smallest per-iteration log-likelihood gain {:.1e} (may not fall below -1e-8), resets {}; \
             K=1 recovery within 3 sigma/sqrt(n) and 20%: {recovered}; same seed bit-identical: {deterministic}",
            stats.iterations, -worst_drop, stats.resets
        ),
    )
}

fn c6_mixer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    let mut exact = true;
    for trial in 0..20 {
        for tir in TIR_GRID {
            let t: Vec<f64> = (0..8000 + trial).map(|_| rng.random_range(-0.8..0.8)).collect();
            let i: Vec<f64> = (0..9000).map(|_| rng.random_range(-0.3..0.3)).collect();
            let m = mix_at_tir(&MixtureSpec {
                target: Waveform::new(t, 16_000).unwrap(),
                interferer: Waveform::new(i, 16_000).unwrap(),
                tir_db: tir,
                target_id: "t".into(),
                interferer_id: "i".into(),
            })
            .unwrap();
            worst = worst.max((m.measured_tir_db().unwrap() - tir).abs());
            exact &= m
                .mixture
                .samples
                .iter()
                .zip(m.scaled_target.samples.iter().zip(&m.scaled_interferer.samples))
                .all(|(x, (a, b))| *x == a + b);
        }
    }
    outcome(
        worst <= 1e-6 && exact,
        format!("20 pairs x 7 ratios: worst TIR error {worst:.2e} dB (limit 1e-6); mixture == sum of components: {exact}"),
    )
}

fn trained_evaluator(dir: &Path) -> Evaluator {
    synth_corpus(dir, CORPUS_SEED, &SynthConfig::default()).unwrap();
    let config = ExperimentConfig {
        corpus_root: dir.to_path_buf(),
        tir_grid: TIR_GRID.to_vec(),
        seed: CORPUS_SEED,
        ..ExperimentConfig::default()
    };
    Evaluator::train(config).unwrap()
}

fn c7_assignment(ev: &Evaluator, setup: Duration) -> Outcome {
    let start = Instant::now();
    let report = ev.run_assignment_eval();
    let elapsed = setup + start.elapsed();
    let s = report.summary();
    let (search, random, oracle) = (s.search_accuracy(), s.random_accuracy(), s.oracle_accuracy());
    outcome(
        (random - 50.0).abs() <= 3.0
            && oracle == 100.0
            && search >= 75.0
            && search > random
            && s.usable_frames >= 1000
            && report.all_attempted_produced_rows()
            && elapsed < Duration::from_secs(600),
        format!(
            "{} mixtures at 0 dB, {} usable frames: search {search:.2}% (>= 75), random {random:.2}% (50 +/- 3), \
             oracle {oracle:.2}% (100), {elapsed:.1?} incl. corpus and training (limit 10 min)",
            s.conditions, s.usable_frames
        ),
    )
}

fn c8_sid(ev: &Evaluator, setup: Duration) -> Outcome {
    let start = Instant::now();
    let report = ev.run_sid_eval();
    let elapsed = setup + start.elapsed();
    let s = report.summary();
    let rates: Vec<String> = s
        .per_tir
        .iter()
        .map(|t| {
            format!(
                "{:+}dB {:.3}/{:.3}",
                t.tir_db,
                t.proposed_rate(),
                t.baseline_rate()
            )
        })
        .collect();
    let below = s.proposed_below_baseline();
    let violations = s.proposed_monotonicity_violations();
    outcome(
        below.is_empty()
            && violations.is_empty()
            && report.all_attempted_produced_rows()
            && elapsed < Duration::from_secs(1800),
        format!(
            "proposed/baseline correct rate [{}]; proposed below baseline at {below:?}; \
             monotonicity (one combined SE) violated between {violations:?}; {elapsed:.1?} (limit 30 min)",
            rates.join(", ")
        ),
    )
}

fn c9_mfcc_contract() -> Outcome {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let w = load_wav(data.join("vector_1s.wav")).unwrap();
    let ex = MfccExtractor::new(MfccConfig::default(), w.sample_rate).unwrap();
    let ours = features_csv(&ex.waveform_features(&w).unwrap());
    let again = features_csv(&ex.waveform_features(&w).unwrap());
    let reference = std::fs::read_to_string(data.join("vector_1s_mfcc.csv")).unwrap();

    let parse = |s: &str| -> Vec<Vec<f64>> {
        s.lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (a, b) = (parse(&ours), parse(&reference));
    let mut off_by_last_digit = 0;
    let mut mismatched = 0;
    let same_shape = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len());
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        if x != y {
            // Both sides are rounded to 9 significant digits; allow the
            // last digit to differ where the exact value sits on a boundary.
            let unit = 10f64.powf(y.abs().log10().floor() - 8.0);
            if (x - y).abs() <= 1.01 * unit {
                off_by_last_digit += 1;
            } else {
                mismatched += 1;
            }
        }
    }
    let header_ok = ours.lines().next() == reference.lines().next();
    outcome(
        same_shape && header_ok && mismatched == 0 && ours == again,
        format!(
            "{} frames x 16 coefficients vs independent reference: {mismatched} mismatches beyond 9 significant \
             digits, {off_by_last_digit} differ by one unit in the 9th digit; repeat run byte-identical: {}",
            a.len(),
            ours == again
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        let o = f();
        println!(
            "criterion {id} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };
    run(1, "search equals brute force", &c1_search_equivalence);
    run(2, "per-pair labeling optimal", &c2_pair_labeling);
    run(3, "wavelet energy conservation", &c3_parseval);
    run(4, "usable-frame sensitivity/specificity", &c4_detection);
    run(5, "EM correctness", &c5_em);
    run(6, "mixer exactness", &c6_mixer);

    let dir = tempfile::tempdir().unwrap();
    let setup_start = Instant::now();
    let ev = trained_evaluator(dir.path());
    let setup = setup_start.elapsed();
    run(7, "assignment accuracy on synthetic corpus", &|| c7_assignment(&ev, setup));
    run(8, "target SID rate across TIR", &|| c8_sid(&ev, setup));
    run(9, "MFCC feature contract", &c9_mfcc_contract);

    let passed = results.iter().filter(|r| r.2.pass).count();
    let blocking: Vec<u32> = results
        .iter()
        .filter(|r| !r.2.pass && !DOCUMENTED_LIMITATIONS.contains(&r.0))
        .map(|r| r.0)
        .collect();
    let documented: Vec<u32> = results
        .iter()
        .filter(|r| !r.2.pass && DOCUMENTED_LIMITATIONS.contains(&r.0))
        .map(|r| r.0)
        .collect();
    println!(
        "acceptance: {passed}/{} criteria pass; documented limitations failing: {documented:?}; \
         unexpected failures: {blocking:?}",
        results.len()
    );
    if blocking.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
