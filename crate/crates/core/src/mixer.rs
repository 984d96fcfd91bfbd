//! Two-talker mixtures at a commanded target-to-interferer ratio.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{signal_energy, Waveform};

#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub target: Waveform,
    pub interferer: Waveform,
    pub tir_db: f64,
    pub target_id: String,
    pub interferer_id: String,
}

/// A mixture together with its exact components.
#[derive(Debug, Clone)]
pub struct MixtureTruth {
    pub mixture: Waveform,
    pub scaled_target: Waveform,
    pub scaled_interferer: Waveform,
    /// Amplitude gain applied to the interferer to reach the ratio.
    pub gain_applied: f64,
    /// Common factor applied to both components to keep `|mixture| <= 1`.
    pub joint_norm_factor: f64,
    pub tir_db: f64,
    pub target_id: String,
    pub interferer_id: String,
    pub truncated_length: usize,
}

impl MixtureTruth {
    pub fn measured_tir_db(&self) -> Result<f64> {
        let et = signal_energy(&self.scaled_target.samples)?;
        let ei = signal_energy(&self.scaled_interferer.samples)?;
        Ok(10.0 * (et / ei).log10())
    }

    /// `key=value` sidecar describing how the mixture was built.
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "target_id={}", self.target_id);
        let _ = writeln!(s, "interferer_id={}", self.interferer_id);
        let _ = writeln!(s, "tir_db={}", self.tir_db);
        let _ = writeln!(s, "gain_applied={:.16e}", self.gain_applied);
        let _ = writeln!(s, "joint_norm_factor={:.16e}", self.joint_norm_factor);
        let _ = writeln!(s, "truncated_length={}", self.truncated_length);
        s
    }

    pub fn write_metadata(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.metadata()).map_err(|e| Error::io(path, e))
    }
}

/// Truncates both signals to the shorter length, keeping sample 0.
pub fn truncate_align(a: &Waveform, b: &Waveform) -> Result<(Waveform, Waveform)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let len = a.len().min(b.len());
    let cut = |w: &Waveform| Waveform {
        samples: w.samples[..len].to_vec(),
        sample_rate: w.sample_rate,
    };
    Ok((cut(a), cut(b)))
}

/// Interferer gain that puts `E_t / (g² E_i)` at `tir_db`.
pub fn interferer_gain(target_energy: f64, interferer_energy: f64, tir_db: f64) -> Result<f64> {
    if !(target_energy > 0.0 && interferer_energy > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok((target_energy / (interferer_energy * 10f64.powf(tir_db / 10.0))).sqrt())
}

/// Truncates, scales the interferer to the commanded ratio and sums. If the
/// sum would leave `[-1, 1]`, both components are scaled down together.
pub fn mix_at_tir(spec: &MixtureSpec) -> Result<MixtureTruth> {
    if spec.target.sample_rate != spec.interferer.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "sample rates differ: {} vs {}",
            spec.target.sample_rate, spec.interferer.sample_rate
        )));
    }
    if !spec.tir_db.is_finite() {
        return Err(Error::InvalidArgument("TIR must be finite".into()));
    }
    let (target, interferer) = truncate_align(&spec.target, &spec.interferer)?;
    let gain = interferer_gain(target.energy()?, interferer.energy()?, spec.tir_db)?;
    let peak = target
        .samples
        .iter()
        .zip(&interferer.samples)
        .map(|(t, i)| (t + gain * i).abs())
        .fold(0.0, f64::max);
    let joint = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    let scaled_target = target.scaled(joint);
    let scaled_interferer = interferer.scaled(gain * joint);
    let mixture = Waveform {
        samples: scaled_target
            .samples
            .iter()
            .zip(&scaled_interferer.samples)
            .map(|(t, i)| t + i)
            .collect(),
        sample_rate: target.sample_rate,
    };
    Ok(MixtureTruth {
        truncated_length: mixture.len(),
        mixture,
        scaled_target,
        scaled_interferer,
        gain_applied: gain,
        joint_norm_factor: joint,
        tir_db: spec.tir_db,
        target_id: spec.target_id.clone(),
        interferer_id: spec.interferer_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16_000).unwrap()
    }

    fn spec(target: Vec<f64>, interferer: Vec<f64>, tir_db: f64) -> MixtureSpec {
        MixtureSpec {
            target: wave(target),
            interferer: wave(interferer),
            tir_db,
            target_id: "t".into(),
            interferer_id: "i".into(),
        }
    }

    #[test]
    fn zero_db_with_equal_energy_is_unity_gain() {
        let m = mix_at_tir(&spec(vec![0.5, -0.5], vec![-0.5, 0.5], 0.0)).unwrap();
        assert_eq!(m.gain_applied, 1.0);
    }

    #[test]
    fn twenty_db_gain() {
        let g = interferer_gain(1.0, 1.0, 20.0).unwrap();
        assert!((g - 0.1).abs() < 1e-15);
        assert!((g * g - 0.01).abs() < 1e-15);
        assert!(matches!(interferer_gain(0.0, 1.0, 0.0), Err(Error::ZeroEnergy)));
    }

    #[test]
    fn rejects_silent_or_mismatched_inputs() {
        assert!(matches!(
            mix_at_tir(&spec(vec![0.0; 4], vec![0.1; 4], 0.0)),
            Err(Error::ZeroEnergy)
        ));
        let mut s = spec(vec![0.1; 4], vec![0.1; 4], 0.0);
        s.interferer.sample_rate = 8000;
        assert!(mix_at_tir(&s).is_err());
    }

    #[test]
    fn truncation() {
        let (a, b) = truncate_align(&wave(vec![0.1; 100]), &wave(vec![0.2; 80])).unwrap();
        assert_eq!((a.len(), b.len()), (80, 80));
        let (a, b) = truncate_align(&wave(vec![0.1; 50]), &wave(vec![0.2; 50])).unwrap();
        assert_eq!((a.len(), b.len()), (50, 50));
        assert!(truncate_align(&wave(vec![]), &wave(vec![0.2])).is_err());
    }

    #[test]
    fn measured_ratio_and_exact_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for tir in [-20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 20.0] {
            let t: Vec<f64> = (0..900).map(|_| rng.random_range(-0.9..0.9)).collect();
            let i: Vec<f64> = (0..1000).map(|_| rng.random_range(-0.2..0.2)).collect();
            let m = mix_at_tir(&spec(t, i, tir)).unwrap();
            assert!((m.measured_tir_db().unwrap() - tir).abs() < 1e-6);
            assert_eq!(m.truncated_length, 900);
            for k in 0..m.mixture.len() {
                assert_eq!(m.mixture.samples[k], m.scaled_target.samples[k] + m.scaled_interferer.samples[k]);
            }
            assert!(m.mixture.samples.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn gain_squared_scales_by_a_decade_per_ten_db() {
        for tir in [-20.0, -3.0, 0.0, 7.5] {
            let g1 = interferer_gain(2.0, 0.7, tir).unwrap();
            let g2 = interferer_gain(2.0, 0.7, tir + 10.0).unwrap();
            assert!(((g2 * g2) / (g1 * g1) - 0.1).abs() < 1e-9 * 0.1);
        }
    }

    #[test]
    fn joint_normalization_keeps_the_ratio() {
        let m = mix_at_tir(&spec(vec![0.9, -0.9, 0.9], vec![0.9, -0.9, 0.9], -10.0)).unwrap();
        assert!(m.joint_norm_factor < 1.0);
        assert!((m.measured_tir_db().unwrap() + 10.0).abs() < 1e-6);
        let peak = m.mixture.samples.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(peak <= 1.0 + 1e-12);
    }

    #[test]
    fn metadata_lists_every_key() {
        let m = mix_at_tir(&spec(vec![0.5, -0.5], vec![-0.5, 0.5], 0.0)).unwrap();
        let meta = m.metadata();
        let keys: Vec<&str> = meta.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(
            keys,
            ["target_id", "interferer_id", "tir_db", "gain_applied", "joint_norm_factor", "truncated_length"]
        );
    }
}
