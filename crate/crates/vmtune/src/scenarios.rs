//! Exogenous-signal generation: exponential sinusoid grids, random unit
//! directions, the seven surgical scenario combinations, and parameterized
//! adversarial probes.
//!
//! Scenario signals are defined per wiring channel; the w₁/w₂ masks select
//! which channels feed the L2 and L∞ cost accumulators.

use crate::scalar::Real;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const OMEGA_MIN: f64 = 0.1;
pub const OMEGA_MAX: f64 = 500.0;
/// Lower clamp for adversarial probe frequencies; a DC probe has unbounded
/// L2 growth and breaks the ratio's convergence.
pub const ADVERSARIAL_OMEGA_FLOOR: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelSignal {
    Zero,
    Sinusoid { eta: Vec<f64>, omega: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    /// One signal per wiring channel.
    pub signals: Vec<ChannelSignal>,
    /// Per-channel masks feeding the L2 cost states.
    pub w1: Vec<bool>,
    /// Per-channel masks feeding the L∞ cost states.
    pub w2: Vec<bool>,
}

impl Scenario {
    pub fn zero(channel_dims: &[usize], label: &str) -> Self {
        Scenario {
            label: label.into(),
            signals: channel_dims.iter().map(|_| ChannelSignal::Zero).collect(),
            w1: vec![true; channel_dims.len()],
            w2: vec![false; channel_dims.len()],
        }
    }

    pub fn min_active_frequency(&self) -> Option<f64> {
        self.signals
            .iter()
            .filter_map(|s| match s {
                ChannelSignal::Sinusoid { omega, .. } => Some(*omega),
                ChannelSignal::Zero => None,
            })
            .fold(None, |acc, w| Some(acc.map_or(w, |a: f64| a.min(w))))
    }

    /// Simulation horizon: long enough for the L2 ratio to approach its
    /// steady-state value — four periods of the slowest probe, at least 10 s.
    pub fn horizon(&self) -> f64 {
        self.horizon_floored(10.0)
    }

    /// Horizon with an explicit floor. Tuning sweeps may lower the floor
    /// for fast probes: four periods dominate there and the onset transient
    /// washes out within a few plant time constants.
    pub fn horizon_floored(&self, floor: f64) -> f64 {
        match self.min_active_frequency() {
            Some(omega) => (4.0 * 2.0 * std::f64::consts::PI / omega).max(floor),
            None => floor,
        }
    }

    /// Step size for this scenario. Slow probes ride on slow responses;
    /// after the brief onset transient the solution content is far below
    /// the plant bandwidth, so the step can grow with the probe period
    /// without hurting the integrated cost.
    pub fn banded_dt(&self, base: f64) -> f64 {
        match self.min_active_frequency() {
            Some(omega) if omega > 100.0 => base,
            Some(omega) if omega > 2.5 => 2.0 * base,
            Some(omega) if omega > 0.5 => 5.0 * base,
            Some(_) => 20.0 * base,
            None => base,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Sampled { n: usize, seed: u64 },
    Adversarial { initial: usize, rounds: usize, seed: u64 },
    Handcrafted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub provenance: Provenance,
}

impl ScenarioSet {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Contract("scenario set must be nonempty".into()));
        }
        Ok(())
    }
}

/// Geometric frequency grid from Ω_min to Ω_max inclusive; low frequencies
/// are sampled more densely.
pub fn exp_frequency_grid(n: usize, omega_min: f64, omega_max: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Contract("frequency grid needs n ≥ 2".into()));
    }
    let ratio = omega_max / omega_min;
    Ok((0..n)
        .map(|i| omega_min * ratio.powf(i as f64 / (n - 1) as f64))
        .collect())
}

/// Standard normal via Box-Muller on a portable counter-based generator, so
/// sampled directions reproduce bit-for-bit across platforms.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `count` unit vectors of dimension `dim`, Gaussian-normalized,
/// deterministic in `seed`.
pub fn sample_unit_directions(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        out.push(v.iter().map(|x| x / norm).collect());
    }
    out
}

/// Sampled sinusoid scenarios on the exponential grid: scenario i probes at
/// Ω_i in a random unit direction spread across the wiring channels.
pub fn grid_scenarios(n: usize, seed: u64, channel_dims: &[usize]) -> Result<ScenarioSet> {
    let freqs = exp_frequency_grid(n, OMEGA_MIN, OMEGA_MAX)?;
    let total_dim: usize = channel_dims.iter().sum();
    let dirs = sample_unit_directions(n, total_dim, seed);
    let scenarios = freqs
        .iter()
        .zip(&dirs)
        .enumerate()
        .map(|(i, (&omega, dir))| {
            let mut signals = Vec::new();
            let mut at = 0;
            for &d in channel_dims {
                signals.push(ChannelSignal::Sinusoid {
                    eta: dir[at..at + d].to_vec(),
                    omega,
                });
                at += d;
            }
            Scenario {
                label: format!("grid-{i:03}"),
                signals,
                w1: vec![true; channel_dims.len()],
                w2: vec![false; channel_dims.len()],
            }
        })
        .collect();
    Ok(ScenarioSet {
        scenarios,
        provenance: Provenance::Sampled { n, seed },
    })
}

/// The seven surgical probing scenarios: every presence-combination of
/// measurement noise n, disturbance forces d, and reference motion r.
///
/// Channel order: d_ee(3), d_rcm(3), n_q(n_r), n_q̇(n_r), r(3). Each active
/// signal is a sinusoid with unit peak norm: noise at 50 rad/s, forces at
/// 2 rad/s, reference at 3 rad/s.
pub fn surgical_scenarios(n_r: usize) -> ScenarioSet {
    let combos: [(bool, bool, bool); 7] = [
        (true, false, false),
        (false, true, false),
        (true, true, false),
        (false, false, true),
        (true, false, true),
        (false, true, true),
        (true, true, true),
    ];
    let uniform3 = || vec![1.0 / 3.0f64.sqrt(); 3];
    let uniform_n = |n: usize| vec![1.0 / (n as f64).sqrt(); n];
    let scenarios = combos
        .iter()
        .enumerate()
        .map(|(i, &(noise, dist, refr))| {
            let mut signals = Vec::new();
            for _ in 0..2 {
                signals.push(if dist {
                    ChannelSignal::Sinusoid { eta: uniform3(), omega: 2.0 }
                } else {
                    ChannelSignal::Zero
                });
            }
            for _ in 0..2 {
                signals.push(if noise {
                    ChannelSignal::Sinusoid { eta: uniform_n(n_r), omega: 50.0 }
                } else {
                    ChannelSignal::Zero
                });
            }
            signals.push(if refr {
                ChannelSignal::Sinusoid {
                    eta: vec![1.0, 0.0, 0.0],
                    omega: 3.0,
                }
            } else {
                ChannelSignal::Zero
            });
            Scenario {
                label: format!("scenario-{}", i + 1),
                signals,
                w1: vec![true; 5],
                w2: vec![false; 5],
            }
        })
        .collect();
    ScenarioSet {
        scenarios,
        provenance: Provenance::Handcrafted,
    }
}

/// Clamp an adversarial frequency into the probe band.
pub fn clamp_frequency<T: Real>(omega: T) -> T {
    omega
        .max(T::from_f64(ADVERSARIAL_OMEGA_FLOOR))
        .min(T::from_f64(OMEGA_MAX))
}

/// Build a probing scenario from the 4-element adversarial parameter
/// vector: frequency ω₁ (clamped) and direction normalize(ω₂..ω₄) spread
/// across channels totalling 3 dimensions.
pub fn adversarial_signal(omega: &[f64; 4], channel_dims: &[usize]) -> Result<Scenario> {
    let total: usize = channel_dims.iter().sum();
    if total != 3 {
        return Err(Error::Contract(format!(
            "adversarial probe needs 3 signal dimensions, wiring has {total}"
        )));
    }
    let dir = [omega[1], omega[2], omega[3]];
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if norm < 1e-12 {
        return Err(Error::Contract(
            "adversarial direction vector must be nonzero".into(),
        ));
    }
    let freq = clamp_frequency(omega[0]);
    let mut signals = Vec::new();
    let mut at = 0;
    for &d in channel_dims {
        signals.push(ChannelSignal::Sinusoid {
            eta: dir[at..at + d].iter().map(|x| x / norm).collect(),
            omega: freq,
        });
        at += d;
    }
    Ok(Scenario {
        label: format!("adversarial-w{:.4}", freq),
        signals,
        w1: vec![true; channel_dims.len()],
        w2: vec![false; channel_dims.len()],
    })
}

// ---------------------------------------------------------------------------
// Generic (dual-capable) signal evaluation
// ---------------------------------------------------------------------------

/// Scenario signals lifted to the simulation scalar type. For adversarial
/// ascent the sinusoid parameters carry tangent slots of ω.
#[derive(Clone, Debug)]
pub struct LiftedScenario<T> {
    pub channels: Vec<Option<LiftedChannel<T>>>,
    pub w1: Vec<bool>,
    pub w2: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct LiftedChannel<T> {
    pub eta: Vec<T>,
    pub omega: T,
}

impl<T: Real> LiftedScenario<T> {
    pub fn lift(sc: &Scenario) -> Self {
        LiftedScenario {
            channels: sc
                .signals
                .iter()
                .map(|s| match s {
                    ChannelSignal::Zero => None,
                    ChannelSignal::Sinusoid { eta, omega } => Some(LiftedChannel {
                        eta: eta.iter().map(|&e| T::from_f64(e)).collect(),
                        omega: T::from_f64(*omega),
                    }),
                })
                .collect(),
            w1: sc.w1.clone(),
            w2: sc.w2.clone(),
        }
    }

    /// Differentiable adversarial probe: ω stays in the scalar type so the
    /// inner ascent can differentiate the loss with respect to it.
    pub fn from_adversarial(omega: &[T], channel_dims: &[usize]) -> Result<Self> {
        let total: usize = channel_dims.iter().sum();
        if total != 3 || omega.len() != 4 {
            return Err(Error::Contract(
                "adversarial probe needs ω ∈ R⁴ and 3 signal dimensions".into(),
            ));
        }
        let norm_sq = omega[1] * omega[1] + omega[2] * omega[2] + omega[3] * omega[3];
        if norm_sq.re() < 1e-24 {
            return Err(Error::Contract(
                "adversarial direction vector must be nonzero".into(),
            ));
        }
        let inv = T::one() / norm_sq.sqrt();
        let dir = [omega[1] * inv, omega[2] * inv, omega[3] * inv];
        let freq = clamp_frequency(omega[0]);
        let mut channels = Vec::new();
        let mut at = 0;
        for &d in channel_dims {
            channels.push(Some(LiftedChannel {
                eta: dir[at..at + d].to_vec(),
                omega: freq,
            }));
            at += d;
        }
        Ok(LiftedScenario {
            channels,
            w1: vec![true; channel_dims.len()],
            w2: vec![false; channel_dims.len()],
        })
    }

    /// Write channel i's signal and its time derivative at time t.
    pub fn eval_channel(&self, i: usize, t: f64, w: &mut [T], wdot: &mut [T]) {
        match &self.channels[i] {
            None => {
                for v in w.iter_mut() {
                    *v = T::zero();
                }
                for v in wdot.iter_mut() {
                    *v = T::zero();
                }
            }
            Some(ch) => {
                let arg = ch.omega * T::from_f64(t);
                let s = arg.sin();
                let c = arg.cos();
                for (k, &e) in ch.eta.iter().enumerate() {
                    w[k] = e * s;
                    wdot[k] = e * ch.omega * c;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_and_interior() {
        let g = exp_frequency_grid(24, OMEGA_MIN, OMEGA_MAX).unwrap();
        assert!((g[0] - 0.1).abs() < 1e-15);
        assert!((g[23] - 500.0).abs() < 1e-10);
        assert!((g[1] - 0.1 * 5000.0f64.powf(1.0 / 23.0)).abs() < 1e-12);
        assert!((g[1] - 0.14482).abs() < 1e-4);
        let two = exp_frequency_grid(2, OMEGA_MIN, OMEGA_MAX).unwrap();
        assert_eq!(two.len(), 2);
        assert!((two[0] - 0.1).abs() < 1e-15 && (two[1] - 500.0).abs() < 1e-12);
        assert!(exp_frequency_grid(1, OMEGA_MIN, OMEGA_MAX).is_err());
    }

    #[test]
    fn grid_is_geometric() {
        let g = exp_frequency_grid(40, OMEGA_MIN, OMEGA_MAX).unwrap();
        let r0 = g[1] / g[0];
        for i in 1..39 {
            assert!((g[i + 1] / g[i] - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_directions_normalized_and_deterministic() {
        let a = sample_unit_directions(50, 3, 123);
        let b = sample_unit_directions(50, 3, 123);
        assert_eq!(a, b);
        for v in &a {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_directions_roughly_isotropic() {
        let dirs = sample_unit_directions(10_000, 3, 7);
        let mut mean = [0.0; 3];
        for v in &dirs {
            for i in 0..3 {
                mean[i] += v[i];
            }
        }
        let n = dirs.len() as f64;
        let norm = mean.iter().map(|x| (x / n) * (x / n)).sum::<f64>().sqrt();
        assert!(norm < 0.05, "mean norm {norm}");
    }

    #[test]
    fn surgical_set_matches_presence_table() {
        let set = surgical_scenarios(6);
        assert_eq!(set.scenarios.len(), 7);
        let active = |s: &Scenario, i: usize| !matches!(s.signals[i], ChannelSignal::Zero);
        // Scenario 1: noise only.
        let s1 = &set.scenarios[0];
        assert!(!active(s1, 0) && !active(s1, 1) && active(s1, 2) && active(s1, 3) && !active(s1, 4));
        // Scenario 7: everything.
        let s7 = &set.scenarios[6];
        for i in 0..5 {
            assert!(active(s7, i));
        }
        // Every active sinusoid has unit peak norm.
        for s in &set.scenarios {
            for sig in &s.signals {
                if let ChannelSignal::Sinusoid { eta, .. } = sig {
                    let n: f64 = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!((n - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn adversarial_basic_shapes() {
        let sc = adversarial_signal(&[10.0, 1.0, 0.0, 0.0], &[1, 1, 1]).unwrap();
        match &sc.signals[0] {
            ChannelSignal::Sinusoid { eta, omega } => {
                assert_eq!(*omega, 10.0);
                assert_eq!(eta, &vec![1.0]);
            }
            _ => panic!(),
        }
        match &sc.signals[1] {
            ChannelSignal::Sinusoid { eta, .. } => assert_eq!(eta, &vec![0.0]),
            _ => panic!(),
        }

        let sc = adversarial_signal(&[10.0, 2.0, 0.0, 0.0], &[3]).unwrap();
        match &sc.signals[0] {
            ChannelSignal::Sinusoid { eta, .. } => {
                assert!((eta[0] - 1.0).abs() < 1e-15);
            }
            _ => panic!(),
        }

        assert!(adversarial_signal(&[10.0, 0.0, 0.0, 0.0], &[1, 1, 1]).is_err());
        // Frequency clamp.
        let sc = adversarial_signal(&[-5.0, 1.0, 0.0, 0.0], &[1, 1, 1]).unwrap();
        match &sc.signals[0] {
            ChannelSignal::Sinusoid { omega, .. } => {
                assert_eq!(*omega, ADVERSARIAL_OMEGA_FLOOR)
            }
            _ => panic!(),
        }
    }

    #[test]
    fn horizon_policy() {
        let sc = adversarial_signal(&[0.1, 1.0, 1.0, 0.0], &[1, 1, 1]).unwrap();
        assert!((sc.horizon() - 4.0 * 2.0 * std::f64::consts::PI / 0.1).abs() < 1e-9);
        let fast = adversarial_signal(&[50.0, 1.0, 0.0, 0.0], &[1, 1, 1]).unwrap();
        assert_eq!(fast.horizon(), 10.0);
        assert_eq!(Scenario::zero(&[1, 1, 1], "z").horizon(), 10.0);
    }

    #[test]
    fn scenario_set_serialization_reproducible() {
        let a = grid_scenarios(12, 99, &[1, 1, 1]).unwrap();
        let b = grid_scenarios(12, 99, &[1, 1, 1]).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
        let back: ScenarioSet = serde_json::from_str(&ja).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn lifted_eval_matches_signal() {
        let sc = adversarial_signal(&[2.0, 0.0, 3.0, 0.0], &[1, 1, 1]).unwrap();
        let lifted = LiftedScenario::<f64>::lift(&sc);
        let mut w = [0.0];
        let mut wd = [0.0];
        lifted.eval_channel(1, 0.4, &mut w, &mut wd);
        assert!((w[0] - (0.8f64).sin()).abs() < 1e-15);
        assert!((wd[0] - 2.0 * (0.8f64).cos()).abs() < 1e-15);
    }
}
