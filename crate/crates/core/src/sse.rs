//! Branch probabilities of a single small system under the normalized
//! collapse equation, projected onto the eigenspaces of the collapse
//! operator.
//!
//! Only the probabilities `p_j = |a_j|²` are evolved. Their Itô increment is
//!
//! ```text
//! d p_m = 2 p_m (a_m - R) dB,    R = Σ_j a_j p_j
//! ```
//!
//! which has no drift and conserves `Σ p_j` identically.

use serde::{Deserialize, Serialize};

use crate::error::{CslError, Result};
use crate::noise::NoiseStream;

const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionState {
    eigenvalues: Vec<f64>,
    probabilities: Vec<f64>,
}

impl SuperpositionState {
    pub fn new(eigenvalues: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(CslError::State("at least one branch is required".into()));
        }
        if eigenvalues.len() != probabilities.len() {
            return Err(CslError::State(format!(
                "{} eigenvalues but {} probabilities",
                eigenvalues.len(),
                probabilities.len()
            )));
        }
        if let Some((j, p)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && (0.0..=1.0).contains(*p)))
        {
            return Err(CslError::State(format!(
                "probability {p} of branch {j} outside [0, 1]"
            )));
        }
        if eigenvalues.iter().any(|a| !a.is_finite()) {
            return Err(CslError::State("eigenvalues must be finite".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(CslError::State(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            eigenvalues,
            probabilities,
        })
    }

    /// Two branches with eigenvalues {0, 1}.
    pub fn two_branch(p_second: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![1.0 - p_second, p_second])
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// `R = Σ_j a_j p_j`, the expectation of the collapse operator.
    pub fn expectation(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.probabilities)
            .map(|(a, p)| a * p)
            .sum()
    }

    /// One Itô step. `R` is taken from the pre-step state and every branch is
    /// updated simultaneously. Fails (without clamping) when some branch has
    /// `|2(a_m - R)dB| >= 1`.
    pub fn step(&self, db: f64) -> Result<Self> {
        let r = self.expectation();
        let mut next = Vec::with_capacity(self.len());
        for (m, (&a, &p)) in self.eigenvalues.iter().zip(&self.probabilities).enumerate() {
            let factor = 2.0 * (a - r) * db;
            if factor.abs() >= 1.0 {
                return Err(CslError::StepSize { branch: m, factor });
            }
            next.push(p + p * factor);
        }
        Ok(Self {
            eigenvalues: self.eigenvalues.clone(),
            probabilities: next,
        })
    }
}

/// Free-function form of [`SuperpositionState::expectation`].
pub fn expectation_r(state: &SuperpositionState) -> f64 {
    state.expectation()
}

/// Free-function form of [`SuperpositionState::step`].
pub fn step_probabilities(state: &SuperpositionState, db: f64) -> Result<SuperpositionState> {
    state.step(db)
}

/// Evolves `state` along `path` and returns the accumulated exponent
/// `2 Σ (a_m - R_step) dB_step` for branch `m`, with `R` re-evaluated from
/// the evolving state at every step. The final state is returned too.
pub fn accumulate_exponent(
    state: &SuperpositionState,
    path: &[f64],
    branch: usize,
) -> Result<(f64, SuperpositionState)> {
    let a_m = *state.eigenvalues.get(branch).ok_or_else(|| {
        CslError::Domain(format!(
            "branch {branch} out of range for {} branches",
            state.len()
        ))
    })?;
    let mut current = state.clone();
    let mut exponent = 0.0;
    for &db in path {
        exponent += 2.0 * (a_m - current.expectation()) * db;
        current = current.step(db)?;
    }
    Ok((exponent, current))
}

/// Worst-case time for the exponent to reach `target_exponent` when every
/// increment opposes `a_m - R` and `|a_m - R| = 1/2`. This is an upper
/// envelope: mean-zero noise cannot keep that sign indefinitely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub target_exponent: f64,
    pub steps: u64,
    /// seconds
    pub duration: f64,
}

impl DecayEstimate {
    /// `exp(target_exponent)`: the factor multiplying the initial probability.
    pub fn suppression_factor(&self) -> f64 {
        self.target_exponent.exp()
    }

    /// How many times longer than `response_time` the decay takes.
    pub fn ratio_to(&self, response_time: f64) -> f64 {
        self.duration / response_time
    }
}

pub fn decay_time_bound(target_exponent: f64, db_magnitude: f64, dt: f64) -> Result<DecayEstimate> {
    if !(target_exponent.is_finite() && target_exponent < 0.0) {
        return Err(CslError::Domain(format!(
            "target exponent must be negative, got {target_exponent}"
        )));
    }
    if !(db_magnitude.is_finite() && db_magnitude > 0.0) {
        return Err(CslError::Domain(format!(
            "dB magnitude must be positive, got {db_magnitude}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CslError::Domain(format!("dt must be positive, got {dt}")));
    }
    let pieces = (target_exponent.abs() / 2.0) / db_magnitude;
    // ratios within rounding error of an integer are not bumped up by ceil
    let rounded = pieces.round();
    let steps = if (pieces - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        pieces.ceil()
    } as u64;
    Ok(DecayEstimate {
        target_exponent,
        steps,
        duration: steps as f64 * dt,
    })
}

/// Runs `steps` increments of `noise` through `state`, returning every
/// intermediate state (including the initial one).
pub fn simulate(
    state: &SuperpositionState,
    noise: &mut NoiseStream,
    steps: usize,
) -> Result<Vec<SuperpositionState>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state.clone());
    let mut current = state.clone();
    for _ in 0..steps {
        current = current.step(noise.next_increment()?)?;
        out.push(current.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseConfig;
    use proptest::prelude::*;

    #[test]
    fn expectation_examples() {
        let s = SuperpositionState::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(expectation_r(&s), 0.5);
        let s = SuperpositionState::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(expectation_r(&s), 1.0);
        let s = SuperpositionState::new(vec![-1.0, 0.0, 1.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert!((expectation_r(&s) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn step_example_half_half() {
        let s = SuperpositionState::two_branch(0.5).unwrap();
        let next = step_probabilities(&s, 2e-5).unwrap();
        assert!((next.probabilities()[0] - (0.5 - 1e-5)).abs() < 1e-17);
        assert!((next.probabilities()[1] - (0.5 + 1e-5)).abs() < 1e-17);
    }

    #[test]
    fn zero_increment_is_identity() {
        let s = SuperpositionState::new(vec![-1.0, 0.0, 2.0], vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!(s.step(0.0).unwrap(), s);
    }

    #[test]
    fn eigenstate_is_fixed() {
        let s = SuperpositionState::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        for db in [2e-5, -2e-5, 0.3, -0.4] {
            assert_eq!(s.step(db).unwrap(), s);
        }
    }

    #[test]
    fn guard_names_branch() {
        let s = SuperpositionState::two_branch(0.5).unwrap();
        match s.step(1.0) {
            Err(CslError::StepSize { branch, factor }) => {
                assert_eq!(branch, 0);
                assert_eq!(factor, -1.0);
            }
            other => panic!("expected step-size error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(SuperpositionState::new(vec![], vec![]).is_err());
        assert!(SuperpositionState::new(vec![0.0], vec![0.5, 0.5]).is_err());
        assert!(SuperpositionState::new(vec![0.0, 1.0], vec![0.7, 0.7]).is_err());
        assert!(SuperpositionState::new(vec![0.0, 1.0], vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn exponent_examples() {
        let s = SuperpositionState::two_branch(0.5).unwrap();
        let (e, end) = accumulate_exponent(&s, &[], 1).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(end, s);
        let (e, _) = accumulate_exponent(&s, &[2e-5], 1).unwrap();
        assert!((e - 2e-5).abs() < 1e-20);
        assert!(accumulate_exponent(&s, &[2e-5], 2).is_err());
    }

    #[test]
    fn suppression_at_minus_thirteen() {
        let est = decay_time_bound(-13.0, 2e-5, 5e-13).unwrap();
        let f = est.suppression_factor();
        assert!((f / 2.3e-6 - 1.0).abs() < 0.02, "{f}");
    }

    #[test]
    fn decay_bound_examples() {
        let est = decay_time_bound(-13.0, 2e-5, 5e-13).unwrap();
        assert_eq!(est.steps, 325_000);
        assert!((est.duration - 162.5e-9).abs() < 1e-18);

        let est = decay_time_bound(-2.0, 2e-5, 5e-13).unwrap();
        assert_eq!(est.steps, 50_000);
        assert!((est.duration - 25e-9).abs() < 1e-18);

        let tiny = decay_time_bound(-1e-9, 2e-5, 5e-13).unwrap();
        assert_eq!(tiny.steps, 1);
        let tinier = decay_time_bound(-1e-12, 2e-5, 5e-13).unwrap();
        assert!(tinier.steps <= tiny.steps);
    }

    #[test]
    fn decay_bound_domain_errors() {
        assert!(decay_time_bound(0.0, 2e-5, 5e-13).is_err());
        assert!(decay_time_bound(3.0, 2e-5, 5e-13).is_err());
        assert!(decay_time_bound(-13.0, 0.0, 5e-13).is_err());
        assert!(decay_time_bound(-13.0, 2e-5, 0.0).is_err());
    }

    #[test]
    fn first_order_consistency_short_path() {
        let cfg = NoiseConfig {
            seed: 11,
            ..NoiseConfig::default()
        };
        let path = NoiseStream::pseudorandom(cfg).unwrap().take(100).unwrap();
        let s = SuperpositionState::new(vec![-1.0, 0.0, 1.0], vec![0.2, 0.3, 0.5]).unwrap();
        for m in 0..3 {
            let (e, end) = accumulate_exponent(&s, &path, m).unwrap();
            let predicted = s.probabilities()[m] * e.exp();
            let tol = 10.0 * path.len() as f64 * cfg.variance();
            assert!(
                (predicted - end.probabilities()[m]).abs() <= tol,
                "branch {m}: {predicted} vs {}",
                end.probabilities()[m]
            );
        }
    }

    proptest! {
        #[test]
        fn step_conserves_total(
            probs in prop::collection::vec(0.0f64..1.0, 2..6),
            eig_seed in prop::collection::vec(-2.0f64..2.0, 6),
            db in -1e-3f64..1e-3,
        ) {
            let total: f64 = probs.iter().sum();
            prop_assume!(total > 1e-3);
            let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
            let sum: f64 = probs.iter().sum();
            prop_assume!((sum - 1.0).abs() <= 1e-13);
            let eig = eig_seed[..probs.len()].to_vec();
            let s = SuperpositionState::new(eig, probs).unwrap();
            let next = s.step(db).unwrap();
            prop_assert!((next.total_probability() - s.total_probability()).abs() <= 1e-12);
            prop_assert!(next.probabilities().iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn absorbing_for_any_path(path in prop::collection::vec(-0.1f64..0.1, 0..50)) {
            let s = SuperpositionState::new(vec![-1.0, 0.5, 3.0], vec![0.0, 1.0, 0.0]).unwrap();
            let (_, end) = accumulate_exponent(&s, &path, 1).unwrap();
            prop_assert_eq!(end, s);
        }
    }
}
