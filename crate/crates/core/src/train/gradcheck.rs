//! Central finite-difference check of the analytic backward pass.

use super::TrainError;
use crate::corpus::SparseRow;
use crate::nn::{
    apply_frozen, backward, cross_entropy, decode, encode_preact, forward, CompetitionOutcome, ModelParams, Mode,
    NnError, Variant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Differentiates the true loss; only valid without competition.
    Full,
    /// Differentiates a surrogate in which the winner/loser partition and the
    /// energy gains of the unperturbed forward pass are held fixed.
    FrozenCompetition,
}

fn surrogate_loss(
    x: &SparseRow,
    params: &ModelParams<f64>,
    frozen: Option<&CompetitionOutcome<f64>>,
) -> Result<f64, NnError> {
    let z = encode_preact(x, params)?;
    let z_hat = match frozen {
        Some(outcome) => apply_frozen(outcome, &z),
        None => z,
    };
    Ok(cross_entropy(x, &decode(&z_hat, params)?))
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter entry: `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check(params: &ModelParams<f64>, x: &SparseRow, mode: CheckMode, eps: f64) -> Result<f64, TrainError> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(TrainError::Config(format!("finite-difference step {eps} outside [1e-6, 1e-3]")));
    }
    if mode == CheckMode::Full && params.competition.variant != Variant::None {
        return Err(TrainError::Config(format!(
            "full gradient check needs variant none, got {}",
            params.competition.variant
        )));
    }
    let trace = forward(x, params, Mode::Train)?;
    let analytic = backward(&trace, params)?;
    let frozen = trace.outcome.clone();

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for section in 0..3 {
        let len = probe.sections()[section].len();
        for i in 0..len {
            let original = probe.sections()[section][i];
            probe.sections_mut()[section][i] = original + eps;
            let plus = surrogate_loss(x, &probe, frozen.as_ref())?;
            probe.sections_mut()[section][i] = original - eps;
            let minus = surrogate_loss(x, &probe, frozen.as_ref())?;
            probe.sections_mut()[section][i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.sections()[section][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Competition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_case(seed: u64, v: usize, h: usize, competition: Competition) -> (ModelParams<f64>, SparseRow) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::init(h, v, competition, &mut rng).unwrap();
        for b in p.b.iter_mut().chain(p.c.iter_mut()) {
            *b = rng.gen_range(-0.5..0.5);
        }
        let indices: Vec<u32> = (0..v as u32).filter(|_| rng.gen_bool(0.5)).collect();
        let values = indices.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        (p, SparseRow::new(indices, values))
    }

    #[test]
    fn full_mode_plain_autoencoder() {
        let (p, x) = random_case(3, 10, 4, Competition::none());
        let err = grad_check(&p, &x, CheckMode::Full, 1e-4).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn full_mode_with_empty_input() {
        let (p, _) = random_case(4, 10, 4, Competition::none());
        let err = grad_check(&p, &SparseRow::default(), CheckMode::Full, 1e-4).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn frozen_mode_scat() {
        let (p, x) = random_case(5, 12, 8, Competition::new(Variant::Scat, 3, 1.0));
        let err = grad_check(&p, &x, CheckMode::FrozenCompetition, 1e-4).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn rejects_full_mode_with_competition_and_bad_eps() {
        let (p, x) = random_case(6, 5, 3, Competition::new(Variant::Scat, 2, 1.0));
        assert!(matches!(grad_check(&p, &x, CheckMode::Full, 1e-4), Err(TrainError::Config(_))));
        let (p, x) = random_case(6, 5, 3, Competition::none());
        assert!(grad_check(&p, &x, CheckMode::Full, 1e-2).is_err());
    }
}
