//! Competitive hidden layers.
//!
//! Every layer reports a [`CompetitionOutcome`] that partitions the hidden
//! units into winners, losers and pass-through units. The backward pass only
//! needs this partition: gradient flows through winners and pass-through units
//! unchanged and is blocked at losers. Energy added to winners is treated as a
//! constant.

use std::cmp::Ordering;

use super::{Competition, Mode, NnError, Scalar, Variant};

/// Partition of the hidden units produced by one competition.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetitionOutcome<T> {
    /// SCAT: the `⌈k/2⌉` strongest positives. K-Sparse: every kept unit.
    /// KATE: the positive winners.
    pub winners_large: Vec<usize>,
    /// SCAT: the `⌊k/2⌋` weakest positives. KATE: the negative winners.
    pub winners_small: Vec<usize>,
    /// Units zeroed by the competition.
    pub losers: Vec<usize>,
    /// Units left untouched (non-positive for SCAT, exact zeros for KATE).
    pub negatives: Vec<usize>,
    /// Sum of the losers' positive activations (KATE: positive pool only).
    pub energy: T,
    /// KATE only: sum of the losers' absolute negative activations.
    pub negative_energy: T,
    /// Amount added to each unit of `winners_large`.
    pub gain_large: T,
    /// Amount added to each unit of `winners_small`.
    pub gain_small: T,
}

impl<T: Scalar> CompetitionOutcome<T> {
    pub fn winner_count(&self) -> usize {
        self.winners_large.len() + self.winners_small.len()
    }

    pub fn width(&self) -> usize {
        self.winners_large.len() + self.winners_small.len() + self.losers.len() + self.negatives.len()
    }

    pub fn is_winner(&self, j: usize) -> bool {
        self.winners_large.contains(&j) || self.winners_small.contains(&j)
    }
}

fn check_k(k: usize, hidden: usize) -> Result<(), NnError> {
    if k == 0 || k > hidden {
        Err(NnError::KOutOfRange { k, hidden })
    } else {
        Ok(())
    }
}

fn cmp_values<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Indices sorted by value, largest first, lower index first on ties.
fn by_value_desc<T: Scalar>(z: &[T], mut idx: Vec<usize>) -> Vec<usize> {
    idx.sort_by(|&a, &b| cmp_values(z[b], z[a]).then(a.cmp(&b)));
    idx
}

/// Indices sorted by value, smallest first, lower index first on ties.
fn by_value_asc<T: Scalar>(z: &[T], mut idx: Vec<usize>) -> Vec<usize> {
    idx.sort_by(|&a, &b| cmp_values(z[a], z[b]).then(a.cmp(&b)));
    idx
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Second-chance competition.
///
/// Among the strictly positive activations, the `⌈k/2⌉` largest and the
/// `⌊k/2⌋` smallest win and each gains the full energy `E` (the sum of the
/// remaining positive activations), the remaining positives are zeroed, and
/// non-positive activations pass through unchanged. With at most `k`
/// positives there is no competition.
pub fn scat_layer<T: Scalar>(k: usize, z: &[T]) -> Result<(Vec<T>, CompetitionOutcome<T>), NnError> {
    check_k(k, z.len())?;
    let (positive, negatives): (Vec<usize>, Vec<usize>) = (0..z.len()).partition(|&j| z[j] > T::zero());

    let n_large = k.div_ceil(2);
    let n_small = k / 2;
    let (winners_large, winners_small, losers) = if positive.len() <= k {
        (positive, Vec::new(), Vec::new())
    } else {
        let desc = by_value_desc(z, positive);
        let large = desc[..n_large].to_vec();
        let small_pool = by_value_asc(z, desc[n_large..].to_vec());
        let small = small_pool[..n_small].to_vec();
        let losers = small_pool[n_small..].to_vec();
        (large, small, losers)
    };

    let energy: T = losers.iter().map(|&j| z[j]).sum();
    let outcome = CompetitionOutcome {
        winners_large: sorted(winners_large),
        winners_small: sorted(winners_small),
        losers: sorted(losers),
        negatives,
        energy,
        negative_energy: T::zero(),
        gain_large: energy,
        gain_small: energy,
    };
    let z_hat = apply_frozen(&outcome, z);
    Ok((z_hat, outcome))
}

/// K-Sparse: keeps the `k` largest activations by value while training and the
/// `⌊kα⌋` largest at inference; everything else is zeroed. No energy moves.
pub fn ksparse_layer<T: Scalar>(
    k: usize,
    z: &[T],
    training: bool,
    alpha: f32,
) -> Result<(Vec<T>, CompetitionOutcome<T>), NnError> {
    check_k(k, z.len())?;
    let keep = if training {
        k
    } else {
        (k as f64 * alpha as f64).floor() as usize
    };
    check_k(keep, z.len())?;

    let desc = by_value_desc(z, (0..z.len()).collect());
    let outcome = CompetitionOutcome {
        winners_large: sorted(desc[..keep].to_vec()),
        winners_small: Vec::new(),
        losers: sorted(desc[keep..].to_vec()),
        negatives: Vec::new(),
        energy: T::zero(),
        negative_energy: T::zero(),
        gain_large: T::zero(),
        gain_small: T::zero(),
    };
    let z_hat = apply_frozen(&outcome, z);
    Ok((z_hat, outcome))
}

/// KATE-style competition.
///
/// Positive and negative activations compete in separate pools: `⌈k/2⌉`
/// positive winners (largest values) and `⌊k/2⌋` negative winners (largest
/// magnitudes). A pool with too few members hands its unused slots to the
/// other pool. Positive winners gain `α·E⁺`, negative winners gain `−α·E⁻`,
/// losers are zeroed and exact zeros pass through.
pub fn kate_layer<T: Scalar>(
    k: usize,
    alpha: T,
    z: &[T],
) -> Result<(Vec<T>, CompetitionOutcome<T>), NnError> {
    check_k(k, z.len())?;
    let positive: Vec<usize> = (0..z.len()).filter(|&j| z[j] > T::zero()).collect();
    let negative: Vec<usize> = (0..z.len()).filter(|&j| z[j] < T::zero()).collect();
    let zeros: Vec<usize> = (0..z.len()).filter(|&j| z[j] == T::zero()).collect();

    let mut n_pos = k.div_ceil(2).min(positive.len());
    let mut n_neg = (k / 2).min(negative.len());
    let spare = k - n_pos - n_neg;
    let extra_pos = spare.min(positive.len() - n_pos);
    n_pos += extra_pos;
    n_neg += (spare - extra_pos).min(negative.len() - n_neg);

    let pos_desc = by_value_desc(z, positive);
    let neg_by_magnitude = by_value_asc(z, negative);
    let (pos_win, pos_lose) = pos_desc.split_at(n_pos);
    let (neg_win, neg_lose) = neg_by_magnitude.split_at(n_neg);

    let energy: T = pos_lose.iter().map(|&j| z[j]).sum();
    let negative_energy: T = neg_lose.iter().map(|&j| z[j].abs()).sum();
    let losers = pos_lose.iter().chain(neg_lose).copied().collect();
    let outcome = CompetitionOutcome {
        winners_large: sorted(pos_win.to_vec()),
        winners_small: sorted(neg_win.to_vec()),
        losers: sorted(losers),
        negatives: zeros,
        energy,
        negative_energy,
        gain_large: alpha * energy,
        gain_small: -(alpha * negative_energy),
    };
    let z_hat = apply_frozen(&outcome, z);
    Ok((z_hat, outcome))
}

/// Applies the layer selected by `competition` for the given mode.
///
/// Returns `None` when no competition applies: variant `none`, or inference
/// without `competition_at_inference`.
pub fn compete<T: Scalar>(
    competition: &Competition,
    z: &[T],
    mode: Mode,
) -> Result<Option<(Vec<T>, CompetitionOutcome<T>)>, NnError> {
    let training = match mode {
        Mode::Train => true,
        Mode::Infer {
            competition_at_inference,
        } => {
            if !competition_at_inference {
                return Ok(None);
            }
            false
        }
    };
    let k = competition.k;
    let result = match competition.variant {
        Variant::None => return Ok(None),
        Variant::Scat => scat_layer(k, z)?,
        Variant::Ksparse => ksparse_layer(k, z, training, competition.alpha)?,
        Variant::Kate => kate_layer(k, T::of_f32(competition.alpha), z)?,
    };
    Ok(Some(result))
}

/// Recomputes `ẑ` from `z` under a fixed partition and fixed gains.
///
/// On the `z` that produced `outcome` this is exactly the layer's forward
/// output; on a perturbed `z` it is the frozen surrogate used for gradient
/// checks.
pub fn apply_frozen<T: Scalar>(outcome: &CompetitionOutcome<T>, z: &[T]) -> Vec<T> {
    let mut z_hat = z.to_vec();
    for &j in &outcome.winners_large {
        z_hat[j] += outcome.gain_large;
    }
    for &j in &outcome.winners_small {
        z_hat[j] += outcome.gain_small;
    }
    for &j in &outcome.losers {
        z_hat[j] = T::zero();
    }
    z_hat
}

/// Gradient through the competitive layer: identity except at losers.
pub fn competition_backward<T: Scalar>(
    grad_z_hat: &[T],
    outcome: &CompetitionOutcome<T>,
) -> Result<Vec<T>, NnError> {
    if grad_z_hat.len() != outcome.width() {
        return Err(NnError::DimensionMismatch {
            what: "grad_z_hat",
            expected: outcome.width(),
            actual: grad_z_hat.len(),
        });
    }
    let mut grad = grad_z_hat.to_vec();
    for &j in &outcome.losers {
        grad[j] = T::zero();
    }
    Ok(grad)
}
