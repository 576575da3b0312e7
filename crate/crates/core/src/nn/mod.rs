//! Tied-weight text autoencoder.
//!
//! The encoder computes `z = tanh(W x + b)` from a sparse document row, a
//! competitive layer rewrites `z` into `ẑ`, and the decoder reconstructs the
//! input through the transposed encoder matrix: `x̂ = sigmoid(Wᵀ ẑ + c)`.
//! Training minimises the binary cross-entropy summed over vocabulary
//! dimensions.
//!
//! All numeric code is generic over [`Scalar`] so the same forward/backward
//! path runs in `f32` for training and in `f64` for gradient checking.

mod autoencoder;
mod competition;

pub(crate) use autoencoder::accumulate_backward;
pub use autoencoder::{
    backward, cross_entropy, decode, encode_preact, forward, ForwardTrace, Gradients, Mode,
    CE_EPSILON,
};
pub use competition::{
    apply_frozen, compete, competition_backward, kate_layer, ksparse_layer, scat_layer,
    CompetitionOutcome,
};

use std::fmt;
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floating point type usable by the network.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn of_f32(v: f32) -> Self {
        <Self as FromPrimitive>::from_f32(v).expect("f32 converts to any float")
    }

    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to any float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("k = {k} out of range for hidden width {hidden}")]
    KOutOfRange { k: usize, hidden: usize },
    #[error("dimension mismatch: {what} expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("alpha must be finite and > 0, got {0}")]
    BadAlpha(f64),
    #[error("parameter {0} contains a non-finite entry")]
    NonFinite(&'static str),
    #[error("unknown competition variant {0:?}")]
    UnknownVariant(String),
}

/// Competitive layer applied between encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Second chance: strongest and weakest positives win, other positives lose.
    Scat,
    /// Top-k by value, no energy transfer.
    Ksparse,
    /// KATE-style: positive and negative pools compete separately with amplified energy.
    Kate,
    /// Plain autoencoder.
    None,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Scat, Variant::Ksparse, Variant::Kate, Variant::None];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Scat => "scat",
            Variant::Ksparse => "ksparse",
            Variant::Kate => "kate",
            Variant::None => "none",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "scat" => Ok(Variant::Scat),
            "ksparse" | "k-sparse" => Ok(Variant::Ksparse),
            "kate" => Ok(Variant::Kate),
            "none" => Ok(Variant::None),
            _ => Err(NnError::UnknownVariant(s.to_string())),
        }
    }
}

/// Competition settings carried alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Competition {
    pub variant: Variant,
    pub k: usize,
    /// K-Sparse inference multiplier (keeps `⌊kα⌋` units) and KATE energy amplification.
    pub alpha: f32,
}

impl Competition {
    pub fn new(variant: Variant, k: usize, alpha: f32) -> Self {
        Competition { variant, k, alpha }
    }

    pub fn none() -> Self {
        Competition {
            variant: Variant::None,
            k: 1,
            alpha: 1.0,
        }
    }
}

/// Autoencoder parameters. The decoder weight is `Wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    hidden: usize,
    vocab: usize,
    /// Encoder weight, `hidden × vocab`, row-major.
    pub w: Vec<T>,
    /// Encoder bias, length `hidden`.
    pub b: Vec<T>,
    /// Decoder bias, length `vocab`.
    pub c: Vec<T>,
    pub competition: Competition,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters.
    pub fn zeros(hidden: usize, vocab: usize, competition: Competition) -> Result<Self, NnError> {
        Self::from_parts(
            hidden,
            vocab,
            vec![T::zero(); hidden * vocab],
            vec![T::zero(); hidden],
            vec![T::zero(); vocab],
            competition,
        )
    }

    /// Uniform weights in `±sqrt(6 / (h + v))`, zero biases.
    pub fn init<R: Rng + ?Sized>(
        hidden: usize,
        vocab: usize,
        competition: Competition,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut params = Self::zeros(hidden, vocab, competition)?;
        let limit = (6.0 / (hidden + vocab) as f64).sqrt();
        for w in params.w.iter_mut() {
            *w = T::of_f64(rng.gen_range(-limit..limit));
        }
        Ok(params)
    }

    pub fn from_parts(
        hidden: usize,
        vocab: usize,
        w: Vec<T>,
        b: Vec<T>,
        c: Vec<T>,
        competition: Competition,
    ) -> Result<Self, NnError> {
        let params = ModelParams {
            hidden,
            vocab,
            w,
            b,
            c,
            competition,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks shapes, `k` range, `alpha` and finiteness.
    pub fn validate(&self) -> Result<(), NnError> {
        check_len("W", self.hidden * self.vocab, self.w.len())?;
        check_len("b", self.hidden, self.b.len())?;
        check_len("c", self.vocab, self.c.len())?;
        let comp = &self.competition;
        if comp.variant != Variant::None && (comp.k == 0 || comp.k > self.hidden) {
            return Err(NnError::KOutOfRange {
                k: comp.k,
                hidden: self.hidden,
            });
        }
        if !(comp.alpha.is_finite() && comp.alpha > 0.0) {
            return Err(NnError::BadAlpha(comp.alpha as f64));
        }
        for (name, values) in [("W", &self.w), ("b", &self.b), ("c", &self.c)] {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(name));
            }
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// Row `j` of `W`: the tied weights between hidden unit `j` and every word.
    pub fn w_row(&self, j: usize) -> &[T] {
        &self.w[j * self.vocab..(j + 1) * self.vocab]
    }

    pub fn with_competition(mut self, competition: Competition) -> Result<Self, NnError> {
        self.competition = competition;
        self.validate()?;
        Ok(self)
    }

    /// Converts every entry to another float width.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::of_f64(x.to_f64_lossy())).collect();
        ModelParams {
            hidden: self.hidden,
            vocab: self.vocab,
            w: conv(&self.w),
            b: conv(&self.b),
            c: conv(&self.c),
            competition: self.competition,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(&self.b)
            .chain(&self.c)
            .all(|v| v.is_finite())
    }

    /// Mutable views of `[W, b, c]`, in that order.
    pub fn sections_mut(&mut self) -> [&mut [T]; 3] {
        [&mut self.w, &mut self.b, &mut self.c]
    }

    pub fn sections(&self) -> [&[T]; 3] {
        [&self.w, &self.b, &self.c]
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), NnError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NnError::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_respects_fan_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::<f32>::init(4, 20, Competition::none(), &mut rng).unwrap();
        let limit = (6.0f32 / 24.0).sqrt();
        assert!(p.w.iter().all(|w| w.abs() <= limit));
        assert!(p.b.iter().chain(&p.c).all(|v| *v == 0.0));
    }

    #[test]
    fn validate_rejects_bad_k_and_alpha() {
        let err = ModelParams::<f32>::zeros(3, 5, Competition::new(Variant::Scat, 4, 1.0));
        assert_eq!(err.unwrap_err(), NnError::KOutOfRange { k: 4, hidden: 3 });
        let err = ModelParams::<f32>::zeros(3, 5, Competition::new(Variant::Scat, 0, 1.0));
        assert!(matches!(err, Err(NnError::KOutOfRange { .. })));
        let err = ModelParams::<f32>::zeros(3, 5, Competition::new(Variant::Kate, 2, 0.0));
        assert!(matches!(err, Err(NnError::BadAlpha(_))));
        // k is irrelevant without competition
        assert!(ModelParams::<f32>::zeros(3, 5, Competition::new(Variant::None, 9, 1.0)).is_ok());
    }

    #[test]
    fn validate_rejects_non_finite() {
        let mut p = ModelParams::<f64>::zeros(2, 2, Competition::none()).unwrap();
        p.c[1] = f64::NAN;
        assert_eq!(p.validate(), Err(NnError::NonFinite("c")));
    }

    #[test]
    fn variant_parses() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("topk".parse::<Variant>().is_err());
    }
}
