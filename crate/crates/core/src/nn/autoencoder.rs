use super::competition::{compete, competition_backward, CompetitionOutcome};
use super::{ModelParams, NnError, Scalar};
use crate::corpus::SparseRow;

/// Clamp applied to reconstructions before taking logs.
pub const CE_EPSILON: f64 = 1e-7;

/// Whether the competitive layer runs as in training or as at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer { competition_at_inference: bool },
}

impl Mode {
    /// Inference with plain `tanh` encoding.
    pub fn infer() -> Self {
        Mode::Infer {
            competition_at_inference: false,
        }
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<'a, T> {
    pub x: &'a SparseRow,
    /// Activations after `tanh`, before competition.
    pub z: Vec<T>,
    /// Activations after competition.
    pub z_hat: Vec<T>,
    pub x_hat: Vec<T>,
    pub outcome: Option<CompetitionOutcome<T>>,
    pub mode: Mode,
}

/// Parameter gradients of the summed cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub dw: Vec<T>,
    pub db: Vec<T>,
    pub dc: Vec<T>,
    pub loss: T,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(hidden: usize, vocab: usize) -> Self {
        Gradients {
            dw: vec![T::zero(); hidden * vocab],
            db: vec![T::zero(); hidden],
            dc: vec![T::zero(); vocab],
            loss: T::zero(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            *a += *b;
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            *a += *b;
        }
        for (a, b) in self.dc.iter_mut().zip(&other.dc) {
            *a += *b;
        }
        self.loss += other.loss;
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.dw.iter_mut().chain(self.db.iter_mut()).chain(self.dc.iter_mut()) {
            *g *= factor;
        }
        self.loss *= factor;
    }

    /// `[dW, db, dc]`, matching [`ModelParams::sections`].
    pub fn sections(&self) -> [&[T]; 3] {
        [&self.dw, &self.db, &self.dc]
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.sections().iter().all(|s| s.iter().all(|g| g.is_finite()))
    }
}

fn check_row<T: Scalar>(x: &SparseRow, params: &ModelParams<T>) -> Result<(), NnError> {
    if let Some(&max) = x.indices.last() {
        if max as usize >= params.vocab() {
            return Err(NnError::DimensionMismatch {
                what: "input index bound",
                expected: params.vocab(),
                actual: max as usize + 1,
            });
        }
    }
    Ok(())
}

fn sigmoid<T: Scalar>(a: T) -> T {
    T::one() / (T::one() + (-a).exp())
}

/// `z = tanh(W x + b)` for a sparse input row.
pub fn encode_preact<T: Scalar>(x: &SparseRow, params: &ModelParams<T>) -> Result<Vec<T>, NnError> {
    check_row(x, params)?;
    let v = params.vocab();
    let mut z = params.b.clone();
    for (j, zj) in z.iter_mut().enumerate() {
        let row = &params.w[j * v..(j + 1) * v];
        for (&i, &xi) in x.indices.iter().zip(&x.values) {
            *zj += row[i as usize] * T::of_f32(xi);
        }
    }
    for zj in z.iter_mut() {
        *zj = zj.tanh();
    }
    Ok(z)
}

/// `x̂ = sigmoid(Wᵀ ẑ + c)`.
pub fn decode<T: Scalar>(z_hat: &[T], params: &ModelParams<T>) -> Result<Vec<T>, NnError> {
    if z_hat.len() != params.hidden() {
        return Err(NnError::DimensionMismatch {
            what: "z_hat",
            expected: params.hidden(),
            actual: z_hat.len(),
        });
    }
    let v = params.vocab();
    let mut logits = params.c.clone();
    for (j, &zj) in z_hat.iter().enumerate() {
        if zj == T::zero() {
            continue;
        }
        let row = &params.w[j * v..(j + 1) * v];
        for (l, &w) in logits.iter_mut().zip(row) {
            *l += w * zj;
        }
    }
    Ok(logits.into_iter().map(sigmoid).collect())
}

/// Binary cross-entropy summed over all vocabulary dimensions, with `x̂`
/// clamped to `[ε, 1 − ε]`.
pub fn cross_entropy<T: Scalar>(x: &SparseRow, x_hat: &[T]) -> T {
    let eps = T::of_f64(CE_EPSILON);
    let hi = T::one() - eps;
    let mut sparse = x.indices.iter().zip(&x.values).peekable();
    let mut loss = T::zero();
    for (i, &p) in x_hat.iter().enumerate() {
        let p = p.max(eps).min(hi);
        let xi = match sparse.peek() {
            Some((&idx, &val)) if idx as usize == i => {
                sparse.next();
                T::of_f32(val)
            }
            _ => T::zero(),
        };
        if xi == T::zero() {
            loss -= (T::one() - p).ln();
        } else {
            loss -= xi * p.ln() + (T::one() - xi) * (T::one() - p).ln();
        }
    }
    loss
}

/// Encoder, competitive layer and decoder in sequence.
pub fn forward<'a, T: Scalar>(
    x: &'a SparseRow,
    params: &ModelParams<T>,
    mode: Mode,
) -> Result<ForwardTrace<'a, T>, NnError> {
    let z = encode_preact(x, params)?;
    let (z_hat, outcome) = match compete(&params.competition, &z, mode)? {
        Some((z_hat, outcome)) => (z_hat, Some(outcome)),
        None => (z.clone(), None),
    };
    let x_hat = decode(&z_hat, params)?;
    Ok(ForwardTrace {
        x,
        z,
        z_hat,
        x_hat,
        outcome,
        mode,
    })
}

/// Analytic gradient of the reconstruction loss for one sample.
pub fn backward<T: Scalar>(trace: &ForwardTrace<'_, T>, params: &ModelParams<T>) -> Result<Gradients<T>, NnError> {
    let mut grads = Gradients::zeros(params.hidden(), params.vocab());
    accumulate_backward(trace, params, &mut grads)?;
    Ok(grads)
}

/// Adds one sample's gradient into `grads`.
pub(crate) fn accumulate_backward<T: Scalar>(
    trace: &ForwardTrace<'_, T>,
    params: &ModelParams<T>,
    grads: &mut Gradients<T>,
) -> Result<(), NnError> {
    let (h, v) = (params.hidden(), params.vocab());
    if trace.z.len() != h || trace.z_hat.len() != h || trace.x_hat.len() != v {
        return Err(NnError::DimensionMismatch {
            what: "trace width",
            expected: h + h + v,
            actual: trace.z.len() + trace.z_hat.len() + trace.x_hat.len(),
        });
    }
    check_row(trace.x, params)?;

    // sigmoid + summed cross-entropy: dL/dlogit = x̂ − x
    let mut delta_out = trace.x_hat.clone();
    for (&i, &xi) in trace.x.indices.iter().zip(&trace.x.values) {
        delta_out[i as usize] -= T::of_f32(xi);
    }
    for (dc, &d) in grads.dc.iter_mut().zip(&delta_out) {
        *dc += d;
    }

    let grad_z_hat: Vec<T> = (0..h)
        .map(|j| {
            params.w[j * v..(j + 1) * v]
                .iter()
                .zip(&delta_out)
                .map(|(&w, &d)| w * d)
                .sum()
        })
        .collect();
    let grad_z = match &trace.outcome {
        Some(outcome) => competition_backward(&grad_z_hat, outcome)?,
        None => grad_z_hat,
    };

    for j in 0..h {
        let zj = trace.z[j];
        let delta_hid = grad_z[j] * (T::one() - zj * zj);
        grads.db[j] += delta_hid;
        let row = &mut grads.dw[j * v..(j + 1) * v];
        let zh = trace.z_hat[j];
        if zh != T::zero() {
            for (g, &d) in row.iter_mut().zip(&delta_out) {
                *g += zh * d;
            }
        }
        if delta_hid != T::zero() {
            for (&i, &xi) in trace.x.indices.iter().zip(&trace.x.values) {
                row[i as usize] += delta_hid * T::of_f32(xi);
            }
        }
    }
    grads.loss += cross_entropy(trace.x, &trace.x_hat);
    Ok(())
}
