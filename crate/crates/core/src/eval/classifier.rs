//! Multinomial logistic regression on document encodings.

use std::cmp::Ordering;

use rayon::prelude::*;

use super::{DenseMatrix, EvalError, EvalReport};

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub max_iter: usize,
    pub learning_rate: f64,
    /// Stop once every gradient entry is below this in magnitude.
    pub tolerance: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            max_iter: 1000,
            learning_rate: 0.05,
            tolerance: 1e-6,
        }
    }
}

/// `classes × features` weights and per-class biases.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    pub classes: usize,
    pub features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxClassifier {
    fn logits(&self, x: &[f32], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.weights[k * self.features..(k + 1) * self.features];
            *o = self.bias[k] + row.iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>();
        }
    }

    /// Class probabilities for one row.
    pub fn predict_proba(&self, x: &[f32]) -> Vec<f64> {
        let mut p = vec![0.0; self.classes];
        self.logits(x, &mut p);
        softmax_in_place(&mut p);
        p
    }

    /// Arg-max class; ties go to the lower class id.
    pub fn predict(&self, x: &[f32]) -> usize {
        let mut logits = vec![0.0; self.classes];
        self.logits(x, &mut logits);
        let mut best = 0;
        for k in 1..self.classes {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        best
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn cmp_rows(a: &[f32], b: &[f32]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Full-batch Adam on the mean cross-entropy, starting from zero weights.
///
/// Rows are visited in a canonical order (sorted by feature values, then
/// label), so the fitted weights do not depend on the order of the input rows.
pub fn train_classifier(
    features: &DenseMatrix,
    labels: &[usize],
    cfg: &ClassifierConfig,
) -> Result<SoftmaxClassifier, EvalError> {
    let n = features.rows;
    if labels.len() != n {
        return Err(EvalError::Shape(format!("{n} rows but {} labels", labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(EvalError::Degenerate("need at least two classes".into()));
    }
    for k in 0..classes {
        if !labels.contains(&k) {
            return Err(EvalError::Degenerate(format!("class {k} has no training rows")));
        }
    }
    let h = features.cols;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_rows(features.row(a), features.row(b)).then(labels[a].cmp(&labels[b])));

    let mut model = SoftmaxClassifier {
        classes,
        features: h,
        weights: vec![0.0; classes * h],
        bias: vec![0.0; classes],
    };
    let width = classes * (h + 1);
    let (mut m, mut v) = (vec![0.0; width], vec![0.0; width]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);

    for step in 1..=cfg.max_iter {
        let chunk_grads: Vec<Vec<f64>> = order
            .par_chunks(CHUNK)
            .map(|rows| {
                let mut g = vec![0.0; width];
                let mut p = vec![0.0; classes];
                for &r in rows {
                    let x = features.row(r);
                    model.logits(x, &mut p);
                    softmax_in_place(&mut p);
                    p[labels[r]] -= 1.0;
                    for k in 0..classes {
                        let gk = &mut g[k * h..(k + 1) * h];
                        for (gi, &xi) in gk.iter_mut().zip(x) {
                            *gi += p[k] * xi as f64;
                        }
                        g[classes * h + k] += p[k];
                    }
                }
                g
            })
            .collect();
        let mut grad = vec![0.0; width];
        for g in &chunk_grads {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n as f64);
        if grad.iter().all(|g| g.abs() < cfg.tolerance) {
            break;
        }

        let (c1, c2) = (1.0 - b1.powi(step as i32), 1.0 - b2.powi(step as i32));
        for i in 0..width {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let update = cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            if i < classes * h {
                model.weights[i] -= update;
            } else {
                model.bias[i - classes * h] -= update;
            }
        }
    }
    Ok(model)
}

/// Predicts every row and scores against `labels`.
pub fn evaluate(classifier: &SoftmaxClassifier, features: &DenseMatrix, labels: &[usize]) -> Result<EvalReport, EvalError> {
    if features.cols != classifier.features {
        return Err(EvalError::Shape(format!(
            "features have width {}, classifier expects {}",
            features.cols, classifier.features
        )));
    }
    if labels.len() != features.rows {
        return Err(EvalError::Shape(format!("{} rows but {} labels", features.rows, labels.len())));
    }
    let predictions: Vec<usize> = (0..features.rows).map(|r| classifier.predict(features.row(r))).collect();
    EvalReport::from_predictions(labels, &predictions, classifier.classes)
}
