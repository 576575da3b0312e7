use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub name: Option<String>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Classification quality with macro (unweighted) averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Metrics from a square confusion matrix. Zero denominators give 0.
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let c = confusion.len();
        if c == 0 || confusion.iter().any(|row| row.len() != c) {
            return Err(EvalError::Shape("confusion matrix must be square and non-empty".into()));
        }
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..c).map(|i| confusion[i][i]).sum();
        let per_class: Vec<ClassMetrics> = (0..c)
            .map(|k| {
                let tp = confusion[k][k];
                let support: u64 = confusion[k].iter().sum();
                let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    class: k,
                    name: None,
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
        Ok(EvalReport {
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            accuracy: ratio(correct, total),
            per_class,
            confusion,
        })
    }

    /// Confusion counts from label/prediction pairs over `classes` classes.
    pub fn from_predictions(labels: &[usize], predictions: &[usize], classes: usize) -> Result<Self, EvalError> {
        if labels.len() != predictions.len() {
            return Err(EvalError::Shape(format!(
                "{} labels but {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in labels.iter().zip(predictions) {
            if t >= classes || p >= classes {
                return Err(EvalError::Shape(format!("class id out of range for {classes} classes")));
            }
            confusion[t][p] += 1;
        }
        Self::from_confusion(confusion)
    }

    pub fn with_class_names(mut self, names: &[String]) -> Self {
        for m in &mut self.per_class {
            m.name = names.get(m.class).cloned();
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_class_hand_example() {
        let r = EvalReport::from_confusion(vec![vec![1, 1], vec![0, 2]]).unwrap();
        let (a, b) = (&r.per_class[0], &r.per_class[1]);
        assert_abs_diff_eq!(a.precision, 1.0);
        assert_abs_diff_eq!(a.recall, 0.5);
        assert_abs_diff_eq!(a.f1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.precision, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.recall, 1.0);
        assert_abs_diff_eq!(b.f1, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(r.macro_f1, (2.0 / 3.0 + 0.8) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.macro_f1, 0.7333, epsilon = 1e-4);
        assert_abs_diff_eq!(r.accuracy, 0.75);
    }

    #[test]
    fn perfect_predictions() {
        let labels = [0, 1, 2, 2, 1];
        let r = EvalReport::from_predictions(&labels, &labels, 3).unwrap();
        assert_eq!((r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_denominators_score_zero() {
        // class 1 never predicted, class 2 never present
        let r = EvalReport::from_predictions(&[0, 1], &[0, 0], 3).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert_eq!(r.per_class[2].recall, 0.0);
        assert_eq!(r.per_class[2].support, 0);
    }

    #[test]
    fn json_field_names() {
        let r = EvalReport::from_confusion(vec![vec![2, 0], vec![1, 1]]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["per_class", "macro_precision", "macro_recall", "macro_f1", "accuracy", "confusion"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: EvalReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(EvalReport::from_confusion(vec![vec![1, 0]]).is_err());
        assert!(EvalReport::from_predictions(&[0], &[0, 1], 2).is_err());
        assert!(EvalReport::from_predictions(&[3], &[0], 2).is_err());
    }
}
