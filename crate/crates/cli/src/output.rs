//! Stable JSON shapes written by the command line tool.

use hawkes_islands::contrast::Estimator;
use hawkes_islands::{Error, Model, Result, StepFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub left: f64,
    pub right: f64,
    pub value: f64,
}

/// `{"nu", "model", "h", "contrast", "penalty_constant", "method", "dimension"}`,
/// with `dimension = |m| + 1`. `method` is 0 outside the numbered methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorJson {
    pub nu: f64,
    pub model: Vec<Interval>,
    pub h: Vec<Piece>,
    pub contrast: f64,
    pub penalty_constant: f64,
    pub method: u8,
    pub dimension: usize,
}

impl EstimatorJson {
    pub fn new(est: &Estimator, penalty_constant: f64, method: u8) -> Self {
        let intervals = est.model.intervals();
        Self {
            nu: est.nu_hat,
            model: intervals
                .iter()
                .map(|&(left, right)| Interval { left, right })
                .collect(),
            h: intervals
                .iter()
                .map(|&(left, right)| Piece {
                    left,
                    right,
                    value: est.h_hat.eval(0.5 * (left + right)),
                })
                .collect(),
            contrast: est.contrast,
            penalty_constant,
            method,
            dimension: est.dimension(),
        }
    }

    /// Rebuilds `(ν̂, ĥ, m̂)` on `(0, support]`.
    pub fn to_parts(&self, support: f64) -> Result<(f64, StepFunction, Model)> {
        let model = Model::new(
            support,
            self.model.iter().map(|i| (i.left, i.right)).collect(),
        )?;
        if model.dimension() != self.dimension {
            return Err(Error::Invalid(format!(
                "dimension {} does not match {} intervals",
                self.dimension,
                model.size()
            )));
        }
        let pieces: Vec<(f64, f64, f64)> =
            self.h.iter().map(|p| (p.left, p.right, p.value)).collect();
        let h = if pieces.is_empty() {
            StepFunction::zero(support)
        } else {
            StepFunction::from_pieces(support, &pieces)?
        };
        Ok((self.nu, h, model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_lossless() {
        let h = StepFunction::from_pieces(
            1000.0,
            &[
                (200.0, 400.0, 0.001_234_567_890_123_4),
                (600.0, 1000.0, -1e-7 / 3.0),
            ],
        )
        .unwrap();
        let model = Model::new(1000.0, vec![(200.0, 400.0), (600.0, 1000.0)]).unwrap();
        let est = Estimator {
            nu_hat: 1.0 / 3.0 * 1e-3,
            h_hat: h.clone(),
            model: model.clone(),
            contrast: -2.718_281_828_459_045e-6,
            coefficients: vec![],
            degenerate: false,
        };
        let j = EstimatorJson::new(&est, 1.0 / 7.0, 4);
        let text = serde_json::to_string(&j).unwrap();
        let back: EstimatorJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back, j);
        assert_eq!(back.dimension, 3);
        let (nu, h2, m2) = back.to_parts(1000.0).unwrap();
        assert_eq!(nu, est.nu_hat);
        assert_eq!(m2.intervals(), model.intervals());
        for t in [250.0, 500.0, 700.0] {
            assert_eq!(h2.eval(t), h.eval(t));
        }
    }
}
