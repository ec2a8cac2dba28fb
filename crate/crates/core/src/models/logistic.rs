//! Multiclass logistic regression: a softmax layer trained with full-batch
//! gradient descent at a fixed step size.
//!
//! The loss is mean cross-entropy plus an L2 penalty of `(l2 / 2) · ‖W‖²` on
//! the weight matrix; biases are never regularized. Each epoch makes one
//! fused pass that produces the loss and its gradient together, so the
//! convergence check always sees the loss at the current parameters before
//! any update is applied.

use ndarray::{Array1, Array2};

use crate::featurize::FeatureVector;
use crate::models::{log_sum_exp, normalize_log_scores, validate_dataset};
use crate::{Error, Result};

/// Training stops early once an epoch improves the loss by less than this.
const CONVERGENCE_TOL: f64 = 1e-6;

/// Hyperparameters for the gradient-descent loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    /// One row of feature weights per class.
    weights: Array2<f64>,
    bias: Array1<f64>,
    converged_at: Option<usize>,
}

impl LogisticRegression {
    pub fn fit(
        features: &[FeatureVector],
        labels: &[usize],
        n_features: usize,
        n_classes: usize,
        options: GdOptions,
    ) -> Result<LogisticRegression> {
        if !(options.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(options.l2 >= 0.0) {
            return Err(Error::config("l2 must be non-negative"));
        }
        if options.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        validate_dataset(features, labels, n_features, n_classes)?;

        let mut model = LogisticRegression {
            weights: Array2::zeros((n_classes, n_features)),
            bias: Array1::zeros(n_classes),
            converged_at: None,
        };
        let mut prev_loss = f64::INFINITY;
        for epoch in 0..options.epochs {
            let (loss, grad_w, grad_b) =
                model.loss_and_gradient(features, labels, options.l2);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            // Checked before the update: the parameters kept are the ones the
            // converged loss was measured at.
            if prev_loss - loss < CONVERGENCE_TOL {
                model.converged_at = Some(epoch);
                break;
            }
            prev_loss = loss;
            model.weights.scaled_add(-options.learning_rate, &grad_w);
            model.bias.scaled_add(-options.learning_rate, &grad_b);
        }
        Ok(model)
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    /// The epoch at which training stopped early, if it did.
    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    fn scores(&self, row: &FeatureVector) -> Result<Vec<f64>> {
        let mut scores: Vec<f64> = self.bias.to_vec();
        for (idx, value) in row.iter() {
            if idx >= self.n_features() {
                return Err(Error::Dimension { expected: self.n_features(), actual: idx + 1 });
            }
            for (c, score) in scores.iter_mut().enumerate() {
                *score += self.weights[[c, idx]] * value;
            }
        }
        Ok(scores)
    }

    /// Softmax class probabilities for one row, normalized to sum to 1.
    pub fn predict_proba(&self, row: &FeatureVector) -> Result<Vec<f64>> {
        let mut scores = self.scores(row)?;
        normalize_log_scores(&mut scores);
        Ok(scores)
    }

    /// One fused pass over the data: mean cross-entropy plus the L2 term,
    /// together with the gradient of that same objective.
    fn loss_and_gradient(
        &self,
        features: &[FeatureVector],
        labels: &[usize],
        l2: f64,
    ) -> (f64, Array2<f64>, Array1<f64>) {
        let n_classes = self.n_classes();
        let n = features.len() as f64;
        let mut grad_w: Array2<f64> = Array2::zeros(self.weights.raw_dim());
        let mut grad_b: Array1<f64> = Array1::zeros(n_classes);
        let mut total_ce = 0.0;
        let mut scores = vec![0.0; n_classes];

        for (row, &label) in features.iter().zip(labels) {
            for (c, score) in scores.iter_mut().enumerate() {
                *score = self.bias[c];
            }
            for (idx, value) in row.iter() {
                for (c, score) in scores.iter_mut().enumerate() {
                    *score += self.weights[[c, idx]] * value;
                }
            }
            let lse = log_sum_exp(&scores);
            total_ce += lse - scores[label];
            for c in 0..n_classes {
                let residual =
                    (scores[c] - lse).exp() - if c == label { 1.0 } else { 0.0 };
                grad_b[c] += residual;
                for (idx, value) in row.iter() {
                    grad_w[[c, idx]] += residual * value;
                }
            }
        }

        grad_w.mapv_inplace(|g| g / n);
        grad_b.mapv_inplace(|g| g / n);
        grad_w.scaled_add(l2, &self.weights);
        let penalty = 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        (total_ce / n + penalty, grad_w, grad_b)
    }

    /// The training objective at the current parameters.
    pub fn loss(&self, features: &[FeatureVector], labels: &[usize], l2: f64) -> Result<f64> {
        validate_dataset(features, labels, self.n_features(), self.n_classes())?;
        Ok(self.loss_and_gradient(features, labels, l2).0)
    }

    /// The objective's gradient, flattened in `flat_params` order.
    pub fn gradient(
        &self,
        features: &[FeatureVector],
        labels: &[usize],
        l2: f64,
    ) -> Result<Vec<f64>> {
        validate_dataset(features, labels, self.n_features(), self.n_classes())?;
        let (_, grad_w, grad_b) = self.loss_and_gradient(features, labels, l2);
        let mut flat: Vec<f64> = grad_w.iter().copied().collect();
        flat.extend(grad_b.iter());
        Ok(flat)
    }

    /// All parameters as one vector: the weight matrix row by row (one class
    /// per row), then the biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat: Vec<f64> = self.weights.iter().copied().collect();
        flat.extend(self.bias.iter());
        flat
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.n_classes() * self.n_features() + self.n_classes();
        if params.len() != expected {
            return Err(Error::Dimension { expected, actual: params.len() });
        }
        let split = self.n_classes() * self.n_features();
        for (w, &p) in self.weights.iter_mut().zip(&params[..split]) {
            *w = p;
        }
        for (b, &p) in self.bias.iter_mut().zip(&params[split..]) {
            *b = p;
        }
        Ok(())
    }

    pub(crate) fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub(crate) fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub(crate) fn from_parts(weights: Array2<f64>, bias: Array1<f64>) -> LogisticRegression {
        LogisticRegression { weights, bias, converged_at: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{finite_difference_gradient, max_relative_error};
    use proptest::prelude::*;

    fn dense(values: &[f64]) -> FeatureVector {
        FeatureVector {
            pairs: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    fn toy_dataset() -> (Vec<FeatureVector>, Vec<usize>) {
        let features = vec![
            dense(&[1.0, 0.0, 2.0, 0.0]),
            dense(&[0.0, 1.0, 0.0, 1.0]),
            dense(&[2.0, 2.0, 0.0, 0.0]),
            dense(&[0.0, 0.0, 1.0, 3.0]),
            dense(&[1.0, 1.0, 1.0, 1.0]),
            dense(&[0.0, 2.0, 0.0, 1.0]),
        ];
        let labels = vec![0, 1, 2, 1, 0, 2];
        (features, labels)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (features, labels) = toy_dataset();
        let mut model = LogisticRegression::from_parts(
            Array2::zeros((3, 4)),
            Array1::zeros(3),
        );
        // Deterministic non-trivial parameters: gradients at zero hide sign
        // errors because every softmax is uniform there.
        let params: Vec<f64> = (0..15).map(|i| ((i as f64) * 0.7).sin() * 0.4).collect();
        model.set_flat_params(&params).unwrap();

        let l2 = 0.3;
        let analytic = model.gradient(&features, &labels, l2).unwrap();
        let numeric = finite_difference_gradient(
            |p| {
                let mut probe = model.clone();
                probe.set_flat_params(p).unwrap();
                probe.loss(&features, &labels, l2).unwrap()
            },
            &params,
        );
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn gradient_is_zero_exactly_where_loss_is_flat() {
        // One row per class with identical features: by symmetry the optimum
        // leaves all classes uniform, so at zero parameters (uniform softmax)
        // the unregularized gradient vanishes.
        let features = vec![dense(&[1.0, 1.0]), dense(&[1.0, 1.0])];
        let labels = vec![0, 1];
        let model =
            LogisticRegression::from_parts(Array2::zeros((2, 2)), Array1::zeros(2));
        let grad = model.gradient(&features, &labels, 0.0).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-12), "{grad:?}");
    }

    #[test]
    fn zero_parameters_predict_uniform() {
        let model =
            LogisticRegression::from_parts(Array2::zeros((4, 3)), Array1::zeros(4));
        let probs = model.predict_proba(&dense(&[1.0, 2.0, 3.0])).unwrap();
        for p in probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let features = vec![
            dense(&[1.0, 0.0]),
            dense(&[2.0, 0.0]),
            dense(&[0.0, 1.0]),
            dense(&[0.0, 2.0]),
        ];
        let labels = vec![0, 0, 1, 1];
        let options = GdOptions { learning_rate: 0.5, l2: 0.0, epochs: 2000 };
        let model =
            LogisticRegression::fit(&features, &labels, 2, 2, options).unwrap();
        for (row, &label) in features.iter().zip(&labels) {
            let probs = model.predict_proba(row).unwrap();
            assert!(probs[label] > 0.9, "row {row:?}: {probs:?}");
        }
    }

    #[test]
    fn small_steps_never_increase_the_loss() {
        let (features, labels) = toy_dataset();
        let zero =
            LogisticRegression::from_parts(Array2::zeros((3, 4)), Array1::zeros(3));
        let initial = zero.loss(&features, &labels, 0.01).unwrap();
        let options = GdOptions { learning_rate: 0.01, l2: 0.01, epochs: 50 };
        let model =
            LogisticRegression::fit(&features, &labels, 4, 3, options).unwrap();
        let trained = model.loss(&features, &labels, 0.01).unwrap();
        assert!(trained <= initial + 1e-12, "{trained} > {initial}");
    }

    #[test]
    fn flat_convergence_stops_early() {
        // Symmetric data keeps the gradient at zero, so the second epoch sees
        // no improvement and stops with epochs to spare.
        let features = vec![dense(&[1.0]), dense(&[1.0])];
        let labels = vec![0, 1];
        let options = GdOptions { learning_rate: 0.1, l2: 0.0, epochs: 500 };
        let model = LogisticRegression::fit(&features, &labels, 1, 2, options).unwrap();
        let at = model.converged_at().expect("should converge");
        assert!(at < 10, "converged at {at}");
    }

    #[test]
    fn runaway_learning_rate_reports_divergence() {
        // The step must overflow the L2 term in a single epoch: a merely
        // huge-but-finite loss would trip the "no improvement" stop instead.
        let (features, labels) = toy_dataset();
        let options = GdOptions { learning_rate: 1e200, l2: 1.0, epochs: 200 };
        let err = LogisticRegression::fit(&features, &labels, 4, 3, options)
            .expect_err("should diverge");
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn overshooting_stops_at_the_pre_overshoot_parameters() {
        // A large finite step makes the loss worse; the convergence rule
        // treats that as "no further improvement" and keeps the last update.
        let (features, labels) = toy_dataset();
        let options = GdOptions { learning_rate: 1e6, l2: 0.1, epochs: 200 };
        let model = LogisticRegression::fit(&features, &labels, 4, 3, options).unwrap();
        assert_eq!(model.converged_at(), Some(1));
    }

    #[test]
    fn fit_is_deterministic() {
        let (features, labels) = toy_dataset();
        let options = GdOptions { learning_rate: 0.1, l2: 0.05, epochs: 40 };
        let a = LogisticRegression::fit(&features, &labels, 4, 3, options).unwrap();
        let b = LogisticRegression::fit(&features, &labels, 4, 3, options).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let features = vec![dense(&[1.0])];
        let ok = GdOptions { learning_rate: 0.1, l2: 0.0, epochs: 10 };
        assert!(LogisticRegression::fit(&[], &[], 1, 2, ok).is_err());
        assert!(LogisticRegression::fit(
            &features,
            &[0],
            1,
            2,
            GdOptions { learning_rate: 0.0, ..ok }
        )
        .is_err());
        assert!(LogisticRegression::fit(
            &features,
            &[0],
            1,
            2,
            GdOptions { l2: -1.0, ..ok }
        )
        .is_err());
        assert!(LogisticRegression::fit(&features, &[7], 1, 2, ok).is_err());

        let mut model =
            LogisticRegression::from_parts(Array2::zeros((2, 1)), Array1::zeros(2));
        assert!(matches!(
            model.set_flat_params(&[0.0; 3]),
            Err(Error::Dimension { expected: 4, actual: 3 })
        ));
        assert!(matches!(
            model.predict_proba(&FeatureVector { pairs: vec![(5, 1.0)] }),
            Err(Error::Dimension { .. })
        ));
    }

    proptest! {
        #[test]
        fn probabilities_are_a_distribution(
            raw_params in proptest::collection::vec(-3.0f64..3.0, 8),
            raw_row in proptest::collection::vec(0u8..5, 3),
        ) {
            let mut model = LogisticRegression::from_parts(
                Array2::zeros((2, 3)),
                Array1::zeros(2),
            );
            model.set_flat_params(&raw_params).unwrap();
            let row: Vec<f64> = raw_row.into_iter().map(f64::from).collect();
            let probs = model.predict_proba(&dense(&row)).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        }

        #[test]
        fn gradient_matches_finite_differences_everywhere(
            raw_params in proptest::collection::vec(-2.0f64..2.0, 8),
        ) {
            let features = vec![dense(&[1.0, 0.0, 2.0]), dense(&[0.0, 3.0, 1.0])];
            let labels = vec![0, 1];
            let mut model = LogisticRegression::from_parts(
                Array2::zeros((2, 3)),
                Array1::zeros(2),
            );
            model.set_flat_params(&raw_params).unwrap();
            let analytic = model.gradient(&features, &labels, 0.1).unwrap();
            let numeric = finite_difference_gradient(
                |p| {
                    let mut probe = model.clone();
                    probe.set_flat_params(p).unwrap();
                    probe.loss(&features, &labels, 0.1).unwrap()
                },
                &raw_params,
            );
            prop_assert!(max_relative_error(&analytic, &numeric) < 1e-5);
        }
    }
}
