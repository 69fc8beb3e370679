//! Classification objectives and their gradients with respect to logits.
//!
//! All softmax-family losses here share one form,
//!
//! ```text
//! loss = log( Σ_j w_j · exp(log n_j + z_j) ) − (log n_y + z_y),   w_y = 1
//! ```
//!
//! with `w_j = 1` and `n_j = 1` for plain cross-entropy, `w_j = 1` for the
//! balanced softmax, and `w_j = λ_s` on target/own-neighbor pairs for the
//! neighbor-silencing loss. The gradient is `p_j − [j = y]` where `p` is the
//! weighted softmax of the log-count-shifted logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassId, ClassStats, LabelSpace};

/// Loss value and gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    BalancedSoftmax,
    NeighborSilencing { lambda_s: f64 },
}

fn check_logits(z: &[f64], y: ClassId, num_classes: usize) -> Result<()> {
    if z.len() != num_classes {
        return Err(Error::data(format!(
            "{} logits for {} classes",
            z.len(),
            num_classes
        )));
    }
    if y >= num_classes {
        return Err(Error::data(format!("true class {y} outside 0..{num_classes}")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite logit"));
    }
    Ok(())
}

pub(crate) fn check_lambda(lambda_s: f64) -> Result<()> {
    if !lambda_s.is_finite() || lambda_s < 0.0 {
        return Err(Error::config(format!("lambda_s must be finite and >= 0, got {lambda_s}")));
    }
    if lambda_s > 1.0 {
        log::warn!("lambda_s = {lambda_s} > 1 amplifies neighbor pairs instead of silencing them");
    }
    Ok(())
}

/// Shared kernel. `offset(j)` is `log n_j` (or 0) and `weight(j)` is `w_j`;
/// `weight(y)` is never consulted. Inputs are assumed validated.
fn weighted_softmax_loss(
    z: &[f64],
    y: ClassId,
    offset: impl Fn(usize) -> f64,
    weight: impl Fn(usize) -> f64,
    grad: &mut [f64],
) -> f64 {
    let shifted_y = z[y] + offset(y);
    let mut max = shifted_y;
    for (j, &zj) in z.iter().enumerate() {
        if j != y && weight(j) > 0.0 {
            max = max.max(zj + offset(j));
        }
    }
    let mut sum = 0.0;
    for (j, &zj) in z.iter().enumerate() {
        let w = if j == y { 1.0 } else { weight(j) };
        let e = if w > 0.0 { w * (zj + offset(j) - max).exp() } else { 0.0 };
        grad[j] = e;
        sum += e;
    }
    for g in grad.iter_mut() {
        *g /= sum;
    }
    grad[y] -= 1.0;
    sum.ln() + max - shifted_y
}

/// Standard softmax cross-entropy.
pub fn cross_entropy(z: &[f64], y: ClassId) -> Result<LossGrad> {
    check_logits(z, y, z.len())?;
    let mut grad = vec![0.0; z.len()];
    let loss = weighted_softmax_loss(z, y, |_| 0.0, |_| 1.0, &mut grad);
    Ok(LossGrad { loss, grad })
}

/// Balanced softmax cross-entropy: softmax over `z_j + log n_j`.
pub fn bal_ce(z: &[f64], y: ClassId, stats: &ClassStats) -> Result<LossGrad> {
    check_logits(z, y, stats.len())?;
    let log_n = stats.log_counts();
    let mut grad = vec![0.0; z.len()];
    let loss = weighted_softmax_loss(z, y, |j| log_n[j], |_| 1.0, &mut grad);
    Ok(LossGrad { loss, grad })
}

/// Balanced softmax over the merged target + auxiliary label space. The
/// auxiliary classes simply extend the normalizer, so this is `bal_ce` on
/// `L + K` logits.
pub fn bal_ce_merged(z: &[f64], y: ClassId, stats: &ClassStats) -> Result<LossGrad> {
    bal_ce(z, y, stats)
}

/// Pair weight for the neighbor-silencing loss: `λ_s` when one class is
/// auxiliary and was queried from the other, else 1.
pub fn silence_weight(space: &LabelSpace, a: ClassId, b: ClassId, lambda_s: f64) -> f64 {
    if space.are_neighbors(a, b) {
        lambda_s
    } else {
        1.0
    }
}

/// Neighbor-silencing balanced softmax loss over `L + K` classes.
pub fn ns_ce(
    z: &[f64],
    y: ClassId,
    stats: &ClassStats,
    space: &LabelSpace,
    lambda_s: f64,
) -> Result<LossGrad> {
    check_lambda(lambda_s)?;
    if stats.len() != space.num_classes() {
        return Err(Error::data(format!(
            "class statistics cover {} classes, label space has {}",
            stats.len(),
            space.num_classes()
        )));
    }
    check_logits(z, y, stats.len())?;
    let log_n = stats.log_counts();
    let mut grad = vec![0.0; z.len()];
    let loss = weighted_softmax_loss(
        z,
        y,
        |j| log_n[j],
        |j| silence_weight(space, y, j, lambda_s),
        &mut grad,
    );
    Ok(LossGrad { loss, grad })
}

/// A loss bound to its class statistics, with log counts precomputed for
/// repeated evaluation inside a training loop.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    kind: LossKind,
    log_counts: Vec<f64>,
    space: &'a LabelSpace,
}

impl<'a> Objective<'a> {
    pub fn new(kind: LossKind, stats: &ClassStats, space: &'a LabelSpace) -> Result<Self> {
        if stats.len() != space.num_classes() {
            return Err(Error::data(format!(
                "class statistics cover {} classes, label space has {}",
                stats.len(),
                space.num_classes()
            )));
        }
        let log_counts = match kind {
            LossKind::CrossEntropy => vec![0.0; stats.len()],
            LossKind::BalancedSoftmax => stats.log_counts(),
            LossKind::NeighborSilencing { lambda_s } => {
                check_lambda(lambda_s)?;
                stats.log_counts()
            }
        };
        Ok(Self {
            kind,
            log_counts,
            space,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn num_classes(&self) -> usize {
        self.log_counts.len()
    }

    /// Writes the logit gradient into `grad` and returns the loss.
    pub fn eval_into(&self, z: &[f64], y: ClassId, grad: &mut [f64]) -> Result<f64> {
        check_logits(z, y, self.num_classes())?;
        let log_n = &self.log_counts;
        let loss = match self.kind {
            LossKind::CrossEntropy | LossKind::BalancedSoftmax => {
                weighted_softmax_loss(z, y, |j| log_n[j], |_| 1.0, grad)
            }
            LossKind::NeighborSilencing { lambda_s } => weighted_softmax_loss(
                z,
                y,
                |j| log_n[j],
                |j| silence_weight(self.space, y, j, lambda_s),
                grad,
            ),
        };
        Ok(loss)
    }

    pub fn eval(&self, z: &[f64], y: ClassId) -> Result<LossGrad> {
        let mut grad = vec![0.0; z.len()];
        let loss = self.eval_into(z, y, &mut grad)?;
        Ok(LossGrad { loss, grad })
    }
}

/// Mean loss over a batch plus per-sample logit gradients.
pub fn batch_loss(batch: &[(Vec<f64>, ClassId)], objective: &Objective<'_>) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::data("empty batch"));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for (z, y) in batch {
        let lg = objective.eval(z, *y)?;
        total += lg.loss;
        grads.push(lg.grad);
    }
    Ok((total / batch.len() as f64, grads))
}

/// Per-class error rates summed over classes, and their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancedError {
    pub sum: f64,
    pub mean: f64,
}

pub fn balanced_error(predictions: &[ClassId], labels: &[ClassId], num_classes: usize) -> Result<BalancedError> {
    if predictions.len() != labels.len() {
        return Err(Error::data(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut total = vec![0u64; num_classes];
    let mut wrong = vec![0u64; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if y >= num_classes {
            return Err(Error::data(format!("label {y} outside 0..{num_classes}")));
        }
        total[y] += 1;
        if p != y {
            wrong[y] += 1;
        }
    }
    if let Some(c) = total.iter().position(|&n| n == 0) {
        return Err(Error::data(format!("class {c} has no test samples")));
    }
    let sum: f64 = wrong
        .iter()
        .zip(&total)
        .map(|(&w, &n)| w as f64 / n as f64)
        .sum();
    Ok(BalancedError {
        sum,
        mean: sum / num_classes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn stats(c: &[u64]) -> ClassStats {
        ClassStats::new(c.to_vec()).unwrap()
    }

    #[test]
    fn bal_ce_uniform_is_ln2() {
        let out = bal_ce(&[0.0, 0.0], 0, &stats(&[1, 1])).unwrap();
        assert!(close(out.loss, std::f64::consts::LN_2, 1e-15));
        let ce = cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert_eq!(out, ce);
    }

    #[test]
    fn bal_ce_counts_shift() {
        let out = bal_ce(&[0.0, 0.0], 1, &stats(&[3, 1])).unwrap();
        assert!(close(out.loss, 4f64.ln(), 1e-15));
        assert!(close(out.grad[0], 0.75, 1e-15));
        assert!(close(out.grad[1], -0.75, 1e-15));
    }

    #[test]
    fn merged_two_class() {
        let out = bal_ce_merged(&[0.0, 0.0], 0, &stats(&[2, 2])).unwrap();
        assert!(close(out.loss, std::f64::consts::LN_2, 1e-15));
    }

    #[test]
    fn ns_ce_silencing() {
        let space = LabelSpace::new(1, vec![(1, 0)]).unwrap();
        let s = stats(&[2, 2]);
        let full = ns_ce(&[0.0, 0.0], 0, &s, &space, 0.0).unwrap();
        assert_eq!(full.loss, 0.0);
        assert_eq!(full.grad, vec![0.0, 0.0]);
        let part = ns_ce(&[0.0, 0.0], 0, &s, &space, 0.1).unwrap();
        assert!(close(part.loss, 0.095_310_179_804_324_9, 1e-12));
        let one = ns_ce(&[0.0, 0.0], 0, &s, &space, 1.0).unwrap();
        assert_eq!(one, bal_ce_merged(&[0.0, 0.0], 0, &s).unwrap());
    }

    #[test]
    fn ns_ce_aux_true_class_symmetric() {
        // aux sample: its own target is silenced, other targets are not
        let space = LabelSpace::new(2, vec![(2, 0)]).unwrap();
        let s = stats(&[1, 1, 1]);
        let out = ns_ce(&[0.0, 0.0, 0.0], 2, &s, &space, 0.0).unwrap();
        assert!(close(out.loss, 2f64.ln(), 1e-15));
        assert_eq!(out.grad[0], 0.0);
    }

    #[test]
    fn ns_ce_rejects_bad_inputs() {
        let space = LabelSpace::new(1, vec![(1, 0)]).unwrap();
        let s = stats(&[2, 2]);
        assert!(ns_ce(&[0.0, f64::INFINITY], 0, &s, &space, 0.1).is_err());
        assert!(ns_ce(&[0.0, 0.0], 2, &s, &space, 0.1).is_err());
        assert!(ns_ce(&[0.0, 0.0], 0, &s, &space, -0.1).is_err());
        assert!(ns_ce(&[0.0, 0.0], 0, &s, &space, 2.0).is_ok());
        assert!(ns_ce(&[0.0, 0.0], 0, &stats(&[1, 1, 1]), &space, 0.1).is_err());
    }

    #[test]
    fn extreme_offsets_stay_finite() {
        let out = bal_ce(&[800.0, -800.0, 0.0], 1, &stats(&[500, 1, 250])).unwrap();
        assert!(out.loss.is_finite() && out.loss > 1000.0);
        assert!(out.grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn batch_examples() {
        let space = LabelSpace::targets_only(2).unwrap();
        let s = stats(&[3, 1]);
        let obj = Objective::new(LossKind::BalancedSoftmax, &s, &space).unwrap();
        let single = (vec![0.3, -0.2], 1);
        let one = batch_loss(std::slice::from_ref(&single), &obj).unwrap();
        let direct = bal_ce(&single.0, 1, &s).unwrap();
        assert_eq!(one.0, direct.loss);
        assert_eq!(one.1[0], direct.grad);
        let two = batch_loss(&[single.clone(), single.clone()], &obj).unwrap();
        assert_eq!(two.0, one.0);
        assert!(batch_loss(&[], &obj).is_err());

        // losses 0.2 and 0.4 via CE on two classes: z = [log(1/p - 1), 0] with target 1
        let ce_space = LabelSpace::targets_only(2).unwrap();
        let ce = Objective::new(LossKind::CrossEntropy, &stats(&[1, 1]), &ce_space).unwrap();
        let logit_for = |loss: f64| (loss.exp() - 1.0).ln();
        let b = vec![(vec![logit_for(0.2), 0.0], 1), (vec![logit_for(0.4), 0.0], 1)];
        assert!(close(batch_loss(&b, &ce).unwrap().0, 0.3, 1e-12));
    }

    #[test]
    fn balanced_error_examples() {
        let be = balanced_error(&[0, 1, 1, 2], &[0, 1, 1, 2], 3).unwrap();
        assert_eq!((be.sum, be.mean), (0.0, 0.0));
        let be = balanced_error(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!((be.sum, be.mean), (1.0, 0.5));
        let be = balanced_error(&[0, 0, 1, 1, 0, 0], &[0, 0, 1, 1, 2, 2], 3).unwrap();
        assert_eq!(be.sum, 1.0);
        // per-class error {0, 0.5, 1}
        let be = balanced_error(&[0, 0, 1, 0, 0, 0], &[0, 0, 1, 1, 2, 2], 3).unwrap();
        assert_eq!((be.sum, be.mean), (1.5, 0.5));
        assert!(balanced_error(&[0, 0], &[0, 0], 2).is_err());
        assert!(balanced_error(&[0], &[0, 1], 2).is_err());
    }
}
