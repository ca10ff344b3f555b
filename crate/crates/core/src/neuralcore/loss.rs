//! Weighted cross-entropy losses with their gradients.
//!
//! Logits are clamped to `[-clamp, clamp]` before evaluation. The returned
//! gradient is taken at the clamped point and passed straight through, so
//! saturated logits still receive a training signal.

pub const DEFAULT_LOGIT_CLAMP: f64 = 30.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `weight * BCE(sigmoid(logit), target)` and its derivative w.r.t. the logit.
pub fn sigmoid_bce(logit: f64, target: f64, weight: f64, clamp: f64) -> (f64, f64) {
    let z = logit.clamp(-clamp, clamp);
    // log(1 + e^z) - t z, written to avoid overflow
    let loss = z.max(0.0) - target * z + (-z.abs()).exp().ln_1p();
    (weight * loss, weight * (sigmoid(z) - target))
}

/// `class_weights[target] * -log softmax(logits)[target]` and its gradient.
pub fn softmax_ce(logits: &[f64], target: usize, class_weights: &[f64], clamp: f64) -> (f64, Vec<f64>) {
    debug_assert!(target < logits.len());
    let z: Vec<f64> = logits.iter().map(|v| v.clamp(-clamp, clamp)).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let w = class_weights.get(target).copied().unwrap_or(1.0);
    let probs = softmax(&z);
    let grad = probs
        .iter()
        .enumerate()
        .map(|(k, p)| w * (p - if k == target { 1.0 } else { 0.0 }))
        .collect();
    (w * (lse - z[target]), grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn bce_at_zero_is_ln2() {
        let (l, g) = sigmoid_bce(0.0, 1.0, 1.0, DEFAULT_LOGIT_CLAMP);
        assert!((l - LN_2).abs() < 1e-15);
        assert!((g + 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_softmax_is_ln2() {
        let (l, _) = softmax_ce(&[0.3, 0.3], 1, &[1.0, 1.0], DEFAULT_LOGIT_CLAMP);
        assert!((l - LN_2).abs() < 1e-15);
    }

    #[test]
    fn weight_scales_loss_and_grad() {
        let (l1, g1) = softmax_ce(&[1.2, -0.7], 0, &[0.8, 3.0], DEFAULT_LOGIT_CLAMP);
        let (l2, g2) = softmax_ce(&[1.2, -0.7], 0, &[1.6, 3.0], DEFAULT_LOGIT_CLAMP);
        assert_eq!(l2, 2.0 * l1);
        assert_eq!(g2, g1.iter().map(|g| 2.0 * g).collect::<Vec<_>>());
        let (b1, d1) = sigmoid_bce(0.4, 0.0, 0.5, DEFAULT_LOGIT_CLAMP);
        let (b2, d2) = sigmoid_bce(0.4, 0.0, 1.0, DEFAULT_LOGIT_CLAMP);
        assert_eq!(b2, 2.0 * b1);
        assert_eq!(d2, 2.0 * d1);
    }

    #[test]
    fn two_class_softmax_matches_sigmoid_on_logit_difference() {
        for &(a, b) in &[(0.3, -1.1), (2.0, 2.0), (-4.0, 5.5)] {
            for t in 0..2 {
                let (ls, gs) = softmax_ce(&[a, b], t, &[1.0, 1.0], DEFAULT_LOGIT_CLAMP);
                let (lb, gb) = sigmoid_bce(b - a, t as f64, 1.0, DEFAULT_LOGIT_CLAMP);
                assert!((ls - lb).abs() < 1e-12);
                assert!((gs[1] - gb).abs() < 1e-12);
                assert!((gs[0] + gb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let (l, g) = softmax_ce(&[1e6, -1e6], 1, &[1.0, 1.0], DEFAULT_LOGIT_CLAMP);
        assert!(l.is_finite() && g.iter().all(|v| v.is_finite()));
        assert!((l - 60.0).abs() < 1e-9);
        let (l, g) = sigmoid_bce(-1e9, 1.0, 1.0, DEFAULT_LOGIT_CLAMP);
        assert!(l.is_finite() && g.is_finite());
    }
}
