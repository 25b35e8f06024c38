use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Contrastive loss `-ln(pos / (pos + sum(negs)))` over positive scores.
///
/// Returns the loss and its gradient with respect to `[pos, negs...]`.
pub fn infonce_loss(pos: f64, negs: &[f64]) -> Result<(f64, Vec<f64>)> {
    if !(pos > 0.0) || negs.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::contract("InfoNCE scores must be positive"));
    }
    let total = pos + negs.iter().sum::<f64>();
    let loss = total.ln() - pos.ln();
    let mut grad = Vec::with_capacity(negs.len() + 1);
    grad.push(1.0 / total - 1.0 / pos);
    grad.extend(negs.iter().map(|_| 1.0 / total));
    Ok((loss, grad))
}

/// Squared error and its derivative with respect to `pred`.
pub fn mse_loss(pred: f64, target: f64) -> (f64, f64) {
    let d = pred - target;
    (d * d, 2.0 * d)
}

/// Softmax probabilities; ties in the input give exactly equal outputs.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against class `target`, with the
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::contract(format!(
            "target class {target} out of {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((lse - logits[target], grad))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const H: f64 = 1e-6;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn infonce_examples() {
        let (l, _) = infonce_loss(0.5, &[0.5, 0.5]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        let (l, _) = infonce_loss(0.8, &[0.1, 0.1]).unwrap();
        assert!((l - 0.223_143_551_314_209_7).abs() < 1e-12);
        assert!(infonce_loss(0.0, &[0.5]).is_err());
        assert!(infonce_loss(0.5, &[-0.1]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(0.6, 0.6), (0.0, 0.0));
        assert_eq!(mse_loss(1.0, 0.0), (1.0, 2.0));
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, -3.0, 700.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn infonce_gradient_matches_central_differences(
            pos in 0.05f64..1.0,
            negs in prop::collection::vec(0.05f64..1.0, 1..5),
        ) {
            let (_, grad) = infonce_loss(pos, &negs).unwrap();
            let mut point = vec![pos];
            point.extend(&negs);
            for i in 0..point.len() {
                let mut up = point.clone();
                let mut down = point.clone();
                up[i] += H;
                down[i] -= H;
                let fu = infonce_loss(up[0], &up[1..]).unwrap().0;
                let fd = infonce_loss(down[0], &down[1..]).unwrap().0;
                let numeric = (fu - fd) / (2.0 * H);
                prop_assert!(rel_err(grad[i], numeric) < 1e-4, "{} vs {}", grad[i], numeric);
            }
        }

        #[test]
        fn infonce_is_nonnegative(pos in 1e-6f64..1.0, negs in prop::collection::vec(1e-6f64..1.0, 0..6)) {
            prop_assert!(infonce_loss(pos, &negs).unwrap().0 >= 0.0);
        }

        #[test]
        fn batch_mse_gradient_matches_central_differences(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..50),
        ) {
            let n = pairs.len() as f64;
            let batch = |preds: &[f64]| -> f64 {
                preds.iter().zip(&pairs).map(|(&p, &(_, t))| mse_loss(p, t).0).sum::<f64>() / n
            };
            let preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            for i in 0..preds.len() {
                let analytic = mse_loss(preds[i], pairs[i].1).1 / n;
                let mut up = preds.clone();
                let mut down = preds.clone();
                up[i] += H;
                down[i] -= H;
                let numeric = (batch(&up) - batch(&down)) / (2.0 * H);
                prop_assert!(rel_err(analytic, numeric) < 1e-4, "{} vs {}", analytic, numeric);
            }
        }

        #[test]
        fn cross_entropy_gradient_matches_central_differences(
            logits in prop::collection::vec(-3.0f64..3.0, 2..8),
            pick in 0usize..8,
        ) {
            let target = pick % logits.len();
            let (_, grad) = softmax_cross_entropy(&logits, target).unwrap();
            for i in 0..logits.len() {
                let mut up = logits.clone();
                let mut down = logits.clone();
                up[i] += H;
                down[i] -= H;
                let numeric = (softmax_cross_entropy(&up, target).unwrap().0
                    - softmax_cross_entropy(&down, target).unwrap().0) / (2.0 * H);
                prop_assert!(rel_err(grad[i], numeric) < 1e-4);
            }
        }
    }
}
