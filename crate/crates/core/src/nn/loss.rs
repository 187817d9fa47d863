use super::{check_len, Result};

/// Negative-side slope of every LeakyReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Probabilities entering a cross-entropy are clamped to
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn leaky_relu_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|x| x / sum).collect()
}

/// Pulls `dL/dp` back through `p = softmax(z)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, gi)| pi * (gi - inner)).collect()
}

/// Summed binary cross-entropy `Σ -y log p - (1 - y) log(1 - p)`.
pub fn binary_ce(y: &[f64], p: &[f64]) -> Result<f64> {
    check_len(y.len(), p.len())?;
    Ok(y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let pc = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -yi * pc.ln() - (1.0 - yi) * (1.0 - pc).ln()
        })
        .sum())
}

/// `dL/dp` of [`binary_ce`]; zero wherever the clamp is active.
pub fn binary_ce_grad(y: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    check_len(y.len(), p.len())?;
    Ok(y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            if pi <= PROB_CLAMP || pi >= 1.0 - PROB_CLAMP {
                0.0
            } else {
                -yi / pi + (1.0 - yi) / (1.0 - pi)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(3.0), 3.0);
        assert_eq!(leaky_relu(-1.0), -0.2);
        assert_eq!(leaky_relu(0.0), 0.0);
    }

    #[test]
    fn softmax_values() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[2.0, 0.0]);
        let e2 = 2f64.exp();
        assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.8808).abs() < 1e-4 && (p[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_values() {
        let near = binary_ce(&[1.0], &[1.0 - 1e-7]).unwrap();
        assert!((near - 1e-7).abs() < 1e-12);
        let half = binary_ce(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((half - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!(binary_ce(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn cross_entropy_minimized_at_label() {
        // Plain gradient descent on a free probability vector through logits.
        let y = [1.0, 0.0, 1.0];
        let mut z = [0.3, -0.2, -1.0];
        for _ in 0..5000 {
            let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
            let g = binary_ce_grad(&y, &p).unwrap();
            for i in 0..3 {
                z[i] -= 0.5 * g[i] * p[i] * (1.0 - p[i]);
            }
        }
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        for (pi, yi) in p.iter().zip(y) {
            assert!((pi - yi).abs() < 1e-2, "{p:?}");
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_shifted_distribution(
            z in proptest::collection::vec(-30.0f64..30.0, 1..12),
            c in -50.0f64..50.0,
        ) {
            let p = softmax(&z);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
