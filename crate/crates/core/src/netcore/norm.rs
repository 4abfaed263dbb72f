use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stabilizer added to the population variance before the square root.
pub const LN_EPS: f64 = 1e-5;

/// Per-expert scale and shift applied after standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub expert_id: usize,
}

impl ExpertNormParams {
    pub fn identity(dim: usize, expert_id: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            expert_id,
        }
    }
}

/// Standardizes `h` and applies the expert's affine map:
/// `gamma ⊙ (h - mean(h)) / sqrt(var(h) + eps) + beta`.
pub fn ea_layernorm(h: &[f64], p: &ExpertNormParams) -> Result<Vec<f64>> {
    if p.gamma.len() != p.beta.len() {
        return Err(Error::dim("expert beta length", p.gamma.len(), p.beta.len()));
    }
    if h.len() != p.gamma.len() {
        return Err(Error::dim("expert norm width", p.gamma.len(), h.len()));
    }
    if h.len() < 2 {
        return Err(Error::param("layer norm needs at least two features"));
    }
    let (std, _) = standardize(h);
    Ok(std
        .iter()
        .zip(p.gamma.iter().zip(&p.beta))
        .map(|(s, (g, b))| g * s + b)
        .collect())
}

/// Returns the standardized vector and `1 / sigma`.
pub(crate) fn standardize(h: &[f64]) -> (Vec<f64>, f64) {
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    (h.iter().map(|v| (v - mean) * inv).collect(), inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_maps_to_zero() {
        let y = ea_layernorm(&[1.0; 4], &ExpertNormParams::identity(4, 0)).unwrap();
        assert_eq!(y, vec![0.0; 4]);
    }

    #[test]
    fn output_moments() {
        // Spread wide enough that eps barely perturbs the scale.
        let h: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 * 0.3 - 12.0).collect();
        let y = ea_layernorm(&h, &ExpertNormParams::identity(h.len(), 0)).unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-6, "std {std}");
    }

    #[test]
    fn affine_law() {
        let h = [0.3, -1.2, 4.0, 2.2, 0.0];
        let base = ea_layernorm(&h, &ExpertNormParams::identity(5, 0)).unwrap();
        let p = ExpertNormParams {
            gamma: vec![2.0; 5],
            beta: vec![3.0; 5],
            expert_id: 1,
        };
        let y = ea_layernorm(&h, &p).unwrap();
        for (a, b) in y.iter().zip(&base) {
            assert!((a - (2.0 * b + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch() {
        assert!(matches!(
            ea_layernorm(&[1.0, 2.0, 3.0], &ExpertNormParams::identity(4, 0)),
            Err(Error::Dimension { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positive_scalar_gamma_keeps_argmax(h in proptest::collection::vec(-50.0f64..50.0, 2..40), g in 0.01f64..10.0, b in -5.0f64..5.0) {
                let p = ExpertNormParams { gamma: vec![g; h.len()], beta: vec![b; h.len()], expert_id: 0 };
                let y = ea_layernorm(&h, &p).unwrap();
                let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best });
                prop_assert_eq!(argmax(&h), argmax(&y));
            }
        }
    }
}
