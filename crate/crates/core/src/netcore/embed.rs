use crate::error::{Error, Result};

const FREQ_BASE: f64 = 10_000.0;

/// Interleaved sinusoidal features `[sin(w_0 p), cos(w_0 p), sin(w_1 p), ...]`
/// with `w_k = 10000^(-k / (dim/2))`, so `w_0 = 1`.
///
/// `dim` must be even; the result has Euclidean norm `sqrt(dim / 2)`.
pub fn sinusoidal_embedding(position: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let w = FREQ_BASE.powf(-(k as f64) / half as f64);
        let (s, c) = (w * position).sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Embedding of a diffusion timestep `t` in `1..=horizon`.
pub fn time_embedding(t: usize, dim: usize, horizon: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::param(format!("time embedding dim {dim} must be even and positive")));
    }
    if t == 0 || t > horizon {
        return Err(Error::Index { index: t, max: horizon });
    }
    Ok(sinusoidal_embedding(t as f64, dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dim_definition() {
        assert_eq!(time_embedding(1, 2, 10).unwrap(), vec![1f64.sin(), 1f64.cos()]);
    }

    #[test]
    fn rejects_odd_dim_and_zero_t() {
        assert!(matches!(time_embedding(3, 5, 10), Err(Error::Parameter(_))));
        assert!(matches!(time_embedding(0, 4, 10), Err(Error::Index { .. })));
        assert!(time_embedding(11, 4, 10).is_err());
    }

    #[test]
    fn pairwise_distinct_over_horizon() {
        let embs: Vec<_> = (1..=200).map(|t| time_embedding(t, 32, 200).unwrap()).collect();
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                let linf = embs[i]
                    .iter()
                    .zip(&embs[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(linf > 1e-6, "t={} and t={} collide", i + 1, j + 1);
            }
        }
    }

    #[test]
    fn norm_bound() {
        for t in 1..=200 {
            let e = time_embedding(t, 16, 200).unwrap();
            let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= (8.0f64).sqrt() * 2f64.sqrt() + 1e-12);
            assert!((n - 8f64.sqrt()).abs() < 1e-12);
        }
    }
}
