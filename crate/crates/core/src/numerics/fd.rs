use crate::error::{GcfError, Result};

/// Central-difference gradient `(f(p + h e_i) - f(p - h e_i)) / 2h` for every coordinate.
pub fn finite_difference_grad<F>(mut f: F, p: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(GcfError::InvalidConfig(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut x = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(GcfError::NonFiniteObjective { coordinate: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
///
/// The floor keeps coordinates whose true gradient is ~0 from dominating
/// with pure round-off noise.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_difference_grad(|_| 3.5, &[1.0, -2.0, 0.3], 1e-3).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn linear_is_exact() {
        let a = [0.5, -2.0, 4.0];
        for h in [1e-1, 1e-3, 0.5] {
            let g =
                finite_difference_grad(|p| p.iter().zip(&a).map(|(x, y)| x * y).sum(), &[1.0, 1.0, 1.0], h).unwrap();
            for (gi, ai) in g.iter().zip(&a) {
                assert!((gi - ai).abs() < 1e-12, "{gi} vs {ai}");
            }
        }
    }

    #[test]
    fn squared_norm() {
        let g = finite_difference_grad(|p| p.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn reports_non_finite_coordinate() {
        let err = finite_difference_grad(|p| if p[1] > 1.0 { f64::NAN } else { 0.0 }, &[0.0, 1.0], 0.1).unwrap_err();
        assert!(matches!(err, GcfError::NonFiniteObjective { coordinate: 1 }));
    }

    #[test]
    fn rejects_bad_step() {
        assert!(finite_difference_grad(|_| 0.0, &[1.0], 0.0).is_err());
    }
}
