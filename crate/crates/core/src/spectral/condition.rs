use nalgebra::{DMatrix, DVector};

use super::matrix::one_norm;
use super::SymmetricMatrix;

const MAX_HAGER_STEPS: usize = 5;

/// 1-norm condition estimate `‖P‖₁ · est(‖P⁻¹‖₁)`.
///
/// `‖P⁻¹‖₁` is estimated from a handful of LU solves (Hager's method with
/// Higham's alternating-sign safeguard), so the result is a lower bound on the
/// exact value that is usually tight. Singular matrices return `f64::INFINITY`.
pub fn cond_estimate(p: &SymmetricMatrix) -> f64 {
    let a = p.as_matrix();
    let norm = one_norm(a);
    if norm == 0.0 {
        return f64::INFINITY;
    }
    match inverse_one_norm_estimate(a) {
        Some(inv) if inv.is_finite() => {
            let k = norm * inv;
            if k.is_finite() {
                k
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    }
}

fn inverse_one_norm_estimate(a: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let lu = a.clone().lu();
    // A is symmetric, so solves with Aᵀ reuse the same factorization.
    let solve = |b: &DVector<f64>| -> Option<DVector<f64>> {
        let y = lu.solve(b)?;
        y.iter().all(|v| v.is_finite()).then_some(y)
    };

    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0_f64;
    for step in 0..MAX_HAGER_STEPS {
        let y = solve(&x)?;
        let y_norm = y.lp_norm(1);
        if step > 0 && y_norm <= est {
            break;
        }
        est = y_norm;
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = solve(&xi)?;
        let (j, z_max) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.abs()))
            .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if step > 0 && z_max <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }

    if n > 1 {
        let b = DVector::from_fn(n, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + i as f64 / (n - 1) as f64)
        });
        let alt = 2.0 * solve(&b)?.lp_norm(1) / (3.0 * n as f64);
        est = est.max(alt);
    }
    Some(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(cond_estimate(&SymmetricMatrix::identity(5)), 1.0);
        let d = SymmetricMatrix::from_diagonal(&[1.0, 10.0]).unwrap();
        assert!((cond_estimate(&d) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn singular_is_infinite() {
        let d = SymmetricMatrix::from_diagonal(&[0.0, 1.0]).unwrap();
        assert_eq!(cond_estimate(&d), f64::INFINITY);
        assert_eq!(cond_estimate(&SymmetricMatrix::zeros(3)), f64::INFINITY);
    }

    #[test]
    fn random_spd_within_factor_five_of_exact() {
        let mut rng = crate::rng::keyed(3, 1);
        for trial in 0..20 {
            let g = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
            let spd = &g * g.transpose() + DMatrix::identity(8, 8) * 1e-3 * (trial + 1) as f64;
            let p = SymmetricMatrix::new(spd.clone()).unwrap();
            let exact = one_norm(&spd) * one_norm(&spd.try_inverse().unwrap());
            let est = cond_estimate(&p);
            assert!(est <= exact * (1.0 + 1e-9), "trial {trial}: {est} > {exact}");
            assert!(est >= exact / 5.0, "trial {trial}: {est} vs {exact}");
        }
    }
}
