//! Matrix exponentials: scaling-and-squaring Padé(13) for small dense
//! matrices and a truncated Taylor `exp(tB)v` for matrix-free operators.

use crate::error::{LabError, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

type C = Complex64;
pub type CMatrix = DMatrix<C>;

const THETA13: f64 = 5.371_920_351_148_152;
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

pub fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// e^A for a square complex matrix.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LabError::Input("expm needs a square matrix".into()));
    }
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(LabError::Numeric("expm input is not finite".into()));
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * C::new(0.5f64.powi(s), 0.0);
    let id = CMatrix::identity(n, n);
    let r = |x: f64| C::new(x, 0.0);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let inner_u = &a6 * (&a6 * r(b[13]) + &a4 * r(b[11]) + &a2 * r(b[9]));
    let u = &a * (inner_u + &a6 * r(b[7]) + &a4 * r(b[5]) + &a2 * r(b[3]) + &id * r(b[1]));
    let inner_v = &a6 * (&a6 * r(b[12]) + &a4 * r(b[10]) + &a2 * r(b[8]));
    let v = inner_v + &a6 * r(b[6]) + &a4 * r(b[4]) + &a2 * r(b[2]) + &id * r(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut out = q
        .lu()
        .solve(&p)
        .ok_or_else(|| LabError::Numeric("singular Padé denominator".into()))?;
    for _ in 0..s {
        out = &out * &out;
    }
    Ok(out)
}

/// exp(tB)v for an operator given by `apply(x, y)` (y ← Bx) with
/// ‖B‖ ≤ `norm_bound`. Substeps keep ‖tB‖ per step ≤ 4; each step sums the
/// Taylor series until two consecutive terms are negligible.
pub fn expmv<F>(mut apply: F, norm_bound: f64, t: f64, v: &[C], tol: f64) -> Result<Vec<C>>
where
    F: FnMut(&[C], &mut [C]),
{
    if !(norm_bound >= 0.0 && norm_bound.is_finite() && t.is_finite()) {
        return Err(LabError::Numeric("expmv needs a finite norm bound and time".into()));
    }
    let scale = (t.abs() * norm_bound).max(0.0);
    let steps = ((scale / 4.0).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let n = v.len();
    let mut x = v.to_vec();
    let mut term = vec![C::new(0.0, 0.0); n];
    let mut next = vec![C::new(0.0, 0.0); n];
    let nrm = |z: &[C]| z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for _ in 0..steps {
        term.copy_from_slice(&x);
        let mut sum = x.clone();
        let mut prev_small = false;
        let mut converged = false;
        for k in 1..=80 {
            apply(&term, &mut next);
            let f = C::new(dt / k as f64, 0.0);
            for (tn, nx) in term.iter_mut().zip(&next) {
                *tn = nx * f;
            }
            for (s, tn) in sum.iter_mut().zip(&term) {
                *s += tn;
            }
            let small = nrm(&term) <= tol * nrm(&sum).max(f64::MIN_POSITIVE);
            if small && prev_small {
                converged = true;
                break;
            }
            prev_small = small;
        }
        if !converged {
            return Err(LabError::Convergence("Taylor series in expmv did not settle".into()));
        }
        if sum.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(LabError::Numeric("expmv produced non-finite values".into()));
        }
        x = sum;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn diagonal_matrix() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-30.0, 0.0), c(0.5, 2.0), c(0.0, 0.0)]));
        let e = expm(&a).unwrap();
        for i in 0..3 {
            let want = a[(i, i)].exp();
            assert!((e[(i, i)] - want).norm() <= 1e-13 * want.norm().max(1e-300) + 1e-300, "{i}");
        }
    }

    #[test]
    fn nilpotent_block() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let e = expm(&a).unwrap();
        let want = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!((e - want).norm() < 1e-15);
    }

    #[test]
    fn rotation_generator() {
        let th = 7.3;
        let a = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(-th, 0.0), c(th, 0.0), c(0.0, 0.0)]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - c(th.cos(), 0.0)).norm() < 1e-13);
        assert!((e[(1, 0)] - c(th.sin(), 0.0)).norm() < 1e-13);
    }

    #[test]
    fn expmv_matches_expm() {
        let n = 6;
        let a = CMatrix::from_fn(n, n, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0, (i as f64 - j as f64) * 0.3));
        let v: Vec<C> = (0..n).map(|i| c(i as f64, 1.0)).collect();
        let t = 1.7;
        let dense = expm(&(&a * c(t, 0.0))).unwrap() * nalgebra::DVector::from_vec(v.clone());
        let bound = one_norm(&a).max(one_norm(&a.transpose()));
        let mv = expmv(
            |x, y| {
                let r = &a * nalgebra::DVector::from_column_slice(x);
                y.copy_from_slice(r.as_slice());
            },
            bound,
            t,
            &v,
            1e-15,
        )
        .unwrap();
        for i in 0..n {
            assert!((dense[i] - mv[i]).norm() < 1e-10 * dense.norm(), "{i}");
        }
    }
}
