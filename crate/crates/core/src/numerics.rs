//! Internal numerical kernels: compressed matvec, an adaptive Dormand–Prince
//! integrator and a dense matrix exponential.

use ndarray::Array2;
use ndarray_linalg::Inverse;

use crate::error::{Error, Result};
use crate::hilbert::{C64, ZERO};

/// Row-compressed copy of a dense matrix for repeated matvecs.
#[derive(Clone, Debug)]
pub(crate) struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl Csr {
    pub(crate) fn from_dense(m: &Array2<C64>) -> Self {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in m.rows() {
            for (j, &z) in row.iter().enumerate() {
                if z != ZERO {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.n
    }

    pub(crate) fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct OdeTolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        OdeTolerance {
            rtol: 1e-10,
            atol: 1e-13,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate the autonomous system y' = f(y) through the increasing output
/// times `ts` (all ≥ 0, starting from y(0) = y0), returning y at each time.
///
/// `f(y, dy)` writes the derivative into `dy`.
pub(crate) fn dopri5<F>(
    f: F,
    y0: &[C64],
    ts: &[f64],
    tol: OdeTolerance,
) -> Result<Vec<Vec<C64>>>
where
    F: Fn(&[C64], &mut [C64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![ZERO; n]).collect();
    let mut tmp = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    f(&y, &mut k[0]);
    let mut h = initial_step(&y, &k[0], tol);
    let mut out = Vec::with_capacity(ts.len());

    for &t_out in ts {
        while t < t_out {
            let mut h_try = h.min(t_out - t);
            let last = h_try >= t_out - t;
            loop {
                if h_try < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t, h: h_try });
                }
                stage(&y, &k, &mut tmp, h_try, &[(0, A21)]);
                f(&tmp, &mut k[1]);
                stage(&y, &k, &mut tmp, h_try, &[(0, A31), (1, A32)]);
                f(&tmp, &mut k[2]);
                stage(&y, &k, &mut tmp, h_try, &[(0, A41), (1, A42), (2, A43)]);
                f(&tmp, &mut k[3]);
                stage(
                    &y,
                    &k,
                    &mut tmp,
                    h_try,
                    &[(0, A51), (1, A52), (2, A53), (3, A54)],
                );
                f(&tmp, &mut k[4]);
                stage(
                    &y,
                    &k,
                    &mut tmp,
                    h_try,
                    &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)],
                );
                f(&tmp, &mut k[5]);
                stage(
                    &y,
                    &k,
                    &mut y_new,
                    h_try,
                    &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)],
                );
                f(&y_new, &mut k[6]);

                let mut err2 = 0.0;
                for i in 0..n {
                    let e = h_try
                        * (E1 * k[0][i]
                            + E3 * k[2][i]
                            + E4 * k[3][i]
                            + E5 * k[4][i]
                            + E6 * k[5][i]
                            + E7 * k[6][i]);
                    let sc = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
                    err2 += (e.norm() / sc).powi(2);
                }
                let err = (err2 / n.max(1) as f64).sqrt();
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if err <= 1.0 {
                    t = if last { t_out } else { t + h_try };
                    std::mem::swap(&mut y, &mut y_new);
                    k.swap(0, 6);
                    // keep the unclipped step for the next segment
                    if !last || fac < 1.0 {
                        h = h_try * fac;
                    }
                    break;
                }
                h_try *= fac;
                h = h_try;
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn stage(y: &[C64], k: &[Vec<C64>], out: &mut [C64], h: f64, coef: &[(usize, f64)]) {
    for i in 0..y.len() {
        let mut acc = ZERO;
        for &(j, a) in coef {
            acc += a * k[j][i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn initial_step(y: &[C64], dy: &[C64], tol: OdeTolerance) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = tol.atol + tol.rtol * yi.norm();
        d0 += (yi.norm() / sc).powi(2);
        d1 += (fi.norm() / sc).powi(2);
    }
    let n = y.len().max(1) as f64;
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

// Padé-13 coefficients for the matrix exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// exp(A) by scaling and squaring with a degree-13 Padé approximant.
pub(crate) fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    let norm1 = a.norm_l1_cols();
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(s));
    let id: Array2<C64> = Array2::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = &PADE13;
    let sc = |m: &Array2<C64>, c: f64| m.mapv(|z| z * c);
    let u_inner = &sc(&a6, b[13]) + &sc(&a4, b[11]) + &sc(&a2, b[9]);
    let u = a.dot(
        &(&a6.dot(&u_inner) + &sc(&a6, b[7]) + &sc(&a4, b[5]) + &sc(&a2, b[3]) + &sc(&id, b[1])),
    );
    let v_inner = &sc(&a6, b[12]) + &sc(&a4, b[10]) + &sc(&a2, b[8]);
    let v = &a6.dot(&v_inner) + &sc(&a6, b[6]) + &sc(&a4, b[4]) + &sc(&a2, b[2]) + &sc(&id, b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.inv()?.dot(&p);
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

trait L1Cols {
    fn norm_l1_cols(&self) -> f64;
}

impl L1Cols for Array2<C64> {
    fn norm_l1_cols(&self) -> f64 {
        self.columns()
            .into_iter()
            .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csr_matches_dense() {
        let m = array![
            [C64::new(1.0, 0.0), ZERO, C64::new(0.0, 2.0)],
            [ZERO, ZERO, ZERO],
            [C64::new(-1.0, 1.0), C64::new(3.0, 0.0), ZERO]
        ];
        let x = array![C64::new(1.0, 1.0), C64::new(2.0, 0.0), C64::new(0.0, -1.0)];
        let csr = Csr::from_dense(&m);
        let mut y = vec![ZERO; 3];
        csr.matvec_into(x.as_slice().unwrap(), &mut y);
        let dense = m.dot(&x);
        for i in 0..3 {
            assert!((y[i] - dense[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn dopri_exponential_decay_and_rotation() {
        let lam = C64::new(-0.7, 3.0);
        let ts = [0.0, 0.5, 1.0, 4.0];
        let ys = dopri5(
            |y, dy| dy[0] = lam * y[0],
            &[C64::new(1.0, 0.0)],
            &ts,
            OdeTolerance::default(),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            let exact = (lam * *t).exp();
            assert!((y[0] - exact).norm() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn expm_matches_known_forms() {
        // rotation generator
        let th = 2.3;
        let a = array![[ZERO, C64::new(-th, 0.0)], [C64::new(th, 0.0), ZERO]];
        let e = expm(&a).unwrap();
        assert!((e[[0, 0]].re - th.cos()).abs() < 1e-13);
        assert!((e[[1, 0]].re - th.sin()).abs() < 1e-13);
        // large-norm diagonal exercises squaring
        let d = array![[C64::new(-30.0, 5.0), ZERO], [ZERO, C64::new(2.0, -40.0)]];
        let e = expm(&d).unwrap();
        assert!((e[[0, 0]] - C64::new(-30.0, 5.0).exp()).norm() < 1e-24);
        let rel = (e[[1, 1]] - C64::new(2.0, -40.0).exp()).norm() / 2f64.exp();
        assert!(rel < 1e-12);
    }
}
