//! Dense complex linear algebra: LU with partial pivoting, determinants
//! carried in log scale, adjugates, and a Hermitian eigensolver.
//!
//! Determinants of resonant blocks underflow f64 after one induction step
//! (products of thousands of factors, many of size δ ≪ 1), so `LogDet`
//! keeps ln|det| and the phase separately; both accumulate stably during
//! elimination.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type CMat = Array2<Complex64>;

/// Determinant as (ln|det|, arg det), immune to under/overflow.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogDet {
    pub ln_abs: f64,
    pub phase: f64,
}

impl LogDet {
    pub fn log10_abs(&self) -> f64 {
        self.ln_abs / std::f64::consts::LN_10
    }

    /// Linear-scale value; may under/overflow, callers must expect that.
    pub fn to_complex(&self) -> Complex64 {
        Complex64::from_polar(self.ln_abs.exp(), self.phase)
    }

    /// Ratio of two determinants as a complex number, computed in logs.
    pub fn ratio(&self, other: &LogDet) -> Complex64 {
        Complex64::from_polar((self.ln_abs - other.ln_abs).exp(), self.phase - other.phase)
    }
}

fn wrap_phase(p: f64) -> f64 {
    let mut p = p.rem_euclid(std::f64::consts::TAU);
    if p > std::f64::consts::PI {
        p -= std::f64::consts::TAU;
    }
    p
}

/// LU factorization with partial pivoting, kept packed in one matrix.
pub struct LuFactors {
    lu: CMat,
    perm: Vec<usize>,
    swaps: usize,
    pub smallest_pivot: f64,
}

// Absolute floor below which a pivot is treated as an exact singularity.
// Green's functions near resonances are legitimately ill-conditioned, so
// this fires only on genuine rank collapse, not large condition numbers.
const PIVOT_FLOOR: f64 = 1e-280;

pub fn lu_factor(m: &CMat) -> Result<LuFactors> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "LU needs a square matrix");
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut swaps = 0usize;
    let mut smallest = f64::INFINITY;
    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_abs = lu[[k, k]].norm();
        for i in k + 1..n {
            let a = lu[[i, k]].norm();
            if a > pivot_abs {
                pivot_abs = a;
                pivot_row = i;
            }
        }
        if pivot_abs < PIVOT_FLOOR {
            return Err(Error::NearSingular { pivot: pivot_abs });
        }
        smallest = smallest.min(pivot_abs);
        if pivot_row != k {
            for j in 0..n {
                let tmp = lu[[k, j]];
                lu[[k, j]] = lu[[pivot_row, j]];
                lu[[pivot_row, j]] = tmp;
            }
            perm.swap(k, pivot_row);
            swaps += 1;
        }
        let pivot = lu[[k, k]];
        for i in k + 1..n {
            let factor = lu[[i, k]] / pivot;
            lu[[i, k]] = factor;
            if factor != Complex64::ZERO {
                for j in k + 1..n {
                    let u = lu[[k, j]];
                    lu[[i, j]] -= factor * u;
                }
            }
        }
    }
    Ok(LuFactors { lu, perm, swaps, smallest_pivot: if n == 0 { 1.0 } else { smallest } })
}

impl LuFactors {
    pub fn n(&self) -> usize {
        self.lu.nrows()
    }

    pub fn log_det(&self) -> LogDet {
        let mut ln_abs = 0.0;
        let mut phase = if self.swaps % 2 == 1 { std::f64::consts::PI } else { 0.0 };
        for k in 0..self.n() {
            let u = self.lu[[k, k]];
            ln_abs += u.norm().ln();
            phase += u.arg();
        }
        LogDet { ln_abs, phase: wrap_phase(phase) }
    }

    /// Solve M x = b in place of the returned vector.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc / self.lu[[i, i]];
        }
        x
    }

    pub fn inverse(&self) -> CMat {
        let n = self.n();
        let mut inv = Array2::from_elem((n, n), Complex64::ZERO);
        let mut unit = vec![Complex64::ZERO; n];
        for col in 0..n {
            unit[col] = Complex64::ONE;
            let x = self.solve(&unit);
            unit[col] = Complex64::ZERO;
            for row in 0..n {
                inv[[row, col]] = x[row];
            }
        }
        inv
    }
}

/// Max-row-sum norm, used for cheap condition estimates.
pub fn inf_norm(m: &CMat) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[[i, j]].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Dense inverse with determinant and condition estimate.
pub fn invert(m: &CMat) -> Result<(CMat, LogDet, f64)> {
    let f = lu_factor(m)?;
    let inv = f.inverse();
    let cond = inf_norm(m) * inf_norm(&inv);
    Ok((inv, f.log_det(), cond.max(1.0)))
}

pub fn det_log(m: &CMat) -> Result<LogDet> {
    Ok(lu_factor(m)?.log_det())
}

/// Adjugate S* with M·S* = det(M)·I, by cofactor determinants.
/// Capped: the cost is n^2 LU factorizations of (n-1)-minors.
pub fn adjugate(m: &CMat, cap: usize) -> Result<CMat> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    if n > cap {
        return Err(Error::AdjugateCap { size: n, cap });
    }
    if n == 1 {
        return Ok(Array2::from_elem((1, 1), Complex64::ONE));
    }
    let mut adj = Array2::from_elem((n, n), Complex64::ZERO);
    let mut minor = Array2::from_elem((n - 1, n - 1), Complex64::ZERO);
    for i in 0..n {
        for j in 0..n {
            let mut r = 0;
            for ii in 0..n {
                if ii == i {
                    continue;
                }
                let mut c = 0;
                for jj in 0..n {
                    if jj == j {
                        continue;
                    }
                    minor[[r, c]] = m[[ii, jj]];
                    c += 1;
                }
                r += 1;
            }
            let det = minor_det(&minor);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            // adj = transpose of the cofactor matrix
            adj[[j, i]] = sign * det;
        }
    }
    Ok(adj)
}

/// Linear-scale determinant of a small matrix; zero pivot means det 0.
fn minor_det(m: &CMat) -> Complex64 {
    match lu_factor(m) {
        Ok(f) => f.log_det().to_complex(),
        Err(_) => Complex64::ZERO,
    }
}

/// Full spectral decomposition of a Hermitian matrix.
///
/// Householder reduction to complex tridiagonal form, a diagonal phase
/// similarity to a real symmetric tridiagonal, then implicit-shift QL with
/// the unitary accumulated, columns sorted by ascending eigenvalue.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return Ok((Vec::new(), Array2::from_elem((0, 0), Complex64::ZERO)));
    }

    let mut work = a.clone();
    // v accumulates the full unitary: Householder product, then phases,
    // then QL rotations.
    let mut v: CMat = Array2::from_elem((n, n), Complex64::ZERO);
    for i in 0..n {
        v[[i, i]] = Complex64::ONE;
    }

    // Householder tridiagonalization: zero column k below row k+1.
    for k in 0..n.saturating_sub(2) {
        let mut norm2 = 0.0;
        for i in k + 1..n {
            norm2 += work[[i, k]].norm_sqr();
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = work[[k + 1, k]];
        let alpha = if x0 == Complex64::ZERO {
            Complex64::new(-norm, 0.0)
        } else {
            -(x0 / x0.norm()) * norm
        };
        // u = x - alpha e1
        let mut u = vec![Complex64::ZERO; n];
        for i in k + 1..n {
            u[i] = work[[i, k]];
        }
        u[k + 1] -= alpha;
        let unorm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        if unorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / unorm2;
        // work <- H work H with H = I - beta u u^*
        // p = beta * work * u
        let mut p = vec![Complex64::ZERO; n];
        for i in 0..n {
            let mut acc = Complex64::ZERO;
            for j in k + 1..n {
                acc += work[[i, j]] * u[j];
            }
            p[i] = beta * acc;
        }
        // K = (beta/2) * (u^* p)
        let updot: Complex64 = u.iter().zip(&p).map(|(ui, pi)| ui.conj() * pi).sum();
        let half_beta_dot = 0.5 * beta * updot;
        // q = p - (beta/2)(u^* p) u
        let q: Vec<Complex64> =
            p.iter().zip(&u).map(|(pi, ui)| pi - half_beta_dot * ui).collect();
        // work <- work - q u^* - u q^*
        for i in 0..n {
            for j in 0..n {
                let delta = q[i] * u[j].conj() + u[i] * q[j].conj();
                work[[i, j]] -= delta;
            }
        }
        // v <- v H  (accumulate from the right)
        for r in 0..n {
            let mut acc = Complex64::ZERO;
            for j in k + 1..n {
                acc += v[[r, j]] * u[j];
            }
            let acc = beta * acc;
            for j in k + 1..n {
                let uc = u[j].conj();
                v[[r, j]] -= acc * uc;
            }
        }
    }

    // Phase similarity making the subdiagonal real and nonnegative.
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n]; // e[i] couples i and i+1; e[n-1] unused
    let mut phases = vec![Complex64::ONE; n];
    for i in 0..n {
        d[i] = work[[i, i]].re;
    }
    for i in 0..n - 1 {
        let f = work[[i + 1, i]];
        let fabs = f.norm();
        e[i] = fabs;
        phases[i + 1] = if fabs == 0.0 { phases[i] } else { phases[i] * (f / fabs) };
    }
    for r in 0..n {
        for j in 0..n {
            let ph = phases[j];
            v[[r, j]] *= ph;
        }
    }

    // Implicit-shift QL on the real tridiagonal, rotations applied to v.
    let eps = f64::EPSILON;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::EigenNoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let denom = g + if g >= 0.0 { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / denom;
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut i = m;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = v[[k, i + 1]].re;
                    let fi = v[[k, i + 1]].im;
                    let vr = v[[k, i]];
                    v[[k, i + 1]] = Complex64::new(s * vr.re + c * f, s * vr.im + c * fi);
                    v[[k, i]] = Complex64::new(c * vr.re - s * f, c * vr.im - s * fi);
                }
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    // Sort ascending, permuting eigenvector columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vecs = Array2::from_elem((n, n), Complex64::ZERO);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, new_col]] = v[[row, old_col]];
        }
    }
    Ok((vals, vecs))
}

/// Singular values via the Hermitian eigenproblem of A^† A.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    let n = a.nrows();
    let m = a.ncols();
    let mut ata = Array2::from_elem((m, m), Complex64::ZERO);
    for i in 0..m {
        for j in 0..m {
            let mut acc = Complex64::ZERO;
            for k in 0..n {
                acc += a[[k, i]].conj() * a[[k, j]];
            }
            ata[[i, j]] = acc;
        }
    }
    let (vals, _) = eigh(&ata)?;
    Ok(vals.iter().map(|&x| x.max(0.0).sqrt()).collect())
}
