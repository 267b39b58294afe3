//! Concrete model assembly: cosine-type potentials with certified
//! distortion constants, power-law Toeplitz hopping, Diophantine
//! frequency certificates, the finite-volume operator T_Λ(E;θ), and the
//! Aubry-dual construction.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lattice::{boxed, Site, SiteSet};
use crate::opalgebra::LatticeOperator;
use crate::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Distance to the nearest integer.
pub fn torus_norm(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// |z|_T = sqrt(|Re z|_T^2 + (Im z)^2) on C/Z.
pub fn torus_norm_c(z: Complex64) -> f64 {
    (torus_norm(z.re).powi(2) + z.im.powi(2)).sqrt()
}

/// Potential classes: all analytic, 1-periodic, even, cosine-dominated.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum PotentialKind {
    /// v(z) = cos 2πz.
    Cosine,
    /// v(z) = cos 2πz + λ_2 cos² 2πz + ... + λ_n cos^n 2πz,
    /// constrained by 2|λ_2| + ... + n|λ_n| < 1.
    PolyCosine { lambda: Vec<f64> },
    /// v(z) = cos 2πz + ε_f f(z) with f(z) = Σ_m c_m cos 2πmz.
    CosinePlusEven { eps_f: f64, f_coeffs: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Half-width of the analyticity strip D_R.
    pub r: f64,
    /// Distortion constants; certified empirically when absent.
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
}

impl PotentialSpec {
    pub fn cosine(r: f64) -> Self {
        PotentialSpec { kind: PotentialKind::Cosine, r, kappa1: None, kappa2: None }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let c = (TAU * z).cos();
        match &self.kind {
            PotentialKind::Cosine => c,
            PotentialKind::PolyCosine { lambda } => {
                let mut acc = c;
                let mut power = c;
                for l in lambda {
                    power *= c;
                    acc += l * power;
                }
                acc
            }
            PotentialKind::CosinePlusEven { eps_f, f_coeffs } => {
                let mut acc = c;
                for (i, cm) in f_coeffs.iter().enumerate() {
                    let m = (i + 1) as f64;
                    acc += eps_f * cm * (TAU * m * z).cos();
                }
                acc
            }
        }
    }

    pub fn deriv(&self, z: Complex64) -> Complex64 {
        let s = (TAU * z).sin();
        let c = (TAU * z).cos();
        match &self.kind {
            PotentialKind::Cosine => -TAU * s,
            PotentialKind::PolyCosine { lambda } => {
                let mut factor = Complex64::ONE;
                let mut power = Complex64::ONE;
                for (i, l) in lambda.iter().enumerate() {
                    let k = (i + 2) as f64;
                    power *= c;
                    factor += l * k * power;
                }
                -TAU * s * factor
            }
            PotentialKind::CosinePlusEven { eps_f, f_coeffs } => {
                let mut acc = -TAU * s;
                for (i, cm) in f_coeffs.iter().enumerate() {
                    let m = (i + 1) as f64;
                    acc -= eps_f * cm * TAU * m * (TAU * m * z).sin();
                }
                acc
            }
        }
    }

    /// sup |v| over the strip D_R by grid scan.
    pub fn sup_on_strip(&self) -> f64 {
        let density = 256;
        let mut sup: f64 = 0.0;
        let ny = (self.r * density as f64).ceil() as i64;
        for ix in 0..density {
            let x = ix as f64 / density as f64;
            for iy in -ny..=ny {
                let y = (iy as f64 / density as f64).clamp(-self.r, self.r);
                sup = sup.max(self.eval(Complex64::new(x, y)).norm());
            }
        }
        sup
    }

    /// Structural constraint of the polynomial class.
    pub fn validate(&self) -> Result<()> {
        if let PotentialKind::PolyCosine { lambda } = &self.kind {
            let budget: f64 =
                lambda.iter().enumerate().map(|(i, l)| (i + 2) as f64 * l.abs()).sum();
            if budget >= 1.0 {
                return Err(Error::Config(format!(
                    "polynomial cosine coefficients too large: sum k|lambda_k| = {budget} >= 1"
                )));
            }
        }
        if let (Some(k1), Some(k2)) = (self.kappa1, self.kappa2) {
            if !(k1 > 0.0 && k1 <= k2) {
                return Err(Error::Config(format!(
                    "distortion constants must satisfy 0 < kappa1 <= kappa2, got ({k1}, {k2})"
                )));
            }
        }
        Ok(())
    }
}

/// Empirical distortion constants of v over D_R:
/// min and max of |v(z1)−v(z2)| / (|z1−z2|_T |z1+z2|_T) over grid pairs,
/// with near-coincident (removable) pairs excluded by one grid cell.
pub fn certify_potential(spec: &PotentialSpec, grid_density: usize) -> Result<(f64, f64)> {
    assert!(grid_density >= 64, "certification grid too coarse");
    spec.validate()?;
    let cell = 1.0 / grid_density as f64;
    let mut points = Vec::new();
    let ny = (spec.r * grid_density as f64).ceil() as i64;
    for ix in 0..grid_density {
        let x = ix as f64 * cell;
        for iy in -ny..=ny {
            let y = (iy as f64 * cell).clamp(-spec.r, spec.r);
            points.push(Complex64::new(x, y));
        }
    }
    // Cap the pair count: stride-subsample the grid deterministically.
    let max_points = 1800usize;
    let stride = points.len().div_ceil(max_points).max(1);
    let points: Vec<Complex64> = points.into_iter().step_by(stride).collect();

    let mut kappa1 = f64::INFINITY;
    let mut kappa2: f64 = 0.0;
    for (i, &z1) in points.iter().enumerate() {
        let v1 = spec.eval(z1);
        for &z2 in &points[i + 1..] {
            let diff = torus_norm_c(z1 - z2);
            let sum = torus_norm_c(z1 + z2);
            if diff < cell || sum < cell {
                continue; // removable singularity of the ratio
            }
            let ratio = (v1 - spec.eval(z2)).norm() / (diff * sum);
            kappa1 = kappa1.min(ratio);
            kappa2 = kappa2.max(ratio);
        }
    }
    if !(kappa1 > 0.0 && kappa1.is_finite()) {
        return Err(Error::NotCosineType { kappa1 });
    }
    Ok((kappa1, kappa2))
}

/// Checks |n·ω|_T ≥ γ / |n|^τ for all 0 < |n| ≤ n_max, scanning shells of
/// increasing norm so the witness, if any, has minimal norm.
pub fn certify_diophantine(
    omega: &[f64],
    tau: f64,
    gamma: f64,
    n_max: i64,
) -> (bool, Option<Site>) {
    let d = omega.len();
    for r in 1..=n_max {
        let bound = gamma / (r as f64).powf(tau);
        let mut shell = shell_sites(d, r);
        // Descending lexicographic order puts the positive representative
        // of a ± pair first.
        shell.reverse();
        for n in shell {
            let dot: f64 = n.iter().zip(omega).map(|(&c, &w)| c as f64 * w).sum();
            if torus_norm(dot) < bound {
                return (false, Some(Site::from_ints(&n)));
            }
        }
    }
    (true, None)
}

/// All n with |n| = r exactly, ascending lexicographic.
fn shell_sites(d: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cursor = vec![-r; d];
    loop {
        if cursor.iter().map(|c| c.abs()).max().unwrap() == r {
            out.push(cursor.clone());
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] <= r {
                break;
            }
            cursor[axis] = -r;
        }
    }
}

/// Largest γ the scan certifies: min over 0 < |n| ≤ n_max of |n·ω|_T |n|^τ.
pub fn empirical_gamma(omega: &[f64], tau: f64, n_max: i64) -> f64 {
    let d = omega.len();
    let mut cursor = vec![-n_max; d];
    let mut best = f64::INFINITY;
    loop {
        if cursor.iter().any(|&c| c != 0) {
            let norm = cursor.iter().map(|c| c.abs()).max().unwrap() as f64;
            let dot: f64 = cursor.iter().zip(omega).map(|(&c, &w)| c as f64 * w).sum();
            best = best.min(torus_norm(dot) * norm.powf(tau));
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return best;
            }
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] <= n_max {
                break;
            }
            cursor[axis] = -n_max;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum HoppingKind {
    /// φ(n) = (1+|n|)^{−α_decay} for 0 < |n| ≤ radius.
    PowerLaw,
    /// φ(±e_i) = 1, zero elsewhere.
    Nearest,
    /// Unit amplitude on nearest neighbors, power-law envelope beyond.
    NearestPlusPowerLaw,
    /// Finite table of amplitudes.
    Table,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoppingSpec {
    pub kind: HoppingKind,
    pub alpha_decay: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Truncation radius of the hopping range.
    pub radius: i64,
    /// Explicit amplitudes keyed by integer offset (Table kind).
    pub table: BTreeMap<Vec<i64>, (f64, f64)>,
}

impl HoppingSpec {
    pub fn power_law(alpha_decay: f64, alpha0: f64, alpha1: f64, radius: i64) -> Self {
        HoppingSpec {
            kind: HoppingKind::PowerLaw,
            alpha_decay,
            alpha0,
            alpha1,
            radius,
            table: BTreeMap::new(),
        }
    }

    pub fn nearest(alpha0: f64, alpha1: f64) -> Self {
        HoppingSpec {
            kind: HoppingKind::Nearest,
            alpha_decay: 0.0,
            alpha0,
            alpha1,
            radius: 1,
            table: BTreeMap::new(),
        }
    }

    /// Amplitude φ at an integer offset. φ(0) = 0 and everything beyond
    /// the truncation radius is dropped.
    pub fn phi(&self, offset: &[i64]) -> Complex64 {
        let norm = offset.iter().map(|c| c.abs()).max().unwrap_or(0);
        if norm == 0 || norm > self.radius {
            return Complex64::ZERO;
        }
        let l1: i64 = offset.iter().map(|c| c.abs()).sum();
        match self.kind {
            HoppingKind::PowerLaw => {
                Complex64::new((1.0 + norm as f64).powf(-self.alpha_decay), 0.0)
            }
            HoppingKind::Nearest => {
                if l1 == 1 {
                    Complex64::ONE
                } else {
                    Complex64::ZERO
                }
            }
            HoppingKind::NearestPlusPowerLaw => {
                if l1 == 1 {
                    Complex64::ONE
                } else {
                    Complex64::new((1.0 + norm as f64).powf(-self.alpha_decay), 0.0)
                }
            }
            HoppingKind::Table => self
                .table
                .get(offset)
                .map(|&(re, im)| Complex64::new(re, im))
                .unwrap_or(Complex64::ZERO),
        }
    }

    /// Offset in twice units; odd coordinates (cross-coset pairs) carry no
    /// hopping.
    pub fn phi_twice(&self, offset_twice: &[i64]) -> Complex64 {
        if offset_twice.iter().any(|c| c % 2 != 0) {
            return Complex64::ZERO;
        }
        let ints: Vec<i64> = offset_twice.iter().map(|c| c / 2).collect();
        self.phi(&ints)
    }

    /// Smallest C with |φ(n)| ≤ C (1+|n|)^{−α_decay} on the table; the
    /// model envelope asks C ≤ 1 and violations are reported, not refused.
    pub fn envelope_constant(&self, d: usize) -> f64 {
        let mut c: f64 = 0.0;
        for offset in offsets_in_radius(d, self.radius) {
            let a = self.phi(&offset).norm();
            if a > 0.0 {
                let norm = offset.iter().map(|x| x.abs()).max().unwrap() as f64;
                c = c.max(a * (1.0 + norm).powf(self.alpha_decay));
            }
        }
        c
    }

    /// |W_φ|_α of the truncated Toeplitz operator: Σ |φ(n)|(1+|n|)^α, plus
    /// the analytic tail bound of the dropped power-law envelope
    /// (infinite when the envelope does not decay fast enough).
    pub fn w_norm(&self, alpha: f64, d: usize) -> (f64, f64) {
        let mut value = 0.0;
        for offset in offsets_in_radius(d, self.radius) {
            let a = self.phi(&offset).norm();
            if a > 0.0 {
                let norm = offset.iter().map(|x| x.abs()).max().unwrap() as f64;
                value += a * (1.0 + norm).powf(alpha);
            }
        }
        let tail = match self.kind {
            HoppingKind::Nearest | HoppingKind::Table => 0.0,
            _ => {
                let df = d as f64;
                let decay = self.alpha_decay - alpha;
                if decay > df {
                    // Σ_{r>R} shell(r) (1+r)^{−decay} ≤ 2d 3^{d−1} (1+R)^{d−decay}/(decay−d)
                    2.0 * df * 3f64.powf(df - 1.0) * (1.0 + self.radius as f64).powf(df - decay)
                        / (decay - df)
                } else {
                    f64::INFINITY
                }
            }
        };
        (value, tail)
    }

    /// φ(−n) = conj(φ(n)) so that W_φ is Hermitian.
    pub fn is_hermitian(&self, d: usize) -> bool {
        offsets_in_radius(d, self.radius).into_iter().all(|offset| {
            let neg: Vec<i64> = offset.iter().map(|c| -c).collect();
            (self.phi(&neg) - self.phi(&offset).conj()).norm() < 1e-15
        })
    }
}

fn offsets_in_radius(d: usize, radius: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cursor = vec![-radius; d];
    loop {
        if cursor.iter().any(|&c| c != 0) {
            out.push(cursor.clone());
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] <= radius {
                break;
            }
            cursor[axis] = -radius;
        }
    }
}

/// Everything a run needs to build T_Λ(E;θ).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub tau: f64,
    pub gamma: f64,
    pub omega: Vec<f64>,
    pub epsilon: f64,
    pub theta: f64,
    pub energy: f64,
    pub potential: PotentialSpec,
    pub hopping: HoppingSpec,
}

impl ModelConfig {
    /// Structural checks plus soft flags. Hard errors only for malformed
    /// data; exponent-range and envelope violations are reported as
    /// warnings so exploration runs can deliberately leave the regime.
    pub fn validate(&self, diophantine_cutoff: i64) -> Result<Vec<String>> {
        if self.omega.len() != self.d {
            return Err(Error::Config(format!(
                "omega has {} components for dimension {}",
                self.omega.len(),
                self.d
            )));
        }
        if self.tau <= self.d as f64 {
            return Err(Error::Config(format!(
                "Diophantine exponent tau = {} must exceed d = {}",
                self.tau, self.d
            )));
        }
        self.potential.validate()?;
        let mut warnings = Vec::new();
        let (ok, witness) =
            certify_diophantine(&self.omega, self.tau, self.gamma, diophantine_cutoff);
        if !ok {
            warnings.push(format!(
                "Diophantine certificate failed at n = {:?} (cutoff {})",
                witness.unwrap(),
                diophantine_cutoff
            ));
        }
        let h = &self.hopping;
        if !(self.d as f64) .lt(&h.alpha0) || !(h.alpha0 < self.tau) {
            warnings.push(format!(
                "alpha0 = {} outside (d, tau) = ({}, {})",
                h.alpha0, self.d, self.tau
            ));
        }
        if h.alpha1 <= 2200.0 * self.tau {
            warnings.push(format!(
                "alpha1 = {} below the asymptotic threshold 2200 tau = {}",
                h.alpha1,
                2200.0 * self.tau
            ));
        }
        let env = h.envelope_constant(self.d);
        if env > 1.0 + 1e-12 {
            warnings.push(format!(
                "hopping exceeds the power-law envelope by factor {env:.3}"
            ));
        }
        let (_, tail) = h.w_norm(h.alpha1 + h.alpha0, self.d);
        if !tail.is_finite() {
            warnings.push(
                "truncated |W|_{alpha1+alpha0} has a divergent envelope tail".to_string(),
            );
        }
        Ok(warnings)
    }

    /// Certified (κ1, κ2): user-supplied values win, otherwise a grid
    /// certification at default density.
    pub fn kappas(&self) -> Result<(f64, f64)> {
        match (self.potential.kappa1, self.potential.kappa2) {
            (Some(k1), Some(k2)) => Ok((k1, k2)),
            _ => certify_potential(&self.potential, 128),
        }
    }
}

/// T_Λ(E;θ) at the configured real phase.
pub fn assemble_t(lambda: &SiteSet, cfg: &ModelConfig) -> LatticeOperator {
    assemble_t_at(lambda, cfg, Complex64::new(cfg.theta, 0.0))
}

/// T with the diagonal sampled at a complex phase z: entries
/// v(z + n·ω) − E on the diagonal and ε φ(n−n') off it. Admits site sets
/// on a shifted lattice; hopping acts only within a coset.
pub fn assemble_t_at(lambda: &SiteSet, cfg: &ModelConfig, z: Complex64) -> LatticeOperator {
    let energy = Complex64::new(cfg.energy, 0.0);
    LatticeOperator::from_fn(lambda.clone(), lambda.clone(), |n, m| {
        if n == m {
            cfg.potential.eval(z + n.dot_omega(&cfg.omega)) - energy
        } else {
            cfg.epsilon * cfg.hopping.phi_twice(&diff_twice(n, m))
        }
    })
}

fn diff_twice(a: &Site, b: &Site) -> Vec<i64> {
    a.twice().iter().zip(b.twice()).map(|(x, y)| x - y).collect()
}

/// Root θ_0 of v(θ_0) = E inside the half strip D_{R/2}: Newton from the
/// arccos seed (pure cosine) or the best point of a range scan.
pub fn solve_theta0(cfg: &ModelConfig) -> Result<Complex64> {
    let spec = &cfg.potential;
    let energy = Complex64::new(cfg.energy, 0.0);
    let half = spec.r / 2.0;
    let tol = 1e-12 * (1.0 + cfg.energy.abs());

    let mut seed = if spec.kind == PotentialKind::Cosine {
        energy.acos() / TAU
    } else {
        // Range scan over D_{R/2}.
        let density = 256usize;
        let ny = (half * density as f64).ceil() as i64;
        let mut best = (f64::INFINITY, Complex64::ZERO);
        for ix in 0..density {
            let x = ix as f64 / density as f64;
            for iy in -ny..=ny {
                let y = (iy as f64 / density as f64).clamp(-half, half);
                let zc = Complex64::new(x, y);
                let miss = (spec.eval(zc) - energy).norm();
                if miss < best.0 {
                    best = (miss, zc);
                }
            }
        }
        best.1
    };
    // acos branches can land at negative imaginary part; either mirror
    // solves v(θ0)=E for even v, keep the principal one.
    for _ in 0..100 {
        let f = spec.eval(seed) - energy;
        if f.norm() < tol {
            break;
        }
        let df = spec.deriv(seed);
        if df.norm() < 1e-300 {
            // Stationary seed (E at a band edge): nudge off the critical point.
            seed += Complex64::new(1e-6, 1e-6);
            continue;
        }
        seed -= f / df;
    }
    let residual = (spec.eval(seed) - energy).norm();
    if residual >= tol {
        return Err(Error::EnergyOutOfRange { energy: cfg.energy, half_width: half });
    }
    // Canonical representative: real part in [0, 1).
    let mut theta0 = Complex64::new(seed.re.rem_euclid(1.0), seed.im);
    if theta0.im.abs() > half + 1e-9 {
        return Err(Error::EnergyOutOfRange { energy: cfg.energy, half_width: half });
    }
    // An even potential pairs roots ±θ_0; pick the one in [0, 1/2] when real.
    if theta0.im == 0.0 && theta0.re > 0.5 {
        theta0 = Complex64::new(1.0 - theta0.re, 0.0);
    }
    Ok(theta0)
}

/// Fourier data of the Aubry dual: coefficients v̂(m) for |m| ≤ band_cut
/// plus the dual potential u(x) = Σ_n φ(n) e^{2πi n·x}.
#[derive(Clone, Debug)]
pub struct DualModel {
    pub band_cut: i64,
    pub v_hat: BTreeMap<i64, Complex64>,
    pub epsilon: f64,
    pub omega: Vec<f64>,
    hopping: HoppingSpec,
    d: usize,
}

impl DualModel {
    /// u(x) over the hopping table.
    pub fn u(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for offset in offsets_in_radius(self.d, self.hopping.radius) {
            let amp = self.hopping.phi(&offset);
            if amp != Complex64::ZERO {
                let dot: f64 = offset.iter().zip(x).map(|(&n, &xi)| n as f64 * xi).sum();
                acc += amp * Complex64::from_polar(1.0, TAU * dot);
            }
        }
        acc
    }

    /// Dual operator H̃(x) − E on the 1-d box [−M, M]: Toeplitz part v̂
    /// plus the diagonal ε u(x + lω).
    pub fn assemble(&self, x: &[f64], m_radius: i64, energy: f64) -> LatticeOperator {
        let set = boxed(&Site::origin(1), m_radius);
        LatticeOperator::from_fn(set.clone(), set, |l, lp| {
            let diff = (l.twice()[0] - lp.twice()[0]) / 2;
            let mut entry = self.v_hat.get(&diff).copied().unwrap_or(Complex64::ZERO);
            if l == lp {
                let shifted: Vec<f64> = self
                    .omega
                    .iter()
                    .zip(x)
                    .map(|(&w, &xi)| xi + l.coord_f64(0) * w)
                    .collect();
                entry += self.epsilon * self.u(&shifted) - energy;
            }
            entry
        })
    }
}

/// Fourier coefficients of v by periodic trapezoid quadrature (exact for
/// trigonometric polynomials below the grid's Nyquist band), with a tail
/// check just above the cut.
pub fn aubry_dual(cfg: &ModelConfig, band_cut: i64) -> Result<DualModel> {
    assert!(band_cut >= 1);
    let grid = (8 * band_cut as usize).max(512);
    let samples: Vec<Complex64> = (0..grid)
        .map(|j| cfg.potential.eval(Complex64::new(j as f64 / grid as f64, 0.0)))
        .collect();
    let coeff = |m: i64| -> Complex64 {
        let mut acc = Complex64::ZERO;
        for (j, v) in samples.iter().enumerate() {
            let angle = -TAU * m as f64 * j as f64 / grid as f64;
            acc += v * Complex64::from_polar(1.0, angle);
        }
        acc / grid as f64
    };
    let mut tail: f64 = 0.0;
    for m in band_cut + 1..=band_cut + 4 {
        tail = tail.max(coeff(m).norm()).max(coeff(-m).norm());
    }
    if tail > 1e-12 {
        return Err(Error::BandCutTooSmall { band_cut, tail });
    }
    let mut v_hat = BTreeMap::new();
    for m in -band_cut..=band_cut {
        let c = coeff(m);
        // v real and even makes v̂ real and even; chop quadrature dust.
        let cleaned = Complex64::new(c.re, if c.im.abs() < 1e-14 { 0.0 } else { c.im });
        if cleaned.norm() > 1e-14 {
            v_hat.insert(m, cleaned);
        }
    }
    Ok(DualModel {
        band_cut,
        v_hat,
        epsilon: cfg.epsilon,
        omega: cfg.omega.clone(),
        hopping: cfg.hopping.clone(),
        d: cfg.d,
    })
}

/// Golden-mean frequency (√5 − 1)/2, the canonical d = 1 choice.
pub const GOLDEN_MEAN: f64 = 0.618_033_988_749_894_9;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::boxed;

    fn amo_config() -> ModelConfig {
        ModelConfig {
            d: 1,
            tau: 2.0,
            gamma: 0.2,
            omega: vec![GOLDEN_MEAN],
            epsilon: 1e-2,
            theta: 0.21,
            energy: 0.3,
            potential: PotentialSpec::cosine(0.05),
            hopping: HoppingSpec::nearest(1.5, 9.0),
        }
    }

    #[test]
    fn certify_cosine_matches_appendix_bounds() {
        let spec = PotentialSpec::cosine(0.02);
        let (k1, k2) = certify_potential(&spec, 128).unwrap();
        // 2|z1−z2||z1+z2| ≤ |cos2πz1 − cos2πz2| ≤ 32|z1−z2||z1+z2| on a
        // narrow strip; the grid estimate must sit inside with slack.
        assert!(k1 >= 2.0 * (1.0 - 0.05), "kappa1 = {k1}");
        assert!(k2 <= 32.0 * (1.0 + 0.05), "kappa2 = {k2}");
    }

    #[test]
    fn certify_polynomial_example() {
        let spec = PotentialSpec {
            kind: PotentialKind::PolyCosine { lambda: vec![0.2] },
            r: 0.02,
            kappa1: None,
            kappa2: None,
        };
        let (k1, k2) = certify_potential(&spec, 128).unwrap();
        assert!(k1 > 0.0);
        assert!(k2 > k1);
    }

    #[test]
    fn poly_budget_enforced() {
        let spec = PotentialSpec {
            kind: PotentialKind::PolyCosine { lambda: vec![0.6] }, // 2*0.6 >= 1
            r: 0.05,
            kappa1: None,
            kappa2: None,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn diophantine_rational_fails_with_witness() {
        // |2 · (1/2)|_T = 0, so n = 2 is the minimal-norm witness.
        let (ok, witness) = certify_diophantine(&[0.5], 2.0, 0.1, 10);
        assert!(!ok);
        assert_eq!(witness.unwrap(), Site::from_ints(&[2]));
    }

    #[test]
    fn diophantine_golden_mean_passes_with_empirical_gamma() {
        let tau = 2.0;
        let gamma = empirical_gamma(&[GOLDEN_MEAN], tau, 100_000);
        assert!(gamma > 0.0);
        let (ok, _) = certify_diophantine(&[GOLDEN_MEAN], tau, gamma * 0.999, 100_000);
        assert!(ok);
        // Monotone in the cutoff: passing at n_max implies passing below.
        let (ok_small, _) = certify_diophantine(&[GOLDEN_MEAN], tau, gamma * 0.999, 1000);
        assert!(ok_small);
    }

    #[test]
    fn diophantine_d2_scan() {
        let omega = [std::f64::consts::SQRT_2 - 1.0, 3f64.sqrt() - 1.0];
        let tau = 3.0;
        let gamma = empirical_gamma(&omega, tau, 2000);
        assert!(gamma > 0.0);
        let (ok, _) = certify_diophantine(&omega, tau, gamma * 0.999, 2000);
        assert!(ok);
    }

    #[test]
    fn assemble_diagonal_at_zero_coupling() {
        let mut cfg = amo_config();
        cfg.epsilon = 0.0;
        let lambda = boxed(&Site::origin(1), 4);
        let t = assemble_t(&lambda, &cfg);
        for (i, n) in t.rows().iter().enumerate() {
            for (j, m) in t.cols().iter().enumerate() {
                if i == j {
                    let want = (TAU * (cfg.theta + n.coord_f64(0) * GOLDEN_MEAN)).cos()
                        - cfg.energy;
                    assert!((t.matrix()[[i, j]].re - want).abs() < 1e-15);
                } else {
                    assert_eq!(t.matrix()[[i, j]], Complex64::ZERO);
                    let _ = m;
                }
            }
        }
    }

    #[test]
    fn assemble_amo_is_tridiagonal() {
        let cfg = amo_config();
        let lambda = boxed(&Site::origin(1), 5);
        let t = assemble_t(&lambda, &cfg);
        for (i, n) in t.rows().iter().enumerate() {
            for (j, m) in t.cols().iter().enumerate() {
                let dist = n.dist_twice(m) / 2;
                if dist == 1 {
                    assert!((t.matrix()[[i, j]].re - cfg.epsilon).abs() < 1e-15);
                } else if dist > 1 {
                    assert_eq!(t.matrix()[[i, j]], Complex64::ZERO);
                }
            }
        }
        assert!(t.hermitian_deviation() < 1e-14);
    }

    #[test]
    fn assemble_power_law_entries_and_norm() {
        let mut cfg = amo_config();
        cfg.hopping = HoppingSpec::power_law(6.0, 1.5, 9.0, 30);
        let lambda = boxed(&Site::origin(1), 5);
        let t = assemble_t(&lambda, &cfg);
        for (i, n) in t.rows().iter().enumerate() {
            for (j, m) in t.cols().iter().enumerate() {
                let dist = (n.dist_twice(m) / 2) as f64;
                if i != j {
                    let want = cfg.epsilon * (1.0 + dist).powf(-6.0);
                    assert!((t.matrix()[[i, j]].re - want).abs() < 1e-15);
                }
            }
        }
        // |W|_α against direct summation over tabulated offsets.
        let alpha = 2.0;
        let (w, tail) = cfg.hopping.w_norm(alpha, 1);
        let direct: f64 = (1..=30)
            .map(|r| 2.0 * (1.0 + r as f64).powf(-6.0) * (1.0 + r as f64).powf(alpha))
            .sum();
        assert!((w - direct).abs() < 1e-12 * direct);
        assert!(tail.is_finite() && tail < 1e-3);
    }

    #[test]
    fn restriction_consistency() {
        let cfg = amo_config();
        let big = boxed(&Site::origin(1), 6);
        let small = boxed(&Site::origin(1), 3);
        let t_big = assemble_t(&big, &cfg);
        let t_small = assemble_t(&small, &cfg);
        let restricted = t_big.restrict(&small, &small);
        assert_eq!(restricted.matrix(), t_small.matrix());
    }

    #[test]
    fn covariance_under_lattice_shift() {
        let cfg = amo_config();
        let m_shift = 3i64;
        let lambda = boxed(&Site::origin(1), 4);
        let shifted_lambda = boxed(&Site::from_ints(&[m_shift]), 4);
        let lhs = assemble_t(&shifted_lambda, &cfg);
        let mut cfg_shifted = cfg.clone();
        cfg_shifted.theta = cfg.theta + m_shift as f64 * cfg.omega[0];
        let rhs = assemble_t(&lambda, &cfg_shifted);
        for i in 0..lambda.len() {
            for j in 0..lambda.len() {
                assert!(
                    (lhs.matrix()[[i, j]] - rhs.matrix()[[i, j]]).norm() < 1e-12,
                    "covariance broken at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn theta0_closed_forms() {
        let mut cfg = amo_config();
        cfg.energy = 1.0;
        let t0 = solve_theta0(&cfg).unwrap();
        assert!(t0.norm() < 1e-9, "E=1 should give theta0=0, got {t0}");
        cfg.energy = 0.0;
        let t0 = solve_theta0(&cfg).unwrap();
        assert!((t0 - Complex64::new(0.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn theta0_polynomial_residual() {
        let mut cfg = amo_config();
        cfg.potential = PotentialSpec {
            kind: PotentialKind::PolyCosine { lambda: vec![0.2] },
            r: 0.05,
            kappa1: None,
            kappa2: None,
        };
        cfg.energy = 0.3;
        let t0 = solve_theta0(&cfg).unwrap();
        let residual = (cfg.potential.eval(t0) - Complex64::new(0.3, 0.0)).norm();
        assert!(residual < 1e-12 * 1.3);
    }

    #[test]
    fn theta0_vanishing_diagonal() {
        // assemble at θ = θ_0 − kω makes the diagonal vanish at site k.
        let cfg0 = amo_config();
        let theta0 = solve_theta0(&cfg0).unwrap();
        let k = 5i64;
        let mut cfg = cfg0.clone();
        cfg.theta = theta0.re - k as f64 * cfg.omega[0];
        let lambda = boxed(&Site::origin(1), 8);
        let t = assemble_t(&lambda, &cfg);
        let idx = t.rows().index_of(&Site::from_ints(&[k])).unwrap();
        assert!(t.matrix()[[idx, idx]].norm() < 1e-12);
    }

    #[test]
    fn theta0_energy_out_of_range() {
        let mut cfg = amo_config();
        cfg.energy = 50.0; // needs |Im θ0| ≈ ln(100)/2π ≫ R/2
        assert!(matches!(solve_theta0(&cfg), Err(Error::EnergyOutOfRange { .. })));
    }

    #[test]
    fn dual_of_cosine_is_half_shift() {
        let cfg = amo_config();
        let dual = aubry_dual(&cfg, 2).unwrap();
        let half = Complex64::new(0.5, 0.0);
        assert!((dual.v_hat[&1] - half).norm() < 1e-12);
        assert!((dual.v_hat[&-1] - half).norm() < 1e-12);
        assert!(!dual.v_hat.contains_key(&0));
        assert!(!dual.v_hat.contains_key(&2));
        // φ on ±1 gives u(x) = 2 cos 2πx.
        let u = dual.u(&[0.2]);
        assert!((u - Complex64::new(2.0 * (TAU * 0.2).cos(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dual_polynomial_matches_dense_quadrature_oracle() {
        let mut cfg = amo_config();
        cfg.potential = PotentialSpec {
            kind: PotentialKind::PolyCosine { lambda: vec![0.2] },
            r: 0.05,
            kappa1: None,
            kappa2: None,
        };
        let dual = aubry_dual(&cfg, 4).unwrap();
        // Independent quadrature at ten times the resolution.
        let grid = 8192usize;
        for m in -4i64..=4 {
            let mut acc = Complex64::ZERO;
            for j in 0..grid {
                let x = j as f64 / grid as f64;
                acc += cfg.potential.eval(Complex64::new(x, 0.0))
                    * Complex64::from_polar(1.0, -TAU * m as f64 * x);
            }
            acc /= grid as f64;
            let got = dual.v_hat.get(&m).copied().unwrap_or(Complex64::ZERO);
            assert!((got - acc).norm() < 1e-10, "mode {m}: {got} vs {acc}");
        }
    }

    #[test]
    fn dual_band_cut_too_small_detected() {
        let mut cfg = amo_config();
        cfg.potential = PotentialSpec {
            kind: PotentialKind::PolyCosine { lambda: vec![0.0, 0.3] }, // cos^3 has mode 3
            r: 0.05,
            kappa1: None,
            kappa2: None,
        };
        assert!(matches!(aubry_dual(&cfg, 1), Err(Error::BandCutTooSmall { .. })));
    }

    #[test]
    fn config_validation_flags() {
        let mut cfg = amo_config();
        cfg.hopping.alpha1 = 9.0; // far below 2200 tau
        let warnings = cfg.validate(2000).unwrap();
        assert!(warnings.iter().any(|w| w.contains("alpha1")));
        // Unit nearest-neighbor amplitude breaks the α_decay = 6 envelope.
        cfg.hopping = HoppingSpec {
            kind: HoppingKind::NearestPlusPowerLaw,
            alpha_decay: 6.0,
            alpha0: 1.5,
            alpha1: 9.0,
            radius: 20,
            table: BTreeMap::new(),
        };
        let warnings = cfg.validate(2000).unwrap();
        assert!(warnings.iter().any(|w| w.contains("envelope")));
        cfg.omega = vec![0.5];
        let warnings = cfg.validate(100).unwrap();
        assert!(warnings.iter().any(|w| w.contains("Diophantine")));
    }
}
