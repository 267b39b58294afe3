//! Desk-scale spectral experiments: eigenfunction decay fits, the Poisson
//! identity residual, dynamical moments, the finite-volume IDS with its
//! Hölder modulus, and the Aubry-dual delocalization proxy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lattice::{boxed, Site, SiteSet};
use crate::linalg::{self, CMat};
use crate::model::{aubry_dual, assemble_t, torus_norm, ModelConfig};
use crate::opalgebra::LatticeOperator;
use crate::{Error, Result};

/// Full spectral decomposition of a finite Hermitian Hamiltonian.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub set: SiteSet,
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `eigenvalues`.
    pub eigenvectors: CMat,
    pub max_residual: f64,
    pub max_gram_defect: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, q: usize) -> Vec<Complex64> {
        (0..self.len()).map(|i| self.eigenvectors[[i, q]]).collect()
    }
}

/// Hermitian spectral decomposition with residual and orthonormality
/// certificates; non-Hermitian input is routed away (those experiments go
/// through the Green's-function machinery instead).
pub fn eigensolve(h: &LatticeOperator) -> Result<EigenSystem> {
    let scale = h.max_abs_entry().max(1e-300);
    let deviation = h.hermitian_deviation();
    if deviation > 1e-12 * scale {
        return Err(Error::NotHermitian { deviation });
    }
    let (eigenvalues, eigenvectors) = linalg::eigh(h.matrix())?;
    let n = eigenvalues.len();
    let spectral_radius =
        eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut max_residual: f64 = 0.0;
    for q in 0..n {
        let mut res: f64 = 0.0;
        for i in 0..n {
            let mut hv = Complex64::ZERO;
            for j in 0..n {
                hv += h.matrix()[[i, j]] * eigenvectors[[j, q]];
            }
            res += (hv - eigenvalues[q] * eigenvectors[[i, q]]).norm_sqr();
        }
        max_residual = max_residual.max(res.sqrt());
    }
    let mut max_gram_defect: f64 = 0.0;
    for p in 0..n {
        for q in p..n {
            let mut g = Complex64::ZERO;
            for i in 0..n {
                g += eigenvectors[[i, p]].conj() * eigenvectors[[i, q]];
            }
            let want = if p == q { Complex64::ONE } else { Complex64::ZERO };
            max_gram_defect = max_gram_defect.max((g - want).norm());
        }
    }
    if max_residual > 1e-9 * spectral_radius || max_gram_defect > 1e-9 {
        return Err(Error::EigenNoConvergence { index: 0 });
    }
    Ok(EigenSystem { set: h.rows().clone(), eigenvalues, eigenvectors, max_residual, max_gram_defect })
}

/// Power-law decay fit of one eigenvector away from its peak.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted exponent of |ψ(n)| ~ (1+|n−peak|)^{−exponent}; +∞ when the
    /// tail carries no weight at all (perfectly localized).
    pub exponent: f64,
    pub r2: f64,
    pub tail_start: f64,
}

/// Least-squares fit of log|ψ| against log(1+dist) beyond `tail_start`
/// from the peak site.
pub fn fit_decay(psi: &[Complex64], set: &SiteSet, tail_start: f64) -> DecayFit {
    let peak = psi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let peak_site = &set.sites()[peak];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, site) in set.iter().enumerate() {
        let dist = peak_site.dist_twice(site) as f64 / 2.0;
        if dist < tail_start {
            continue;
        }
        let a = psi[i].norm();
        if a > 1e-300 {
            xs.push((1.0 + dist).ln());
            ys.push(a.ln());
        }
    }
    if xs.len() < 3 {
        return DecayFit { exponent: f64::INFINITY, r2: 1.0, tail_start };
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return DecayFit { exponent: f64::INFINITY, r2: 1.0, tail_start };
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    DecayFit { exponent: -slope, r2, tail_start }
}

/// Finite-window arithmetic classification of the phase θ: generic means
/// |2θ + n·ω|_T > A/|n|^{τ1} for every 0 < |n| ≤ window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ThetaClass {
    Generic,
    Exceptional { witness: Site },
}

pub fn classify_theta(theta: f64, omega: &[f64], tau1: f64, a: f64, window: i64) -> ThetaClass {
    let d = omega.len();
    let mut cursor = vec![-window; d];
    loop {
        if cursor.iter().any(|&c| c != 0) {
            let norm = cursor.iter().map(|c| c.abs()).max().unwrap() as f64;
            let dot: f64 = cursor.iter().zip(omega).map(|(&c, &w)| c as f64 * w).sum();
            if torus_norm(2.0 * theta + dot) <= a / norm.powf(tau1) {
                return ThetaClass::Exceptional { witness: Site::from_ints(&cursor) };
            }
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                return ThetaClass::Generic;
            }
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] <= window {
                break;
            }
            cursor[axis] = -window;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationSample {
    pub theta: f64,
    pub theta_class: ThetaClass,
    pub median_exponent: f64,
    pub median_r2: f64,
    pub fits: Vec<DecayFit>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if values.is_empty() {
        f64::NAN
    } else {
        values[values.len() / 2]
    }
}

/// Eigenvector decay study over a list of phases. Fits start at N/5 from
/// each peak, past the near field.
pub fn localization_scan(
    cfg: &ModelConfig,
    n: i64,
    thetas: &[f64],
    tau1: f64,
    a: f64,
) -> Result<Vec<LocalizationSample>> {
    let lambda = boxed(&Site::origin(cfg.d), n);
    let tail_start = n as f64 / 5.0;
    let mut out = Vec::new();
    for &theta in thetas {
        let mut local = cfg.clone();
        local.theta = theta;
        let h = assemble_t(&lambda, &local);
        let system = eigensolve(&h)?;
        let fits: Vec<DecayFit> = (0..system.len())
            .map(|q| fit_decay(&system.vector(q), &lambda, tail_start))
            .collect();
        let mut exps: Vec<f64> = fits.iter().map(|f| f.exponent).collect();
        let mut r2s: Vec<f64> = fits.iter().map(|f| f.r2).collect();
        out.push(LocalizationSample {
            theta,
            theta_class: classify_theta(theta, &cfg.omega, tau1, a, 10 * n),
            median_exponent: median(&mut exps),
            median_r2: median(&mut r2s),
            fits,
        });
    }
    Ok(out)
}

/// Residual of the Poisson identity
/// ψ(n) = −ε Σ_{n'∈Λ, n''∉Λ} T_Λ^{-1}(n,n') φ(n'−n'') ψ(n'')
/// for an eigenpair of the outer box, evaluated on the core of the inner
/// set (clear of the boundary layer). `energy` is the eigenvalue of the
/// assembled T_outer, i.e. of H(θ) − cfg.energy.
///
/// Returns (residual, condition of T_inner): an eigenpair resonant with
/// the inner box makes T_inner nearly singular, and the inverse route
/// then amplifies roundoff by the condition number — callers judge the
/// residual against it.
pub fn poisson_residual(
    psi: &[Complex64],
    energy: f64,
    inner: &SiteSet,
    outer: &SiteSet,
    cfg: &ModelConfig,
) -> Result<(f64, f64)> {
    assert_eq!(psi.len(), outer.len(), "eigenvector indexed by the outer set");
    assert!(inner.is_subset_of(outer), "inner must sit inside outer");
    let mut local = cfg.clone();
    local.energy = cfg.energy + energy;
    let t_inner = assemble_t(inner, &local);
    let (inv, _, condition) = crate::opalgebra::invert(&t_inner)?;
    let rest = outer.difference(inner);

    // w(n') = Σ_{n''∉inner} φ(n'−n'') ψ(n'') for n' in the inner set.
    let mut w = vec![Complex64::ZERO; inner.len()];
    for (ip, np) in inner.iter().enumerate() {
        let mut acc = Complex64::ZERO;
        for npp in rest.iter() {
            let off: Vec<i64> =
                np.twice().iter().zip(npp.twice()).map(|(a, b)| a - b).collect();
            let amp = cfg.hopping.phi_twice(&off);
            if amp != Complex64::ZERO {
                let j = outer.index_of(npp).unwrap();
                acc += amp * psi[j];
            }
        }
        w[ip] = acc;
    }

    // Residual over the core: sites at distance > diam/4 from the rest.
    let diam = inner.diam()?;
    let mut residual: f64 = 0.0;
    for (i, site) in inner.iter().enumerate() {
        let edge_dist = rest
            .iter()
            .map(|r| site.dist_twice(r))
            .min()
            .map(|d| d as f64 / 2.0)
            .unwrap_or(f64::INFINITY);
        if edge_dist <= diam / 4.0 {
            continue;
        }
        let mut rhs = Complex64::ZERO;
        for (j, _) in inner.iter().enumerate() {
            rhs += inv.matrix()[[i, j]] * w[j];
        }
        rhs *= -cfg.epsilon;
        let lhs = psi[outer.index_of(site).unwrap()];
        residual = residual.max((lhs - rhs).norm());
    }
    Ok((residual, condition))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynamicsResult {
    pub sup_moment: f64,
    pub unitarity_defect: f64,
    /// (t, moment) at the final grid refinement.
    pub series: Vec<(f64, f64)>,
}

/// sup_t Σ_n (1+|n|)^p |⟨e^{itH} δ_0, δ_n⟩| on Λ_N, the amplitudes built
/// from the spectral decomposition; the t grid doubles until the sup
/// moves by less than 1%.
pub fn dynamics_moment(cfg: &ModelConfig, n: i64, p: f64, t_max: f64) -> Result<DynamicsResult> {
    let lambda = boxed(&Site::origin(cfg.d), n);
    let h = assemble_t(&lambda, cfg);
    let system = eigensolve(&h)?;
    let origin = lambda.index_of(&Site::origin(cfg.d)).expect("origin inside the box");
    let dim = system.len();
    let weights: Vec<f64> = lambda
        .iter()
        .map(|site| (1.0 + site.norm_twice() as f64 / 2.0).powf(p))
        .collect();
    // overlap coefficients c_{q,n} = φ_q(n) conj(φ_q(0))
    let coeff: Vec<Vec<Complex64>> = (0..dim)
        .map(|q| {
            let cq0 = system.eigenvectors[[origin, q]].conj();
            (0..dim).map(|i| system.eigenvectors[[i, q]] * cq0).collect()
        })
        .collect();

    let evaluate = |t: f64| -> (f64, f64) {
        let phases: Vec<Complex64> = (0..dim)
            .map(|q| Complex64::from_polar(1.0, t * system.eigenvalues[q]))
            .collect();
        let mut moment = 0.0;
        let mut total_prob = 0.0;
        for i in 0..dim {
            let mut amp = Complex64::ZERO;
            for q in 0..dim {
                amp += phases[q] * coeff[q][i];
            }
            let mag = amp.norm();
            moment += weights[i] * mag;
            total_prob += mag * mag;
        }
        (moment, (total_prob - 1.0).abs())
    };

    let mut points = 64usize;
    let mut sup = 0.0f64;
    let mut defect = 0.0f64;
    let mut series = Vec::new();
    loop {
        let mut new_sup = 0.0f64;
        series.clear();
        for j in 0..=points {
            let t = t_max * j as f64 / points as f64;
            let (m, u) = evaluate(t);
            new_sup = new_sup.max(m);
            defect = defect.max(u);
            series.push((t, m));
        }
        let stable = sup > 0.0 && (new_sup - sup).abs() <= 0.01 * sup;
        sup = sup.max(new_sup);
        if stable || points >= 4096 {
            break;
        }
        points *= 2;
    }
    Ok(DynamicsResult { sup_moment: sup, unitarity_defect: defect, series })
}

/// Finite-volume eigenvalue-counting curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdsCurve {
    pub box_radius: i64,
    pub energies: Vec<f64>,
    pub counts: Vec<f64>,
    /// Sorted finite-volume spectrum behind the curve.
    pub eigenvalues: Vec<f64>,
}

pub fn ids_curve(cfg: &ModelConfig, n: i64, e_grid: &[f64]) -> Result<IdsCurve> {
    let lambda = boxed(&Site::origin(cfg.d), n);
    let mut shifted = cfg.clone();
    // The counting function is for H itself; assemble at E = 0.
    shifted.energy = 0.0;
    let h = assemble_t(&lambda, &shifted);
    let system = eigensolve(&h)?;
    let evals = system.eigenvalues;
    let total = evals.len() as f64;
    let counts = e_grid
        .iter()
        .map(|&e| evals.partition_point(|&l| l <= e) as f64 / total)
        .collect();
    Ok(IdsCurve { box_radius: n, energies: e_grid.to_vec(), counts, eigenvalues: evals })
}

/// Hölder modulus of the counting function: for each η the sup over E of
/// 𝒩(E+η) − 𝒩(E−η), then a log-log slope fit.
pub fn holder_modulus(curve: &IdsCurve, eta_grid: &[f64]) -> (f64, Vec<(f64, f64)>) {
    let evals = &curve.eigenvalues;
    let total = evals.len() as f64;
    let mut points = Vec::new();
    for &eta in eta_grid {
        // Largest number of eigenvalues in any closed window of width 2η.
        let mut best = 0usize;
        let mut lo = 0usize;
        for hi in 0..evals.len() {
            while evals[hi] - evals[lo] > 2.0 * eta {
                lo += 1;
            }
            best = best.max(hi - lo + 1);
        }
        points.push((eta, best as f64 / total));
    }
    let xs: Vec<f64> = points.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, s)| s.max(1.0 / total).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    (slope, points)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualScaleStats {
    pub m_radius: i64,
    pub ipr_median: f64,
    pub boundary_min: f64,
    pub boundary_median: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualProxySample {
    pub x: Vec<f64>,
    pub self_adjoint: bool,
    /// Eigenvector statistics at M and 2M (self-adjoint route).
    pub scales: Vec<DualScaleStats>,
    /// Smallest singular value over an energy grid (non-self-adjoint route).
    pub sv_min: Option<Vec<(f64, f64)>>,
}

/// Finite-volume absence-of-eigenvalues proxy for the dual operator: on
/// doubling boxes, extended states keep inverse participation ratios near
/// 1/#Λ and boundary weight bounded away from zero. Absence of point
/// spectrum is not decidable at finite volume; this reports the finite
/// surrogate only.
pub fn dual_localization_proxy(
    cfg: &ModelConfig,
    band_cut: i64,
    m_radius: i64,
    xs: &[Vec<f64>],
) -> Result<Vec<DualProxySample>> {
    let dual = aubry_dual(cfg, band_cut)?;
    let mut out = Vec::new();
    for x in xs {
        assert_eq!(x.len(), cfg.d, "dual phase x lives on T^d");
        let probe = dual.assemble(x, m_radius, 0.0);
        let scale = probe.max_abs_entry().max(1e-300);
        let self_adjoint = probe.hermitian_deviation() <= 1e-12 * scale;
        if self_adjoint {
            let mut scales = Vec::new();
            for m in [m_radius, 2 * m_radius] {
                let h = dual.assemble(x, m, 0.0);
                let system = eigensolve(&h)?;
                let dim = system.len();
                let mut iprs = Vec::with_capacity(dim);
                let mut boundaries = Vec::with_capacity(dim);
                for q in 0..dim {
                    let psi = system.vector(q);
                    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                    let ipr: f64 =
                        psi.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / norm2.powi(2);
                    let boundary: f64 = system
                        .set
                        .iter()
                        .zip(&psi)
                        .filter(|(site, _)| site.norm_twice() > m)
                        .map(|(_, z)| z.norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    iprs.push(ipr);
                    boundaries.push(boundary);
                }
                let boundary_min = boundaries.iter().cloned().fold(f64::INFINITY, f64::min);
                scales.push(DualScaleStats {
                    m_radius: m,
                    ipr_median: median(&mut iprs),
                    boundary_min,
                    boundary_median: median(&mut boundaries),
                });
            }
            out.push(DualProxySample { x: x.clone(), self_adjoint, scales, sv_min: None });
        } else {
            // Non-self-adjoint dual: smallest singular value of H̃ − E
            // over a small energy grid as the spectral diagnostic.
            let mut sv = Vec::new();
            for j in 0..9 {
                let e = -2.0 + j as f64 * 0.5;
                let shifted = dual.assemble(x, m_radius, e);
                let values = linalg::singular_values(shifted.matrix())?;
                sv.push((e, values.first().copied().unwrap_or(0.0)));
            }
            out.push(DualProxySample {
                x: x.clone(),
                self_adjoint,
                scales: Vec::new(),
                sv_min: Some(sv),
            });
        }
    }
    Ok(out)
}
