//! The multi-scale induction engine: scale schedules (N_s, δ_s), resonant
//! site detection Q_s^± around the determinant roots ±θ_s, case
//! classification C1/C2, resonant block construction with nesting,
//! translation-invariance and mirror symmetry, Schur-complement root
//! tracking by the argument principle, good-set classification, and the
//! Green's-function bound audits.
//!
//! Scales are carried in log10 throughout: a single induction step takes
//! δ from 1e-3 to 1e-90, far below what f64 can represent linearly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lattice::{boxed, dist_twice, Site, SiteSet};
use crate::linalg;
use crate::model::{assemble_t, assemble_t_at, torus_norm_c, ModelConfig};
use crate::opalgebra::{self, LatticeOperator, NormProfile};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleMode {
    Paper,
    Exploration,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub s: usize,
    /// Block scale N_s; saturates at u64::MAX when the paper recursion
    /// leaves the representable range.
    pub n: u64,
    pub log10_n: f64,
    pub log10_delta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleSchedule {
    pub mode: ScaleMode,
    pub gamma: f64,
    pub tau: f64,
    pub entries: Vec<ScaleEntry>,
}

/// Seed of the paper recursion: either ε_0 (δ_0 = ε_0^{1/30}) or δ_0.
#[derive(Clone, Copy, Debug)]
pub enum ScheduleSeed {
    Epsilon0(f64),
    Delta0(f64),
}

impl ScaleSchedule {
    /// Paper-mode recursion N_{s+1} = ⌊(γ/δ_s)^{1/(30τ)}⌋,
    /// γ/δ_{s+1} = (γ/δ_s)^30, carried in log10 arithmetic.
    pub fn paper(gamma: f64, tau: f64, seed: ScheduleSeed, s_max: usize) -> Result<Self> {
        let log10_delta0 = match seed {
            ScheduleSeed::Epsilon0(e) => {
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::ScheduleInvalid {
                        reason: format!("epsilon0 = {e} outside (0,1)"),
                    });
                }
                e.log10() / 30.0
            }
            ScheduleSeed::Delta0(d) => {
                if !(d > 0.0 && d < 1.0) {
                    return Err(Error::ScheduleInvalid {
                        reason: format!("delta0 = {d} outside (0,1)"),
                    });
                }
                d.log10()
            }
        };
        let log10_gamma = gamma.log10();
        let mut entries =
            vec![ScaleEntry { s: 0, n: 1, log10_n: 0.0, log10_delta: log10_delta0 }];
        let mut log10_delta = log10_delta0;
        for s in 1..=s_max {
            let log10_ratio = log10_gamma - log10_delta;
            let log10_n = log10_ratio / (30.0 * tau);
            let n = if log10_n >= 18.0 {
                u64::MAX
            } else {
                10f64.powf(log10_n).floor() as u64
            };
            log10_delta = log10_gamma - 30.0 * log10_ratio;
            entries.push(ScaleEntry { s, n, log10_n, log10_delta });
        }
        Ok(ScaleSchedule { mode: ScaleMode::Paper, gamma, tau, entries })
    }

    /// User-supplied table of (N_s, δ_s) starting at s = 1; N_0 = 1 and
    /// δ_0 come first. Requires N nondecreasing (strictly from s = 1 on)
    /// and δ strictly decreasing.
    pub fn exploration(gamma: f64, tau: f64, table: &[(u64, f64)]) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::ScheduleInvalid { reason: "empty exploration table".into() });
        }
        let mut entries: Vec<ScaleEntry> = Vec::new();
        for (s, &(n, delta)) in table.iter().enumerate() {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::ScheduleInvalid {
                    reason: format!("delta_{s} = {delta} outside (0,1)"),
                });
            }
            if n == 0 {
                return Err(Error::ScheduleInvalid { reason: format!("N_{s} = 0") });
            }
            if s > 1 && n <= entries[s - 1].n {
                return Err(Error::ScheduleInvalid {
                    reason: format!("N_{s} = {n} not increasing"),
                });
            }
            if s > 0 && delta.log10() >= entries[s - 1].log10_delta {
                return Err(Error::ScheduleInvalid {
                    reason: format!("delta_{s} = {delta} not decreasing"),
                });
            }
            entries.push(ScaleEntry {
                s,
                n,
                log10_n: (n as f64).log10(),
                log10_delta: delta.log10(),
            });
        }
        Ok(ScaleSchedule { mode: ScaleMode::Exploration, gamma, tau, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n(&self, s: usize) -> u64 {
        self.entries[s].n
    }

    pub fn log10_delta(&self, s: usize) -> f64 {
        self.entries[s].log10_delta
    }

    /// δ_s in linear scale; may underflow to 0 in paper mode.
    pub fn delta(&self, s: usize) -> f64 {
        10f64.powf(self.entries[s].log10_delta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    C1,
    C2,
}

/// Which resonance window the C2 analysis used: near 0 or near 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum C2Branch {
    NearZero,
    NearHalf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockEntry {
    pub center: Site,
    /// Resonant block Ω_k^s.
    pub omega: SiteSet,
    /// Enlarged resonant block Ω̃_k^s.
    pub omega_tilde: SiteSet,
    /// Singular set A_k^s ⊂ Ω_k^s, #A ≤ 2^s.
    pub singular: SiteSet,
    /// True when the window does not contain the whole enlarged block.
    pub clipped: bool,
}

/// Root of the block determinant with its argument-principle certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RootCertificate {
    pub theta: (f64, f64),
    pub contour_center: (f64, f64),
    pub contour_radius: f64,
    pub winding: i64,
    /// Final Newton correction size: an a-posteriori root-distance bound.
    pub residual: f64,
    /// Both ±θ certified as roots of the (even) determinant.
    pub paired: bool,
}

impl RootCertificate {
    pub fn theta_c(&self) -> Complex64 {
        Complex64::new(self.theta.0, self.theta.1)
    }
}

/// Per-scale state of the induction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generation {
    pub s: usize,
    /// Case of the step that produced this generation (absent at s = 0).
    pub case_tag: Option<CaseTag>,
    pub c2_branch: Option<C2Branch>,
    /// l_{s-1}; the zero site at s = 0 and in C1.
    pub l_step: Site,
    /// (1/2) Σ_{i<s} l_i: the coset of P_s, stored exactly.
    pub coset_shift: Site,
    /// θ_s as (re, im).
    pub theta: (f64, f64),
    /// Centers P_s inside the scanned window (all window sites at s = 0).
    pub p_set: SiteSet,
    pub q_plus: SiteSet,
    pub q_minus: SiteSet,
    pub q_tilde_plus: SiteSet,
    pub q_tilde_minus: SiteSet,
    /// Block shapes relative to the center (identical for all k by
    /// construction, symmetric about the origin).
    pub omega_shape: SiteSet,
    pub tilde_shape: SiteSet,
    pub singular_shape: SiteSet,
    pub blocks: Vec<BlockEntry>,
    /// Covering map: each child k' ∈ Q_{s-1} to its parent in P_s.
    pub covering: Vec<(Site, Site)>,
    /// Children whose covering parent was ambiguous (nearest-parent tie).
    pub covering_ties: Vec<Site>,
    /// Set when any mandated block was clipped by the window.
    pub truncated: bool,
    /// diam Ω_k^s and diam Ω̃_k^s (zero at s = 0).
    pub zeta: f64,
    pub zeta_tilde: f64,
    /// C1 drift guard |θ_{s+1} − θ_s| < δ_s^{3/2} evaluated at build time.
    pub drift_ok: bool,
}

impl Generation {
    pub fn theta_c(&self) -> Complex64 {
        Complex64::new(self.theta.0, self.theta.1)
    }

    pub fn q_set(&self) -> SiteSet {
        self.q_plus.union(&self.q_minus)
    }

    pub fn q_tilde_set(&self) -> SiteSet {
        self.q_tilde_plus.union(&self.q_tilde_minus)
    }

    pub fn block_for(&self, center: &Site) -> Option<&BlockEntry> {
        self.blocks.iter().find(|b| &b.center == center)
    }
}

/// Full trace of one MSA run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MsaTrace {
    pub generations: Vec<Generation>,
    pub certificates: Vec<RootCertificate>,
}

fn resonance_sets(
    candidates: &SiteSet,
    cfg: &ModelConfig,
    theta_s: Complex64,
    delta: f64,
) -> (SiteSet, SiteSet) {
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for k in candidates.iter() {
        let phase = Complex64::new(cfg.theta + k.dot_omega(&cfg.omega), 0.0);
        if torus_norm_c(phase + theta_s) < delta {
            plus.push(k.clone());
        }
        if torus_norm_c(phase - theta_s) < delta {
            minus.push(k.clone());
        }
    }
    (SiteSet::new(plus), SiteSet::new(minus))
}

/// Generation 0: P_0 is the whole window, Q_0^± the δ_0-resonant sites,
/// every block the singleton {k}.
pub fn initial_generation(
    cfg: &ModelConfig,
    schedule: &ScaleSchedule,
    window: &SiteSet,
    theta0: Complex64,
) -> Generation {
    let delta0 = schedule.delta(0);
    let (q_plus, q_minus) = resonance_sets(window, cfg, theta0, delta0);
    let (q_tilde_plus, q_tilde_minus) =
        resonance_sets(window, cfg, theta0, delta0.powf(2.0 / 3.0));
    let origin_shape = SiteSet::new(vec![Site::origin(cfg.d)]);
    let blocks = q_plus
        .union(&q_minus)
        .iter()
        .map(|k| BlockEntry {
            center: k.clone(),
            omega: SiteSet::new(vec![k.clone()]),
            omega_tilde: SiteSet::new(vec![k.clone()]),
            singular: SiteSet::new(vec![k.clone()]),
            clipped: false,
        })
        .collect();
    Generation {
        s: 0,
        case_tag: None,
        c2_branch: None,
        l_step: Site::origin(cfg.d),
        coset_shift: Site::origin(cfg.d),
        theta: (theta0.re, theta0.im),
        p_set: window.clone(),
        q_plus,
        q_minus,
        q_tilde_plus,
        q_tilde_minus,
        omega_shape: origin_shape.clone(),
        tilde_shape: origin_shape.clone(),
        singular_shape: origin_shape,
        blocks,
        covering: Vec::new(),
        covering_ties: Vec::new(),
        truncated: false,
        zeta: 0.0,
        zeta_tilde: 0.0,
        drift_ok: true,
    }
}

#[derive(Clone, Debug)]
pub struct CaseDecision {
    pub tag: CaseTag,
    /// l_s = i_s − j_s (zero in C1).
    pub l_step: Site,
    /// The realizing pair (i_s ∈ Q_s^+, j_s ∈ Q̃_s^-) in C2.
    pub pair: Option<(Site, Site)>,
}

/// C1 when dist(Q̃_s^-, Q_s^+) > 100 N_{s+1}^3; otherwise C2 with the
/// lexicographically smallest minimal-distance pair.
pub fn classify_case(gen: &Generation, n_next: u64, d: usize) -> CaseDecision {
    let threshold_twice = (200u128 * (n_next as u128).pow(3)).min(i64::MAX as u128) as i64;
    if gen.q_plus.is_empty() || gen.q_tilde_minus.is_empty() {
        return CaseDecision { tag: CaseTag::C1, l_step: Site::origin(d), pair: None };
    }
    let mut best: Option<(i64, Site, Site)> = None;
    for i in gen.q_plus.iter() {
        for j in gen.q_tilde_minus.iter() {
            let dist = i.dist_twice(j);
            let candidate = (dist, i.clone(), j.clone());
            best = Some(match best.take() {
                None => candidate,
                Some(cur) => {
                    if candidate.0 < cur.0
                        || (candidate.0 == cur.0
                            && (candidate.1 < cur.1
                                || (candidate.1 == cur.1 && candidate.2 < cur.2)))
                    {
                        candidate
                    } else {
                        cur
                    }
                }
            });
        }
    }
    let (dist, i, j) = best.unwrap();
    if dist > threshold_twice {
        CaseDecision { tag: CaseTag::C1, l_step: Site::origin(d), pair: None }
    } else {
        let l = i.sub(&j);
        CaseDecision { tag: CaseTag::C2, l_step: l, pair: Some((i, j)) }
    }
}

/// Joint fixpoint of core boxes, absorption of all earlier enlarged
/// blocks, and mirror symmetrization; returns the common shape Ω − k.
fn aligned_shape(
    centers: &SiteSet,
    core_radius: i64,
    prior_blocks: &[SiteSet],
    margin: i64,
    d: usize,
    generation: usize,
) -> Result<SiteSet> {
    let origin = Site::origin(d);
    let seed_center = centers.sites().first().expect("nonempty centers");
    let mut shape = boxed(seed_center, core_radius).translate(&seed_center.neg());
    let limit_twice = 2 * (core_radius + margin);
    loop {
        let mut changed = false;
        for k in centers.iter() {
            let placed = shape.translate(k);
            for block in prior_blocks {
                if placed.intersects(block) && !block.is_subset_of(&placed) {
                    shape = shape.union(&block.translate(&k.neg()));
                    changed = true;
                }
            }
        }
        let mirrored = SiteSet::new(shape.iter().map(|s| s.mirror_through(&origin)).collect());
        if mirrored != shape {
            shape = shape.union(&mirrored);
            changed = true;
        }
        let reach = shape.iter().map(|s| s.norm_twice()).max().unwrap_or(0);
        if reach > limit_twice {
            return Err(Error::GeometryViolation {
                generation,
                reason: format!(
                    "block shape grew to reach {} (twice units), margin allows {}",
                    reach, limit_twice
                ),
            });
        }
        if !changed {
            return Ok(shape);
        }
    }
}

fn half_site(l: &Site) -> Site {
    let twice: Vec<i64> = l.twice().iter().map(|c| c / 2).collect();
    Site::from_twice(twice)
}

/// Builds generation s+1 from generation s: case classification, centers
/// P_{s+1}, aligned symmetric blocks, singular sets, the determinant root
/// θ_{s+1} with its certificate, and the new resonant sets Q_{s+1}.
pub fn build_generation(
    cfg: &ModelConfig,
    schedule: &ScaleSchedule,
    window: &SiteSet,
    previous: &[Generation],
) -> Result<(Generation, RootCertificate)> {
    let prev = previous.last().expect("needs at least generation 0");
    let s_next = prev.s + 1;
    assert!(schedule.len() > s_next, "schedule too short for generation {s_next}");
    let n_next = schedule.n(s_next);
    let n_next_i = n_next.min(i64::MAX as u64) as i64;
    let delta_prev = schedule.delta(prev.s);
    let delta_next = schedule.delta(s_next);
    let decision = classify_case(prev, n_next, cfg.d);
    let theta_prev = prev.theta_c();

    // Centers.
    let (p_set, coset_shift, c2_branch) = match decision.tag {
        CaseTag::C1 => (prev.q_set(), prev.coset_shift.clone(), None),
        CaseTag::C2 => {
            let half_l = half_site(&decision.l_step);
            let shifted_q_plus = prev.q_plus.translate(&decision.l_step.neg());
            let o_set = prev.q_minus.union(&shifted_q_plus);
            let p: Vec<Site> = o_set.iter().map(|o| o.add(&half_l)).collect();
            // Which window fired: |l/2·ω + θ_s| near 0 or near 1/2.
            let z = Complex64::new(half_l.dot_omega(&cfg.omega), 0.0) + theta_prev;
            let bound = delta_prev.powf(2.0 / 3.0);
            let near_zero = torus_norm_c(z) < bound;
            let near_half = torus_norm_c(z - 0.5) < bound;
            let branch = match (near_zero, near_half) {
                (true, true) => {
                    return Err(Error::AmbiguousResonanceWindow { generation: s_next })
                }
                (true, false) => C2Branch::NearZero,
                (false, true) => C2Branch::NearHalf,
                (false, false) => {
                    // Outside both windows (possible at exploration
                    // scales): take the nearer alternative.
                    if torus_norm_c(z) <= torus_norm_c(z - 0.5) {
                        C2Branch::NearZero
                    } else {
                        C2Branch::NearHalf
                    }
                }
            };
            (SiteSet::new(p), prev.coset_shift.add(&half_l), Some(branch))
        }
    };

    if p_set.is_empty() {
        let empty = SiteSet::empty();
        let origin_shape = SiteSet::new(vec![Site::origin(cfg.d)]);
        let gen = Generation {
            s: s_next,
            case_tag: Some(decision.tag),
            c2_branch,
            l_step: decision.l_step.clone(),
            coset_shift,
            theta: prev.theta,
            p_set: empty.clone(),
            q_plus: empty.clone(),
            q_minus: empty.clone(),
            q_tilde_plus: empty.clone(),
            q_tilde_minus: empty,
            omega_shape: origin_shape.clone(),
            tilde_shape: origin_shape.clone(),
            singular_shape: origin_shape,
            blocks: Vec::new(),
            covering: Vec::new(),
            covering_ties: Vec::new(),
            truncated: false,
            zeta: 0.0,
            zeta_tilde: 0.0,
            drift_ok: true,
        };
        let cert = RootCertificate {
            theta: prev.theta,
            contour_center: prev.theta,
            contour_radius: 0.0,
            winding: 0,
            residual: 0.0,
            paired: true,
        };
        return Ok((gen, cert));
    }

    // Core radii per case: (N, N^3) for C1 and (N^3, N^5) for C2. The
    // C2 resonant core also stretches to hold the mirror pair ±l/2 when
    // the pair distance exceeds N^3 (possible at exploration scales).
    let (r_omega, r_tilde) = match decision.tag {
        CaseTag::C1 => (n_next_i, n_next_i.saturating_pow(3)),
        CaseTag::C2 => {
            let half_l_norm = (decision.l_step.norm_twice() + 3) / 4 + 1;
            let r_o = n_next_i.saturating_pow(3).max(half_l_norm);
            (r_o, n_next_i.saturating_pow(5).max(3 * r_o))
        }
    };
    let n_prev = schedule.n(prev.s).min(i64::MAX as u64) as i64;
    let margin = 50 * n_prev.saturating_pow(5);
    let prior_blocks: Vec<SiteSet> = previous
        .iter()
        .skip(1) // generation-0 blocks are singletons, absorbed trivially
        .flat_map(|g| g.blocks.iter().map(|b| b.omega_tilde.clone()))
        .collect();

    let omega_shape = aligned_shape(&p_set, r_omega, &prior_blocks, margin, cfg.d, s_next)?;
    let tilde_shape = aligned_shape(&p_set, r_tilde, &prior_blocks, margin, cfg.d, s_next)?
        .union(&omega_shape);

    // Singular shape: carried over in C1, doubled to the mirror pair in C2.
    let singular_shape = match decision.tag {
        CaseTag::C1 => prev.singular_shape.clone(),
        CaseTag::C2 => {
            let half_l = half_site(&decision.l_step);
            let left = prev.singular_shape.translate(&half_l.neg());
            let right = prev.singular_shape.translate(&half_l);
            left.union(&right)
        }
    };
    if singular_shape.len() > (1usize << s_next.min(30)) {
        return Err(Error::GeometryViolation {
            generation: s_next,
            reason: format!(
                "singular set has {} sites, cap is 2^{}",
                singular_shape.len(),
                s_next
            ),
        });
    }
    if !singular_shape.is_subset_of(&omega_shape) {
        return Err(Error::GeometryViolation {
            generation: s_next,
            reason: "singular set escapes the resonant block".into(),
        });
    }

    // Materialize blocks and check the separation line of the nesting
    // discipline: dist(Ω̃_k, Ω̃_k') > 10 diam Ω̃.
    let zeta = omega_shape.diam().unwrap_or(0.0);
    let zeta_tilde = tilde_shape.diam().unwrap_or(0.0);
    let mut blocks = Vec::new();
    let mut truncated = false;
    for k in p_set.iter() {
        let omega = omega_shape.translate(k);
        let omega_tilde = tilde_shape.translate(k);
        let singular = singular_shape.translate(k);
        let clipped = !omega_tilde.is_subset_of(window);
        truncated |= clipped;
        blocks.push(BlockEntry { center: k.clone(), omega, omega_tilde, singular, clipped });
    }
    for (i, a) in blocks.iter().enumerate() {
        for b in blocks.iter().skip(i + 1) {
            let dist = dist_twice(&a.omega_tilde, &b.omega_tilde)? as f64 / 2.0;
            if dist <= 10.0 * zeta_tilde {
                return Err(Error::GeometryViolation {
                    generation: s_next,
                    reason: format!(
                        "blocks at {:?} and {:?} separated by {} <= 10 diam = {}",
                        a.center,
                        b.center,
                        dist,
                        10.0 * zeta_tilde
                    ),
                });
            }
        }
    }

    // Covering: every k' ∈ Q_s must have its enlarged block inside some
    // new Ω_k^{s+1}; ambiguous parents resolve to the nearest center.
    let mut covering = Vec::new();
    let mut covering_ties = Vec::new();
    for child in prev.q_set().iter() {
        let child_block = prev
            .block_for(child)
            .map(|b| b.omega_tilde.clone())
            .unwrap_or_else(|| SiteSet::new(vec![child.clone()]));
        let mut parents: Vec<&BlockEntry> =
            blocks.iter().filter(|b| child_block.is_subset_of(&b.omega)).collect();
        if parents.is_empty() {
            return Err(Error::GeometryViolation {
                generation: s_next,
                reason: format!("resonant site {:?} not covered by any new block", child),
            });
        }
        if parents.len() > 1 {
            covering_ties.push(child.clone());
            parents.sort_by_key(|b| child.dist_twice(&b.center));
        }
        covering.push((child.clone(), parents[0].center.clone()));
    }

    // Root of det T_{Ω̃−k}(z) by winding count + Newton, case-resolved.
    let contour = match decision.tag {
        CaseTag::C1 => Contour {
            center: theta_prev,
            radius: delta_prev.powf(18.0 / 19.0),
            expected_roots: 1,
        },
        CaseTag::C2 => {
            let center = match c2_branch.unwrap() {
                C2Branch::NearZero => Complex64::ZERO,
                C2Branch::NearHalf => Complex64::new(0.5, 0.0),
            };
            Contour { center, radius: delta_prev.powf(5.0 / 8.0), expected_roots: 2 }
        }
    };
    let cert =
        locate_theta_on_shape(&tilde_shape, cfg, &contour, decision.tag, &decision, theta_prev)?;
    let theta_next = cert.theta_c();
    let drift_ok = match decision.tag {
        CaseTag::C1 => (theta_next - theta_prev).norm() < delta_prev.powf(1.5),
        CaseTag::C2 => true,
    };

    let (q_plus, q_minus) = resonance_sets(&p_set, cfg, theta_next, delta_next);
    let (q_tilde_plus, q_tilde_minus) =
        resonance_sets(&p_set, cfg, theta_next, delta_next.powf(2.0 / 3.0));

    let gen = Generation {
        s: s_next,
        case_tag: Some(decision.tag),
        c2_branch,
        l_step: decision.l_step.clone(),
        coset_shift,
        theta: (theta_next.re, theta_next.im),
        p_set,
        q_plus,
        q_minus,
        q_tilde_plus,
        q_tilde_minus,
        omega_shape,
        tilde_shape,
        singular_shape,
        blocks,
        covering,
        covering_ties,
        truncated,
        zeta,
        zeta_tilde,
        drift_ok,
    };
    Ok((gen, cert))
}

struct Contour {
    center: Complex64,
    radius: f64,
    expected_roots: i64,
}

/// Winding number of det T_shape(z) along a circle, by phase unwrapping
/// of the log-determinant; node count doubles until the phase steps are
/// small and the count stabilizes.
fn winding_number(
    shape: &SiteSet,
    cfg: &ModelConfig,
    center: Complex64,
    radius: f64,
) -> Result<(i64, f64)> {
    let mut nodes = 64usize;
    let mut last: Option<i64> = None;
    loop {
        let mut phases = Vec::with_capacity(nodes);
        for j in 0..nodes {
            let angle = std::f64::consts::TAU * j as f64 / nodes as f64;
            let z = center + Complex64::from_polar(radius, angle);
            let m = assemble_t_at(shape, cfg, z);
            let ld = linalg::det_log(m.matrix())?;
            phases.push(ld.phase);
        }
        let mut total = 0.0;
        let mut max_step: f64 = 0.0;
        for j in 0..nodes {
            let next = phases[(j + 1) % nodes];
            let mut step = next - phases[j];
            while step > std::f64::consts::PI {
                step -= std::f64::consts::TAU;
            }
            while step <= -std::f64::consts::PI {
                step += std::f64::consts::TAU;
            }
            max_step = max_step.max(step.abs());
            total += step;
        }
        let winding = total / std::f64::consts::TAU;
        let rounded = winding.round();
        let clean = (winding - rounded).abs() < 1e-6 && max_step < 0.5 * std::f64::consts::PI;
        if clean && last == Some(rounded as i64) {
            return Ok((rounded as i64, winding));
        }
        last = if clean { Some(rounded as i64) } else { None };
        nodes *= 2;
        if nodes > 4096 {
            return Err(Error::ContourContaminated { winding: rounded as i64 });
        }
    }
}

/// Newton refinement of a determinant root using the trace form of the
/// log-derivative: dz = −1 / tr(M(z)^{-1} M'(z)), with M' diagonal.
fn newton_root(
    shape: &SiteSet,
    cfg: &ModelConfig,
    seed: Complex64,
    max_iter: usize,
) -> Result<(Complex64, f64)> {
    let mut z = seed;
    let mut last_step = f64::INFINITY;
    for _ in 0..max_iter {
        let m = assemble_t_at(shape, cfg, z);
        let lu = match linalg::lu_factor(m.matrix()) {
            Ok(lu) => lu,
            // An exactly singular matrix means z already sits on a root.
            Err(Error::NearSingular { .. }) => return Ok((z, 0.0)),
            Err(e) => return Err(e),
        };
        let inv = lu.inverse();
        let mut trace = Complex64::ZERO;
        for (i, site) in shape.iter().enumerate() {
            let vp = cfg.potential.deriv(z + site.dot_omega(&cfg.omega));
            trace += inv[[i, i]] * vp;
        }
        if trace.norm() < 1e-300 {
            break;
        }
        let step = -Complex64::ONE / trace;
        z += step;
        last_step = step.norm();
        if last_step < 1e-14 * z.norm().max(1.0) {
            break;
        }
    }
    Ok((z, last_step))
}

fn locate_theta_on_shape(
    shape: &SiteSet,
    cfg: &ModelConfig,
    contour: &Contour,
    tag: CaseTag,
    decision: &CaseDecision,
    theta_prev: Complex64,
) -> Result<RootCertificate> {
    let mut radius = contour.radius;
    for _attempt in 0..8 {
        let (winding, _raw) = match winding_number(shape, cfg, contour.center, radius) {
            Ok(w) => w,
            // A root sitting on (or hugging) the contour: move the rim.
            Err(Error::ContourContaminated { .. }) | Err(Error::NearSingular { .. }) => {
                radius /= 3.0;
                continue;
            }
            Err(e) => return Err(e),
        };
        if winding == 0 {
            return Err(Error::NoRoot);
        }
        if winding > contour.expected_roots {
            radius /= 3.0;
            continue;
        }
        // Seeds: the previous root (C1) or the near-resonance ±z1 (C2).
        let seeds: Vec<Complex64> = match tag {
            CaseTag::C1 => vec![theta_prev],
            CaseTag::C2 => {
                let half_l = half_site(&decision.l_step);
                let raw = Complex64::new(half_l.dot_omega(&cfg.omega), 0.0) + theta_prev;
                // Wrap to the representative nearest the contour center.
                let rel = raw - contour.center;
                let wrapped = Complex64::new(rel.re - rel.re.round(), rel.im);
                vec![contour.center + wrapped, contour.center - wrapped]
            }
        };
        let mut root: Option<(Complex64, f64)> = None;
        for seed in seeds {
            let (z, step) = newton_root(shape, cfg, seed, 80)?;
            if (z - contour.center).norm() <= radius * 1.5 && step < 1e-9 {
                root = Some((z, step));
                break;
            }
        }
        let (theta, residual) = match root {
            Some(r) => r,
            None => {
                // Fall back to a rim-interior seed sweep.
                let mut best: Option<(Complex64, f64)> = None;
                for j in 0..8 {
                    let angle = std::f64::consts::TAU * j as f64 / 8.0;
                    let seed = contour.center + Complex64::from_polar(radius * 0.3, angle);
                    if let Ok((z, step)) = newton_root(shape, cfg, seed, 80) {
                        if (z - contour.center).norm() <= radius * 1.5
                            && best.as_ref().map(|b| step < b.1).unwrap_or(true)
                        {
                            best = Some((z, step));
                        }
                    }
                }
                best.ok_or(Error::NoRoot)?
            }
        };
        // Mirror certification: −θ is a root of the even determinant.
        let paired = match newton_root(shape, cfg, -theta, 40) {
            Ok((zm, stepm)) => {
                stepm < 1e-9 && (zm + theta).norm() < 1e-8 * theta.norm().max(1.0)
            }
            Err(_) => false,
        };
        return Ok(RootCertificate {
            theta: (theta.re, theta.im),
            contour_center: (contour.center.re, contour.center.im),
            contour_radius: radius,
            winding,
            residual,
            paired,
        });
    }
    Err(Error::ContourContaminated { winding: -1 })
}

/// Goodness certificate for a candidate set Λ at stage s.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GoodnessCertificate {
    pub good: bool,
    /// (clause index, offending site) on failure.
    pub violation: Option<(usize, Site)>,
}

/// The two-clause s-good test: deeper resonant blocks inside Λ force
/// their parent blocks inside, and no s-scale singular center has its
/// enlarged block inside Λ.
pub fn is_good(lambda: &SiteSet, generations: &[Generation], s: usize) -> GoodnessCertificate {
    assert!(s < generations.len());
    for s_prime in 0..s {
        let gen = &generations[s_prime];
        let next = &generations[s_prime + 1];
        for child in gen.q_set().iter() {
            let child_tilde = gen
                .block_for(child)
                .map(|b| b.omega_tilde.clone())
                .unwrap_or_else(|| SiteSet::new(vec![child.clone()]));
            if !child_tilde.is_subset_of(lambda) {
                continue;
            }
            for parent in &next.blocks {
                if child_tilde.is_subset_of(&parent.omega)
                    && !parent.omega_tilde.is_subset_of(lambda)
                {
                    return GoodnessCertificate {
                        good: false,
                        violation: Some((1, child.clone())),
                    };
                }
            }
        }
    }
    let gen_s = &generations[s];
    let q_s = gen_s.q_set();
    for k in gen_s.p_set.iter() {
        let tilde = gen_s
            .block_for(k)
            .map(|b| b.omega_tilde.clone())
            .unwrap_or_else(|| SiteSet::new(vec![k.clone()]));
        if tilde.is_subset_of(lambda) && q_s.contains(k) {
            return GoodnessCertificate { good: false, violation: Some((2, k.clone())) };
        }
    }
    GoodnessCertificate { good: true, violation: None }
}

/// Green's function of T_Λ with a Sobolev norm profile and an
/// off-diagonal decay summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenReport {
    pub norms: Vec<NormProfile>,
    pub condition: f64,
    pub log10_abs_det: f64,
    /// Largest far-field row sum against the α1-norm envelope
    /// diam^{−α1} |T^{-1}|_{α1}; tracked as a ratio.
    pub offdiag_lhs: f64,
    pub offdiag_rhs: f64,
}

pub fn green(
    lambda: &SiteSet,
    cfg: &ModelConfig,
    alphas: &[f64],
) -> Result<(LatticeOperator, GreenReport)> {
    let t = assemble_t(lambda, cfg);
    let (inv, logdet, condition) = opalgebra::invert(&t)?;
    let mut all_alphas = vec![0.0];
    all_alphas.extend_from_slice(alphas);
    all_alphas.dedup();
    let norms = inv.norm_profile(&all_alphas);
    let alpha1 = cfg.hopping.alpha1;
    let diam = lambda.diam()?.max(1.0);
    let mut offdiag_lhs: f64 = 0.0;
    for (i, n) in lambda.iter().enumerate() {
        let mut far_sum = 0.0;
        for (j, m) in lambda.iter().enumerate() {
            if n.dist_twice(m) as f64 / 2.0 >= diam / 2.0 {
                far_sum += inv.matrix()[[i, j]].norm();
            }
        }
        offdiag_lhs = offdiag_lhs.max(far_sum);
    }
    let offdiag_rhs = diam.powf(-alpha1) * inv.sobolev_norm(alpha1);
    let report = GreenReport {
        norms,
        condition,
        log10_abs_det: logdet.log10_abs(),
        offdiag_lhs,
        offdiag_rhs,
    };
    Ok((inv, report))
}

/// One audited Green's-function bound, in log10.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundAuditRow {
    pub s: usize,
    pub bound_id: String,
    pub lhs_log10: f64,
    pub rhs_log10: f64,
    pub ratio_log10: f64,
    pub pass: bool,
    pub note: String,
}

impl BoundAuditRow {
    fn new(s: usize, bound_id: &str, lhs_log10: f64, rhs_log10: f64, note: String) -> Self {
        BoundAuditRow {
            s,
            bound_id: bound_id.to_string(),
            lhs_log10,
            rhs_log10,
            ratio_log10: lhs_log10 - rhs_log10,
            pass: lhs_log10 <= rhs_log10 + 1e-12,
            note,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BoundAuditReport {
    pub rows: Vec<BoundAuditRow>,
}

impl BoundAuditReport {
    /// (passed within log10 budget, total) for one bound id.
    pub fn pass_fraction(&self, bound_id: &str, budget_log10: f64) -> (usize, usize) {
        let relevant: Vec<&BoundAuditRow> =
            self.rows.iter().filter(|r| r.bound_id == bound_id).collect();
        let passed = relevant.iter().filter(|r| r.ratio_log10 <= budget_log10).count();
        (passed, relevant.len())
    }

    pub fn merge(&mut self, other: BoundAuditReport) {
        self.rows.extend(other.rows);
    }
}

/// Audits the quantitative Green's-function estimates on the blocks and
/// sample sets of a finished trace. Rows carry both sides in log10;
/// implicit-constant bounds are tracked as ratios, hard-constant bounds
/// as strict inequalities.
pub fn audit_bounds(
    trace: &MsaTrace,
    cfg: &ModelConfig,
    schedule: &ScaleSchedule,
    lambda_samples: &[SiteSet],
) -> Result<BoundAuditReport> {
    let mut report = BoundAuditReport::default();
    let v_sup = cfg.potential.sup_on_strip();
    for gen in trace.generations.iter().skip(1) {
        let s = gen.s;
        let delta_s_log10 = schedule.log10_delta(s);
        let theta_s = gen.theta_c();
        let q_s = gen.q_set();
        for block in &gen.blocks {
            if block.clipped {
                continue;
            }
            let t = assemble_t(&block.omega_tilde, cfg);
            let (inv, _, _) = match opalgebra::invert(&t) {
                Ok(x) => x,
                Err(e) => {
                    report.rows.push(BoundAuditRow::new(
                        s,
                        "tb0",
                        f64::INFINITY,
                        0.0,
                        format!("inversion failed at {:?}: {e}", block.center),
                    ));
                    continue;
                }
            };
            let phase = Complex64::new(cfg.theta + block.center.dot_omega(&cfg.omega), 0.0);
            let d_minus = torus_norm_c(phase - theta_s);
            let d_plus = torus_norm_c(phase + theta_s);
            let lhs = inv.sobolev_norm(0.0).log10();
            let rhs = -delta_s_log10 / 15.0 - d_minus.log10() - d_plus.log10();
            report.rows.push(BoundAuditRow::new(
                s,
                "tb0",
                lhs,
                rhs,
                format!("center {:?}", block.center),
            ));
            if !q_s.contains(&block.center) {
                for alpha in [1.0, cfg.hopping.alpha1] {
                    let lhs_a = inv.sobolev_norm(alpha).log10();
                    let rhs_a = alpha * gen.zeta.max(1.0).log10() - 7.0 / 3.0 * delta_s_log10;
                    report.rows.push(BoundAuditRow::new(
                        s,
                        "tba",
                        lhs_a,
                        rhs_a,
                        format!("alpha {alpha} center {:?}", block.center),
                    ));
                }
            }
        }
        // Schur window bounds on the reference (translated) block.
        if gen.blocks.iter().any(|b| !b.clipped) {
            let shape = &gen.tilde_shape;
            let singular = &gen.singular_shape;
            let delta_s = schedule.delta(s);
            for sample in 0..6 {
                let angle = std::f64::consts::TAU * sample as f64 / 6.0;
                let sigma = if sample % 2 == 0 { 1.0 } else { -1.0 };
                let z = sigma * theta_s + Complex64::from_polar(0.5 * delta_s.sqrt(), angle);
                let m = assemble_t_at(shape, cfg, z);
                let data = match opalgebra::schur(&m, singular) {
                    Ok(d) => d,
                    Err(e) => {
                        report.rows.push(BoundAuditRow::new(
                            s,
                            "ss",
                            f64::INFINITY,
                            0.0,
                            format!("schur failed: {e}"),
                        ));
                        continue;
                    }
                };
                let lhs = data.complement.sobolev_norm(0.0).log10();
                let rhs = (4.0 * v_sup).log10();
                report.rows.push(BoundAuditRow::new(
                    s,
                    "ss",
                    lhs,
                    rhs,
                    format!("window sample {sample}"),
                ));
                let det_lhs = data.log_det_s.log10_abs();
                let det_rhs = (2.0 / 75.0) * delta_s_log10
                    + torus_norm_c(z - theta_s).log10()
                    + torus_norm_c(z + theta_s).log10();
                // Lower bound: |det S| ≥ rhs, audited with sides swapped.
                report.rows.push(BoundAuditRow::new(
                    s,
                    "detss",
                    det_rhs,
                    det_lhs,
                    "determinant window lower bound (sides swapped)".into(),
                ));
            }
        }
        // Good-set bounds on the supplied sample sets.
        for (idx, lambda) in lambda_samples.iter().enumerate() {
            let margin = 2 * 50 * (schedule.n(s).min(i64::MAX as u64) as i64).saturating_pow(5);
            let family: Vec<SiteSet> = trace
                .generations
                .iter()
                .take(s + 1)
                .skip(1)
                .flat_map(|g| g.blocks.iter().map(|b| b.omega_tilde.clone()))
                .collect();
            let enlarged = match crate::lattice::align_enlarge(lambda, &family, margin) {
                Ok(e) => e,
                Err(e) => {
                    report.rows.push(BoundAuditRow::new(
                        s,
                        "tsg01",
                        f64::INFINITY,
                        0.0,
                        format!("enlargement failed on sample {idx}: {e}"),
                    ));
                    continue;
                }
            };
            if !is_good(&enlarged, &trace.generations, s).good {
                continue;
            }
            // Resolvent condition: every half-lattice point within 1/2 of
            // the enlarged set stays δ_s-clear of both roots.
            let clear = enlarged_star(&enlarged).iter().all(|k| {
                let phase = Complex64::new(cfg.theta + k.dot_omega(&cfg.omega), 0.0);
                torus_norm_c(phase - theta_s) > schedule.delta(s)
                    && torus_norm_c(phase + theta_s) > schedule.delta(s)
            });
            if !clear {
                continue;
            }
            let t = assemble_t(&enlarged, cfg);
            let (inv, _, _) = match opalgebra::invert(&t) {
                Ok(x) => x,
                Err(e) => {
                    report.rows.push(BoundAuditRow::new(
                        s,
                        "tsg01",
                        f64::INFINITY,
                        0.0,
                        format!("inversion failed on sample {idx}: {e}"),
                    ));
                    continue;
                }
            };
            let lhs = inv.sobolev_norm(0.0).log10();
            let rhs = -(32.0 / 15.0) * delta_s_log10;
            report
                .rows
                .push(BoundAuditRow::new(s, "tsg01", lhs, rhs, format!("sample {idx}")));
            for alpha in [1.0, cfg.hopping.alpha1] {
                let lhs_a = inv.sobolev_norm(alpha).log10();
                let rhs_a = alpha * gen.zeta.max(1.0).log10() - 14.0 / 3.0 * delta_s_log10;
                report.rows.push(BoundAuditRow::new(
                    s,
                    "tsg1",
                    lhs_a,
                    rhs_a,
                    format!("alpha {alpha} sample {idx}"),
                ));
            }
        }
    }
    Ok(report)
}

/// Λ*: half-lattice points within sup-distance 1/2 of Λ.
fn enlarged_star(lambda: &SiteSet) -> SiteSet {
    let d = lambda.sites().first().map(|s| s.dim()).unwrap_or(1);
    let mut offsets = Vec::new();
    let mut cursor = vec![-1i64; d];
    'outer: loop {
        offsets.push(cursor.clone());
        let mut axis = d;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] <= 1 {
                break;
            }
            cursor[axis] = -1;
        }
    }
    let mut members = Vec::new();
    for s in lambda.iter() {
        for off in &offsets {
            let twice: Vec<i64> = s.twice().iter().zip(off).map(|(c, o)| c + o).collect();
            members.push(Site::from_twice(twice));
        }
    }
    SiteSet::new(members)
}

/// Window and depth of one induction run.
pub struct MsaParams {
    pub window_radius: i64,
    pub s_max: usize,
}

/// Runs the induction inside a finite window until Q_s empties, the
/// schedule ends, or s_max is reached.
pub fn run_msa(
    cfg: &ModelConfig,
    schedule: &ScaleSchedule,
    params: &MsaParams,
) -> Result<MsaTrace> {
    let window = boxed(&Site::origin(cfg.d), params.window_radius);
    let theta0 = crate::model::solve_theta0(cfg)?;
    let mut generations = vec![initial_generation(cfg, schedule, &window, theta0)];
    let mut certificates = Vec::new();
    for _s in 0..params.s_max {
        let prev = generations.last().unwrap();
        if prev.q_set().is_empty() || prev.s + 1 >= schedule.len() {
            break;
        }
        let (gen, cert) = build_generation(cfg, schedule, &window, &generations)?;
        let stop = gen.p_set.is_empty();
        generations.push(gen);
        certificates.push(cert);
        if stop {
            break;
        }
    }
    Ok(MsaTrace { generations, certificates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HoppingSpec, PotentialSpec, GOLDEN_MEAN};

    fn power_law_config(epsilon: f64, theta: f64, energy: f64) -> ModelConfig {
        ModelConfig {
            d: 1,
            tau: 2.0,
            gamma: 0.2,
            omega: vec![GOLDEN_MEAN],
            epsilon,
            theta,
            energy,
            potential: PotentialSpec::cosine(0.05),
            hopping: HoppingSpec::power_law(6.0, 1.5, 9.0, 40),
        }
    }

    fn exploration_schedule(delta0: f64) -> ScaleSchedule {
        ScaleSchedule::exploration(0.2, 2.0, &[(1, delta0), (2, delta0.powi(3))]).unwrap()
    }

    #[test]
    fn paper_schedule_recursion() {
        let sched = ScaleSchedule::paper(1.0, 2.0, ScheduleSeed::Epsilon0(1e-90), 3).unwrap();
        // δ_0 = ε_0^{1/30} = 1e-3.
        assert!((sched.log10_delta(0) + 3.0).abs() < 1e-12);
        // N_1 = ⌊10^{3/60}⌋ = 1, log(γ/δ_1) = 30 log(γ/δ_0) → δ_1 = 1e-90.
        assert_eq!(sched.n(1), 1);
        assert!((sched.log10_delta(1) + 90.0).abs() < 1e-9);
        // N_2 = ⌊10^{90/60}⌋ = 31, δ_2 = 1e-2700.
        assert_eq!(sched.n(2), 31);
        assert!((sched.log10_delta(2) + 2700.0).abs() < 1e-6);
        // Exact recursion in log arithmetic.
        for s in 0..3 {
            let lhs = -sched.log10_delta(s + 1); // log(γ/δ_{s+1}), γ = 1
            let rhs = 30.0 * (-sched.log10_delta(s));
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn exploration_schedule_validation() {
        assert!(ScaleSchedule::exploration(0.2, 2.0, &[(2, 0.1), (3, 0.2)]).is_err());
        assert!(
            ScaleSchedule::exploration(0.2, 2.0, &[(1, 0.1), (2, 0.01), (2, 0.001)]).is_err()
        );
        assert!(ScaleSchedule::exploration(0.2, 2.0, &[(1, 0.1), (4, 0.01)]).is_ok());
    }

    #[test]
    fn initial_generation_matches_exhaustive_scan() {
        let delta0 = 0.05;
        let cfg = power_law_config(1e-3, 0.21, 0.3);
        let schedule = ScaleSchedule::exploration(0.2, 2.0, &[(1, delta0)]).unwrap();
        let window = boxed(&Site::origin(1), 50);
        let theta0 = crate::model::solve_theta0(&cfg).unwrap();
        let gen = initial_generation(&cfg, &schedule, &window, theta0);
        // Oracle: direct scan of the torus distances.
        let mut plus = Vec::new();
        let mut minus = Vec::new();
        for k in -50i64..=50 {
            let phase = cfg.theta + k as f64 * GOLDEN_MEAN;
            if torus_norm_c(Complex64::new(phase, 0.0) + theta0) < delta0 {
                plus.push(Site::from_ints(&[k]));
            }
            if torus_norm_c(Complex64::new(phase, 0.0) - theta0) < delta0 {
                minus.push(Site::from_ints(&[k]));
            }
        }
        assert_eq!(gen.q_plus, SiteSet::new(plus));
        assert_eq!(gen.q_minus, SiteSet::new(minus));
    }

    #[test]
    fn generic_theta_yields_empty_q0() {
        // δ_0 tiny: no site of a small window resonates for generic θ.
        let cfg = power_law_config(1e-3, 0.137, 0.3);
        let schedule = ScaleSchedule::exploration(0.2, 2.0, &[(1, 1e-9)]).unwrap();
        let window = boxed(&Site::origin(1), 30);
        let theta0 = crate::model::solve_theta0(&cfg).unwrap();
        let gen = initial_generation(&cfg, &schedule, &window, theta0);
        assert!(gen.q_set().is_empty());
        // θ = θ_0 puts the origin exactly on the minus resonance.
        let cfg2 = power_law_config(1e-3, theta0.re, 0.3);
        let gen2 = initial_generation(&cfg2, &schedule, &window, theta0);
        assert!(gen2.q_minus.contains(&Site::origin(1)));
    }

    fn engineered_c1(epsilon: f64, delta0: f64, k0: i64) -> (ModelConfig, ScaleSchedule) {
        // Place exactly one resonance at site k0 on the minus branch.
        let theta0_target = 0.15;
        let energy = (std::f64::consts::TAU * theta0_target).cos();
        let theta = theta0_target - k0 as f64 * GOLDEN_MEAN + 0.3 * delta0;
        let cfg = power_law_config(epsilon, theta.rem_euclid(1.0), energy);
        (cfg, exploration_schedule(delta0))
    }

    #[test]
    fn c1_single_resonance_block_geometry() {
        let (cfg, schedule) = engineered_c1(1e-3, 1e-4, 7);
        let params = MsaParams { window_radius: 60, s_max: 1 };
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        assert_eq!(trace.generations.len(), 2);
        let gen0 = &trace.generations[0];
        assert_eq!(gen0.q_set().len(), 1);
        assert!(gen0.q_minus.contains(&Site::from_ints(&[7])));
        let gen1 = &trace.generations[1];
        assert_eq!(gen1.case_tag, Some(CaseTag::C1));
        // Single center: P_1 = Q_0, blocks around k0 = 7 with core radii
        // N_1 = 1 and N_1^3 = 1.
        assert_eq!(gen1.p_set.len(), 1);
        let block = &gen1.blocks[0];
        assert_eq!(block.center, Site::from_ints(&[7]));
        assert!(boxed(&Site::from_ints(&[7]), 1).is_subset_of(&block.omega));
        // Shapes symmetric about the origin, singular set the center.
        assert!(gen1.tilde_shape.is_symmetric_about(&Site::origin(1)));
        assert_eq!(gen1.singular_shape, SiteSet::new(vec![Site::origin(1)]));
        assert!(!gen1.truncated);
        // Covering: the resonant site is covered by its own block.
        assert_eq!(gen1.covering.len(), 1);
        assert_eq!(gen1.covering[0].1, Site::from_ints(&[7]));
    }

    #[test]
    fn c1_theta_at_zero_coupling_is_theta0_exactly() {
        let (mut cfg, schedule) = engineered_c1(0.0, 1e-4, 3);
        cfg.epsilon = 0.0;
        let params = MsaParams { window_radius: 40, s_max: 1 };
        let theta0 = crate::model::solve_theta0(&cfg).unwrap();
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        let cert = &trace.certificates[0];
        assert_eq!(cert.winding, 1);
        assert!(cert.paired);
        assert!(
            (cert.theta_c() - theta0).norm() < 1e-12,
            "theta1 = {:?} vs theta0 = {theta0}",
            cert.theta
        );
    }

    #[test]
    fn c1_theta_drift_bounded_by_epsilon() {
        for eps in [1e-4, 1e-3] {
            let (cfg, schedule) = engineered_c1(eps, 1e-3, 5);
            let params = MsaParams { window_radius: 40, s_max: 1 };
            let theta0 = crate::model::solve_theta0(&cfg).unwrap();
            let trace = run_msa(&cfg, &schedule, &params).unwrap();
            let cert = &trace.certificates[0];
            assert_eq!(cert.winding, 1);
            assert!(cert.paired);
            assert!(
                (cert.theta_c() - theta0).norm() < eps,
                "drift {} exceeds eps {eps}",
                (cert.theta_c() - theta0).norm()
            );
        }
    }

    fn engineered_c2(
        epsilon: f64,
        delta0: f64,
        m: i64,
        near_half: bool,
    ) -> (ModelConfig, ScaleSchedule, f64) {
        // Double resonance: θ ≈ θ_0 (so 0 ∈ Q̃_0^-) and 2θ_0 + mω ≈ 0
        // (so m ∈ Q_0^+), arranged by θ_0 = −mω/2 mod 1 (plus 1/2 for the
        // near-half branch).
        let extra = if near_half { 0.5 } else { 0.0 };
        let raw = (-(m as f64) * GOLDEN_MEAN / 2.0 + extra).rem_euclid(1.0);
        let theta0_target = if raw > 0.5 { 1.0 - raw } else { raw };
        let energy = (std::f64::consts::TAU * theta0_target).cos();
        let theta = (theta0_target + 0.2 * delta0).rem_euclid(1.0);
        let cfg = power_law_config(epsilon, theta, energy);
        (cfg, exploration_schedule(delta0), theta0_target)
    }

    #[test]
    fn c2_double_resonance_midpoint_geometry() {
        let (cfg, schedule, theta0_target) = engineered_c2(1e-4, 1e-3, 6, false);
        let params = MsaParams { window_radius: 40, s_max: 1 };
        let theta0 = crate::model::solve_theta0(&cfg).unwrap();
        assert!((theta0.re - theta0_target).abs() < 1e-9);
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        let gen1 = &trace.generations[1];
        assert_eq!(gen1.case_tag, Some(CaseTag::C2));
        // l_0 = ±m with integer centers (m even ⇒ midpoints integral).
        assert_eq!(gen1.l_step.twice()[0].abs(), 2 * 6);
        assert!(!gen1.p_set.is_empty());
        // Singular shape is the mirror pair ±l_0/2.
        assert_eq!(gen1.singular_shape.len(), 2);
        assert!(gen1.singular_shape.is_symmetric_about(&Site::origin(1)));
        // Roots come as a certified ± pair with winding 2.
        let cert = &trace.certificates[0];
        assert_eq!(cert.winding, 2);
        assert!(cert.paired);
        // θ_1 close to the engineered near-resonance ±z_1.
        let z1 = gen1.l_step.coord_f64(0) / 2.0 * GOLDEN_MEAN + theta0.re;
        let z1 = Complex64::new(z1 - z1.round(), 0.0);
        let t1 = cert.theta_c();
        assert!(
            (t1 - z1).norm() < 1e-2 || (t1 + z1).norm() < 1e-2,
            "theta1 = {t1} far from ±z1 = {z1}"
        );
    }

    #[test]
    fn c2_near_half_branch_detected() {
        let (cfg, schedule, _) = engineered_c2(1e-4, 1e-3, 5, true);
        let params = MsaParams { window_radius: 40, s_max: 1 };
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        let gen1 = &trace.generations[1];
        assert_eq!(gen1.case_tag, Some(CaseTag::C2));
        assert_eq!(gen1.c2_branch, Some(C2Branch::NearHalf));
        let cert = &trace.certificates[0];
        // Roots live near 1/2: the contour is centered there.
        assert!((cert.contour_center.0 - 0.5).abs() < 1e-12);
        assert_eq!(cert.winding, 2);
    }

    #[test]
    fn empty_q0_terminates_immediately() {
        let cfg = power_law_config(1e-3, 0.137, 0.3);
        let schedule = exploration_schedule(1e-9);
        let params = MsaParams { window_radius: 30, s_max: 3 };
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        assert_eq!(trace.generations.len(), 1);
        assert!(trace.certificates.is_empty());
    }

    #[test]
    fn symmetric_block_determinant_is_even() {
        let (cfg, schedule) = engineered_c1(1e-3, 1e-4, 0);
        let params = MsaParams { window_radius: 40, s_max: 1 };
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        let shape = &trace.generations[1].tilde_shape;
        assert!(shape.is_symmetric_about(&Site::origin(1)));
        for z in [
            Complex64::new(0.3, 0.01),
            Complex64::new(0.11, -0.02),
            Complex64::new(0.02, 0.0),
        ] {
            let d_plus = linalg::det_log(assemble_t_at(shape, &cfg, z).matrix()).unwrap();
            let d_minus = linalg::det_log(assemble_t_at(shape, &cfg, -z).matrix()).unwrap();
            let rel = d_plus.ratio(&d_minus) - Complex64::ONE;
            assert!(rel.norm() < 1e-9, "determinant not even: {}", rel.norm());
        }
    }

    #[test]
    fn distance_symmetry_between_signed_resonance_sets() {
        // dist(Q̃^-, Q^+) = dist(Q̃^+, Q^-), tested inside a window large
        // enough to contain the mirrored pairs.
        let (cfg, schedule, _) = engineered_c2(1e-4, 1e-2, 4, false);
        let window = boxed(&Site::origin(1), 300);
        let theta0 = crate::model::solve_theta0(&cfg).unwrap();
        let gen = initial_generation(&cfg, &schedule, &window, theta0);
        if !gen.q_plus.is_empty()
            && !gen.q_minus.is_empty()
            && !gen.q_tilde_plus.is_empty()
            && !gen.q_tilde_minus.is_empty()
        {
            let d1 = dist_twice(&gen.q_tilde_minus, &gen.q_plus).unwrap();
            let d2 = dist_twice(&gen.q_tilde_plus, &gen.q_minus).unwrap();
            assert!((d1 - d2).abs() <= 2, "asymmetric distances {d1} vs {d2} (twice units)");
        } else {
            panic!("engineered configuration produced empty resonance sets");
        }
    }

    #[test]
    fn goodness_clauses() {
        let (cfg, schedule) = engineered_c1(1e-3, 1e-4, 0);
        let params = MsaParams { window_radius: 60, s_max: 1 };
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        let gens = &trace.generations;
        // A set avoiding Q_0 entirely is 0-good.
        let clean = boxed(&Site::from_ints(&[30]), 5);
        assert!(is_good(&clean, gens, 0).good);
        // A set containing the resonant site is not 0-good (clause 2).
        let dirty = boxed(&Site::origin(1), 3);
        let cert = is_good(&dirty, gens, 0);
        assert!(!cert.good);
        assert_eq!(cert.violation.unwrap().0, 2);
        // Containing the child block but not the parent block violates
        // clause 1 at stage 1 (only when the parent is strictly larger).
        let gen1 = &gens[1];
        let parent_block = &gen1.blocks[0];
        if parent_block.omega_tilde.len() > 1 {
            let child_only = SiteSet::new(vec![Site::origin(1)]);
            let cert1 = is_good(&child_only, gens, 1);
            assert!(!cert1.good);
            assert_eq!(cert1.violation.unwrap().0, 1);
        }
        // The full enlarged block, aligned, is 1-good when the center is
        // no longer 1-resonant.
        if gen1.q_set().is_empty() {
            let aligned = crate::lattice::align_enlarge(
                &boxed(&Site::origin(1), 20),
                &[gen1.blocks[0].omega_tilde.clone()],
                2 * 50,
            )
            .unwrap();
            assert!(is_good(&aligned, gens, 1).good);
        }
    }

    #[test]
    fn membership_condition_fs_holds_in_window() {
        let (cfg, schedule) = engineered_c1(1e-3, 1e-4, 2);
        let params = MsaParams { window_radius: 50, s_max: 1 };
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        let gen1 = &trace.generations[1];
        let delta1 = schedule.delta(1);
        let theta1 = gen1.theta_c();
        // Every coset site of the window within 10 δ_1^{2/3} of ∓θ_1 must
        // be in P_1.
        for w in boxed(&Site::origin(1), 50).iter() {
            let k = w.add(&gen1.coset_shift);
            let phase = Complex64::new(cfg.theta + k.dot_omega(&cfg.omega), 0.0);
            let close = torus_norm_c(phase - theta1).min(torus_norm_c(phase + theta1))
                < 10.0 * delta1.powf(2.0 / 3.0);
            if close {
                assert!(
                    gen1.p_set.contains(&k),
                    "site {k:?} satisfies the resonance condition but is outside P_1"
                );
            }
        }
    }

    #[test]
    fn green_zero_coupling_diagonal() {
        let mut cfg = power_law_config(0.0, 0.21, 0.3);
        cfg.epsilon = 0.0;
        let lambda = boxed(&Site::origin(1), 10);
        let (inv, report) = green(&lambda, &cfg, &[2.0]).unwrap();
        let mut want: f64 = 0.0;
        for k in lambda.iter() {
            let v = (std::f64::consts::TAU * (cfg.theta + k.coord_f64(0) * GOLDEN_MEAN)).cos();
            want = want.max(1.0 / (v - cfg.energy).abs());
        }
        let got = report.norms.iter().find(|p| p.alpha == 0.0).unwrap().value;
        assert!((got - want).abs() < 1e-10 * want);
        for (i, _) in lambda.iter().enumerate() {
            for (j, _) in lambda.iter().enumerate() {
                if i != j {
                    assert_eq!(inv.matrix()[[i, j]], Complex64::ZERO);
                }
            }
        }
    }

    #[test]
    fn green_matches_schur_assembly() {
        let cfg = power_law_config(1e-2, 0.21, 0.3);
        let lambda = boxed(&Site::origin(1), 8);
        let (inv, report) = green(&lambda, &cfg, &[]).unwrap();
        let t = assemble_t(&lambda, &cfg);
        let inner = SiteSet::new(vec![Site::from_ints(&[0]), Site::from_ints(&[3])]);
        let assembled = opalgebra::schur_assembled_inverse(&t, &inner).unwrap();
        for i in 0..lambda.len() {
            for j in 0..lambda.len() {
                let diff = (inv.matrix()[[i, j]] - assembled.matrix()[[i, j]]).norm();
                assert!(diff <= 1e-9 * report.condition);
            }
        }
    }

    #[test]
    fn audit_bounds_on_engineered_c1() {
        let (cfg, schedule) = engineered_c1(1e-3, 1e-3, 4);
        let params = MsaParams { window_radius: 60, s_max: 1 };
        let trace = run_msa(&cfg, &schedule, &params).unwrap();
        let samples = vec![boxed(&Site::from_ints(&[25]), 10)];
        let report = audit_bounds(&trace, &cfg, &schedule, &samples).unwrap();
        let (tb0_pass, tb0_total) = report.pass_fraction("tb0", 1.0);
        assert!(tb0_total >= 1);
        assert_eq!(tb0_pass, tb0_total, "tb0 rows failed: {:?}", report.rows);
        let (ss_pass, ss_total) = report.pass_fraction("ss", 0.0);
        assert_eq!(ss_pass, ss_total);
    }
}
