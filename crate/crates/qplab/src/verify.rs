//! Randomized verification suites for the norm calculus: every inequality
//! the induction machinery leans on, checked on seeded random instances
//! with a hard relative-slack budget. A failure carries the full instance
//! for replay.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::lattice::{boxed, Site, SiteSet};
use crate::linalg;
use crate::opalgebra::{
    self, adjugate, compose, invert, perturb_left_inverse, perturbation_constant,
    rows_constant, schur, tame_constant, LatticeOperator,
};

/// Relative slack allowed on every audited inequality.
pub const SLACK: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Counterexample {
    pub suite: String,
    pub instance: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// Everything needed to replay the instance.
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub instances: usize,
    /// max of lhs/rhs across instances (1 is the inequality boundary).
    pub max_ratio: f64,
    pub failures: Vec<Counterexample>,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub outcomes: Vec<SuiteOutcome>,
    pub seed: u64,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.pass())
    }
}

// Test hook: the QPLAB_TAME_K_SCALE environment variable lets a mutation
// test corrupt the tame constant used by the suites and watch the
// verifier catch it.
fn env_tame_scale() -> f64 {
    std::env::var("QPLAB_TAME_K_SCALE")
        .ok()
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(1.0)
}

struct SuiteRun {
    name: &'static str,
    instances: usize,
    max_ratio: f64,
    failures: Vec<Counterexample>,
}

impl SuiteRun {
    fn new(name: &'static str, instances: usize) -> Self {
        SuiteRun { name, instances, max_ratio: 0.0, failures: Vec::new() }
    }

    fn record(&mut self, instance: usize, lhs: f64, rhs: f64, payload: serde_json::Value) {
        let ratio = if rhs == 0.0 {
            if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            lhs / rhs
        };
        self.max_ratio = self.max_ratio.max(ratio);
        if lhs > rhs * (1.0 + SLACK) {
            self.failures.push(Counterexample {
                suite: self.name.to_string(),
                instance,
                lhs,
                rhs,
                payload,
            });
        }
    }

    fn finish(self) -> SuiteOutcome {
        SuiteOutcome {
            suite: self.name.to_string(),
            instances: self.instances,
            max_ratio: self.max_ratio,
            failures: self.failures,
        }
    }
}

fn random_set(rng: &mut ChaCha8Rng) -> SiteSet {
    if rng.gen_bool(0.7) {
        boxed(&Site::from_ints(&[rng.gen_range(-3..=3)]), rng.gen_range(2..=4))
    } else {
        boxed(&Site::from_ints(&[rng.gen_range(-2..=2), rng.gen_range(-2..=2)]), 1)
    }
}

fn random_op(rng: &mut ChaCha8Rng, rows: &SiteSet, cols: &SiteSet) -> LatticeOperator {
    LatticeOperator::from_fn(rows.clone(), cols.clone(), |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

fn op_payload(ops: &[(&str, &LatticeOperator)]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (name, op) in ops {
        map.insert(name.to_string(), serde_json::to_value(op).unwrap());
    }
    serde_json::Value::Object(map)
}

/// Shift by `r` sites on a 1-d box: the extremal family for the tame
/// inequality (a chain of n shifts realizes the offset n·r, and the
/// inequality saturates as the box grows).
fn shift_op(set: &SiteSet, r: i64) -> LatticeOperator {
    let mut op = LatticeOperator::zeros(set.clone(), set.clone());
    let shift = Site::from_ints(&[r]);
    let sites: Vec<Site> = set.sites().to_vec();
    for from in &sites {
        let to = from.add(&shift);
        if let (Some(row), Some(col)) = (op.rows().index_of(&to), op.cols().index_of(from)) {
            op.matrix_mut()[[row, col]] = Complex64::ONE;
        }
    }
    op
}

fn tame_suite(instances: usize, rng: &mut ChaCha8Rng, k_scale: f64) -> SuiteOutcome {
    let mut run = SuiteRun::new("tame", instances);
    for i in 0..instances {
        let n = 2 + (i % 3);
        // Every fourth instance chains aligned shifts, which run close to
        // the constant's boundary and keep the suite sensitive to a
        // corrupted K(n, α); the rest are dense random draws.
        let (set, alpha, ops): (SiteSet, f64, Vec<LatticeOperator>) = if i % 4 == 0 {
            let set = boxed(&Site::origin(1), 4);
            let alpha = rng.gen_range(1.0..2.0);
            let r = (8 / n as i64).max(1);
            let ops = (0..n).map(|_| shift_op(&set, r)).collect();
            (set, alpha, ops)
        } else {
            let set = random_set(rng);
            let alpha = rng.gen_range(0.0..6.0);
            let ops = (0..n).map(|_| random_op(rng, &set, &set)).collect();
            (set, alpha, ops)
        };
        let _ = &set;
        let mut prod = ops[0].clone();
        for op in &ops[1..] {
            prod = compose(&prod, op).unwrap();
        }
        let lhs = prod.sobolev_norm(alpha);
        let mut sum = 0.0;
        for j in 0..n {
            let mut term = ops[j].sobolev_norm(alpha);
            for (k, other) in ops.iter().enumerate() {
                if k != j {
                    term *= other.sobolev_norm(0.0);
                }
            }
            sum += term;
        }
        let rhs = k_scale * tame_constant(n, alpha) * sum;
        let payload = if lhs > rhs * (1.0 + SLACK) {
            let named: Vec<(String, &LatticeOperator)> =
                ops.iter().enumerate().map(|(k, o)| (format!("m{k}"), o)).collect();
            let refs: Vec<(&str, &LatticeOperator)> =
                named.iter().map(|(s, o)| (s.as_str(), *o)).collect();
            json!({"alpha": alpha, "n": n, "ops": op_payload(&refs)})
        } else {
            serde_json::Value::Null
        };
        run.record(i, lhs, rhs, payload);
    }
    run.finish()
}

fn smoothing_suite(instances: usize, rng: &mut ChaCha8Rng) -> (SuiteOutcome, SuiteOutcome) {
    let mut smo1 = SuiteRun::new("smo1", instances);
    let mut smo2 = SuiteRun::new("smo2", instances);
    for i in 0..instances {
        let set = random_set(rng);
        let m = random_op(rng, &set, &set);
        let cut = rng.gen_range(1..=3i64);
        let alpha = rng.gen_range(1.0..6.0);
        let alpha_p = rng.gen_range(0.0..alpha);
        let (near, far) = m.band_split(cut);
        let lhs1 = far.sobolev_norm(alpha_p);
        let rhs1 = (1.0 + cut as f64).powf(-(alpha - alpha_p)) * far.sobolev_norm(alpha);
        smo1.record(i, lhs1, rhs1, json!({"alpha": alpha, "alpha_p": alpha_p, "cut": cut}));
        let lhs2 = near.sobolev_norm(alpha);
        let rhs2 = (1.0 + (cut + 1) as f64).powf(alpha - alpha_p) * near.sobolev_norm(alpha_p);
        smo2.record(i, lhs2, rhs2, json!({"alpha": alpha, "alpha_p": alpha_p, "cut": cut}));
    }
    (smo1.finish(), smo2.finish())
}

fn rows_suite(instances: usize, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    let mut run = SuiteRun::new("rows", instances);
    let b1_d1 = rows_constant(3.5, 1);
    let b1_d2 = rows_constant(4.5, 2);
    for i in 0..instances {
        let set = random_set(rng);
        let d = set.sites()[0].dim();
        let (alpha0, b1) = if d == 1 { (3.5, b1_d1) } else { (4.5, b1_d2) };
        let m = random_op(rng, &set, &set);
        let alpha = rng.gen_range(0.0..4.0);
        let lhs = m.sobolev_norm(alpha);
        let max_row = m
            .rows()
            .iter()
            .map(|k| m.row_norm(k, alpha + alpha0))
            .fold(0.0, f64::max);
        run.record(i, lhs, b1 * max_row, json!({"alpha": alpha, "alpha0": alpha0}));
    }
    run.finish()
}

fn hadamard_suite(instances: usize, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    let mut run = SuiteRun::new("hadamard", instances);
    for i in 0..instances {
        let set = boxed(&Site::origin(1), rng.gen_range(2..=3));
        let m = random_op(rng, &set, &set);
        let adj = adjugate(&m, opalgebra::ADJUGATE_CAP).unwrap();
        let n = set.len();
        let entry_bound = m.sobolev_norm(0.0).powi(n as i32 - 1);
        let max_entry = adj.max_abs_entry();
        run.record(2 * i, max_entry, entry_bound, op_payload(&[("m", &m)]));
        let total_bound = (n * n) as f64 * entry_bound;
        run.record(2 * i + 1, adj.sobolev_norm(0.0), total_bound, op_payload(&[("m", &m)]));
    }
    run.finish()
}

fn schur_suite(
    instances: usize,
    rng: &mut ChaCha8Rng,
) -> (SuiteOutcome, SuiteOutcome, SuiteOutcome) {
    let mut det_mag = SuiteRun::new("schur_det_log10", instances);
    let mut det_phase = SuiteRun::new("schur_det_phase", instances);
    let mut sandwich = SuiteRun::new("schur_sandwich", instances);
    let mut done = 0usize;
    while done < instances {
        let set = boxed(&Site::origin(1), 3);
        let inner = SiteSet::new(vec![
            Site::from_ints(&[rng.gen_range(-3..=0)]),
            Site::from_ints(&[rng.gen_range(1..=3)]),
        ]);
        let mut m = random_op(rng, &set, &set);
        // Damp cross blocks into the |B|_0, |C|_0 <= 1 hypothesis.
        let sites: Vec<Site> = set.sites().to_vec();
        for (i, r) in sites.iter().enumerate() {
            for (j, c) in sites.iter().enumerate() {
                if inner.contains(r) != inner.contains(c) {
                    m.matrix_mut()[[i, j]] *= Complex64::new(0.08, 0.0);
                }
            }
        }
        let data = match schur(&m, &inner) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let full = match linalg::det_log(m.matrix()) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let (minv, _, cond_m) = match invert(&m) {
            Ok(x) => x,
            Err(_) => continue,
        };
        if cond_m > 1e8 {
            continue; // outside working precision of the identity checks
        }
        let (sinv, _, _) = match invert(&data.complement) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let (ainv, _, _) = match invert(&data.a_block) {
            Ok(x) => x,
            Err(_) => continue,
        };
        // det M = det A det S: log10 magnitudes within 1e-8, phases too.
        let mag_diff = ((data.log_det_a.ln_abs + data.log_det_s.ln_abs - full.ln_abs)
            / std::f64::consts::LN_10)
            .abs();
        det_mag.record(done, mag_diff, 1e-8, op_payload(&[("m", &m)]));
        let mut phase = (data.log_det_a.phase + data.log_det_s.phase - full.phase).abs();
        phase = phase.min((std::f64::consts::TAU - phase).abs());
        det_phase.record(done, phase, 1e-8, op_payload(&[("m", &m)]));
        // |S^{-1}|_0 <= |M^{-1}|_0 < 4(1+|A^{-1}|_0)^2 (1+|S^{-1}|_0).
        let s = sinv.sobolev_norm(0.0);
        let mfull = minv.sobolev_norm(0.0);
        let a = ainv.sobolev_norm(0.0);
        sandwich.record(3 * done, s, mfull, op_payload(&[("m", &m)]));
        sandwich.record(
            3 * done + 1,
            mfull,
            4.0 * (1.0 + a).powi(2) * (1.0 + s),
            op_payload(&[("m", &m)]),
        );
        done += 1;
    }
    (det_mag.finish(), det_phase.finish(), sandwich.finish())
}

fn det_perturbation_suite(instances: usize, rng: &mut ChaCha8Rng) -> SuiteOutcome {
    let mut run = SuiteRun::new("det_perturbation", instances);
    for i in 0..instances {
        let set = boxed(&Site::origin(1), rng.gen_range(2..=3));
        let a = random_op(rng, &set, &set);
        let eps_scale = 10f64.powf(rng.gen_range(-4.0..-1.0));
        let b = random_op(rng, &set, &set).scale(Complex64::new(eps_scale, 0.0));
        let m_bound = a.sobolev_norm(0.0);
        let eps = b.sobolev_norm(0.0);
        let da = linalg::det_log(a.matrix()).map(|l| l.to_complex()).unwrap_or(Complex64::ZERO);
        let dab = linalg::det_log(&(a.matrix() + b.matrix()))
            .map(|l| l.to_complex())
            .unwrap_or(Complex64::ZERO);
        let n = set.len() as f64;
        let bound = eps * n * n * (m_bound + eps).powf(n - 1.0);
        run.record(i, (dab - da).norm(), bound, op_payload(&[("a", &a), ("b", &b)]));
    }
    run.finish()
}

fn perturbation_suite(instances: usize, rng: &mut ChaCha8Rng) -> (SuiteOutcome, SuiteOutcome) {
    let mut pa0 = SuiteRun::new("pa0", instances);
    let mut paa = SuiteRun::new("paa", instances);
    let mut done = 0usize;
    while done < instances {
        // Alternate square inverses and tall left inverses.
        let tall = done % 2 == 1;
        let cols = boxed(&Site::origin(1), 2);
        let rows = if tall { boxed(&Site::origin(1), 3) } else { cols.clone() };
        let m = random_op(rng, &rows, &cols);
        let n_op = if tall {
            // Moore-Penrose left inverse (M^† M)^{-1} M^†.
            let mt = LatticeOperator::new(
                cols.clone(),
                rows.clone(),
                Array2::from_shape_fn((cols.len(), rows.len()), |(i, j)| {
                    m.matrix()[[j, i]].conj()
                }),
            );
            let gram = compose(&mt, &m).unwrap();
            let (gram_inv, _, cond) = match invert(&gram) {
                Ok(x) => x,
                Err(_) => continue,
            };
            if cond > 1e6 {
                continue;
            }
            compose(&gram_inv, &mt).unwrap()
        } else {
            match invert(&m) {
                Ok((inv, _, cond)) if cond <= 1e6 => inv,
                _ => continue,
            }
        };
        let raw = random_op(rng, &rows, &cols);
        let scale = rng.gen_range(0.05..0.5)
            / (n_op.sobolev_norm(0.0) * raw.sobolev_norm(0.0)).max(1e-12);
        let p = raw.scale(Complex64::new(scale, 0.0));
        let np = match perturb_left_inverse(&n_op, &p) {
            Ok(x) => x,
            Err(_) => continue,
        };
        pa0.record(
            done,
            np.sobolev_norm(0.0),
            2.0 * n_op.sobolev_norm(0.0),
            op_payload(&[("m", &m), ("p", &p)]),
        );
        let alpha = rng.gen_range(0.5..5.0);
        let lhs = np.sobolev_norm(alpha);
        let rhs = perturbation_constant(alpha)
            * (n_op.sobolev_norm(alpha) + n_op.sobolev_norm(0.0).powi(2) * p.sobolev_norm(alpha));
        paa.record(done, lhs, rhs, op_payload(&[("m", &m), ("p", &p)]));
        done += 1;
    }
    (pa0.finish(), paa.finish())
}

fn power_suite(instances: usize, rng: &mut ChaCha8Rng, k_scale: f64) -> SuiteOutcome {
    let mut run = SuiteRun::new("kn", instances);
    for i in 0..instances {
        // Equal coordinates saturate the power inequality exactly, so a
        // quarter of the draws use them.
        let n = rng.gen_range(2..=8usize);
        let alpha = rng.gen_range(0.0..6.0);
        let xs: Vec<f64> = if i % 4 == 0 {
            vec![rng.gen_range(0.5..2.0); n]
        } else {
            (0..n).map(|_| rng.gen_range(0.0..3.0)).collect()
        };
        let lhs = xs.iter().sum::<f64>().powf(alpha);
        let rhs =
            k_scale * tame_constant(n, alpha) * xs.iter().map(|x| x.powf(alpha)).sum::<f64>();
        run.record(i, lhs, rhs, json!({"alpha": alpha, "xs": xs}));
    }
    run.finish()
}

/// Runs every suite at the given instance count with a scale factor
/// applied to the tame constant (1 for the true constant; mutation tests
/// shrink it and expect failures).
pub fn run_suites_scaled(instances: usize, seed: u64, k_scale: f64) -> VerifyReport {
    let mut report = VerifyReport { outcomes: Vec::new(), seed };
    if instances == 0 {
        return report;
    }
    let stream =
        |tag: u64| ChaCha8Rng::seed_from_u64(seed ^ (tag.wrapping_mul(0x9e3779b97f4a7c15)));

    report.outcomes.push(tame_suite(instances, &mut stream(1), k_scale));
    let (smo1, smo2) = smoothing_suite(instances, &mut stream(2));
    report.outcomes.push(smo1);
    report.outcomes.push(smo2);
    report.outcomes.push(rows_suite(instances, &mut stream(3)));
    report.outcomes.push(hadamard_suite(instances, &mut stream(4)));
    let (det_mag, det_phase, sandwich) = schur_suite(instances, &mut stream(5));
    report.outcomes.push(det_mag);
    report.outcomes.push(det_phase);
    report.outcomes.push(sandwich);
    report.outcomes.push(det_perturbation_suite(instances, &mut stream(6)));
    let (pa0, paa) = perturbation_suite(instances, &mut stream(7));
    report.outcomes.push(pa0);
    report.outcomes.push(paa);
    report.outcomes.push(power_suite(instances, &mut stream(8), k_scale));
    report
}

/// Runs every suite; the tame-constant scale comes from the environment
/// hook (1 unless a mutation test planted something else).
pub fn run_suites(instances: usize, seed: u64) -> VerifyReport {
    run_suites_scaled(instances, seed, env_tame_scale())
}
