//! Finite-volume laboratory for quasi-periodic operators on Z^d with
//! power-law long-range hopping and cosine-type analytic potentials.
//!
//! The operator under study is
//!
//! ```text
//! (H(θ) ψ)(n) = ε Σ_l φ(n−l) ψ(l) + v(θ + n·ω) ψ(n),   n ∈ Z^d,
//! ```
//!
//! restricted to finite subsets Λ ⊂ Z^d. Everything here works at desk
//! scale: boxes of a few thousand sites, dense complex linear algebra,
//! and explicit bookkeeping of the multi-scale resonance geometry
//! (resonant blocks, Schur complements, determinant roots ±θ_s) that
//! controls the Green's function T_Λ^{-1}(E;θ) = (H_Λ(θ) − E)^{-1}.
//!
//! Module map:
//! - [`lattice`] — sites on (1/2)Z^d, boxes, sup-metric, block alignment;
//! - [`opalgebra`] — weighted-ℓ¹ Sobolev norms and the operator calculus
//!   (tame products, smoothing, rows estimate, left-inverse perturbation,
//!   adjugates, Schur complements, log-scale determinants);
//! - [`linalg`] — the dense complex LU / Hermitian eigensolver backend;
//! - [`model`] — potentials, hopping tables, Diophantine certificates,
//!   operator assembly, Aubry duals;
//! - [`msa`] — scale schedules, resonant generations, root tracking,
//!   good-set classification and bound audits;
//! - [`experiments`] — eigenfunction decay, Poisson identity residuals,
//!   dynamical moments, IDS Hölder modulus, dual delocalization proxies;
//! - [`verify`] — randomized suites for every norm inequality;
//! - [`config`] / [`report`] — run configuration and deterministic output.

pub mod config;
pub mod experiments;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod msa;
pub mod opalgebra;
pub mod report;
pub mod verify;

mod error;

pub use error::{Error, Result};
