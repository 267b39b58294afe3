//! Geometry of Z^d and its half-integer shifts.
//!
//! Resonance centers live on shifted lattices Z^d + (1/2)Σ l_i, so every
//! coordinate is stored as its exact double (`twice` units). Distances and
//! diameters in the sup metric are then plain integer arithmetic in twice
//! units and membership tests never touch floating point.

use std::fmt;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// A point of (1/2)Z^d, stored as doubled integer coordinates.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site {
    twice: Vec<i64>,
}

impl Site {
    /// Site from doubled coordinates (1 means 1/2).
    pub fn from_twice(twice: Vec<i64>) -> Self {
        assert!(!twice.is_empty(), "sites need dimension >= 1");
        Site { twice }
    }

    /// Site with integer coordinates.
    pub fn from_ints(coords: &[i64]) -> Self {
        Site::from_twice(coords.iter().map(|c| 2 * c).collect())
    }

    /// Origin of Z^d.
    pub fn origin(d: usize) -> Self {
        Site::from_twice(vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.twice.len()
    }

    pub fn twice(&self) -> &[i64] {
        &self.twice
    }

    /// True if every coordinate is an integer (all doubled coords even).
    pub fn is_integer(&self) -> bool {
        self.twice.iter().all(|c| c % 2 == 0)
    }

    pub fn coord_f64(&self, i: usize) -> f64 {
        self.twice[i] as f64 / 2.0
    }

    /// Sup-metric distance to `other`, in twice units.
    pub fn dist_twice(&self, other: &Site) -> i64 {
        self.twice
            .iter()
            .zip(&other.twice)
            .map(|(a, b)| (a - b).abs())
            .max()
            .expect("nonempty coords")
    }

    /// Sup norm ||n||, in twice units.
    pub fn norm_twice(&self) -> i64 {
        self.twice.iter().map(|c| c.abs()).max().expect("nonempty coords")
    }

    pub fn neg(&self) -> Site {
        Site::from_twice(self.twice.iter().map(|c| -c).collect())
    }

    pub fn add(&self, other: &Site) -> Site {
        Site::from_twice(self.twice.iter().zip(&other.twice).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Site) -> Site {
        Site::from_twice(self.twice.iter().zip(&other.twice).map(|(a, b)| a - b).collect())
    }

    /// Midpoint (self + other)/2; exact because twice units halve to
    /// integers whenever both summands share a coset.
    pub fn midpoint(&self, other: &Site) -> Site {
        Site::from_twice(
            self.twice
                .iter()
                .zip(&other.twice)
                .map(|(a, b)| {
                    let s = a + b;
                    assert!(s % 2 == 0, "midpoint leaves (1/2)Z^d");
                    s / 2
                })
                .collect(),
        )
    }

    /// Mirror through the point `c`: returns 2c - self.
    pub fn mirror_through(&self, c: &Site) -> Site {
        Site::from_twice(self.twice.iter().zip(&c.twice).map(|(a, b)| 2 * b - a).collect())
    }

    /// Inner product with a frequency vector, n·ω.
    pub fn dot_omega(&self, omega: &[f64]) -> f64 {
        self.twice
            .iter()
            .zip(omega)
            .map(|(c, w)| (*c as f64) / 2.0 * w)
            .sum()
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.twice.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if c % 2 == 0 {
                write!(f, "{}", c / 2)?;
            } else {
                write!(f, "{}/2", c)?;
            }
        }
        write!(f, ")")
    }
}

/// A finite set of sites in canonical (lexicographic) order, optionally
/// remembering the point it was built around. Equality is membership
/// only; the remembered center is bookkeeping, not identity.
#[derive(Clone, Debug)]
pub struct SiteSet {
    members: Vec<Site>,
    center: Option<Site>,
}

impl PartialEq for SiteSet {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
    }
}

impl Eq for SiteSet {}

impl SiteSet {
    pub fn new(mut members: Vec<Site>) -> Self {
        members.sort();
        members.dedup();
        SiteSet { members, center: None }
    }

    pub fn with_center(mut self, center: Site) -> Self {
        self.center = Some(center);
        self
    }

    pub fn empty() -> Self {
        SiteSet { members: Vec::new(), center: None }
    }

    pub fn center(&self) -> Option<&Site> {
        self.center.as_ref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = &Site> {
        self.members.iter()
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.members.binary_search(site).is_ok()
    }

    /// Position of `site` in the canonical ordering; this is the matrix
    /// index map used by `opalgebra`.
    pub fn index_of(&self, site: &Site) -> Option<usize> {
        self.members.binary_search(site).ok()
    }

    pub fn is_subset_of(&self, other: &SiteSet) -> bool {
        self.members.iter().all(|s| other.contains(s))
    }

    pub fn intersects(&self, other: &SiteSet) -> bool {
        let (small, large) =
            if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.members.iter().any(|s| large.contains(s))
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        let mut members = self.members.clone();
        members.extend(other.members.iter().cloned());
        let mut set = SiteSet::new(members);
        set.center = self.center.clone();
        set
    }

    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        let members = self
            .members
            .iter()
            .filter(|s| !other.contains(s))
            .cloned()
            .collect();
        SiteSet { members, center: self.center.clone() }
    }

    pub fn intersection(&self, other: &SiteSet) -> SiteSet {
        let members = self
            .members
            .iter()
            .filter(|s| other.contains(s))
            .cloned()
            .collect();
        SiteSet { members, center: self.center.clone() }
    }

    pub fn translate(&self, shift: &Site) -> SiteSet {
        let members = self.members.iter().map(|s| s.add(shift)).collect();
        let center = self.center.as_ref().map(|c| c.add(shift));
        let mut set = SiteSet::new(members);
        set.center = center;
        set
    }

    /// True if s ∈ set ⇔ 2c − s ∈ set.
    pub fn is_symmetric_about(&self, c: &Site) -> bool {
        self.members.iter().all(|s| self.contains(&s.mirror_through(c)))
    }

    /// Diameter in twice units. Boxes make this O(d·n); general sets fall
    /// back to coordinate extents, which is exact for the sup metric.
    pub fn diam_twice(&self) -> Result<i64> {
        if self.members.is_empty() {
            return Err(Error::EmptySet);
        }
        let d = self.members[0].dim();
        let mut diam = 0i64;
        for i in 0..d {
            let lo = self.members.iter().map(|s| s.twice[i]).min().unwrap();
            let hi = self.members.iter().map(|s| s.twice[i]).max().unwrap();
            diam = diam.max(hi - lo);
        }
        Ok(diam)
    }

    pub fn diam(&self) -> Result<f64> {
        Ok(self.diam_twice()? as f64 / 2.0)
    }
}

impl Serialize for SiteSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.members.len()))?;
        for site in &self.members {
            seq.serialize_element(site.twice())?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for SiteSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct SetVisitor;
        impl<'de> Visitor<'de> for SetVisitor {
            type Value = SiteSet;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a sequence of doubled-integer coordinate tuples")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<SiteSet, A::Error> {
                let mut members = Vec::new();
                while let Some(tuple) = seq.next_element::<Vec<i64>>()? {
                    members.push(Site::from_twice(tuple));
                }
                Ok(SiteSet::new(members))
            }
        }
        deserializer.deserialize_seq(SetVisitor)
    }
}

/// Box Λ_L(c): all *integer* sites within sup-distance `radius` of
/// `center`. The center may sit on the half lattice.
pub fn boxed(center: &Site, radius: i64) -> SiteSet {
    assert!(radius >= 0, "box radius must be nonnegative");
    let d = center.dim();
    let radius_twice = 2 * radius;
    // Integer site n: |2 n_i - c_i| <= 2L, so n_i ranges over
    // ceil((c_i - 2L)/2) ..= floor((c_i + 2L)/2).
    let ranges: Vec<(i64, i64)> = (0..d)
        .map(|i| {
            let c = center.twice()[i];
            let lo = (c - radius_twice).div_euclid(2) + ((c - radius_twice).rem_euclid(2) != 0) as i64;
            let hi = (c + radius_twice).div_euclid(2);
            (lo, hi)
        })
        .collect();
    let mut members = Vec::new();
    let mut cursor: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return SiteSet::empty().with_center(center.clone());
    }
    loop {
        members.push(Site::from_ints(&cursor));
        let mut axis = d;
        loop {
            if axis == 0 {
                let set = SiteSet::new(members);
                return set.with_center(center.clone());
            }
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] <= ranges[axis].1 {
                break;
            }
            cursor[axis] = ranges[axis].0;
        }
    }
}

/// Λ_L(Λ'): integer sites within sup-distance `radius` of the set.
pub fn boxed_around(set: &SiteSet, radius: i64) -> SiteSet {
    let mut members = Vec::new();
    for s in set.iter() {
        members.extend(boxed(s, radius).sites().iter().cloned());
    }
    SiteSet::new(members)
}

/// min over pairs of the sup distance, in twice units.
pub fn dist_twice(a: &SiteSet, b: &SiteSet) -> Result<i64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut best = i64::MAX;
    for s in a.iter() {
        for t in b.iter() {
            best = best.min(s.dist_twice(t));
        }
    }
    Ok(best)
}

/// Distance between two sets and the diameter of the first, as exact
/// rationals rendered in f64 (denominator 2).
pub fn metrics(a: &SiteSet, b: &SiteSet) -> Result<(f64, f64)> {
    let dist = dist_twice(a, b)? as f64 / 2.0;
    let diam = a.diam()?;
    Ok((dist, diam))
}

/// Enlarge `base` to the least superset aligned with the supplied block
/// family: for every block B, the result meets B only by containing it.
///
/// The fixpoint exists because each absorption strictly grows the set, and
/// a well-formed family keeps all absorbed sites within `margin_twice` of
/// `base` (the 50·N_s^5 margin); exceeding it reports a malformed family.
pub fn align_enlarge(
    base: &SiteSet,
    blocks: &[SiteSet],
    margin_twice: i64,
) -> Result<SiteSet> {
    let mut current = base.clone();
    let mut absorbed = vec![false; blocks.len()];
    let mut total_absorbed = 0usize;
    loop {
        let mut changed = false;
        for (i, block) in blocks.iter().enumerate() {
            if absorbed[i] || block.is_empty() {
                continue;
            }
            if current.intersects(block) && !block.is_subset_of(&current) {
                current = current.union(block);
                absorbed[i] = true;
                total_absorbed += 1;
                changed = true;
            } else if block.is_subset_of(&current) {
                absorbed[i] = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Margin audit: every site gained must stay near the base set.
    for site in current.iter() {
        if !base.contains(site) {
            let d = base
                .iter()
                .map(|s| s.dist_twice(site))
                .min()
                .ok_or(Error::EmptySet)?;
            if d > margin_twice {
                return Err(Error::EnlargeMarginExceeded {
                    margin: margin_twice,
                    absorbed: total_absorbed,
                });
            }
        }
    }
    Ok(current)
}
