//! Finite groupoids given by explicit tables, with length functions and
//! atomic measures on the unit space.

use std::collections::HashMap;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::exact::{ratio_int, Ratio};

pub type ElementId = usize;
pub type AtomId = usize;

/// Subset of the unit space, as a bitmask over atom indices (≤ 64 atoms).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct AtomSet(pub u64);

impl AtomSet {
    pub const EMPTY: AtomSet = AtomSet(0);

    pub fn full(n: usize) -> AtomSet {
        assert!(n <= 64);
        if n == 64 {
            AtomSet(u64::MAX)
        } else {
            AtomSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(a: AtomId) -> AtomSet {
        AtomSet(1u64 << a)
    }

    pub fn from_atoms<I: IntoIterator<Item = AtomId>>(atoms: I) -> AtomSet {
        let mut s = AtomSet::EMPTY;
        for a in atoms {
            s.insert(a);
        }
        s
    }

    pub fn contains(&self, a: AtomId) -> bool {
        self.0 & (1u64 << a) != 0
    }

    pub fn insert(&mut self, a: AtomId) {
        self.0 |= 1u64 << a;
    }

    pub fn remove(&mut self, a: AtomId) {
        self.0 &= !(1u64 << a);
    }

    pub fn union(&self, other: AtomSet) -> AtomSet {
        AtomSet(self.0 | other.0)
    }

    pub fn intersect(&self, other: AtomSet) -> AtomSet {
        AtomSet(self.0 & other.0)
    }

    pub fn minus(&self, other: AtomSet) -> AtomSet {
        AtomSet(self.0 & !other.0)
    }

    pub fn complement_in(&self, universe: AtomSet) -> AtomSet {
        AtomSet(universe.0 & !self.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(&self, other: AtomSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let a = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(a)
            }
        })
    }

    pub fn atoms(&self) -> Vec<AtomId> {
        self.iter().collect()
    }
}

impl fmt::Debug for AtomSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// Subset of the element set.
pub type ElementSet = std::collections::BTreeSet<ElementId>;

/// A finite groupoid: indexed elements with source, range, inverse and a
/// partial composition table. Units are listed per atom index; `source`
/// and `range` take values in atom indices.
#[derive(Clone, Debug)]
pub struct FiniteGroupoid {
    pub n_elements: usize,
    /// units[a] = element id of the unit at atom a
    pub units: Vec<ElementId>,
    pub source: Vec<AtomId>,
    pub range: Vec<AtomId>,
    pub inverse: Vec<ElementId>,
    pub compose: HashMap<(ElementId, ElementId), ElementId>,
    atom_of: Vec<Option<AtomId>>,
}

impl FiniteGroupoid {
    pub fn new(
        n_elements: usize,
        units: Vec<ElementId>,
        source: Vec<AtomId>,
        range: Vec<AtomId>,
        inverse: Vec<ElementId>,
        compose: HashMap<(ElementId, ElementId), ElementId>,
    ) -> FiniteGroupoid {
        let mut atom_of = vec![None; n_elements];
        for (a, &u) in units.iter().enumerate() {
            atom_of[u] = Some(a);
        }
        FiniteGroupoid {
            n_elements,
            units,
            source,
            range,
            inverse,
            compose,
            atom_of,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.units.len()
    }

    pub fn unit_set(&self) -> ElementSet {
        self.units.iter().copied().collect()
    }

    pub fn all_elements(&self) -> ElementSet {
        (0..self.n_elements).collect()
    }

    pub fn is_unit(&self, e: ElementId) -> bool {
        self.atom_of[e].is_some()
    }

    pub fn atom_of(&self, e: ElementId) -> Option<AtomId> {
        self.atom_of[e]
    }

    pub fn compose2(&self, g1: ElementId, g2: ElementId) -> Option<ElementId> {
        self.compose.get(&(g1, g2)).copied()
    }

    /// r(K·A) for an arbitrary element set: range points of arrows in K
    /// whose source lies in A.
    pub fn range_saturation(&self, set: &ElementSet, a: AtomSet) -> AtomSet {
        let mut out = AtomSet::EMPTY;
        for &e in set {
            if a.contains(self.source[e]) {
                out.insert(self.range[e]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub axiom: String,
    pub witness: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, axiom: &str, witness: String) {
        self.violations.push(Violation {
            axiom: axiom.to_string(),
            witness,
        });
    }
}

/// Checks every groupoid axiom on the tables and reports violations with
/// witnesses; violations are data, not failures.
pub fn validate(g: &FiniteGroupoid) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let n = g.n_elements;

    for e in 0..n {
        if g.source[e] >= g.n_atoms() || g.range[e] >= g.n_atoms() {
            rep.push("index-range", format!("element {e} has out-of-range source/range"));
            return rep;
        }
        if g.inverse[e] >= n {
            rep.push("index-range", format!("element {e} has out-of-range inverse"));
            return rep;
        }
    }

    for (a, &u) in g.units.iter().enumerate() {
        if g.source[u] != a || g.range[u] != a {
            rep.push("unit-self", format!("unit {u} at atom {a}"));
        }
        if g.inverse[u] != u {
            rep.push("unit-inverse", format!("unit {u}"));
        }
    }

    for e in 0..n {
        if g.inverse[g.inverse[e]] != e {
            rep.push("involution", format!("element {e}"));
        }
        let inv = g.inverse[e];
        if g.source[inv] != g.range[e] || g.range[inv] != g.source[e] {
            rep.push("inverse-swaps-source-range", format!("element {e}"));
        }
    }

    // compose defined exactly on composable pairs
    for g1 in 0..n {
        for g2 in 0..n {
            let composable = g.source[g1] == g.range[g2];
            match (composable, g.compose2(g1, g2)) {
                (true, None) => rep.push("compose-total", format!("pair ({g1},{g2})")),
                (false, Some(_)) => rep.push("compose-domain", format!("pair ({g1},{g2})")),
                (true, Some(p)) => {
                    if g.source[p] != g.source[g2] || g.range[p] != g.range[g1] {
                        rep.push("compose-endpoints", format!("pair ({g1},{g2})"));
                    }
                }
                (false, None) => {}
            }
        }
    }

    for e in 0..n {
        let ur = g.units[g.range[e]];
        let us = g.units[g.source[e]];
        if g.compose2(ur, e) != Some(e) {
            rep.push("left-unit", format!("element {e}"));
        }
        if g.compose2(e, us) != Some(e) {
            rep.push("right-unit", format!("element {e}"));
        }
        if g.compose2(e, g.inverse[e]) != Some(ur) {
            rep.push("right-inverse", format!("element {e}"));
        }
        if g.compose2(g.inverse[e], e) != Some(us) {
            rep.push("left-inverse", format!("element {e}"));
        }
    }

    // associativity over all composable triples
    for g1 in 0..n {
        for g2 in 0..n {
            if g.source[g1] != g.range[g2] {
                continue;
            }
            let p12 = match g.compose2(g1, g2) {
                Some(p) => p,
                None => continue,
            };
            for g3 in 0..n {
                if g.source[g2] != g.range[g3] {
                    continue;
                }
                let p23 = match g.compose2(g2, g3) {
                    Some(p) => p,
                    None => continue,
                };
                if g.compose2(p12, g3) != g.compose2(g1, p23) {
                    rep.push("associativity", format!("triple ({g1},{g2},{g3})"));
                }
            }
        }
    }

    rep
}

/// A length function: non-negative rational per element, zero on units,
/// symmetric and subadditive.
#[derive(Clone, Debug)]
pub struct LengthFunction {
    pub values: Vec<Ratio>,
}

impl LengthFunction {
    pub fn new(values: Vec<Ratio>) -> LengthFunction {
        LengthFunction { values }
    }

    pub fn len_of(&self, e: ElementId) -> &Ratio {
        &self.values[e]
    }

    pub fn validate(&self, g: &FiniteGroupoid) -> ValidationReport {
        let mut rep = ValidationReport::default();
        for e in 0..g.n_elements {
            if self.values[e].is_negative() {
                rep.push("length-nonnegative", format!("element {e}"));
            }
            if g.is_unit(e) && !self.values[e].is_zero() {
                rep.push("length-zero-on-units", format!("unit {e}"));
            }
            if self.values[g.inverse[e]] != self.values[e] {
                rep.push("length-symmetric", format!("element {e}"));
            }
        }
        for (&(g1, g2), &p) in &g.compose {
            if self.values[p] > &self.values[g1] + &self.values[g2] {
                rep.push("length-subadditive", format!("pair ({g1},{g2})"));
            }
        }
        rep
    }

    /// Integer coarsening ℓ̃(γ) = inf{n ∈ ℕ | ℓ(γ) ≤ n} = ⌈ℓ(γ)⌉.
    pub fn integral_coarsening(&self) -> LengthFunction {
        LengthFunction {
            values: self.values.iter().map(|v| v.ceil()).collect(),
        }
    }

    pub fn max_over(&self, set: &ElementSet) -> Ratio {
        set.iter()
            .map(|&e| self.values[e].clone())
            .max()
            .unwrap_or_else(|| ratio_int(0))
    }
}

/// The closed ball {γ | ℓ(γ) ≤ n}.
pub fn ball(g: &FiniteGroupoid, ell: &LengthFunction, n: &Ratio) -> ElementSet {
    (0..g.n_elements)
        .filter(|&e| ell.values[e] <= *n)
        .collect()
}

/// Strictly positive atomic weights on the unit space; the σ-algebra is
/// the full power set of atoms.
#[derive(Clone, Debug)]
pub struct AtomicMeasureSpace {
    pub weights: Vec<Ratio>,
    pub total_mass: Ratio,
}

impl AtomicMeasureSpace {
    pub fn new(weights: Vec<Ratio>) -> Result<AtomicMeasureSpace, String> {
        if weights.len() > 64 {
            return Err(format!("at most 64 atoms supported, got {}", weights.len()));
        }
        for (a, w) in weights.iter().enumerate() {
            if !w.is_positive() {
                return Err(format!("weight of atom {a} must be strictly positive"));
            }
        }
        let total_mass = weights.iter().fold(Ratio::zero(), |acc, w| acc + w);
        Ok(AtomicMeasureSpace { weights, total_mass })
    }

    pub fn uniform(n: usize) -> AtomicMeasureSpace {
        AtomicMeasureSpace::new(vec![ratio_int(1); n]).unwrap()
    }

    /// Uniform probability weights 1/n.
    pub fn uniform_probability(n: usize) -> AtomicMeasureSpace {
        AtomicMeasureSpace::new(vec![Ratio::new(1.into(), (n as i64).into()); n]).unwrap()
    }

    pub fn n_atoms(&self) -> usize {
        self.weights.len()
    }

    pub fn is_probability(&self) -> bool {
        self.total_mass == ratio_int(1)
    }

    /// Rescales to a probability measure.
    pub fn normalized(&self) -> AtomicMeasureSpace {
        let t = self.total_mass.clone();
        AtomicMeasureSpace::new(self.weights.iter().map(|w| w / &t).collect()).unwrap()
    }

    pub fn measure(&self, a: AtomSet) -> Ratio {
        a.iter().fold(Ratio::zero(), |acc, i| acc + &self.weights[i])
    }

    pub fn full_set(&self) -> AtomSet {
        AtomSet::full(self.n_atoms())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{pair_groupoid, FiniteMetricSpace};
    use crate::exact::ratio;

    #[test]
    fn atomset_basics() {
        let a = AtomSet::from_atoms([0, 2, 5]);
        assert_eq!(a.len(), 3);
        assert!(a.contains(2) && !a.contains(1));
        assert_eq!(a.atoms(), vec![0, 2, 5]);
        let u = AtomSet::full(6);
        assert_eq!(a.complement_in(u).atoms(), vec![1, 3, 4]);
    }

    #[test]
    fn pair_groupoid_on_3_points_validates() {
        let x = FiniteMetricSpace::complete(3);
        let (g, ell, _mu) = pair_groupoid(&x, AtomicMeasureSpace::uniform(3));
        assert!(validate(&g).ok());
        assert!(ell.validate(&g).ok());
    }

    #[test]
    fn planted_involution_defect_is_reported() {
        let x = FiniteMetricSpace::complete(3);
        let (mut g, _, _) = pair_groupoid(&x, AtomicMeasureSpace::uniform(3));
        // break the involution on the first non-unit element
        let e = (0..g.n_elements).find(|&e| !g.is_unit(e)).unwrap();
        g.inverse[e] = e;
        let rep = validate(&g);
        assert!(!rep.ok());
        assert!(rep.violations.iter().any(|v| v.axiom.contains("inverse")
            || v.axiom.contains("involution")));
    }

    #[test]
    fn transformation_groupoid_z4_validates() {
        use crate::constructions::{transformation_groupoid, GroupAction};
        let action = GroupAction::cyclic(4);
        let (g, ell, _mu) =
            transformation_groupoid(&action, AtomicMeasureSpace::uniform_probability(4)).unwrap();
        // exhaustive axiom check over all composable pairs and triples
        assert!(validate(&g).ok());
        assert!(ell.validate(&g).ok());
    }

    #[test]
    fn ball_examples() {
        // 4-cycle pair groupoid: B_0 = units, B_1 has 12 elements, B_diam = all
        let x = FiniteMetricSpace::cycle(4);
        let (g, ell, _mu) = pair_groupoid(&x, AtomicMeasureSpace::uniform(4));
        let b0 = ball(&g, &ell, &ratio_int(0));
        assert_eq!(b0, g.unit_set());
        let b1 = ball(&g, &ell, &ratio_int(1));
        assert_eq!(b1.len(), 12);
        let ball_diam = ball(&g, &ell, &ratio_int(2));
        assert_eq!(ball_diam.len(), g.n_elements);
        // monotone in n
        assert!(b0.is_subset(&b1));
        assert!(b1.is_subset(&ball_diam));
    }

    #[test]
    fn integral_coarsening_ceils() {
        let ell = LengthFunction::new(vec![ratio(0, 1), ratio(3, 2), ratio(2, 1)]);
        let t = ell.integral_coarsening();
        assert_eq!(t.values, vec![ratio_int(0), ratio_int(2), ratio_int(2)]);
    }

    #[test]
    fn measure_space_rejects_zero_weight() {
        assert!(AtomicMeasureSpace::new(vec![ratio_int(1), ratio_int(0)]).is_err());
    }
}
