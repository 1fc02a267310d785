//! Bisections, decomposable sets, saturation r(K·A) and Radon-Nikodym
//! ratio tables.

use std::collections::{BTreeSet, HashMap};

use crate::exact::{ratio_int, Ratio};
use crate::groupoid::{
    AtomId, AtomSet, AtomicMeasureSpace, ElementId, ElementSet, FiniteGroupoid, LengthFunction,
};

/// A subset of the groupoid on which both source and range are injective,
/// together with the induced partial bijection τ of the unit space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bisection {
    /// sorted member element ids
    pub members: Vec<ElementId>,
    tau: Vec<Option<AtomId>>,
    src: AtomSet,
    rng: AtomSet,
}

impl Bisection {
    pub fn new(g: &FiniteGroupoid, members: ElementSet) -> Result<Bisection, String> {
        let mut tau = vec![None; g.n_atoms()];
        let mut src = AtomSet::EMPTY;
        let mut rng = AtomSet::EMPTY;
        for &e in &members {
            let s = g.source[e];
            let r = g.range[e];
            if src.contains(s) {
                return Err(format!("source not injective at atom {s}"));
            }
            if rng.contains(r) {
                return Err(format!("range not injective at atom {r}"));
            }
            src.insert(s);
            rng.insert(r);
            tau[s] = Some(r);
        }
        Ok(Bisection {
            members: members.into_iter().collect(),
            tau,
            src,
            rng,
        })
    }

    pub fn units(g: &FiniteGroupoid) -> Bisection {
        Bisection::new(g, g.unit_set()).expect("unit set is a bisection")
    }

    pub fn source_set(&self) -> AtomSet {
        self.src
    }

    pub fn range_set(&self) -> AtomSet {
        self.rng
    }

    pub fn tau(&self, x: AtomId) -> Option<AtomId> {
        self.tau[x]
    }

    /// τ_K(A ∩ s(K)).
    pub fn apply(&self, a: AtomSet) -> AtomSet {
        let mut out = AtomSet::EMPTY;
        for x in a.intersect(self.src).iter() {
            out.insert(self.tau[x].expect("in source set"));
        }
        out
    }

    pub fn inverse(&self, g: &FiniteGroupoid) -> Bisection {
        let members: ElementSet = self.members.iter().map(|&e| g.inverse[e]).collect();
        Bisection::new(g, members).expect("inverse of a bisection is a bisection")
    }

    /// K₁·K₂ = {γ₁γ₂ | s(γ₁) = r(γ₂)}; the product of bisections is a
    /// bisection with τ = τ₁∘τ₂.
    pub fn compose(&self, g: &FiniteGroupoid, other: &Bisection) -> Bisection {
        let mut members = ElementSet::new();
        for &e2 in &other.members {
            let mid = g.range[e2];
            if let Some(&e1) = self
                .members
                .iter()
                .find(|&&e1| g.source[e1] == mid)
            {
                members.insert(g.compose2(e1, e2).expect("composable"));
            }
        }
        Bisection::new(g, members).expect("product of bisections is a bisection")
    }

    pub fn is_units(&self, g: &FiniteGroupoid) -> bool {
        self.members.len() == g.n_atoms() && self.members.iter().all(|&e| g.is_unit(e))
    }

    pub fn max_length(&self, ell: &LengthFunction) -> Ratio {
        self.members
            .iter()
            .map(|&e| ell.values[e].clone())
            .max()
            .unwrap_or_else(|| ratio_int(0))
    }
}

/// A finite union of bisections with optional unital/symmetric
/// decomposition metadata and a length bound.
#[derive(Clone, Debug)]
pub struct DecomposableSet {
    pub pieces: Vec<Bisection>,
    /// σ with pieces[σ(i)] = pieces[i]⁻¹, when the piece list is
    /// inverse-closed
    pub sigma: Option<Vec<usize>>,
    pub unital_index: Option<usize>,
    pub length_bound: Ratio,
}

impl DecomposableSet {
    /// Builds from raw pieces: drops empty pieces, deduplicates identical
    /// ones and infers unital/symmetric metadata.
    pub fn from_pieces(
        g: &FiniteGroupoid,
        ell: &LengthFunction,
        pieces: Vec<Bisection>,
    ) -> DecomposableSet {
        let mut seen: BTreeSet<Vec<ElementId>> = BTreeSet::new();
        let mut kept = Vec::new();
        for p in pieces {
            if p.members.is_empty() {
                continue;
            }
            if seen.insert(p.members.clone()) {
                kept.push(p);
            }
        }
        let unital_index = kept.iter().position(|p| p.is_units(g));
        let sigma = {
            let index: HashMap<&[ElementId], usize> = kept
                .iter()
                .enumerate()
                .map(|(i, p)| (p.members.as_slice(), i))
                .collect();
            let mut map = Vec::with_capacity(kept.len());
            let mut complete = true;
            for p in &kept {
                let inv: Vec<ElementId> = {
                    let mut v: Vec<ElementId> =
                        p.members.iter().map(|&e| g.inverse[e]).collect();
                    v.sort_unstable();
                    v
                };
                match index.get(inv.as_slice()) {
                    Some(&j) => map.push(j),
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete && !kept.is_empty() {
                Some(map)
            } else {
                None
            }
        };
        let length_bound = kept
            .iter()
            .map(|p| p.max_length(ell))
            .max()
            .unwrap_or_else(|| ratio_int(0));
        DecomposableSet {
            pieces: kept,
            sigma,
            unital_index,
            length_bound,
        }
    }

    pub fn units_only(g: &FiniteGroupoid, ell: &LengthFunction) -> DecomposableSet {
        DecomposableSet::from_pieces(g, ell, vec![Bisection::units(g)])
    }

    pub fn n_pieces(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_unital(&self) -> bool {
        self.unital_index.is_some()
    }

    pub fn is_symmetric(&self) -> bool {
        self.sigma.is_some()
    }

    pub fn element_set(&self) -> ElementSet {
        self.pieces
            .iter()
            .flat_map(|p| p.members.iter().copied())
            .collect()
    }

    /// r(K·A) = ⋃ᵢ τ_{Kᵢ}(A ∩ s(Kᵢ)).
    pub fn saturate(&self, a: AtomSet) -> AtomSet {
        let mut out = AtomSet::EMPTY;
        for p in &self.pieces {
            out = out.union(p.apply(a));
        }
        out
    }

    pub fn invert(&self, g: &FiniteGroupoid, ell: &LengthFunction) -> DecomposableSet {
        DecomposableSet::from_pieces(
            g,
            ell,
            self.pieces.iter().map(|p| p.inverse(g)).collect(),
        )
    }

    /// Piecewise products Kᵢ·Kⱼ with empty pieces dropped.
    pub fn compose(
        &self,
        g: &FiniteGroupoid,
        ell: &LengthFunction,
        other: &DecomposableSet,
    ) -> DecomposableSet {
        let mut pieces = Vec::new();
        for p1 in &self.pieces {
            for p2 in &other.pieces {
                pieces.push(p1.compose(g, p2));
            }
        }
        DecomposableSet::from_pieces(g, ell, pieces)
    }

    pub fn union(
        &self,
        g: &FiniteGroupoid,
        ell: &LengthFunction,
        other: &DecomposableSet,
    ) -> DecomposableSet {
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        DecomposableSet::from_pieces(g, ell, pieces)
    }

    /// K^m by repeated composition; stops early once a fixed point is
    /// reached (common for unital K, which only grow).
    pub fn power(&self, g: &FiniteGroupoid, ell: &LengthFunction, m: u32) -> DecomposableSet {
        if m == 0 {
            return DecomposableSet::units_only(g, ell);
        }
        let mut acc = self.clone();
        let mut sig = piece_signature(&acc);
        for _ in 1..m {
            let next = acc.compose(g, ell, self);
            let nsig = piece_signature(&next);
            if nsig == sig {
                return next;
            }
            sig = nsig;
            acc = next;
        }
        acc
    }
}

fn piece_signature(k: &DecomposableSet) -> BTreeSet<Vec<ElementId>> {
    k.pieces.iter().map(|p| p.members.clone()).collect()
}

/// Greedy colouring of the conflict graph (two elements conflict iff they
/// share a source or a range); colour classes are bisections. Piece count
/// is at most 1 + the maximum conflict degree.
pub fn decompose(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    set: &ElementSet,
) -> DecomposableSet {
    let mut class_src: Vec<AtomSet> = Vec::new();
    let mut class_rng: Vec<AtomSet> = Vec::new();
    let mut classes: Vec<ElementSet> = Vec::new();
    for &e in set {
        let s = g.source[e];
        let r = g.range[e];
        let slot = (0..classes.len())
            .find(|&i| !class_src[i].contains(s) && !class_rng[i].contains(r));
        match slot {
            Some(i) => {
                classes[i].insert(e);
                class_src[i].insert(s);
                class_rng[i].insert(r);
            }
            None => {
                classes.push(ElementSet::from([e]));
                class_src.push(AtomSet::singleton(s));
                class_rng.push(AtomSet::singleton(r));
            }
        }
    }
    let pieces = classes
        .into_iter()
        .map(|c| Bisection::new(g, c).expect("colour classes are bisections"))
        .collect();
    DecomposableSet::from_pieces(g, ell, pieces)
}

/// Decomposes S ∪ S⁻¹ ∪ 𝒢⁽⁰⁾ into a unital symmetric decomposition:
/// units as their own piece, the rest greedily coloured and closed under
/// piecewise inverse.
pub fn decompose_unital_symmetric(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    set: &ElementSet,
) -> DecomposableSet {
    let mut closed: ElementSet = set.clone();
    closed.extend(set.iter().map(|&e| g.inverse[e]));
    for &u in &g.units {
        closed.remove(&u);
    }
    let base = decompose(g, ell, &closed);
    let mut pieces = vec![Bisection::units(g)];
    for p in &base.pieces {
        pieces.push(p.clone());
        pieces.push(p.inverse(g));
    }
    let k = DecomposableSet::from_pieces(g, ell, pieces);
    debug_assert!(k.is_unital() && k.is_symmetric());
    k
}

/// Radon-Nikodym ratios ℜ(Kᵢ, x) = μ(τ_{Kᵢ}(x)) / μ(x) per piece and
/// source atom.
#[derive(Clone, Debug)]
pub struct RNTable {
    pub ratios: Vec<HashMap<AtomId, Ratio>>,
}

pub fn rn_table(k: &DecomposableSet, mu: &AtomicMeasureSpace) -> RNTable {
    let ratios = k
        .pieces
        .iter()
        .map(|p| {
            p.source_set()
                .iter()
                .map(|x| {
                    let y = p.tau(x).expect("in source set");
                    (x, &mu.weights[y] / &mu.weights[x])
                })
                .collect()
        })
        .collect();
    RNTable { ratios }
}

impl RNTable {
    pub fn ratio(&self, piece: usize, x: AtomId) -> Option<&Ratio> {
        self.ratios[piece].get(&x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{pair_groupoid, FiniteMetricSpace};
    use crate::exact::ratio;
    use crate::groupoid::ball;

    fn cycle(n: usize) -> (FiniteGroupoid, LengthFunction, AtomicMeasureSpace) {
        pair_groupoid(
            &FiniteMetricSpace::cycle(n),
            AtomicMeasureSpace::uniform(n),
        )
    }

    #[test]
    fn saturate_units_is_identity() {
        let (g, ell, _) = cycle(5);
        let k = DecomposableSet::units_only(&g, &ell);
        let a = AtomSet::from_atoms([1, 3]);
        assert_eq!(k.saturate(a), a);
        assert_eq!(k.saturate(AtomSet::EMPTY), AtomSet::EMPTY);
    }

    #[test]
    fn saturate_path_ball_one() {
        // path graph 0-1-2, K = B1, A = {1} saturates to everything
        let x = FiniteMetricSpace::path(3);
        let (g, ell, _) = pair_groupoid(&x, AtomicMeasureSpace::uniform(3));
        let k = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        assert_eq!(k.saturate(AtomSet::singleton(1)), AtomSet::full(3));
    }

    #[test]
    fn compose_with_units_is_identity_on_elements() {
        let (g, ell, _) = cycle(6);
        let k = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let u = DecomposableSet::units_only(&g, &ell);
        let prod = k.compose(&g, &ell, &u);
        assert_eq!(prod.element_set(), k.element_set());
    }

    #[test]
    fn ball_one_squared_is_ball_two_on_6_cycle() {
        let (g, ell, _) = cycle(6);
        let b1 = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let prod = b1.compose(&g, &ell, &b1);
        assert_eq!(prod.element_set(), ball(&g, &ell, &ratio_int(2)));
        assert!(prod.length_bound <= ratio_int(2));
    }

    #[test]
    fn disjoint_source_bisections_compose_to_few_pieces() {
        let (g, ell, _) = cycle(4);
        // two single-arrow bisections with disjoint sources
        let e1 = (0..g.n_elements)
            .find(|&e| !g.is_unit(e) && g.source[e] == 0)
            .unwrap();
        let e2 = (0..g.n_elements)
            .find(|&e| !g.is_unit(e) && g.source[e] == 2 && g.range[e] != 0)
            .unwrap();
        let k1 = DecomposableSet::from_pieces(
            &g,
            &ell,
            vec![Bisection::new(&g, ElementSet::from([e1])).unwrap()],
        );
        let k2 = DecomposableSet::from_pieces(
            &g,
            &ell,
            vec![Bisection::new(&g, ElementSet::from([e2])).unwrap()],
        );
        let prod = k1.compose(&g, &ell, &k2);
        assert!(prod.n_pieces() <= 1);
    }

    #[test]
    fn invert_union_and_length() {
        let (g, ell, _) = cycle(6);
        let u = DecomposableSet::units_only(&g, &ell);
        assert_eq!(u.invert(&g, &ell).element_set(), g.unit_set());

        // union of a one-arrow shift with its inverse is symmetric
        let e = (0..g.n_elements).find(|&e| !g.is_unit(e)).unwrap();
        let k = DecomposableSet::from_pieces(
            &g,
            &ell,
            vec![Bisection::new(&g, ElementSet::from([e])).unwrap()],
        );
        let sym = k.union(&g, &ell, &k.invert(&g, &ell));
        assert!(sym.is_symmetric());
        assert_eq!(sym.n_pieces(), 2);

        // ℓ(K⁻¹) = ℓ(K) exhaustively over ball radii
        for r in 0..4 {
            let k = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(r)));
            assert_eq!(k.invert(&g, &ell).length_bound, k.length_bound);
        }
    }

    #[test]
    fn decompose_single_bisection_and_units() {
        let (g, ell, _) = cycle(4);
        let u = decompose(&g, &ell, &g.unit_set());
        assert_eq!(u.n_pieces(), 1);
        assert!(u.is_unital());
    }

    #[test]
    fn decompose_k4_all_elements() {
        let x = FiniteMetricSpace::complete(4);
        let (g, ell, _) = pair_groupoid(&x, AtomicMeasureSpace::uniform(4));
        let all = g.all_elements();
        let k = decompose(&g, &ell, &all);
        // conflict degree ≤ 6, so at most 7 pieces
        assert!(k.n_pieces() <= 7);
        // pieces are pairwise disjoint bisections whose union is S
        assert_eq!(k.element_set(), all);
        let total: usize = k.pieces.iter().map(|p| p.members.len()).sum();
        assert_eq!(total, all.len());
    }

    #[test]
    fn rn_table_uniform_and_weighted() {
        let (g, ell, mu) = cycle(4);
        let k = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let t = rn_table(&k, &mu);
        for (i, p) in k.pieces.iter().enumerate() {
            for x in p.source_set().iter() {
                assert_eq!(t.ratio(i, x), Some(&ratio_int(1)));
            }
        }

        // μ = (1/2, 1/4, 1/4), τ mapping atom 0 → atom 1 has ratio 1/2
        let x = FiniteMetricSpace::complete(3);
        let mu = AtomicMeasureSpace::new(vec![ratio(1, 2), ratio(1, 4), ratio(1, 4)]).unwrap();
        let (g, ell, mu) = pair_groupoid(&x, mu);
        let e = (0..g.n_elements)
            .find(|&e| g.source[e] == 0 && g.range[e] == 1)
            .unwrap();
        let k = DecomposableSet::from_pieces(
            &g,
            &ell,
            vec![Bisection::new(&g, ElementSet::from([e])).unwrap()],
        );
        let t = rn_table(&k, &mu);
        assert_eq!(t.ratio(0, 0), Some(&ratio(1, 2)));
    }

    #[test]
    fn rn_reciprocity_exhaustive() {
        // ℜ(K⁻¹, τ(x)) = 1/ℜ(K, x) over every piece of a weighted instance
        let x = FiniteMetricSpace::cycle(5);
        let mu = AtomicMeasureSpace::new(vec![
            ratio(1, 2),
            ratio(1, 8),
            ratio(1, 8),
            ratio(1, 8),
            ratio(1, 8),
        ])
        .unwrap();
        let (g, ell, mu) = pair_groupoid(&x, mu);
        let k = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let kinv = k.invert(&g, &ell);
        let t = rn_table(&k, &mu);
        let tinv = rn_table(&kinv, &mu);
        for (i, p) in k.pieces.iter().enumerate() {
            // locate the inverse piece in kinv
            let inv_members: Vec<ElementId> = {
                let mut v: Vec<_> = p.members.iter().map(|&e| g.inverse[e]).collect();
                v.sort_unstable();
                v
            };
            let j = kinv
                .pieces
                .iter()
                .position(|q| q.members == inv_members)
                .expect("inverse piece present");
            for x in p.source_set().iter() {
                let y = p.tau(x).unwrap();
                let r = t.ratio(i, x).unwrap();
                let rinv = tinv.ratio(j, y).unwrap();
                assert_eq!(&(r * rinv), &ratio_int(1));
            }
        }
    }

    #[test]
    fn unital_saturation_contains_and_monotone() {
        let (g, ell, _) = cycle(6);
        let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        assert!(k.is_unital() && k.is_symmetric());
        for bits in [0b000001u64, 0b001010, 0b110000, 0b111111] {
            let a = AtomSet(bits);
            assert!(a.is_subset_of(k.saturate(a)));
        }
        // monotone in A
        let a = AtomSet::from_atoms([0]);
        let b = AtomSet::from_atoms([0, 3]);
        assert!(k.saturate(a).is_subset_of(k.saturate(b)));
    }

    #[test]
    fn saturate_of_composition_brute_force() {
        // saturate(K₁·K₂, A) = saturate(K₁, saturate(K₂, A)) on all subsets
        let (g, ell, _) = cycle(5);
        let k1 = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let k2 = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(2)));
        let prod = k1.compose(&g, &ell, &k2);
        for bits in 0u64..(1 << 5) {
            let a = AtomSet(bits);
            assert_eq!(prod.saturate(a), k1.saturate(k2.saturate(a)));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn saturation_distributes_over_unions(a in 0u64..64, b in 0u64..64, r in 0i64..3) {
                let (g, ell, _) = pair_groupoid(
                    &FiniteMetricSpace::cycle(6),
                    AtomicMeasureSpace::uniform(6),
                );
                let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(r)));
                let (a, b) = (AtomSet(a), AtomSet(b));
                prop_assert_eq!(
                    k.saturate(a.union(b)),
                    k.saturate(a).union(k.saturate(b))
                );
                // unitality and monotonicity
                prop_assert!(a.is_subset_of(k.saturate(a)));
                prop_assert!(k.saturate(a).is_subset_of(k.saturate(a.union(b))));
            }
        }
    }

    #[test]
    fn ball_products_within_ball_sums() {
        let (g, ell, _) = cycle(6);
        for n in 0..3i64 {
            for m in 0..3i64 {
                let bn = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(n)));
                let bm = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(m)));
                let prod = bn.compose(&g, &ell, &bm);
                let target = ball(&g, &ell, &ratio_int(n + m));
                assert!(prod.element_set().is_subset(&target));
            }
        }
    }
}
