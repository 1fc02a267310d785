//! Factories producing measured groupoids with length functions from
//! metric spaces, group actions, finite quotient families and block
//! families.

use std::collections::HashMap;

use num_traits::{Signed, Zero};

use crate::exact::{ratio_int, Ratio};
use crate::groupoid::{
    AtomicMeasureSpace, FiniteGroupoid, LengthFunction,
};
use crate::sets::{Bisection, DecomposableSet};

/// A finite metric space with exact rational distances.
#[derive(Clone, Debug)]
pub struct FiniteMetricSpace {
    pub n: usize,
    pub dist: Vec<Vec<Ratio>>,
}

impl FiniteMetricSpace {
    pub fn new(dist: Vec<Vec<Ratio>>) -> Result<FiniteMetricSpace, String> {
        let n = dist.len();
        for row in &dist {
            if row.len() != n {
                return Err("distance matrix must be square".into());
            }
        }
        let space = FiniteMetricSpace { n, dist };
        space.check_metric()?;
        Ok(space)
    }

    fn check_metric(&self) -> Result<(), String> {
        for i in 0..self.n {
            if !self.dist[i][i].is_zero() {
                return Err(format!("d({i},{i}) ≠ 0"));
            }
            for j in 0..self.n {
                if i != j && !self.dist[i][j].is_positive() {
                    return Err(format!("d({i},{j}) must be positive"));
                }
                if self.dist[i][j] != self.dist[j][i] {
                    return Err(format!("d({i},{j}) ≠ d({j},{i})"));
                }
                for k in 0..self.n {
                    if self.dist[i][k] > &self.dist[i][j] + &self.dist[j][k] {
                        return Err(format!("triangle inequality fails at ({i},{j},{k})"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn complete(n: usize) -> FiniteMetricSpace {
        let dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { ratio_int(0) } else { ratio_int(1) })
                    .collect()
            })
            .collect();
        FiniteMetricSpace { n, dist }
    }

    pub fn cycle(n: usize) -> FiniteMetricSpace {
        let dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = (i as i64 - j as i64).unsigned_abs() as usize;
                        ratio_int(d.min(n - d) as i64)
                    })
                    .collect()
            })
            .collect();
        FiniteMetricSpace { n, dist }
    }

    pub fn path(n: usize) -> FiniteMetricSpace {
        let dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| ratio_int((i as i64 - j as i64).abs()))
                    .collect()
            })
            .collect();
        FiniteMetricSpace { n, dist }
    }
}

/// Pair groupoid X×X with s(x,y) = y, r(x,y) = x and ℓ(x,y) = d(x,y).
/// Element (x,y) has id `x·n + y`.
pub fn pair_groupoid(
    space: &FiniteMetricSpace,
    mu: AtomicMeasureSpace,
) -> (FiniteGroupoid, LengthFunction, AtomicMeasureSpace) {
    let n = space.n;
    assert_eq!(mu.n_atoms(), n);
    let id = |x: usize, y: usize| x * n + y;
    let mut source = vec![0; n * n];
    let mut range = vec![0; n * n];
    let mut inverse = vec![0; n * n];
    let mut length = vec![ratio_int(0); n * n];
    let mut compose = HashMap::new();
    for x in 0..n {
        for y in 0..n {
            let e = id(x, y);
            source[e] = y;
            range[e] = x;
            inverse[e] = id(y, x);
            length[e] = space.dist[x][y].clone();
            for z in 0..n {
                compose.insert((e, id(y, z)), id(x, z));
            }
        }
    }
    let units = (0..n).map(|a| id(a, a)).collect();
    let g = FiniteGroupoid::new(n * n, units, source, range, inverse, compose);
    (g, LengthFunction::new(length), mu)
}

/// A group of permutations of a finite point set with word lengths.
#[derive(Clone, Debug)]
pub struct GroupAction {
    pub n_points: usize,
    /// all group elements as permutations of the point set
    pub perms: Vec<Vec<usize>>,
    pub lengths: Vec<Ratio>,
    pub identity: usize,
    index: HashMap<Vec<usize>, usize>,
}

impl GroupAction {
    pub fn from_elements(
        n_points: usize,
        perms: Vec<Vec<usize>>,
        lengths: Vec<Ratio>,
    ) -> Result<GroupAction, String> {
        let index: HashMap<Vec<usize>, usize> = perms
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        if index.len() != perms.len() {
            return Err("duplicate permutations".into());
        }
        let identity: Vec<usize> = (0..n_points).collect();
        let identity = *index
            .get(&identity)
            .ok_or("identity permutation missing")?;
        let action = GroupAction {
            n_points,
            perms,
            lengths,
            identity,
            index,
        };
        action.validate()?;
        Ok(action)
    }

    /// Closes a generating set under composition and inverse; word lengths
    /// are BFS distances with the symmetrised generating set.
    pub fn from_generators(
        n_points: usize,
        generators: &[Vec<usize>],
    ) -> Result<GroupAction, String> {
        let mut gens: Vec<Vec<usize>> = Vec::new();
        for p in generators {
            if p.len() != n_points {
                return Err("generator has wrong length".into());
            }
            let mut inv = vec![0; n_points];
            for (i, &pi) in p.iter().enumerate() {
                inv[pi] = i;
            }
            if !gens.contains(p) {
                gens.push(p.clone());
            }
            if !gens.contains(&inv) {
                gens.push(inv);
            }
        }
        let identity: Vec<usize> = (0..n_points).collect();
        let mut perms = vec![identity.clone()];
        let mut lengths = vec![ratio_int(0)];
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        seen.insert(identity, 0);
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &i in &frontier {
                for gen in &gens {
                    let composed: Vec<usize> =
                        (0..n_points).map(|x| gen[perms[i][x]]).collect();
                    if !seen.contains_key(&composed) {
                        let j = perms.len();
                        seen.insert(composed.clone(), j);
                        lengths.push(&lengths[i] + ratio_int(1));
                        perms.push(composed);
                        next.push(j);
                        if perms.len() > 100_000 {
                            return Err("generated group too large".into());
                        }
                    }
                }
            }
            frontier = next;
        }
        GroupAction::from_elements(n_points, perms, lengths)
    }

    /// ℤ/n acting on itself by rotation, generator length 1.
    pub fn cyclic(n: usize) -> GroupAction {
        let rot: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
        GroupAction::from_generators(n, &[rot]).expect("cyclic group closes")
    }

    pub fn order(&self) -> usize {
        self.perms.len()
    }

    pub fn apply(&self, g: usize, x: usize) -> usize {
        self.perms[g][x]
    }

    pub fn mult(&self, a: usize, b: usize) -> usize {
        let composed: Vec<usize> = (0..self.n_points)
            .map(|x| self.perms[a][self.perms[b][x]])
            .collect();
        *self.index.get(&composed).expect("group is closed")
    }

    pub fn inv(&self, a: usize) -> usize {
        let mut inv = vec![0; self.n_points];
        for (i, &pi) in self.perms[a].iter().enumerate() {
            inv[pi] = i;
        }
        *self.index.get(&inv).expect("group is closed")
    }

    pub fn validate(&self) -> Result<(), String> {
        for a in 0..self.order() {
            let mut seen = vec![false; self.n_points];
            for &p in &self.perms[a] {
                if p >= self.n_points || seen[p] {
                    return Err(format!("element {a} is not a permutation"));
                }
                seen[p] = true;
            }
        }
        for a in 0..self.order() {
            for b in 0..self.order() {
                let composed: Vec<usize> = (0..self.n_points)
                    .map(|x| self.perms[a][self.perms[b][x]])
                    .collect();
                if !self.index.contains_key(&composed) {
                    return Err(format!("not closed under composition at ({a},{b})"));
                }
            }
        }
        if !self.lengths[self.identity].is_zero() {
            return Err("length of identity must be 0".into());
        }
        for a in 0..self.order() {
            if self.lengths[a].is_negative() {
                return Err(format!("negative length at {a}"));
            }
            if self.lengths[self.inv(a)] != self.lengths[a] {
                return Err(format!("length not symmetric at {a}"));
            }
            for b in 0..self.order() {
                let ab = self.mult(a, b);
                if self.lengths[ab] > &self.lengths[a] + &self.lengths[b] {
                    return Err(format!("length not subadditive at ({a},{b})"));
                }
            }
        }
        Ok(())
    }
}

/// Transformation groupoid X ⋊ Γ with s(x,γ) = γ⁻¹x, r(x,γ) = x and
/// ℓ(x,γ) = ℓ_Γ(γ). Element (x,γ) has id `γ·|X| + x`.
pub fn transformation_groupoid(
    action: &GroupAction,
    mu: AtomicMeasureSpace,
) -> Result<(FiniteGroupoid, LengthFunction, AtomicMeasureSpace), String> {
    action.validate()?;
    let nx = action.n_points;
    if mu.n_atoms() != nx {
        return Err("measure does not match point set".into());
    }
    let ng = action.order();
    let id = |g: usize, x: usize| g * nx + x;
    let n_elements = ng * nx;
    let mut source = vec![0; n_elements];
    let mut range = vec![0; n_elements];
    let mut inverse = vec![0; n_elements];
    let mut length = vec![ratio_int(0); n_elements];
    let mut compose = HashMap::new();
    for g in 0..ng {
        let ginv = action.inv(g);
        for x in 0..nx {
            let e = id(g, x);
            range[e] = x;
            source[e] = action.apply(ginv, x);
            inverse[e] = id(ginv, action.apply(ginv, x));
            length[e] = action.lengths[g].clone();
        }
    }
    for g in 0..ng {
        let ginv = action.inv(g);
        for h in 0..ng {
            let gh = action.mult(g, h);
            for x in 0..nx {
                // (x, g)·(g⁻¹x, h) = (x, gh)
                let e1 = id(g, x);
                let e2 = id(h, action.apply(ginv, x));
                compose.insert((e1, e2), id(gh, x));
            }
        }
    }
    let units = (0..nx).map(|x| id(action.identity, x)).collect();
    let g = FiniteGroupoid::new(n_elements, units, source, range, inverse, compose);
    Ok((g, LengthFunction::new(length), mu))
}

/// The decomposable set X × B_L with its natural pieces X × {γ}.
pub fn action_ball(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    action: &GroupAction,
    radius: &Ratio,
) -> DecomposableSet {
    let nx = action.n_points;
    let mut pieces = Vec::new();
    for gi in 0..action.order() {
        if &action.lengths[gi] <= radius {
            let members: crate::groupoid::ElementSet =
                (0..nx).map(|x| gi * nx + x).collect();
            pieces.push(Bisection::new(g, members).expect("X×{γ} is a bisection"));
        }
    }
    DecomposableSet::from_pieces(g, ell, pieces)
}

/// Transformation groupoids of finite quotient actions, each with the
/// normalised counting measure.
pub fn quotient_family(
    quotients: &[GroupAction],
) -> Result<Vec<(FiniteGroupoid, LengthFunction, AtomicMeasureSpace)>, String> {
    quotients
        .iter()
        .map(|q| transformation_groupoid(q, AtomicMeasureSpace::uniform_probability(q.n_points)))
        .collect()
}

/// Disjoint union of finitely many blocks. Cross-block composition is
/// undefined and decomposable sets split blockwise.
pub fn family_union(
    blocks: &[(FiniteGroupoid, LengthFunction, AtomicMeasureSpace)],
) -> (FiniteGroupoid, LengthFunction, AtomicMeasureSpace) {
    let n_atoms: usize = blocks.iter().map(|(g, _, _)| g.n_atoms()).sum();
    assert!(n_atoms <= 64, "union exceeds the 64-atom cap");
    let mut units = Vec::new();
    let mut source = Vec::new();
    let mut range = Vec::new();
    let mut inverse = Vec::new();
    let mut lengths = Vec::new();
    let mut weights = Vec::new();
    let mut compose = HashMap::new();
    let mut elem_off = 0;
    let mut atom_off = 0;
    for (g, ell, mu) in blocks {
        for a in 0..g.n_atoms() {
            units.push(g.units[a] + elem_off);
            weights.push(mu.weights[a].clone());
        }
        for e in 0..g.n_elements {
            source.push(g.source[e] + atom_off);
            range.push(g.range[e] + atom_off);
            inverse.push(g.inverse[e] + elem_off);
            lengths.push(ell.values[e].clone());
        }
        for (&(a, b), &c) in &g.compose {
            compose.insert((a + elem_off, b + elem_off), c + elem_off);
        }
        elem_off += g.n_elements;
        atom_off += g.n_atoms();
    }
    let n_elements = source.len();
    let g = FiniteGroupoid::new(n_elements, units, source, range, inverse, compose);
    (
        g,
        LengthFunction::new(lengths),
        AtomicMeasureSpace::new(weights).expect("positive weights"),
    )
}

/// Block boundaries (atom offsets) of a union built by [`family_union`].
pub fn block_atom_ranges(
    blocks: &[(FiniteGroupoid, LengthFunction, AtomicMeasureSpace)],
) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut off = 0;
    for (g, _, _) in blocks {
        out.push(off..off + g.n_atoms());
        off += g.n_atoms();
    }
    out
}

/// Restriction of an element id set to one block of a union (elements whose
/// source and range both lie in the block's atom range).
pub fn restrict_to_block(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    k: &DecomposableSet,
    atoms: &std::ops::Range<usize>,
) -> DecomposableSet {
    let pieces = k
        .pieces
        .iter()
        .map(|p| {
            let members: crate::groupoid::ElementSet = p
                .members
                .iter()
                .copied()
                .filter(|&e| atoms.contains(&g.source[e]) && atoms.contains(&g.range[e]))
                .collect();
            Bisection::new(g, members).expect("restriction of a bisection")
        })
        .collect();
    DecomposableSet::from_pieces(g, ell, pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ratio;
    use crate::groupoid::{ball, validate, AtomSet};
    use crate::sets::decompose;

    #[test]
    fn one_point_pair_groupoid_is_trivial() {
        let x = FiniteMetricSpace::new(vec![vec![ratio_int(0)]]).unwrap();
        let (g, ell, _) = pair_groupoid(&x, AtomicMeasureSpace::uniform(1));
        assert_eq!(g.n_elements, 1);
        assert!(validate(&g).ok());
        assert!(ell.validate(&g).ok());
    }

    #[test]
    fn four_cycle_ball_decomposition() {
        let x = FiniteMetricSpace::cycle(4);
        let (g, ell, _) = pair_groupoid(&x, AtomicMeasureSpace::uniform(4));
        let e1 = ball(&g, &ell, &ratio_int(1));
        assert_eq!(e1.len(), 12);
        let k = decompose(&g, &ell, &e1);
        let non_unit = k
            .pieces
            .iter()
            .filter(|p| !p.is_units(&g))
            .count();
        assert!(non_unit <= 3, "got {non_unit} non-unit pieces");
        for p in &k.pieces {
            assert!(p.members.iter().all(|&e| ell.values[e] <= ratio_int(1)));
        }
    }

    #[test]
    fn metric_boundary_matches_saturation() {
        // r(E_L·A)∖A = ∂_L A = {x ∉ A | d(x,A) ≤ L}
        let x = FiniteMetricSpace::cycle(6);
        let (g, ell, _) = pair_groupoid(&x, AtomicMeasureSpace::uniform(6));
        let l = ratio_int(2);
        let k = decompose(&g, &ell, &ball(&g, &ell, &l));
        for bits in 1u64..(1 << 6) {
            let a = AtomSet(bits);
            let boundary = k.saturate(a).minus(a);
            let expected = AtomSet::from_atoms((0..6).filter(|&p| {
                !a.contains(p)
                    && a.iter().any(|q| x.dist[p][q] <= l)
            }));
            assert_eq!(boundary, expected);
        }
    }

    #[test]
    fn pair_groupoid_length_is_a_length_function() {
        let x = FiniteMetricSpace::cycle(5);
        let (g, ell, _) = pair_groupoid(&x, AtomicMeasureSpace::uniform(5));
        assert!(ell.validate(&g).ok());
    }

    #[test]
    fn trivial_group_action_gives_units_only() {
        let action = GroupAction::from_generators(3, &[]).unwrap();
        let (g, _, _) =
            transformation_groupoid(&action, AtomicMeasureSpace::uniform(3)).unwrap();
        assert_eq!(g.n_elements, 3);
        assert!(validate(&g).ok());
    }

    #[test]
    fn z8_rotation_saturation() {
        let action = GroupAction::cyclic(8);
        let (g, ell, _) =
            transformation_groupoid(&action, AtomicMeasureSpace::uniform_probability(8)).unwrap();
        assert!(validate(&g).ok());
        assert!(ell.validate(&g).ok());
        let k = action_ball(&g, &ell, &action, &ratio_int(1));
        assert!(k.is_unital() && k.is_symmetric());
        for a_bits in [0b1u64, 0b10010, 0b1100] {
            let a = AtomSet(a_bits);
            let mut expected = a;
            for x in a.iter() {
                expected.insert((x + 1) % 8);
                expected.insert((x + 7) % 8);
            }
            assert_eq!(k.saturate(a), expected);
        }
    }

    #[test]
    fn action_and_groupoid_saturations_agree() {
        // r((X×B_L)·A) = B_L·A for every subset, exhaustively at 8 atoms
        let action = GroupAction::cyclic(8);
        let (g, ell, _) =
            transformation_groupoid(&action, AtomicMeasureSpace::uniform_probability(8)).unwrap();
        for l in 0..3i64 {
            let k = action_ball(&g, &ell, &action, &ratio_int(l));
            for bits in 0u64..(1 << 8) {
                let a = AtomSet(bits);
                let mut orbit = AtomSet::EMPTY;
                for gi in 0..action.order() {
                    if action.lengths[gi] <= ratio_int(l) {
                        for x in a.iter() {
                            orbit.insert(action.apply(gi, x));
                        }
                    }
                }
                assert_eq!(k.saturate(a), orbit);
            }
        }
    }

    #[test]
    fn decomposable_sets_lie_in_action_balls() {
        // any decomposable K satisfies K ⊆ X×B_{ℓ(K)}
        let action = GroupAction::cyclic(6);
        let (g, ell, _) =
            transformation_groupoid(&action, AtomicMeasureSpace::uniform_probability(6)).unwrap();
        for r in 0..4i64 {
            let k = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(r)));
            for p in &k.pieces {
                for &e in &p.members {
                    assert!(ell.values[e] <= k.length_bound);
                }
            }
        }
    }

    #[test]
    fn family_union_blocks_stay_separate() {
        let x = FiniteMetricSpace::cycle(4);
        let b1 = pair_groupoid(&x, AtomicMeasureSpace::uniform(4));
        let b2 = pair_groupoid(&x, AtomicMeasureSpace::uniform(4));
        let (g, ell, mu) = family_union(&[b1, b2]);
        assert_eq!(g.n_atoms(), 8);
        assert_eq!(mu.total_mass, ratio_int(8));
        assert!(validate(&g).ok());
        // E1 of the union never connects the blocks
        let k = decompose(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let left = AtomSet::from_atoms(0..4);
        assert_eq!(k.saturate(left), left);
    }

    #[test]
    fn quotient_family_builds_normalised_blocks() {
        let quotients: Vec<GroupAction> =
            [2usize, 4, 8].iter().map(|&n| GroupAction::cyclic(n)).collect();
        let family = quotient_family(&quotients).unwrap();
        assert_eq!(family.len(), 3);
        for (g, _, mu) in &family {
            assert!(validate(g).ok());
            assert!(mu.is_probability());
        }
    }

    #[test]
    fn cyclic_quotient_family_is_never_uniformly_expanding() {
        use crate::expansion::{certify_expansion, Budget};
        use crate::markov::{build_kernel, cheeger, CheegerValue};
        use crate::sets::decompose_unital_symmetric;
        use num_traits::Zero;

        let quotients: Vec<GroupAction> =
            [4usize, 8, 16].iter().map(|&n| GroupAction::cyclic(n)).collect();
        let family = quotient_family(&quotients).unwrap();
        let budget = Budget::with_exact_limit(16);
        let mut kappas = Vec::new();
        let mut worsts = Vec::new();
        for (g, ell, mu) in &family {
            let k = decompose_unital_symmetric(g, ell, &ball(g, ell, &ratio_int(1)));
            let bundle = build_kernel(mu, mu.full_set(), &k).unwrap();
            match cheeger(&bundle.kernel, &budget).unwrap() {
                CheegerValue::Exact { value, .. } => kappas.push(value),
                other => panic!("expected exact kappa, got {other:?}"),
            }
            let cert = certify_expansion(
                mu,
                mu.full_set(),
                &k,
                &crate::exact::Ratio::zero(),
                &crate::exact::Ratio::zero(),
                &ratio(1, 2),
                &budget,
            )
            .unwrap();
            worsts.push(cert.worst.unwrap().1);
        }
        // the exact Cheeger constants strictly decay along the family, so
        // no single constant serves every block
        assert!(kappas[0] > kappas[1] && kappas[1] > kappas[2], "{kappas:?}");
        assert!(worsts[0] > worsts[1] && worsts[1] > worsts[2]);
        // blocks of one shared size do share constants
        let same: Vec<GroupAction> = (0..3).map(|_| GroupAction::cyclic(6)).collect();
        let family = quotient_family(&same).unwrap();
        let mut shared = None;
        for (g, ell, mu) in &family {
            let k = decompose_unital_symmetric(g, ell, &ball(g, ell, &ratio_int(1)));
            let cert = certify_expansion(
                mu,
                mu.full_set(),
                &k,
                &crate::exact::Ratio::zero(),
                &crate::exact::Ratio::zero(),
                &ratio(1, 2),
                &Budget::default(),
            )
            .unwrap();
            let worst = cert.worst.unwrap().1;
            match &shared {
                None => shared = Some(worst),
                Some(w) => assert_eq!(w, &worst),
            }
        }
    }

    #[test]
    fn single_point_quotient_expands_trivially() {
        use crate::expansion::{certify_expansion, Budget};
        use crate::sets::DecomposableSet;
        use num_traits::Zero;
        let family = quotient_family(&[GroupAction::cyclic(1)]).unwrap();
        let (g, ell, mu) = &family[0];
        let k = DecomposableSet::units_only(g, ell);
        let cert = certify_expansion(
            mu,
            mu.full_set(),
            &k,
            &ratio_int(1),
            &crate::exact::Ratio::zero(),
            &ratio(1, 2),
            &Budget::default(),
        )
        .unwrap();
        // no admissible subsets: vacuously proven
        assert!(matches!(cert.verdict, crate::expansion::Verdict::Proven));
    }

    #[test]
    fn metric_validation_rejects_triangle_violation() {
        let bad = vec![
            vec![ratio_int(0), ratio_int(1), ratio_int(5)],
            vec![ratio_int(1), ratio_int(0), ratio_int(1)],
            vec![ratio_int(5), ratio_int(1), ratio_int(0)],
        ];
        assert!(FiniteMetricSpace::new(bad).is_err());
        assert!(FiniteMetricSpace::new(vec![
            vec![ratio_int(0), ratio(1, 2)],
            vec![ratio(1, 2), ratio_int(0)],
        ])
        .is_ok());
    }
}
