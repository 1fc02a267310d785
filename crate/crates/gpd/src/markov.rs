//! Normalized local Markov kernels on domains, reversing measures,
//! boundary sizes, Cheeger constants, spectral gaps and the
//! expansion/Markov-expansion conversions.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::exact::{ratio, ratio_int, sqrt_upper_bound, Radical, Ratio};
use crate::expansion::Budget;
use crate::groupoid::{AtomId, AtomSet, AtomicMeasureSpace};
use crate::sets::{rn_table, DecomposableSet};

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("decomposition has no unital piece")]
    NotUnital,
    #[error("decomposition is not symmetric")]
    NotSymmetric,
    #[error("domain is empty")]
    DegenerateDomain,
    #[error("eigensolver failed: {0}")]
    NumericalFailure(String),
}

/// A reversible Markov kernel on finitely many states with exact entries.
/// Row x has unnormalised weights `unnorm[x]` summing to `sigma[x]`; the
/// kernel is Π(x,y) = unnorm/σ(x) and the reversing measure is
/// m(x) = base(x)·σ(x) with rational `base`.
#[derive(Clone, Debug)]
pub struct ReversibleKernel {
    pub n: usize,
    pub unnorm: Vec<Vec<(usize, Radical)>>,
    pub sigma: Vec<Radical>,
    pub base: Vec<Ratio>,
}

impl ReversibleKernel {
    pub fn from_rational_rows(
        weights: Vec<Vec<Ratio>>,
        base: Option<Vec<Ratio>>,
    ) -> Result<ReversibleKernel, String> {
        let n = weights.len();
        let base = base.unwrap_or_else(|| vec![ratio_int(1); n]);
        let mut unnorm = Vec::with_capacity(n);
        let mut sigma = Vec::with_capacity(n);
        for (x, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err("weight matrix must be square".into());
            }
            let mut entries = Vec::new();
            let mut total = Radical::zero();
            for (y, w) in row.iter().enumerate() {
                if w.is_negative() {
                    return Err(format!("negative weight at ({x},{y})"));
                }
                if !w.is_zero() {
                    let r = Radical::from_ratio(w.clone());
                    total = total.add(&r);
                    entries.push((y, r));
                }
            }
            if total.is_zero() {
                return Err(format!("row {x} has zero mass"));
            }
            unnorm.push(entries);
            sigma.push(total);
        }
        let kernel = ReversibleKernel {
            n,
            unnorm,
            sigma,
            base,
        };
        if !kernel.reversibility_ok() {
            return Err("kernel is not reversible for the given base".into());
        }
        Ok(kernel)
    }

    /// m(x)·Π(x,y) = m(y)·Π(y,x), exactly.
    pub fn reversibility_ok(&self) -> bool {
        for x in 0..self.n {
            for (y, w) in &self.unnorm[x] {
                let lhs = w.scale(&self.base[x]);
                let back = self.unnorm[*y]
                    .iter()
                    .find(|(t, _)| t == &x)
                    .map(|(_, w)| w.clone())
                    .unwrap_or_else(Radical::zero);
                let rhs = back.scale(&self.base[*y]);
                if !lhs.sub(&rhs).is_zero() {
                    return false;
                }
            }
        }
        true
    }

    /// Exact row-stochasticity of Π: σ(x) = Σ_y unnorm(x,y) by
    /// construction; verified on demand.
    pub fn rows_sum_to_one(&self) -> bool {
        (0..self.n).all(|x| {
            let total = self.unnorm[x]
                .iter()
                .fold(Radical::zero(), |acc, (_, w)| acc.add(w));
            total.sub(&self.sigma[x]).is_zero()
        })
    }

    pub fn mass(&self, x: usize) -> Radical {
        self.sigma[x].scale(&self.base[x])
    }

    pub fn mass_of(&self, states: u64) -> Radical {
        let mut total = Radical::zero();
        for x in 0..self.n {
            if states & (1 << x) != 0 {
                total = total.add(&self.mass(x));
            }
        }
        total
    }

    /// |∂_Π(A)|_m = Σ_{x∈A} Π(x, X∖A)·m(x) = Σ_{x∈A, y∉A} unnorm(x,y)·base(x).
    pub fn boundary(&self, states: u64) -> Radical {
        let mut total = Radical::zero();
        for x in 0..self.n {
            if states & (1 << x) == 0 {
                continue;
            }
            for (y, w) in &self.unnorm[x] {
                if states & (1 << *y) == 0 {
                    total = total.add(&w.scale(&self.base[x]));
                }
            }
        }
        total
    }

    pub fn pi_f64(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for x in 0..self.n {
            let s = self.sigma[x].to_f64();
            for (y, w) in &self.unnorm[x] {
                m[(x, *y)] += w.to_f64() / s;
            }
        }
        m
    }

    pub fn mass_f64(&self) -> Vec<f64> {
        (0..self.n).map(|x| self.mass(x).to_f64()).collect()
    }
}

/// Normalized local Markov kernel Π_{Y,K} built from a unital symmetric
/// decomposition: steps from x to τ_{K_i}(x) with weight ℜ(K_i,x)^{1/2},
/// normalised by σ_{Y,K}; the reversing measure is μ̃ = σ·μ|_Y.
#[derive(Clone, Debug)]
pub struct MarkovKernelBundle {
    pub y: AtomSet,
    pub states: Vec<AtomId>,
    pub kernel: ReversibleKernel,
    pub n_pieces: usize,
}

impl MarkovKernelBundle {
    pub fn state_of(&self, atom: AtomId) -> Option<usize> {
        self.states.iter().position(|&a| a == atom)
    }

    pub fn state_mask(&self, a: AtomSet) -> u64 {
        let mut mask = 0u64;
        for (i, &atom) in self.states.iter().enumerate() {
            if a.contains(atom) {
                mask |= 1 << i;
            }
        }
        mask
    }

    pub fn full_mask(&self) -> u64 {
        if self.states.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.states.len()) - 1
        }
    }

    /// μ̃(A) for a subset of the domain.
    pub fn mu_tilde(&self, a: AtomSet) -> Radical {
        self.kernel.mass_of(self.state_mask(a))
    }

    /// σ_{Y,K}(x).
    pub fn sigma_at(&self, atom: AtomId) -> Option<&Radical> {
        self.state_of(atom).map(|i| &self.kernel.sigma[i])
    }
}

pub fn build_kernel(
    mu: &AtomicMeasureSpace,
    y: AtomSet,
    k: &DecomposableSet,
) -> Result<MarkovKernelBundle, MarkovError> {
    if !k.is_unital() {
        return Err(MarkovError::NotUnital);
    }
    if !k.is_symmetric() {
        return Err(MarkovError::NotSymmetric);
    }
    if y.is_empty() {
        return Err(MarkovError::DegenerateDomain);
    }
    let states = y.atoms();
    let index = |atom: AtomId| states.iter().position(|&a| a == atom).unwrap();
    let rn = rn_table(k, mu);
    let n = states.len();
    let mut unnorm: Vec<Vec<(usize, Radical)>> = vec![Vec::new(); n];
    let mut sigma = vec![Radical::zero(); n];
    for (i, piece) in k.pieces.iter().enumerate() {
        for x in piece.source_set().intersect(y).iter() {
            let tx = piece.tau(x).unwrap();
            if !y.contains(tx) {
                continue;
            }
            let w = Radical::sqrt_of_ratio(rn.ratio(i, x).unwrap());
            let sx = index(x);
            let tyx = index(tx);
            sigma[sx] = sigma[sx].add(&w);
            match unnorm[sx].iter_mut().find(|(t, _)| *t == tyx) {
                Some((_, acc)) => *acc = acc.add(&w),
                None => unnorm[sx].push((tyx, w)),
            }
        }
    }
    let base = states.iter().map(|&a| mu.weights[a].clone()).collect();
    let kernel = ReversibleKernel {
        n,
        unnorm,
        sigma,
        base,
    };
    debug_assert!(kernel.reversibility_ok());
    Ok(MarkovKernelBundle {
        y,
        states,
        kernel,
        n_pieces: k.n_pieces(),
    })
}

/// Prop. 3.15(2): μ(A) ≤ μ̃(A) ≤ N·√(μ(A)·μ(Y)) for every A ⊆ Y, as exact
/// radical comparisons.
pub fn reversing_measure_bounds_ok(bundle: &MarkovKernelBundle, mu: &AtomicMeasureSpace) -> bool {
    let mu_y = mu.measure(bundle.y);
    let n = ratio_int(bundle.n_pieces as i64);
    let full = bundle.full_mask();
    let mut sub = full;
    loop {
        let a = AtomSet::from_atoms(
            (0..bundle.states.len())
                .filter(|i| sub & (1 << i) != 0)
                .map(|i| bundle.states[i]),
        );
        if !a.is_empty() {
            let mu_a = mu.measure(a);
            let tilde = bundle.mu_tilde(a);
            if tilde.cmp_ratio(&mu_a) == Ordering::Less {
                return false;
            }
            let rhs = Radical::sqrt_of_ratio(&(&mu_a * &mu_y)).scale(&n);
            if tilde.cmp_radical(&rhs) == Ordering::Greater {
                return false;
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & full;
    }
    true
}

/// Boundary size |∂_Π(A)|_{μ̃} for A given as atoms of the domain.
pub fn boundary_size(bundle: &MarkovKernelBundle, a: AtomSet) -> Radical {
    bundle.kernel.boundary(bundle.state_mask(a))
}

#[derive(Clone, Debug)]
pub enum CheegerValue {
    /// κ = boundary/mass at the exact minimiser.
    Exact {
        boundary: Radical,
        mass: Radical,
        witness: u64,
        value: f64,
    },
    /// Rigorous interval from the Lawler sandwich plus a sampled upper
    /// bound with its witness.
    Interval {
        lo: f64,
        hi: f64,
        sampled: Option<(u64, f64)>,
    },
}

impl CheegerValue {
    pub fn approx(&self) -> f64 {
        match self {
            CheegerValue::Exact { value, .. } => *value,
            CheegerValue::Interval { lo, hi, .. } => (lo + hi) / 2.0,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            CheegerValue::Exact { value, .. } => (*value, *value),
            CheegerValue::Interval { lo, hi, .. } => (*lo, *hi),
        }
    }
}

/// κ = inf{|∂(A)|/m(A) : 0 < m(A) ≤ m(X)/2}: exact enumeration when the
/// state count fits the budget, otherwise the Lawler interval inverted
/// from the spectral gap plus a sampled upper bound.
pub fn cheeger(kernel: &ReversibleKernel, budget: &Budget) -> Result<CheegerValue, MarkovError> {
    let n = kernel.n;
    let full: u64 = if n == 64 { u64::MAX } else { (1 << n) - 1 };
    if n <= budget.exact_limit {
        let total = kernel.mass_of(full);
        let half = total.scale(&ratio(1, 2));
        let mut best: Option<(Radical, Radical, u64)> = None;
        let mut sub = full;
        loop {
            if sub != 0 && sub != full {
                let mass = kernel.mass_of(sub);
                if mass.cmp_radical(&half) != Ordering::Greater {
                    let boundary = kernel.boundary(sub);
                    let better = match &best {
                        None => true,
                        Some((b0, m0, _)) => {
                            boundary.mul(m0).cmp_radical(&b0.mul(&mass)) == Ordering::Less
                        }
                    };
                    if better {
                        best = Some((boundary, mass, sub));
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & full;
        }
        match best {
            Some((boundary, mass, witness)) => {
                let value = boundary.to_f64() / mass.to_f64();
                Ok(CheegerValue::Exact {
                    boundary,
                    mass,
                    witness,
                    value,
                })
            }
            // no admissible subset (single state): κ = inf ∅, reported as
            // an empty interval at +∞
            None => Ok(CheegerValue::Interval {
                lo: f64::INFINITY,
                hi: f64::INFINITY,
                sampled: None,
            }),
        }
    } else {
        let report = spectral_gap(kernel)?;
        let gap = 1.0 - report.lambda;
        let mut lo = (gap / 2.0).max(0.0);
        let mut hi = (2.0 * gap).max(0.0).sqrt();
        // sampled upper bound: contiguous prefixes by mass ordering
        let total = kernel.mass_of(full);
        let half = total.scale(&ratio(1, 2));
        let mut sampled: Option<(u64, f64)> = None;
        let mut acc = 0u64;
        for x in 0..n {
            acc |= 1 << x;
            if acc == full {
                break;
            }
            let mass = kernel.mass_of(acc);
            if mass.cmp_radical(&half) == Ordering::Greater {
                break;
            }
            let r = kernel.boundary(acc).to_f64() / mass.to_f64();
            if sampled.as_ref().map_or(true, |(_, s)| r < *s) {
                sampled = Some((acc, r));
            }
        }
        if let Some((_, s)) = sampled {
            hi = hi.min(s);
        }
        if lo > hi {
            lo = hi;
        }
        Ok(CheegerValue::Interval { lo, hi, sampled })
    }
}

/// Spectral data of the Markov operator on L²₀(X, m).
#[derive(Clone, Debug)]
pub struct SpectralReport {
    /// sup of the spectrum of 𝔓 restricted to L²₀
    pub lambda: f64,
    pub laplacian_gap: f64,
    pub eigen_tolerance: f64,
    /// residual of 𝔓·1 = 1 in the symmetrised basis
    pub constant_residual: f64,
}

/// Symmetrises M = D^{1/2}·Π·D^{-1/2} with D = diag(m), projects out the
/// constant eigenvector √m and reports the largest remaining eigenvalue.
pub fn spectral_gap(kernel: &ReversibleKernel) -> Result<SpectralReport, MarkovError> {
    let n = kernel.n;
    let tol = 1e-10;
    let mass = kernel.mass_f64();
    let pi = kernel.pi_f64();
    if n == 1 {
        return Ok(SpectralReport {
            lambda: -1.0,
            laplacian_gap: 2.0,
            eigen_tolerance: tol,
            constant_residual: (pi[(0, 0)] - 1.0).abs(),
        });
    }
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            m[(x, y)] = pi[(x, y)] * (mass[x] / mass[y]).sqrt();
        }
    }
    // enforce exact symmetry against rounding
    for x in 0..n {
        for y in (x + 1)..n {
            let avg = (m[(x, y)] + m[(y, x)]) / 2.0;
            m[(x, y)] = avg;
            m[(y, x)] = avg;
        }
    }
    let mut v0 = DVector::from_iterator(n, mass.iter().map(|&w| w.sqrt()));
    v0.normalize_mut();
    let residual = (&m * &v0 - &v0).norm();
    if residual > 1e-8 {
        return Err(MarkovError::NumericalFailure(format!(
            "constant vector is not fixed: residual {residual:.3e}"
        )));
    }
    // Householder reflection sending e1 to v0; later columns span v0⊥
    let mut u = v0.clone();
    u[0] -= 1.0;
    let basis: DMatrix<f64> = if u.norm() < 1e-14 {
        DMatrix::identity(n, n).columns(1, n - 1).into()
    } else {
        let h = DMatrix::identity(n, n) - 2.0 / u.norm_squared() * &u * u.transpose();
        h.columns(1, n - 1).into()
    };
    let reduced = basis.transpose() * &m * &basis;
    let mut sym = reduced.clone();
    for x in 0..n - 1 {
        for y in (x + 1)..n - 1 {
            let avg = (sym[(x, y)] + sym[(y, x)]) / 2.0;
            sym[(x, y)] = avg;
            sym[(y, x)] = avg;
        }
    }
    let eigen = nalgebra::SymmetricEigen::try_new(sym, 1e-13, 0)
        .ok_or_else(|| MarkovError::NumericalFailure("eigensolver did not converge".into()))?;
    let lambda = eigen
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if lambda > 1.0 + 1e-8 || eigen.eigenvalues.iter().any(|&e| e < -1.0 - 1e-8) {
        return Err(MarkovError::NumericalFailure(format!(
            "spectrum escapes [-1,1]: lambda = {lambda}"
        )));
    }
    Ok(SpectralReport {
        lambda,
        laplacian_gap: 1.0 - lambda,
        eigen_tolerance: tol,
        constant_residual: residual,
    })
}

/// Lawler sandwich κ²/2 ≤ 1−λ ≤ 2κ within `tol`.
pub fn sandwich_ok(kappa: f64, lambda: f64, tol: f64) -> bool {
    let gap = 1.0 - lambda;
    if !kappa.is_finite() {
        return true;
    }
    kappa * kappa / 2.0 <= gap + tol && gap <= 2.0 * kappa + tol
}

#[derive(Clone, Debug)]
pub struct MarkovCertificate {
    pub kappa: CheegerValue,
    pub constant: Ratio,
    pub verdict: crate::expansion::Verdict,
}

/// Domain-of-Markov-expansion check: builds the kernel and decides κ > C
/// by exact strict comparison when κ is enumerated.
pub fn markov_domain_check(
    mu: &AtomicMeasureSpace,
    y: AtomSet,
    k: &DecomposableSet,
    c: &Ratio,
    budget: &Budget,
) -> Result<(MarkovKernelBundle, MarkovCertificate), MarkovError> {
    use crate::expansion::Verdict;
    let bundle = build_kernel(mu, y, k)?;
    let kappa = cheeger(&bundle.kernel, budget)?;
    let verdict = match &kappa {
        CheegerValue::Exact {
            boundary,
            mass,
            witness,
            ..
        } => {
            if boundary.cmp_radical(&mass.scale(c)) == Ordering::Greater {
                Verdict::Proven
            } else {
                let atoms = (0..bundle.states.len())
                    .filter(|i| witness & (1 << i) != 0)
                    .map(|i| bundle.states[i]);
                Verdict::Refuted {
                    witness: AtomSet::from_atoms(atoms),
                    ratio: Ratio::zero(),
                }
            }
        }
        CheegerValue::Interval { lo, hi, .. } => {
            let c_f = crate::exact::ratio_to_f64(c);
            if *lo > c_f {
                Verdict::Proven
            } else if *hi <= c_f {
                Verdict::Refuted {
                    witness: AtomSet::EMPTY,
                    ratio: Ratio::zero(),
                }
            } else {
                Verdict::Unknown { samples: 0 }
            }
        }
    };
    Ok((
        bundle,
        MarkovCertificate {
            kappa,
            constant: c.clone(),
            verdict,
        },
    ))
}

/// Lemma-style conversion: a (C,N,L)-expansion domain with ratio bound θ
/// is a (C/(Nθ), N, L)-Markov-expansion domain.
pub fn expansion_to_markov_constant(c: &Ratio, n_pieces: usize, theta: &Ratio) -> Ratio {
    c / (ratio_int(n_pieces as i64) * theta)
}

/// Conversely a (κ,N,L)-Markov domain with ratio bound θ is a
/// (κ/(N√θ+κ), N, L)-expansion domain; returned as a certified rational
/// lower bound (√θ rounded up).
pub fn markov_to_expansion_constant(kappa: &Ratio, n_pieces: usize, theta: &Ratio) -> Ratio {
    let sqrt_theta_hi = sqrt_upper_bound(theta, 128);
    kappa / (ratio_int(n_pieces as i64) * sqrt_theta_hi + kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{pair_groupoid, FiniteMetricSpace};
    use crate::exact::ratio_to_f64;
    use crate::groupoid::ball;
    use crate::sets::decompose_unital_symmetric;

    fn complete_bundle(
        n: usize,
    ) -> (MarkovKernelBundle, AtomicMeasureSpace) {
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::complete(n),
            AtomicMeasureSpace::uniform_probability(n),
        );
        let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let bundle = build_kernel(&mu, mu.full_set(), &k).unwrap();
        (bundle, mu)
    }

    fn units_only_bundle() -> (MarkovKernelBundle, AtomicMeasureSpace) {
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::complete(3),
            AtomicMeasureSpace::uniform_probability(3),
        );
        let k = DecomposableSet::units_only(&g, &ell);
        let bundle = build_kernel(&mu, mu.full_set(), &k).unwrap();
        (bundle, mu)
    }

    #[test]
    fn units_kernel_is_identity() {
        let (bundle, mu) = units_only_bundle();
        let pi = bundle.kernel.pi_f64();
        for x in 0..3 {
            for y in 0..3 {
                let expected = if x == y { 1.0 } else { 0.0 };
                assert!((pi[(x, y)] - expected).abs() < 1e-15);
            }
            // σ ≡ 1 and μ̃ = μ
            assert_eq!(bundle.kernel.sigma[x].as_ratio(), Some(ratio_int(1)));
        }
        let a = AtomSet::from_atoms([0, 2]);
        assert_eq!(
            bundle.mu_tilde(a).as_ratio().unwrap(),
            mu.measure(a)
        );
    }

    #[test]
    fn two_atom_swap_kernel() {
        // units ∪ swap on two uniform atoms: Π(x,·) = δ_x/2 + δ_y/2
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::complete(2),
            AtomicMeasureSpace::uniform_probability(2),
        );
        let k = decompose_unital_symmetric(&g, &ell, &g.all_elements());
        let bundle = build_kernel(&mu, mu.full_set(), &k).unwrap();
        let pi = bundle.kernel.pi_f64();
        for x in 0..2 {
            for y in 0..2 {
                assert!((pi[(x, y)] - 0.5).abs() < 1e-14);
            }
        }
        // lazy swap has κ = 1/2 exactly (A = {x}: boundary = μ̃(x)/2)
        let kappa = cheeger(&bundle.kernel, &Budget::default()).unwrap();
        match kappa {
            CheegerValue::Exact { boundary, mass, .. } => {
                assert_eq!(
                    boundary.scale(&ratio_int(2)).sub(&mass).is_zero(),
                    true
                );
            }
            other => panic!("expected exact value, got {other:?}"),
        }
        // pure swap on L²₀ has λ = −1, so gap = 2
        let pure =
            ReversibleKernel::from_rational_rows(
                vec![
                    vec![Ratio::zero(), ratio_int(1)],
                    vec![ratio_int(1), Ratio::zero()],
                ],
                None,
            )
            .unwrap();
        let rep = spectral_gap(&pure).unwrap();
        assert!((rep.lambda + 1.0).abs() < 1e-10);
        assert!((rep.laplacian_gap - 2.0).abs() < 1e-10);
    }

    #[test]
    fn identity_kernel_has_no_gap() {
        let (bundle, _) = units_only_bundle();
        let rep = spectral_gap(&bundle.kernel).unwrap();
        assert!((rep.lambda - 1.0).abs() < 1e-10);
    }

    #[test]
    fn boundary_examples() {
        let (bundle, _) = complete_bundle(4);
        // A = Y has empty boundary
        assert!(boundary_size(&bundle, bundle.y).is_zero());
        // symmetry |∂A| = |∂(Y∖A)| under reversibility
        for bits in 1u64..15 {
            let a = AtomSet(bits);
            let b = a.complement_in(bundle.y);
            assert!(boundary_size(&bundle, a)
                .sub(&boundary_size(&bundle, b))
                .is_zero());
        }
    }

    #[test]
    fn disconnected_kernel_has_zero_cheeger() {
        let w = |x: i64| ratio_int(x);
        // two 2-state blocks
        let weights = vec![
            vec![w(1), w(1), w(0), w(0)],
            vec![w(1), w(1), w(0), w(0)],
            vec![w(0), w(0), w(1), w(1)],
            vec![w(0), w(0), w(1), w(1)],
        ];
        let kernel = ReversibleKernel::from_rational_rows(weights, None).unwrap();
        let kappa = cheeger(&kernel, &Budget::default()).unwrap();
        match kappa {
            CheegerValue::Exact { boundary, .. } => assert!(boundary.is_zero()),
            other => panic!("expected exact, got {other:?}"),
        }
    }

    #[test]
    fn reversing_measure_bounds_small_instances() {
        for n in 2..=5 {
            let (bundle, mu) = complete_bundle(n);
            assert!(reversing_measure_bounds_ok(&bundle, &mu));
        }
        // weighted instance with non-trivial ratios
        let weights = vec![ratio(1, 2), ratio(1, 4), ratio(1, 8), ratio(1, 8)];
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::cycle(4),
            AtomicMeasureSpace::new(weights).unwrap(),
        );
        let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let bundle = build_kernel(&mu, mu.full_set(), &k).unwrap();
        assert!(bundle.kernel.reversibility_ok());
        assert!(bundle.kernel.rows_sum_to_one());
        assert!(reversing_measure_bounds_ok(&bundle, &mu));
    }

    #[test]
    fn sandwich_on_exact_kernels() {
        for n in [3usize, 5, 8] {
            let (bundle, _) = complete_bundle(n);
            let kappa = cheeger(&bundle.kernel, &Budget::default()).unwrap();
            let rep = spectral_gap(&bundle.kernel).unwrap();
            assert!(sandwich_ok(kappa.approx(), rep.lambda, 1e-9));
        }
    }

    #[test]
    fn build_kernel_requires_unital_symmetric() {
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::complete(3),
            AtomicMeasureSpace::uniform_probability(3),
        );
        // a single non-unit bisection: neither unital nor symmetric
        let e = (0..g.n_elements).find(|&e| !g.is_unit(e)).unwrap();
        let b = crate::sets::Bisection::new(&g, crate::groupoid::ElementSet::from([e])).unwrap();
        let k = DecomposableSet::from_pieces(&g, &ell, vec![b]);
        assert!(matches!(
            build_kernel(&mu, mu.full_set(), &k),
            Err(MarkovError::NotUnital)
        ));
    }

    #[test]
    fn markov_domain_checks() {
        // K8 with units ∪ E1 pieces is a Markov expander at C = 0.3
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::complete(8),
            AtomicMeasureSpace::uniform_probability(8),
        );
        let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let (_, cert) =
            markov_domain_check(&mu, mu.full_set(), &k, &ratio(3, 10), &Budget::default())
                .unwrap();
        assert!(matches!(cert.verdict, crate::expansion::Verdict::Proven));

        // strictness: κ exactly C is refuted (lazy swap κ = 1/2)
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::complete(2),
            AtomicMeasureSpace::uniform_probability(2),
        );
        let k = decompose_unital_symmetric(&g, &ell, &g.all_elements());
        let (_, cert) =
            markov_domain_check(&mu, mu.full_set(), &k, &ratio(1, 2), &Budget::default())
                .unwrap();
        assert!(matches!(
            cert.verdict,
            crate::expansion::Verdict::Refuted { .. }
        ));
    }

    #[test]
    fn conversion_constants() {
        assert_eq!(
            expansion_to_markov_constant(&ratio(1, 2), 4, &ratio_int(1)),
            ratio(1, 8)
        );
        let c = markov_to_expansion_constant(&ratio(1, 2), 4, &ratio_int(1));
        assert_eq!(c, ratio(1, 9));
        // θ = 4: √θ = 2 exactly, constant = κ/(2N+κ)
        let c = markov_to_expansion_constant(&ratio(1, 2), 4, &ratio_int(4));
        assert_eq!(c, ratio(1, 17));
    }

    #[test]
    fn interval_mode_brackets_exact_value() {
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::cycle(10),
            AtomicMeasureSpace::uniform_probability(10),
        );
        let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let bundle = build_kernel(&mu, mu.full_set(), &k).unwrap();
        let exact = match cheeger(&bundle.kernel, &Budget::default()).unwrap() {
            CheegerValue::Exact { value, .. } => value,
            _ => panic!("should be exact at 10 states"),
        };
        let tiny = Budget {
            exact_limit: 4,
            ..Budget::default()
        };
        match cheeger(&bundle.kernel, &tiny).unwrap() {
            CheegerValue::Interval { lo, hi, .. } => {
                assert!(lo <= exact + 1e-9, "lo {lo} vs exact {exact}");
                assert!(exact <= hi + 1e-9, "hi {hi} vs exact {exact}");
            }
            _ => panic!("expected interval"),
        }
    }

    #[test]
    fn random_reversible_kernels_sandwich() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.gen_range(2..=8);
            let mut w = vec![vec![Ratio::zero(); n]; n];
            for x in 0..n {
                for y in x..n {
                    let v = ratio_int(rng.gen_range(0..4));
                    w[x][y] = v.clone();
                    w[y][x] = v;
                }
                w[x][x] += ratio_int(1);
            }
            let kernel = ReversibleKernel::from_rational_rows(w, None).unwrap();
            let kappa = cheeger(&kernel, &Budget::default()).unwrap();
            let rep = spectral_gap(&kernel).unwrap();
            assert!(
                sandwich_ok(kappa.approx(), rep.lambda, 1e-9),
                "kappa {} lambda {}",
                kappa.approx(),
                rep.lambda
            );
            let _ = ratio_to_f64(&ratio_int(1));
        }
    }
}
