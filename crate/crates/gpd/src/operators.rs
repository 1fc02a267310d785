//! Weighted operators on L²(𝒢⁽⁰⁾, μ): dynamical propagation and
//! quasi-locality checks, averaging and rank-one projections,
//! measure-change conjugation, zero-set reduction, block families, and
//! the finite-propagation approximation of projections.

use nalgebra::DMatrix;
use num_traits::{Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exact::{ratio, ratio_int, ratio_to_f64, Ratio};
use crate::expansion::{
    exhaustive_params, structure_domain_at, Budget, ExpansionError, ExpansionParams, Level,
    Method, StructureDomain,
};
use crate::groupoid::{
    AtomId, AtomSet, AtomicMeasureSpace, ElementId, ElementSet, FiniteGroupoid, LengthFunction,
};
use crate::markov::{
    build_kernel, cheeger, expansion_to_markov_constant, CheegerValue, MarkovError,
};
use crate::sets::{Bisection, DecomposableSet};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("domain has measure zero")]
    DegenerateDomain,
    #[error("vector is not a unit vector (norm² = {0})")]
    NotNormalized(String),
    #[error("vector has a zero set; reduce with the zero-set embedding first")]
    HasZeroSet,
    #[error("instruments cannot reach the requested accuracy; best achievable ≈ {0:.3e}")]
    InsufficientInstruments(f64),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
}

/// A dense matrix on atoms together with the μ-weighted inner product
/// ⟨f,g⟩ = Σ f(x)·g(x)·μ(x).
#[derive(Clone, Debug)]
pub struct WeightedOperator {
    pub matrix: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl WeightedOperator {
    pub fn new(matrix: DMatrix<f64>, mu: &AtomicMeasureSpace) -> WeightedOperator {
        assert_eq!(matrix.nrows(), mu.n_atoms());
        assert_eq!(matrix.ncols(), mu.n_atoms());
        WeightedOperator {
            matrix,
            weights: mu.weights.iter().map(ratio_to_f64).collect(),
        }
    }

    pub fn identity(mu: &AtomicMeasureSpace) -> WeightedOperator {
        WeightedOperator::new(DMatrix::identity(mu.n_atoms(), mu.n_atoms()), mu)
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// D^{1/2}·M·D^{-1/2} with D = diag(μ); unitarily equivalent to the
    /// operator in the unweighted ℓ² norm.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut out = self.matrix.clone();
        for x in 0..n {
            for y in 0..n {
                out[(x, y)] *= (self.weights[x] / self.weights[y]).sqrt();
            }
        }
        out
    }

    pub fn op_norm(&self) -> f64 {
        let s = self.symmetrized();
        if s.nrows() == 0 {
            return 0.0;
        }
        s.singular_values().iter().cloned().fold(0.0, f64::max)
    }

    /// ‖χ_A T χ_B‖, the weighted norm of the (A,B) block.
    pub fn block_norm(&self, a: AtomSet, b: AtomSet) -> f64 {
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let s = self.symmetrized();
        let rows = a.atoms();
        let cols = b.atoms();
        let mut block = DMatrix::zeros(rows.len(), cols.len());
        for (i, &x) in rows.iter().enumerate() {
            for (j, &y) in cols.iter().enumerate() {
                block[(i, j)] = s[(x, y)];
            }
        }
        block.singular_values().iter().cloned().fold(0.0, f64::max)
    }

    /// Adjoint in the weighted inner product: T*[x,y] = T[y,x]·μ(y)/μ(x).
    pub fn adjoint(&self) -> WeightedOperator {
        let n = self.n();
        let mut out = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                out[(x, y)] = self.matrix[(y, x)] * self.weights[y] / self.weights[x];
            }
        }
        WeightedOperator {
            matrix: out,
            weights: self.weights.clone(),
        }
    }

    pub fn mul(&self, other: &WeightedOperator) -> WeightedOperator {
        WeightedOperator {
            matrix: &self.matrix * &other.matrix,
            weights: self.weights.clone(),
        }
    }

    pub fn sub(&self, other: &WeightedOperator) -> WeightedOperator {
        WeightedOperator {
            matrix: &self.matrix - &other.matrix,
            weights: self.weights.clone(),
        }
    }

    pub fn scale(&self, c: f64) -> WeightedOperator {
        WeightedOperator {
            matrix: c * &self.matrix,
            weights: self.weights.clone(),
        }
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(f);
        (&self.matrix * v).iter().cloned().collect()
    }
}

/// x ∈ r(K·{y}) for each atom y, as a mask over x.
fn reach_masks(k: &DecomposableSet, n_atoms: usize) -> Vec<AtomSet> {
    (0..n_atoms)
        .map(|y| k.saturate(AtomSet::singleton(y)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct PropagationCheck {
    pub ok: bool,
    pub counterexample: Option<(AtomId, AtomId)>,
}

/// Entrywise support scan: T has propagation over K iff T[x,y] = 0
/// whenever x ∉ r(K·{y}). For unital symmetric K this is equivalent to
/// the set-pair definition (verified exhaustively in tests).
pub fn check_propagation(
    t: &WeightedOperator,
    k: &DecomposableSet,
    tol: f64,
) -> PropagationCheck {
    let n = t.n();
    let reach = reach_masks(k, n);
    for y in 0..n {
        for x in 0..n {
            if t.matrix[(x, y)].abs() > tol && !reach[y].contains(x) {
                return PropagationCheck {
                    ok: false,
                    counterexample: Some((x, y)),
                };
            }
        }
    }
    PropagationCheck {
        ok: true,
        counterexample: None,
    }
}

#[derive(Clone, Debug)]
pub struct QuasiLocalReport {
    /// sup ‖χ_A T χ_B‖ over admissible pairs, with B = complement of
    /// r(K·A) (the monotone-maximal admissible B)
    pub value: f64,
    pub witness: Option<(AtomSet, AtomSet)>,
    pub method: Method,
}

/// sup over pairs (A, B) with r(K·A) ∩ B = ∅ of ‖χ_A T χ_B‖. The sup is
/// attained at B = complement of r(K·A); exact mode scans all A, sampled
/// mode draws seeded random subsets.
pub fn quasi_local_norm(
    t: &WeightedOperator,
    k: &DecomposableSet,
    budget: &Budget,
) -> QuasiLocalReport {
    let n = t.n();
    let full = AtomSet::full(n);
    let mut value = 0.0;
    let mut witness = None;
    let eval = |a: AtomSet, value: &mut f64, witness: &mut Option<(AtomSet, AtomSet)>| {
        let b = k.saturate(a).complement_in(full);
        if b.is_empty() {
            return;
        }
        let v = t.block_norm(a, b);
        if v > *value {
            *value = v;
            *witness = Some((a, b));
        }
    };
    if n <= budget.exact_limit {
        for bits in 1..=full.0 {
            eval(AtomSet(bits), &mut value, &mut witness);
        }
        QuasiLocalReport {
            value,
            witness,
            method: Method::Exact,
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
        for _ in 0..2 * budget.samples {
            let mut a = AtomSet::EMPTY;
            for x in 0..n {
                if rng.gen_bool(0.5) {
                    a.insert(x);
                }
            }
            if a.is_empty() {
                continue;
            }
            eval(a, &mut value, &mut witness);
        }
        QuasiLocalReport {
            value,
            witness,
            method: Method::Randomized,
        }
    }
}

/// The rank-one orthogonal projection onto χ_Y: P f = (⟨f,χ_Y⟩/μ(Y))·χ_Y,
/// with entries P[x,y] = μ(y)/μ(Y) for x,y ∈ Y.
pub fn averaging_projection(
    mu: &AtomicMeasureSpace,
    y: AtomSet,
) -> Result<WeightedOperator, OperatorError> {
    if y.is_empty() {
        return Err(OperatorError::DegenerateDomain);
    }
    let n = mu.n_atoms();
    let mu_y = ratio_to_f64(&mu.measure(y));
    let mut m = DMatrix::zeros(n, n);
    for x in y.iter() {
        for yy in y.iter() {
            m[(x, yy)] = ratio_to_f64(&mu.weights[yy]) / mu_y;
        }
    }
    Ok(WeightedOperator::new(m, mu))
}

/// A rank-one projection P = |ξ⟩⟨ξ| with its associated measure
/// dν = |ξ|²dμ, zero set Z, support Y and the zero-set reduction data.
#[derive(Clone, Debug)]
pub struct ProjectionData {
    pub xi: Vec<f64>,
    /// exact |ξ(x)|², used for all measure-level computations
    pub xi_squared: Vec<Ratio>,
    pub p: WeightedOperator,
    /// probability measure dν = |ξ|²dμ on the support atoms (in
    /// increasing atom order)
    pub nu: AtomicMeasureSpace,
    pub zero_set: AtomSet,
    pub support: AtomSet,
}

/// Builds projection data from the exact profile |ξ|² (and optional sign
/// pattern for ξ). Requires ‖ξ‖ = 1 exactly: Σ |ξ(x)|²·μ(x) = 1.
pub fn rank_one(
    mu: &AtomicMeasureSpace,
    xi_squared: Vec<Ratio>,
    negative: Option<&AtomSet>,
) -> Result<ProjectionData, OperatorError> {
    let n = mu.n_atoms();
    assert_eq!(xi_squared.len(), n);
    let norm_sq: Ratio = xi_squared
        .iter()
        .zip(&mu.weights)
        .fold(Ratio::zero(), |acc, (x2, w)| acc + x2 * w);
    if norm_sq != ratio_int(1) {
        return Err(OperatorError::NotNormalized(norm_sq.to_string()));
    }
    let mut zero_set = AtomSet::EMPTY;
    let mut xi = vec![0.0; n];
    for x in 0..n {
        if xi_squared[x].is_negative() {
            return Err(OperatorError::NotNormalized(format!(
                "|ξ({x})|² is negative"
            )));
        }
        if xi_squared[x].is_zero() {
            zero_set.insert(x);
        } else {
            let sign = if negative.map_or(false, |s| s.contains(x)) {
                -1.0
            } else {
                1.0
            };
            xi[x] = sign * ratio_to_f64(&xi_squared[x]).sqrt();
        }
    }
    let support = zero_set.complement_in(AtomSet::full(n));
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            m[(x, y)] = xi[x] * xi[y] * ratio_to_f64(&mu.weights[y]);
        }
    }
    let nu = AtomicMeasureSpace::new(
        support
            .iter()
            .map(|x| &xi_squared[x] * &mu.weights[x])
            .collect(),
    )
    .map_err(|_| OperatorError::DegenerateDomain)?;
    Ok(ProjectionData {
        xi,
        xi_squared,
        p: WeightedOperator::new(m, mu),
        nu,
        zero_set,
        support,
    })
}

/// The zero-set embedding Q: L²(Y, μ|_Y) → L²(𝒢⁽⁰⁾, μ), extension by
/// zero; columns indexed by the atoms of Y in increasing order.
pub fn zero_set_embedding(n_atoms: usize, y: AtomSet) -> DMatrix<f64> {
    let cols = y.atoms();
    let mut q = DMatrix::zeros(n_atoms, cols.len());
    for (j, &x) in cols.iter().enumerate() {
        q[(x, j)] = 1.0;
    }
    q
}

/// Conjugation by the measure-change unitary U: L²(ν) → L²(μ), f ↦ f·ξ.
/// Requires ξ nowhere zero; Ad_U(T) = diag(ξ)·T·diag(1/ξ) maps the
/// ν-averaging projection to P and preserves propagation.
pub fn change_measure_conjugate(
    proj: &ProjectionData,
    t: &DMatrix<f64>,
) -> Result<DMatrix<f64>, OperatorError> {
    if !proj.zero_set.is_empty() {
        return Err(OperatorError::HasZeroSet);
    }
    let n = proj.xi.len();
    let mut out = t.clone();
    for x in 0..n {
        for y in 0..n {
            out[(x, y)] *= proj.xi[x] / proj.xi[y];
        }
    }
    Ok(out)
}

/// Block-diagonal operator on the disjoint union of the blocks' spaces.
pub fn family_assemble(blocks: &[&WeightedOperator]) -> WeightedOperator {
    let n: usize = blocks.iter().map(|b| b.n()).sum();
    let mut matrix = DMatrix::zeros(n, n);
    let mut weights = Vec::with_capacity(n);
    let mut off = 0;
    for b in blocks {
        let k = b.n();
        matrix.view_mut((off, off), (k, k)).copy_from(&b.matrix);
        weights.extend_from_slice(&b.weights);
        off += k;
    }
    WeightedOperator { matrix, weights }
}

/// A certified Markov-expansion instrument: a structure domain whose
/// kernel has Cheeger constant strictly above `c_markov`.
#[derive(Clone, Debug)]
pub struct MarkovInstrument {
    pub structure: StructureDomain,
    pub c_markov: Ratio,
    pub kappa_exact: bool,
}

/// Largest convenient rational c with κ > c, from an exact Cheeger value.
fn certified_kappa_lower(kappa: &CheegerValue) -> Option<Ratio> {
    match kappa {
        CheegerValue::Exact {
            boundary,
            mass,
            value,
            ..
        } => {
            if boundary.is_zero() {
                return None;
            }
            let mut c = Ratio::from_float(value * (1.0 - 1e-9))
                .filter(|c| c.is_positive())
                .unwrap_or_else(|| ratio(1, 1_000_000_000));
            for _ in 0..200 {
                if boundary.cmp_radical(&mass.scale(&c)) == std::cmp::Ordering::Greater {
                    return Some(c);
                }
                c *= ratio(9, 10);
            }
            None
        }
        CheegerValue::Interval { .. } => None,
    }
}

/// Derives a certified Markov instrument at exhaustion index n: exact
/// Cheeger enumeration when the domain is small, otherwise the generic
/// expansion→Markov constant C/(2Nθ).
pub fn markov_instrument_at(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    mu: &AtomicMeasureSpace,
    params: &ExpansionParams,
    c: &Ratio,
    n: u32,
    budget: &Budget,
) -> Result<MarkovInstrument, OperatorError> {
    let structure = structure_domain_at(g, ell, mu, params, c, n, budget)?;
    let d = &structure.domain;
    let bundle = build_kernel(mu, d.y, &d.k)?;
    let (c_markov, kappa_exact) = if d.y.len() <= budget.exact_limit {
        let kappa = cheeger(&bundle.kernel, budget)?;
        match certified_kappa_lower(&kappa) {
            Some(c) => (c, true),
            None => (Ratio::zero(), true),
        }
    } else {
        (
            expansion_to_markov_constant(&d.c, d.n_pieces, &d.theta),
            false,
        )
    };
    Ok(MarkovInstrument {
        structure,
        c_markov,
        kappa_exact,
    })
}

#[derive(Clone, Debug)]
pub struct ApproximationCertificate {
    pub n: u32,
    pub m: u32,
    pub c_markov: Ratio,
    pub n_pieces: usize,
    pub length: Ratio,
    pub theta: Ratio,
    pub declared_k: DecomposableSet,
    pub a_priori_bound: f64,
    pub measured_error: f64,
    pub operator: WeightedOperator,
}

fn a_priori(n_pieces: usize, theta: &Ratio, c: f64, m: u32) -> f64 {
    n_pieces as f64 * ratio_to_f64(theta).sqrt() * (1.0 - c * c / 4.0).powi(m as i32)
}

/// Approximates the averaging projection P_𝒢 by an operator of finite
/// dynamical propagation: picks an exhaustion index n with
/// √(μ(𝒢⁽⁰⁾∖Y_n)) < ε/2, a power m with N√θ·(1−C²/4)^m < ε/2, and
/// returns (μ̃(Y)/μ(Y))·Ad[((χ_Y + 𝔓)/2)^m] extended by zero, together
/// with the declared propagation set K^m.
pub fn approximate_averaging(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    mu: &AtomicMeasureSpace,
    params: &ExpansionParams,
    c_struct: &Ratio,
    eps: &Ratio,
    budget: &Budget,
) -> Result<ApproximationCertificate, OperatorError> {
    assert!(
        mu.is_probability(),
        "averaging approximation expects a probability measure"
    );
    let full = mu.full_set();
    if mu.n_atoms() == 1 {
        // P is already local: T = P at m = 0
        let p = averaging_projection(mu, full)?;
        return Ok(ApproximationCertificate {
            n: 0,
            m: 0,
            c_markov: ratio_int(1),
            n_pieces: 1,
            length: ratio_int(0),
            theta: ratio_int(1),
            declared_k: DecomposableSet::units_only(g, ell),
            a_priori_bound: 0.0,
            measured_error: 0.0,
            operator: p,
        });
    }
    let eps_f = ratio_to_f64(eps);
    let quarter_eps_sq = eps * eps / ratio_int(4);
    let mut best_achievable = f64::INFINITY;
    let mut chosen: Option<MarkovInstrument> = None;
    let mut stale = 0u32;
    let mut last_deficit: Option<Ratio> = None;
    for n in 0..=64u32 {
        let inst = match markov_instrument_at(g, ell, mu, params, c_struct, n, budget) {
            Ok(inst) => inst,
            // the schedule has no level deep enough for this n: stop with
            // whatever accuracy the built instruments reach
            Err(OperatorError::Expansion(ExpansionError::MissingLevel(_))) => break,
            Err(e) => return Err(e),
        };
        let deficit = mu.total_mass.clone() - mu.measure(inst.structure.domain.y);
        best_achievable = best_achievable.min(2.0 * ratio_to_f64(&deficit).sqrt());
        if deficit < quarter_eps_sq && inst.c_markov.is_positive() {
            chosen = Some(inst);
            break;
        }
        // plateau detection: the excluded mass is not shrinking
        if last_deficit.as_ref() == Some(&deficit) {
            stale += 1;
            if stale >= 3 {
                break;
            }
        } else {
            stale = 0;
            last_deficit = Some(deficit);
        }
    }
    let inst = chosen.ok_or(OperatorError::InsufficientInstruments(best_achievable))?;
    let d = &inst.structure.domain;
    let c_f = ratio_to_f64(&inst.c_markov);
    let target = eps_f / 2.0;
    let mut m = 1u32;
    if a_priori(d.n_pieces, &d.theta, c_f, m) >= target {
        let base = 1.0 - c_f * c_f / 4.0;
        let need =
            (target / (d.n_pieces as f64 * ratio_to_f64(&d.theta).sqrt())).ln() / base.ln();
        m = need.ceil().max(1.0) as u32;
        while m > 1 && a_priori(d.n_pieces, &d.theta, c_f, m - 1) < target {
            m -= 1;
        }
        while a_priori(d.n_pieces, &d.theta, c_f, m) >= target {
            m += 1;
            if m > 20_000_000 {
                return Err(OperatorError::InsufficientInstruments(best_achievable));
            }
        }
    }

    let bundle = build_kernel(mu, d.y, &d.k)?;
    let states = &bundle.states;
    let ns = states.len();
    let pi = bundle.kernel.pi_f64();
    let mass = bundle.kernel.mass_f64();
    // ((χ_Y + 𝔓)/2)^m via the eigendecomposition of the μ̃-symmetrised form
    let mut sym = DMatrix::zeros(ns, ns);
    for x in 0..ns {
        for y in 0..ns {
            let lazy = if x == y {
                0.5 + 0.5 * pi[(x, y)]
            } else {
                0.5 * pi[(x, y)]
            };
            sym[(x, y)] = lazy * (mass[x] / mass[y]).sqrt();
        }
    }
    for x in 0..ns {
        for y in (x + 1)..ns {
            let avg = (sym[(x, y)] + sym[(y, x)]) / 2.0;
            sym[(x, y)] = avg;
            sym[(y, x)] = avg;
        }
    }
    let eigen = nalgebra::SymmetricEigen::try_new(sym, 1e-13, 0)
        .ok_or_else(|| MarkovError::NumericalFailure("power eigensolve failed".into()))?;
    let powered = {
        let mut lam = eigen.eigenvalues.clone();
        for v in lam.iter_mut() {
            *v = v.powi(m as i32);
        }
        &eigen.eigenvectors * DMatrix::from_diagonal(&lam) * eigen.eigenvectors.transpose()
    };
    // un-symmetrise, apply the isometric embedding and its adjoint (the
    // 1/σ factor), scale by μ̃(Y)/μ(Y), extend by zero
    let sigma: Vec<f64> = bundle.kernel.sigma.iter().map(|s| s.to_f64()).collect();
    let mu_y = ratio_to_f64(&mu.measure(d.y));
    let scale = mass.iter().sum::<f64>() / mu_y;
    let n_atoms = mu.n_atoms();
    let mut t = DMatrix::zeros(n_atoms, n_atoms);
    for (i, &x) in states.iter().enumerate() {
        for (j, &y) in states.iter().enumerate() {
            let a_m = powered[(i, j)] * (mass[j] / mass[i]).sqrt();
            t[(x, y)] = scale * a_m / sigma[j];
        }
    }
    let operator = WeightedOperator::new(t, mu);
    let declared_k = d.k.power(g, ell, m);
    let p = averaging_projection(mu, full)?;
    let measured_error = operator.sub(&p).op_norm();
    Ok(ApproximationCertificate {
        n: inst.structure.n,
        m,
        c_markov: inst.c_markov.clone(),
        n_pieces: d.n_pieces,
        length: d.length.clone(),
        theta: d.theta.clone(),
        declared_k,
        a_priori_bound: a_priori(d.n_pieces, &d.theta, c_f, m),
        measured_error,
        operator,
    })
}

/// The sub-groupoid of arrows with both endpoints in Y, with the
/// restricted length; returns (groupoid, length, atom map, element map).
pub fn reduce_groupoid(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    y: AtomSet,
) -> (FiniteGroupoid, LengthFunction, Vec<AtomId>, Vec<ElementId>) {
    let atoms = y.atoms();
    let atom_index = |a: AtomId| atoms.iter().position(|&b| b == a).unwrap();
    let elems: Vec<ElementId> = (0..g.n_elements)
        .filter(|&e| y.contains(g.source[e]) && y.contains(g.range[e]))
        .collect();
    let elem_index = |e: ElementId| elems.iter().position(|&f| f == e).unwrap();
    let units = atoms.iter().map(|&a| elem_index(g.units[a])).collect();
    let source = elems.iter().map(|&e| atom_index(g.source[e])).collect();
    let range = elems.iter().map(|&e| atom_index(g.range[e])).collect();
    let inverse = elems.iter().map(|&e| elem_index(g.inverse[e])).collect();
    let mut compose = std::collections::HashMap::new();
    for (i, &e1) in elems.iter().enumerate() {
        for (j, &e2) in elems.iter().enumerate() {
            if g.source[e1] == g.range[e2] {
                if let Some(p) = g.compose2(e1, e2) {
                    compose.insert((i, j), elem_index(p));
                }
            }
        }
    }
    let lengths = elems.iter().map(|&e| ell.values[e].clone()).collect();
    (
        FiniteGroupoid::new(elems.len(), units, source, range, inverse, compose),
        LengthFunction::new(lengths),
        atoms,
        elems,
    )
}

#[derive(Clone, Debug)]
pub struct RankOneApproximation {
    /// certificate of the averaging approximation on the reduction in the
    /// associated measure ν
    pub reduced: ApproximationCertificate,
    pub operator: WeightedOperator,
    pub declared_k: DecomposableSet,
    pub measured_error: f64,
}

/// Approximates a rank-one projection: reduces by the zero set, changes
/// measure to ν on the support, approximates the ν-averaging projection
/// there, and conjugates/embeds back.
pub fn approximate_rank_one(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    mu: &AtomicMeasureSpace,
    proj: &ProjectionData,
    eps: &Ratio,
    budget: &Budget,
) -> Result<RankOneApproximation, OperatorError> {
    let (rg, rell, atoms, elems) = reduce_groupoid(g, ell, proj.support);
    let nu = proj.nu.clone();
    let params = exhaustive_params(&rg, &rell, &nu, budget)?
        .ok_or(OperatorError::InsufficientInstruments(f64::INFINITY))?;
    let reduced = approximate_averaging(&rg, &rell, &nu, &params, &ratio(1, 4), eps, budget)?;

    // conjugate by U: f ↦ f·ξ on the support, then extend by zero
    let ns = atoms.len();
    let n = mu.n_atoms();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..ns {
        for j in 0..ns {
            let (x, y) = (atoms[i], atoms[j]);
            t[(x, y)] = reduced.operator.matrix[(i, j)] * proj.xi[x] / proj.xi[y];
        }
    }
    let operator = WeightedOperator::new(t, mu);

    // map the declared K back into the ambient groupoid and re-adjoin the
    // full unit set
    let mut pieces: Vec<Bisection> = reduced
        .declared_k
        .pieces
        .iter()
        .map(|p| {
            let members: ElementSet = p.members.iter().map(|&e| elems[e]).collect();
            Bisection::new(g, members).expect("reduced bisections embed")
        })
        .collect();
    pieces.push(Bisection::units(g));
    let declared_k = DecomposableSet::from_pieces(g, ell, pieces);
    let measured_error = operator.sub(&proj.p).op_norm();
    Ok(RankOneApproximation {
        reduced,
        operator,
        declared_k,
        measured_error,
    })
}

/// Quasi-local schedule level: a decomposable set K_ε with the guarantee
/// ‖χ_A T χ_B‖ < ε whenever r(K_ε·A) ∩ B = ∅.
#[derive(Clone, Debug)]
pub struct QuasiLocalLevel {
    pub eps: Ratio,
    pub k: DecomposableSet,
}

/// Quasi-local parameters of P_𝒢 → expansion parameters with C = 1/2:
/// for each requested α, uses the quasi-local level at ε = √α/2 (any
/// provided level with ε² ≤ α/4 serves).
pub fn quasilocal_to_expansion(
    levels: &[QuasiLocalLevel],
    alphas: &[Ratio],
) -> Result<ExpansionParams, OperatorError> {
    let mut out = Vec::new();
    for alpha in alphas {
        let bound = alpha / ratio_int(4);
        let level = levels
            .iter()
            .filter(|l| &l.eps * &l.eps <= bound)
            .max_by(|a, b| a.eps.cmp(&b.eps))
            .ok_or_else(|| ExpansionError::MissingLevel(alpha.clone()))?;
        out.push(Level {
            alpha: alpha.clone(),
            c: ratio(1, 2),
            k: level.k.clone(),
        });
    }
    Ok(ExpansionParams::new(out))
}

/// Expansion parameters → quasi-local parameters for P_𝒢: at level ε,
/// takes the minimal n with (1+C_ε)^n·ε > 1/2 and returns K = K_ε^{2n},
/// which guarantees ‖χ_A P_𝒢 χ_B‖ < √ε on separated pairs.
pub fn expansion_to_quasilocal(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    params: &ExpansionParams,
    eps: &Ratio,
) -> Result<(DecomposableSet, u32), OperatorError> {
    let level = params
        .level_for(eps)
        .ok_or_else(|| ExpansionError::MissingLevel(eps.clone()))?;
    let mut n = 0u32;
    let base = ratio_int(1) + &level.c;
    let mut pow = eps.clone();
    let half = ratio(1, 2);
    while pow <= half {
        pow *= &base;
        n += 1;
        assert!(n < 10_000, "transfer exponent out of range");
    }
    Ok((level.k.power(g, ell, 2 * n), n))
}

/// √(μ(A)·μ(B)), the exact block norm of the averaging projection for a
/// probability measure.
pub fn averaging_block_identity(mu: &AtomicMeasureSpace, a: AtomSet, b: AtomSet) -> f64 {
    (ratio_to_f64(&mu.measure(a)) * ratio_to_f64(&mu.measure(b))).sqrt()
}
