//! Symbolic graph-groupoid engine over infinite path spaces: exact
//! cylinder-set arithmetic, one-step ball saturation, expansion checks on
//! cylinder unions, and the k-step line-graph family.
//!
//! The path space is never materialized. Sets are canonical unions of
//! cylinders inside a finite vertex window; operations that would need
//! edges outside the window fail with `WindowExceeded` rather than
//! silently truncating.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exact::{ratio, ratio_int, Ratio};
use crate::expansion::{Budget, Method};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("operation escapes the vertex window: {0}")]
    WindowExceeded(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

/// A finite window of a directed uniformly locally finite graph. `s_deg`
/// is the true out-degree of each vertex; a vertex is `out_complete` when
/// all of its true out-edges lie in the window, and `in_complete` when
/// all of its true in-edges do.
#[derive(Clone, Debug)]
pub struct DirectedGraph {
    pub n_vertices: usize,
    /// (source, range) pairs
    pub edges: Vec<(usize, usize)>,
    pub s_deg: Vec<usize>,
    pub weights: Vec<Ratio>,
    pub in_complete: Vec<bool>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// A fully known finite graph: true degrees equal in-window degrees.
    pub fn new(
        n_vertices: usize,
        edges: Vec<(usize, usize)>,
        weights: Vec<Ratio>,
    ) -> Result<DirectedGraph, GraphError> {
        let s_deg = {
            let mut d = vec![0; n_vertices];
            for &(s, _) in &edges {
                if s >= n_vertices {
                    return Err(GraphError::InvalidGraph(format!("edge source {s} out of range")));
                }
                d[s] += 1;
            }
            d
        };
        DirectedGraph::with_window(n_vertices, edges, s_deg, weights, vec![true; n_vertices])
    }

    pub fn with_window(
        n_vertices: usize,
        edges: Vec<(usize, usize)>,
        s_deg: Vec<usize>,
        weights: Vec<Ratio>,
        in_complete: Vec<bool>,
    ) -> Result<DirectedGraph, GraphError> {
        if weights.len() != n_vertices || s_deg.len() != n_vertices {
            return Err(GraphError::InvalidGraph("table lengths disagree".into()));
        }
        let mut total = Ratio::zero();
        for (v, w) in weights.iter().enumerate() {
            if !w.is_positive() {
                return Err(GraphError::InvalidGraph(format!("weight of vertex {v} not positive")));
            }
            total += w;
        }
        if total > ratio_int(1) {
            return Err(GraphError::InvalidGraph("vertex weights exceed total mass 1".into()));
        }
        let mut out_edges = vec![Vec::new(); n_vertices];
        let mut in_edges = vec![Vec::new(); n_vertices];
        for (i, &(s, r)) in edges.iter().enumerate() {
            if s >= n_vertices || r >= n_vertices {
                return Err(GraphError::InvalidGraph(format!("edge {i} out of window")));
            }
            out_edges[s].push(i);
            in_edges[r].push(i);
        }
        for v in 0..n_vertices {
            if out_edges[v].len() > s_deg[v] {
                return Err(GraphError::InvalidGraph(format!(
                    "vertex {v}: {} in-window out-edges exceed declared s-deg {}",
                    out_edges[v].len(),
                    s_deg[v]
                )));
            }
        }
        Ok(DirectedGraph {
            n_vertices,
            edges,
            s_deg,
            weights,
            in_complete,
            out_edges,
            in_edges,
        })
    }

    pub fn out_complete(&self, v: usize) -> bool {
        self.out_edges[v].len() == self.s_deg[v]
    }

    pub fn is_terminal(&self, v: usize) -> bool {
        self.s_deg[v] == 0
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }
}

/// A finite path α (possibly of length 0) naming the cylinder Z(α).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Cylinder {
    pub start: usize,
    pub edges: Vec<usize>,
}

impl Cylinder {
    pub fn vertex(v: usize) -> Cylinder {
        Cylinder {
            start: v,
            edges: Vec::new(),
        }
    }

    pub fn from_edges(g: &DirectedGraph, edges: Vec<usize>) -> Result<Cylinder, GraphError> {
        if edges.is_empty() {
            return Err(GraphError::InvalidPath("empty edge list has no start".into()));
        }
        let start = g.edges[edges[0]].0;
        let c = Cylinder { start, edges };
        c.validate(g)?;
        Ok(c)
    }

    pub fn validate(&self, g: &DirectedGraph) -> Result<(), GraphError> {
        let mut at = self.start;
        for &e in &self.edges {
            let (s, r) = g.edges[e];
            if s != at {
                return Err(GraphError::InvalidPath(format!(
                    "edge {e} starts at {s}, expected {at}"
                )));
            }
            at = r;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// r(α): the endpoint vertex.
    pub fn end(&self, g: &DirectedGraph) -> usize {
        self.edges.last().map_or(self.start, |&e| g.edges[e].1)
    }

    /// μ(Z(α)) = b_{s(α)} · ∏ 1/s-deg(s(αᵢ)).
    pub fn measure(&self, g: &DirectedGraph) -> Result<Ratio, GraphError> {
        let mut m = g.weights[self.start].clone();
        for &e in &self.edges {
            let s = g.edges[e].0;
            if g.is_terminal(s) {
                return Err(GraphError::InvalidPath(format!(
                    "path passes through terminal vertex {s}"
                )));
            }
            m /= ratio_int(g.s_deg[s] as i64);
        }
        Ok(m)
    }

    fn is_prefix_of(&self, other: &Cylinder) -> bool {
        self.start == other.start
            && self.edges.len() <= other.edges.len()
            && other.edges[..self.edges.len()] == self.edges[..]
    }

    /// The one-step refinement Z(α) = ⊔ Z(αe) over out-edges of r(α).
    pub fn refine(&self, g: &DirectedGraph) -> Result<Vec<Cylinder>, GraphError> {
        let v = self.end(g);
        if g.is_terminal(v) {
            return Err(GraphError::WindowExceeded(format!(
                "vertex {v} is terminal; Z cannot be refined"
            )));
        }
        if !g.out_complete(v) {
            return Err(GraphError::WindowExceeded(format!(
                "out-edges of vertex {v} are not all inside the window"
            )));
        }
        Ok(g.out_edges(v)
            .iter()
            .map(|&e| {
                let mut edges = self.edges.clone();
                edges.push(e);
                Cylinder {
                    start: self.start,
                    edges,
                }
            })
            .collect())
    }
}

/// A finite union of cylinders in canonical form: pairwise
/// non-containing, with complete sibling families merged into their
/// parent. Canonical forms are equal iff the unions are equal as sets of
/// infinite paths.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct CylinderUnion {
    cylinders: BTreeSet<Cylinder>,
}

impl CylinderUnion {
    pub fn empty() -> CylinderUnion {
        CylinderUnion::default()
    }

    pub fn from_cylinders<I: IntoIterator<Item = Cylinder>>(
        g: &DirectedGraph,
        cyls: I,
    ) -> Result<CylinderUnion, GraphError> {
        let mut set: BTreeSet<Cylinder> = BTreeSet::new();
        for c in cyls {
            c.validate(g)?;
            set.insert(c);
        }
        Ok(CylinderUnion {
            cylinders: canonicalize(g, set),
        })
    }

    pub fn vertex(g: &DirectedGraph, v: usize) -> Result<CylinderUnion, GraphError> {
        CylinderUnion::from_cylinders(g, [Cylinder::vertex(v)])
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    pub fn cylinders(&self) -> impl Iterator<Item = &Cylinder> {
        self.cylinders.iter()
    }

    pub fn len(&self) -> usize {
        self.cylinders.len()
    }

    pub fn union(&self, g: &DirectedGraph, other: &CylinderUnion) -> CylinderUnion {
        let mut set = self.cylinders.clone();
        set.extend(other.cylinders.iter().cloned());
        CylinderUnion {
            cylinders: canonicalize(g, set),
        }
    }

    /// Exact measure; maximal cylinders in canonical form are pairwise
    /// disjoint, so the measure is additive over them.
    pub fn measure(&self, g: &DirectedGraph) -> Result<Ratio, GraphError> {
        let mut total = Ratio::zero();
        for c in &self.cylinders {
            total += c.measure(g)?;
        }
        Ok(total)
    }

    pub fn contains_cylinder(&self, c: &Cylinder) -> bool {
        self.cylinders.iter().any(|p| p.is_prefix_of(c))
    }
}

fn canonicalize(g: &DirectedGraph, set: BTreeSet<Cylinder>) -> BTreeSet<Cylinder> {
    // drop cylinders contained in a shorter one (BTreeSet order puts
    // prefixes first within a start vertex)
    let mut kept: BTreeSet<Cylinder> = BTreeSet::new();
    for c in set {
        if !kept.iter().any(|p| p.is_prefix_of(&c)) {
            kept.insert(c);
        }
    }
    // merge complete sibling families bottom-up
    loop {
        let mut groups: BTreeMap<Cylinder, Vec<Cylinder>> = BTreeMap::new();
        for c in kept.iter().filter(|c| !c.is_empty()) {
            let parent = Cylinder {
                start: c.start,
                edges: c.edges[..c.edges.len() - 1].to_vec(),
            };
            groups.entry(parent).or_default().push(c.clone());
        }
        let mut changed = false;
        for (parent, children) in groups {
            let v = parent.end(g);
            if g.out_complete(v) && !g.is_terminal(v) && children.len() == g.s_deg[v] {
                for c in &children {
                    kept.remove(c);
                }
                kept.insert(parent);
                changed = true;
            }
        }
        if !changed {
            return kept;
        }
    }
}

/// r(B₁·A): the union of A (unitality), all one-edge prolongations
/// Z(eα), and all one-edge truncations. Length-0 cylinders are refined
/// one level before truncation.
pub fn b1_saturate(g: &DirectedGraph, a: &CylinderUnion) -> Result<CylinderUnion, GraphError> {
    let mut out: BTreeSet<Cylinder> = a.cylinders.clone();
    for c in a.cylinders() {
        // prepend: needs every true in-edge of the start vertex
        if !g.in_complete[c.start] {
            return Err(GraphError::WindowExceeded(format!(
                "in-edges of vertex {} are not all inside the window",
                c.start
            )));
        }
        for &e in g.in_edges(c.start) {
            let mut edges = vec![e];
            edges.extend(c.edges.iter().copied());
            out.insert(Cylinder {
                start: g.edges[e].0,
                edges,
            });
        }
        // drop the first edge; refine vertex cylinders one level first
        if c.is_empty() {
            for child in c.refine(g)? {
                out.insert(Cylinder::vertex(g.edges[child.edges[0]].1));
            }
        } else {
            let rest = c.edges[1..].to_vec();
            out.insert(Cylinder {
                start: g.edges[c.edges[0]].1,
                edges: rest,
            });
        }
    }
    Ok(CylinderUnion {
        cylinders: canonicalize(g, out),
    })
}

/// r(B_n·A) via B_n = (B₁)ⁿ.
pub fn bn_saturate(
    g: &DirectedGraph,
    a: &CylinderUnion,
    n: u32,
) -> Result<CylinderUnion, GraphError> {
    let mut acc = a.clone();
    for _ in 0..n {
        acc = b1_saturate(g, &acc)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug)]
pub enum CylinderVerdict {
    Proven,
    Refuted {
        witness: CylinderUnion,
        measure: Ratio,
        saturated_measure: Ratio,
    },
    Unknown {
        samples: u64,
    },
}

#[derive(Clone, Debug)]
pub struct CylinderCertificate {
    pub verdict: CylinderVerdict,
    pub method: Method,
    pub constant: Ratio,
    pub alpha: Ratio,
    pub depth_cap: u32,
    /// minimum of μ(r(B₁·A))/μ(A) over tested admissible unions
    pub worst_ratio: Option<Ratio>,
    pub checked: u64,
    pub seed: u64,
}

/// Certifies μ(r(B₁·A)) > (1+C)·μ(A) over cylinder unions A with
/// α ≤ μ(A) ≤ 1/2. When every window vertex has s-deg 1 the canonical
/// forms collapse to unions of vertex cylinders and the scan over those
/// is exhaustive for every depth; otherwise unions of random cylinders up
/// to `depth_cap` are sampled (seeded).
pub fn expansion_check_cylinders(
    g: &DirectedGraph,
    c: &Ratio,
    alpha: &Ratio,
    depth_cap: u32,
    budget: &Budget,
) -> Result<CylinderCertificate, GraphError> {
    let half = ratio(1, 2);
    let target = ratio_int(1) + c;
    let mut worst: Option<(CylinderUnion, Ratio, Ratio)> = None;
    let mut checked = 0u64;
    let consider = |a: CylinderUnion,
                        g: &DirectedGraph,
                        worst: &mut Option<(CylinderUnion, Ratio, Ratio)>|
     -> Result<(), GraphError> {
        let m = a.measure(g)?;
        let sat = b1_saturate(g, &a)?.measure(g)?;
        let is_worse = match worst {
            None => true,
            Some((_, wm, ws)) => &sat * wm.clone() < ws.clone() * &m,
        };
        if is_worse {
            *worst = Some((a, m, sat));
        }
        Ok(())
    };

    let collapsing = (0..g.n_vertices).all(|v| g.s_deg[v] == 1);
    // unions must stay saturable inside the window
    let operable: Vec<usize> = (0..g.n_vertices)
        .filter(|&v| g.out_complete(v) && g.in_complete[v] && !g.is_terminal(v))
        .collect();
    let method;
    if collapsing && operable.len() <= budget.exact_limit {
        method = Method::Exact;
        for bits in 1u64..(1 << operable.len()) {
            let cyls = operable
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, &v)| Cylinder::vertex(v));
            let a = CylinderUnion::from_cylinders(g, cyls)?;
            let m = a.measure(g)?;
            if &m >= alpha && m <= half {
                checked += 1;
                consider(a, g, &mut worst)?;
            }
        }
    } else {
        method = Method::Randomized;
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
        for _ in 0..2 * budget.samples {
            let n_pieces = rng.gen_range(1..=4usize);
            let mut cyls = Vec::new();
            for _ in 0..n_pieces {
                let start = rng.gen_range(0..g.n_vertices);
                let mut c = Cylinder::vertex(start);
                let depth = rng.gen_range(0..=depth_cap);
                for _ in 0..depth {
                    let v = c.end(g);
                    if g.is_terminal(v) || !g.out_complete(v) {
                        break;
                    }
                    let opts = g.out_edges(v);
                    let e = opts[rng.gen_range(0..opts.len())];
                    c.edges.push(e);
                }
                cyls.push(c);
            }
            let a = CylinderUnion::from_cylinders(g, cyls)?;
            let m = a.measure(g)?;
            if &m < alpha || m > half {
                continue;
            }
            match b1_saturate(g, &a) {
                Ok(_) => {
                    checked += 1;
                    consider(a, g, &mut worst)?;
                }
                Err(GraphError::WindowExceeded(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    let worst_ratio = worst.as_ref().map(|(_, m, s)| s / m);
    let verdict = match &worst {
        Some((a, m, s)) if s <= &(&target * m) => CylinderVerdict::Refuted {
            witness: a.clone(),
            measure: m.clone(),
            saturated_measure: s.clone(),
        },
        Some(_) => {
            if method == Method::Exact {
                CylinderVerdict::Proven
            } else {
                CylinderVerdict::Unknown { samples: checked }
            }
        }
        None => {
            if method == Method::Exact {
                CylinderVerdict::Proven
            } else {
                CylinderVerdict::Unknown { samples: checked }
            }
        }
    };
    Ok(CylinderCertificate {
        verdict,
        method,
        constant: c.clone(),
        alpha: alpha.clone(),
        depth_cap,
        worst_ratio,
        checked,
        seed: budget.seed,
    })
}

/// One witness scale of the k-step line graph: the selected level n_p,
/// the witness union A_p, and the exactly verified identities.
#[derive(Clone, Debug)]
pub struct WitnessScale {
    pub p: u32,
    pub n_p: usize,
    /// μ(Z_{0,n_p}) ≥ 1/(k+1)
    pub level_measure: Ratio,
    pub a_p: CylinderUnion,
    pub mu_a_p: Ratio,
    /// μ(r(B₁·A_p)) − μ(A_p), exactly 1/2^{n_p+2}
    pub boundary: Ratio,
    pub lower_bound_ok: bool,
    pub upper_bound_ok: bool,
    pub boundary_identity_ok: bool,
}

#[derive(Clone, Debug)]
pub struct LineGraphReport {
    pub k: u32,
    pub window: usize,
    pub scales: Vec<WitnessScale>,
}

/// The graph with V = ℕ, edges (n, n+i) for i = 1..k and weights
/// b_n = 1/2^{n+1}, truncated to a window of M vertices.
pub fn line_graph(k: u32, window: usize) -> Result<DirectedGraph, GraphError> {
    if k == 0 || window < 2 {
        return Err(GraphError::InvalidGraph("need k ≥ 1 and at least 2 vertices".into()));
    }
    let mut edges = Vec::new();
    for n in 0..window {
        for i in 1..=k as usize {
            if n + i < window {
                edges.push((n, n + i));
            }
        }
    }
    let mut w = ratio(1, 2);
    let weights = (0..window)
        .map(|_| {
            let out = w.clone();
            w /= ratio_int(2);
            out
        })
        .collect();
    // every true in-edge (n−i, n) lies in the window; out-edges of the
    // last k vertices do not
    DirectedGraph::with_window(
        window,
        edges,
        vec![k as usize; window],
        weights,
        vec![true; window],
    )
}

/// μ(Z_{0,n}) for n = 0..limit: the total measure of cylinders over paths
/// from vertex 0 to vertex n.
pub fn level_measures(g: &DirectedGraph, k: u32, limit: usize) -> Vec<Ratio> {
    let mut w = vec![Ratio::zero(); limit + 1];
    w[0] = g.weights[0].clone();
    let step = ratio_int(k as i64);
    for n in 1..=limit {
        let mut acc = Ratio::zero();
        for j in 1..=(k as usize).min(n) {
            acc += &w[n - j] / &step;
        }
        w[n] = acc;
    }
    w
}

/// Builds the witness family A_p = ⋃ Z(α·α_p) over all paths α ending at
/// n_p, with α_p the one-step edge (n_p, n_p+1), and verifies the three
/// exact identities per scale.
pub fn line_graph_witnesses(
    k: u32,
    window: usize,
    p_max: u32,
) -> Result<(DirectedGraph, LineGraphReport), GraphError> {
    let g = line_graph(k, window)?;
    let ku = k as usize;
    let n_needed = (p_max as usize + 1) * ku;
    if !(n_needed + 1 < window - ku) {
        return Err(GraphError::WindowExceeded(format!(
            "need n_p+1 = {} < window−k = {}",
            n_needed + 1,
            window - ku
        )));
    }
    let levels = level_measures(&g, k, n_needed + 1);
    let threshold = ratio_int(1) / ratio_int(k as i64 + 1);
    let mut scales = Vec::new();
    for p in 1..=p_max {
        let lo = p as usize * ku + 1;
        let hi = (p as usize + 1) * ku;
        let n_p = (lo..=hi)
            .find(|&n| levels[n] >= threshold)
            .expect("a level with μ(Z_{0,n}) ≥ 1/(k+1) exists in each block");
        // all paths ending at n_p, from any start m ≤ n_p
        let mut paths: Vec<Vec<usize>> = vec![Vec::new()];
        let mut complete: Vec<Vec<usize>> = vec![Vec::new()]; // the length-0 path at n_p
        // backwards DFS: extend at the front
        let mut stack: Vec<(usize, Vec<usize>)> = vec![(n_p, Vec::new())];
        while let Some((at, suffix)) = stack.pop() {
            for &e in g.in_edges(at) {
                let mut path = vec![e];
                path.extend(suffix.iter().copied());
                stack.push((g.edges[e].0, path.clone()));
                complete.push(path);
            }
        }
        paths.clear();
        let alpha_p = g
            .out_edges(n_p)
            .iter()
            .copied()
            .find(|&e| g.edges[e].1 == n_p + 1)
            .expect("the one-step edge exists in the window");
        let cyls = complete.into_iter().map(|mut edges| {
            edges.push(alpha_p);
            let start = g.edges[edges[0]].0;
            Cylinder { start, edges }
        });
        let a_p = CylinderUnion::from_cylinders(&g, cyls)?;
        let mu_a_p = a_p.measure(&g)?;
        let saturated = b1_saturate(&g, &a_p)?;
        let boundary = saturated.measure(&g)? - &mu_a_p;
        let expected_boundary = ratio_int(1)
            / Ratio::from_integer(num_bigint::BigInt::one() << (n_p as u32 + 2));
        let lower = ratio_int(1) / ratio_int((k as i64) * (k as i64 + 1));
        let upper = ratio_int(1) / ratio_int(k as i64);
        scales.push(WitnessScale {
            p,
            n_p,
            level_measure: levels[n_p].clone(),
            mu_a_p: mu_a_p.clone(),
            boundary: boundary.clone(),
            lower_bound_ok: mu_a_p > lower,
            upper_bound_ok: mu_a_p <= upper,
            boundary_identity_ok: boundary == expected_boundary,
            a_p,
        });
    }
    Ok((
        g,
        LineGraphReport {
            k,
            window,
            scales,
        },
    ))
}
