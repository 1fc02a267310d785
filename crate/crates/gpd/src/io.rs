//! File formats: `gpd/1` instance files, factory specs, `gpdrun/1`
//! command configs and `gpdcert/1` certificate files.
//!
//! Rationals are serialized as exact strings ("3/4", "0.25", "1e-3");
//! atom sets as sorted index lists; decomposable sets as per-piece
//! element-id lists so certificates can be re-verified without searching.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::constructions::{
    family_union, pair_groupoid, transformation_groupoid, FiniteMetricSpace, GroupAction,
};
use crate::exact::{format_ratio, parse_ratio, Ratio};
use crate::groupoid::{
    AtomSet, AtomicMeasureSpace, ElementSet, FiniteGroupoid, LengthFunction,
};
use crate::markov::MarkovKernelBundle;
use crate::sets::{Bisection, DecomposableSet};

pub type Instance = (FiniteGroupoid, LengthFunction, AtomicMeasureSpace);

/// The `gpd/1` instance format: explicit tables with `source`/`range`
/// given as unit element ids and weights listed in `units` order.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GpdFile {
    pub format: String,
    pub elements: usize,
    pub units: Vec<usize>,
    pub source: Vec<usize>,
    pub range: Vec<usize>,
    pub inverse: Vec<usize>,
    pub compose: Vec<[usize; 3]>,
    pub length: Vec<String>,
    pub weights: Vec<String>,
}

impl GpdFile {
    pub fn to_instance(&self) -> Result<Instance, String> {
        if self.format != "gpd/1" {
            return Err(format!("unsupported instance format `{}`", self.format));
        }
        let n = self.elements;
        if self.source.len() != n || self.range.len() != n || self.inverse.len() != n {
            return Err("table lengths disagree with element count".into());
        }
        if self.weights.len() != self.units.len() {
            return Err("one weight per unit required".into());
        }
        let mut atom_of_unit: HashMap<usize, usize> = HashMap::new();
        for (a, &u) in self.units.iter().enumerate() {
            if u >= n {
                return Err(format!("unit {u} out of range"));
            }
            if atom_of_unit.insert(u, a).is_some() {
                return Err(format!("unit {u} listed twice"));
            }
        }
        let to_atom = |e: usize, what: &str| -> Result<usize, String> {
            atom_of_unit
                .get(&e)
                .copied()
                .ok_or_else(|| format!("{what} value {e} is not a unit"))
        };
        let source = self
            .source
            .iter()
            .map(|&e| to_atom(e, "source"))
            .collect::<Result<Vec<_>, _>>()?;
        let range = self
            .range
            .iter()
            .map(|&e| to_atom(e, "range"))
            .collect::<Result<Vec<_>, _>>()?;
        let compose = self
            .compose
            .iter()
            .map(|&[a, b, c]| ((a, b), c))
            .collect();
        let g = FiniteGroupoid::new(n, self.units.clone(), source, range, self.inverse.clone(), compose);
        let length = self
            .length
            .iter()
            .map(|s| parse_ratio(s))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = self
            .weights
            .iter()
            .map(|s| parse_ratio(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((
            g,
            LengthFunction::new(length),
            AtomicMeasureSpace::new(weights)?,
        ))
    }

    pub fn from_instance((g, ell, mu): &Instance) -> GpdFile {
        GpdFile {
            format: "gpd/1".into(),
            elements: g.n_elements,
            units: g.units.clone(),
            source: g.source.iter().map(|&a| g.units[a]).collect(),
            range: g.range.iter().map(|&a| g.units[a]).collect(),
            inverse: g.inverse.clone(),
            compose: {
                let mut triples: Vec<[usize; 3]> = g
                    .compose
                    .iter()
                    .map(|(&(a, b), &c)| [a, b, c])
                    .collect();
                triples.sort_unstable();
                triples
            },
            length: ell.values.iter().map(format_ratio).collect(),
            weights: mu.weights.iter().map(format_ratio).collect(),
        }
    }
}

/// Instance sources accepted by the CLI: built-in factories or explicit
/// tables.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "factory", rename_all = "kebab-case")]
pub enum FactorySpec {
    /// pair groupoid of an explicit metric
    Pair {
        dist: Vec<Vec<String>>,
        weights: Option<Vec<String>>,
    },
    /// transformation groupoid generated by permutations (BFS word length)
    Action {
        n_points: usize,
        perms: Vec<Vec<usize>>,
        weights: Option<Vec<String>>,
    },
    /// disjoint union of blocks
    Family {
        blocks: Vec<FactorySpec>,
        #[serde(default)]
        normalize: bool,
    },
    PairCycle { n: usize },
    PairComplete { n: usize },
    ActionZn { n: usize },
    /// expander block plus one isolated atom of small weight
    PendantExpander { n: usize, pendant_weight: String },
    /// explicit tables inline
    Tables { gpd: GpdFile },
}

fn parse_weights(raw: &Option<Vec<String>>, n: usize) -> Result<AtomicMeasureSpace, String> {
    match raw {
        None => Ok(AtomicMeasureSpace::uniform_probability(n)),
        Some(ws) => {
            let parsed = ws
                .iter()
                .map(|s| parse_ratio(s))
                .collect::<Result<Vec<_>, _>>()?;
            AtomicMeasureSpace::new(parsed)
        }
    }
}

pub fn build_instance(spec: &FactorySpec) -> Result<Instance, String> {
    match spec {
        FactorySpec::Pair { dist, weights } => {
            let rows = dist
                .iter()
                .map(|row| row.iter().map(|s| parse_ratio(s)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            let space = FiniteMetricSpace::new(rows)?;
            let mu = parse_weights(weights, space.n)?;
            Ok(pair_groupoid(&space, mu))
        }
        FactorySpec::Action {
            n_points,
            perms,
            weights,
        } => {
            let action = GroupAction::from_generators(*n_points, perms)?;
            let mu = parse_weights(weights, *n_points)?;
            transformation_groupoid(&action, mu)
        }
        FactorySpec::Family { blocks, normalize } => {
            let built = blocks
                .iter()
                .map(build_instance)
                .collect::<Result<Vec<_>, _>>()?;
            let (g, ell, mu) = family_union(&built);
            let mu = if *normalize { mu.normalized() } else { mu };
            Ok((g, ell, mu))
        }
        FactorySpec::PairCycle { n } => Ok(pair_groupoid(
            &FiniteMetricSpace::cycle(*n),
            AtomicMeasureSpace::uniform_probability(*n),
        )),
        FactorySpec::PairComplete { n } => Ok(pair_groupoid(
            &FiniteMetricSpace::complete(*n),
            AtomicMeasureSpace::uniform_probability(*n),
        )),
        FactorySpec::ActionZn { n } => transformation_groupoid(
            &GroupAction::cyclic(*n),
            AtomicMeasureSpace::uniform_probability(*n),
        ),
        FactorySpec::PendantExpander { n, pendant_weight } => {
            let w = parse_ratio(pendant_weight)?;
            let clique = pair_groupoid(
                &FiniteMetricSpace::complete(*n),
                AtomicMeasureSpace::uniform(*n),
            );
            let point = pair_groupoid(
                &FiniteMetricSpace::complete(1),
                AtomicMeasureSpace::new(vec![w])?,
            );
            let (g, ell, mu) = family_union(&[clique, point]);
            Ok((g, ell, mu.normalized()))
        }
        FactorySpec::Tables { gpd } => gpd.to_instance(),
    }
}

pub fn atoms_of(set: AtomSet) -> Vec<usize> {
    set.atoms()
}

pub fn set_from_atoms(atoms: &[usize]) -> AtomSet {
    AtomSet::from_atoms(atoms.iter().copied())
}

pub fn pieces_of(k: &DecomposableSet) -> Vec<Vec<usize>> {
    k.pieces.iter().map(|p| p.members.clone()).collect()
}

pub fn rebuild_pieces(
    g: &FiniteGroupoid,
    ell: &LengthFunction,
    pieces: &[Vec<usize>],
) -> Result<DecomposableSet, String> {
    let built = pieces
        .iter()
        .map(|members| {
            Bisection::new(g, members.iter().copied().collect::<ElementSet>())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DecomposableSet::from_pieces(g, ell, built))
}

/// Matrix-market style dense text block of the kernel Π (row-stochastic,
/// floating point) preceded by the reversing-measure vector.
pub fn kernel_text(bundle: &MarkovKernelBundle) -> String {
    let n = bundle.kernel.n;
    let pi = bundle.kernel.pi_f64();
    let mass = bundle.kernel.mass_f64();
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("% reversing measure on atoms {:?}\n", bundle.states));
    out.push_str(&format!(
        "% m = [{}]\n",
        mass.iter()
            .map(|v| format!("{v:.17e}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str(&format!("{n} {n}\n"));
    for col in 0..n {
        for row in 0..n {
            out.push_str(&format!("{:.17e}\n", pi[(row, col)]));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub c: String,
    pub alpha_lo: String,
    pub beta_hi: String,
    pub domain: Vec<usize>,
    pub method: String,
    pub verdict: String,
    pub witness: Option<Vec<usize>>,
    pub witness_ratio: Option<String>,
    pub worst_set: Option<Vec<usize>>,
    pub worst_ratio: Option<String>,
    pub k_pieces: Vec<Vec<usize>>,
    /// ℓ(K) and its integer coarsening ℓ̃(K), both reported
    pub k_length: String,
    pub k_length_coarse: String,
    pub checked: u64,
}

impl ExpansionRecord {
    pub fn new(cert: &crate::expansion::Certificate, k: &DecomposableSet) -> ExpansionRecord {
        use crate::expansion::Verdict;
        let (verdict, witness, witness_ratio) = match &cert.verdict {
            Verdict::Proven => ("proven".to_string(), None, None),
            Verdict::Refuted { witness, ratio } => (
                "refuted".to_string(),
                Some(witness.atoms()),
                Some(format_ratio(ratio)),
            ),
            Verdict::Unknown { .. } => ("unknown".to_string(), None, None),
        };
        ExpansionRecord {
            c: format_ratio(&cert.constant),
            alpha_lo: format_ratio(&cert.alpha_lo),
            beta_hi: format_ratio(&cert.beta_hi),
            domain: cert.domain.atoms(),
            method: method_name(cert.method).to_string(),
            verdict,
            witness,
            witness_ratio,
            worst_set: cert.worst.as_ref().map(|(a, _)| a.atoms()),
            worst_ratio: cert.worst.as_ref().map(|(_, r)| format_ratio(r)),
            k_pieces: pieces_of(k),
            k_length: format_ratio(&k.length_bound),
            k_length_coarse: format_ratio(&k.length_bound.ceil()),
            checked: cert.checked,
        }
    }
}

pub fn method_name(m: crate::expansion::Method) -> &'static str {
    match m {
        crate::expansion::Method::Exact => "exact",
        crate::expansion::Method::Randomized => "randomized",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FolnerRecord {
    pub epsilon: String,
    pub domain: Vec<usize>,
    pub f: Vec<usize>,
    pub f_measure: String,
    pub mode: String,
    pub separation_check: Option<bool>,
    pub k_pieces: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructureRecord {
    pub n: u32,
    pub y: Vec<usize>,
    pub c: String,
    pub n_pieces: usize,
    pub length: String,
    pub length_coarse: String,
    pub theta: String,
    pub alpha_n: String,
    pub bad_ratio_set: Vec<usize>,
    pub folner_set: Vec<usize>,
    pub measure_bound_ok: bool,
    pub ratio_bound_ok: bool,
    pub recertified: String,
    pub k_pieces: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkovRecord {
    pub domain: Vec<usize>,
    pub n_pieces: usize,
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub kappa_exact: bool,
    pub kappa_witness: Option<Vec<usize>>,
    pub lambda: f64,
    pub laplacian_gap: f64,
    pub sandwich_ok: bool,
    pub k_pieces: Vec<Vec<usize>>,
    pub kernel: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiLocalProbe {
    pub radius: String,
    pub value: f64,
    pub witness_a: Option<Vec<usize>>,
    pub witness_b: Option<Vec<usize>>,
    pub method: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiLocalRecord {
    pub probes: Vec<QuasiLocalProbe>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproxRecord {
    pub eps: String,
    pub n: u32,
    pub m: u32,
    pub c_markov: String,
    pub n_pieces: usize,
    pub length: String,
    pub theta: String,
    pub declared_k_pieces: Vec<Vec<usize>>,
    pub a_priori_bound: f64,
    pub measured_error: f64,
    pub propagation_ok: bool,
    /// dense operator rows with the measure vector
    pub operator: Vec<Vec<f64>>,
    pub measure: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Graph617Scale {
    pub p: u32,
    pub n_p: usize,
    pub level_measure: String,
    pub mu_a_p: String,
    pub boundary: String,
    pub lower_bound_ok: bool,
    pub upper_bound_ok: bool,
    pub boundary_identity_ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Graph617Record {
    pub k: u32,
    pub window: usize,
    pub scales: Vec<Graph617Scale>,
    pub expansion_worst_ratio: Option<String>,
    pub expansion_verdict: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub ok: bool,
    pub violations: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyBlockRecord {
    pub block: usize,
    pub atoms: Vec<usize>,
    pub quasilocal_value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub per_block: Vec<FamilyBlockRecord>,
    pub union_value: Option<f64>,
    pub radius: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Validation(ValidationRecord),
    Expansion(ExpansionRecord),
    Asymptotic { levels: Vec<(String, ExpansionRecord)> },
    Folner(FolnerRecord),
    Structure { domains: Vec<StructureRecord> },
    Markov(MarkovRecord),
    QuasiLocal(QuasiLocalRecord),
    Approx(ApproxRecord),
    Graph617(Graph617Record),
    Family(FamilyRecord),
}

/// A `gpdcert/1` certificate: enough data to re-verify the verdict
/// without repeating the search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateFile {
    pub format: String,
    pub command: String,
    pub instance: Option<FactorySpec>,
    pub seed: u64,
    pub exact_limit: usize,
    pub payload: Payload,
}

impl CertificateFile {
    pub fn new(
        command: &str,
        instance: Option<FactorySpec>,
        seed: u64,
        exact_limit: usize,
        payload: Payload,
    ) -> CertificateFile {
        CertificateFile {
            format: "gpdcert/1".into(),
            command: command.to_string(),
            instance,
            seed,
            exact_limit,
            payload,
        }
    }
}

/// The `gpdrun/1` config file: a command with its inputs, so runs are
/// reproducible from one document.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct RunConfigFile {
    pub format: String,
    pub command: Option<String>,
    pub instance: Option<FactorySpec>,
    pub c: Option<String>,
    pub alpha: Option<String>,
    pub alpha_lo: Option<String>,
    pub beta_hi: Option<String>,
    pub epsilon: Option<String>,
    pub epsilon_ladder: Option<Vec<String>>,
    pub n_max: Option<u32>,
    pub exact_limit: Option<usize>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub csv: Option<String>,
}

pub fn parse_ratio_field(s: &Option<String>, default: Ratio) -> Result<Ratio, String> {
    match s {
        None => Ok(default),
        Some(v) => parse_ratio(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ratio;
    use crate::groupoid::validate;

    #[test]
    fn gpd_file_round_trip() {
        let spec = FactorySpec::PairCycle { n: 4 };
        let instance = build_instance(&spec).unwrap();
        let file = GpdFile::from_instance(&instance);
        let json = serde_json::to_string(&file).unwrap();
        let parsed: GpdFile = serde_json::from_str(&json).unwrap();
        let (g, ell, mu) = parsed.to_instance().unwrap();
        assert!(validate(&g).ok());
        assert_eq!(g.n_elements, instance.0.n_elements);
        assert_eq!(ell.values, instance.1.values);
        assert_eq!(mu.weights, instance.2.weights);
    }

    #[test]
    fn factory_specs_build() {
        let specs = [
            FactorySpec::PairComplete { n: 3 },
            FactorySpec::ActionZn { n: 4 },
            FactorySpec::Family {
                blocks: vec![
                    FactorySpec::PairCycle { n: 4 },
                    FactorySpec::PairComplete { n: 3 },
                ],
                normalize: true,
            },
            FactorySpec::PendantExpander {
                n: 8,
                pendant_weight: "1/100".into(),
            },
        ];
        for spec in specs {
            let (g, ell, mu) = build_instance(&spec).unwrap();
            assert!(validate(&g).ok(), "{spec:?}");
            assert!(ell.validate(&g).ok(), "{spec:?}");
            if matches!(
                spec,
                FactorySpec::Family { normalize: true, .. } | FactorySpec::PendantExpander { .. }
            ) {
                assert!(mu.is_probability());
            }
        }
    }

    #[test]
    fn pair_factory_with_explicit_distances() {
        let spec = FactorySpec::Pair {
            dist: vec![
                vec!["0".into(), "1/2".into()],
                vec!["1/2".into(), "0".into()],
            ],
            weights: Some(vec!["2/3".into(), "1/3".into()]),
        };
        let (g, _, mu) = build_instance(&spec).unwrap();
        assert_eq!(g.n_atoms(), 2);
        assert_eq!(mu.weights[0], ratio(2, 3));
    }

    #[test]
    fn certificate_file_round_trip() {
        let payload = Payload::Validation(ValidationRecord {
            ok: true,
            violations: vec![],
        });
        let cert = CertificateFile::new(
            "validate",
            Some(FactorySpec::PairCycle { n: 6 }),
            7,
            14,
            payload,
        );
        let json = serde_json::to_string_pretty(&cert).unwrap();
        let parsed: CertificateFile = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.format, "gpdcert/1");
        assert_eq!(parsed.instance, Some(FactorySpec::PairCycle { n: 6 }));
    }

    #[test]
    fn kernel_text_has_matrix_market_header() {
        let spec = FactorySpec::PairComplete { n: 3 };
        let (g, ell, mu) = build_instance(&spec).unwrap();
        let k = crate::sets::decompose_unital_symmetric(
            &g,
            &ell,
            &crate::groupoid::ball(&g, &ell, &crate::exact::ratio_int(1)),
        );
        let bundle = crate::markov::build_kernel(&mu, mu.full_set(), &k).unwrap();
        let text = kernel_text(&bundle);
        assert!(text.starts_with("%%MatrixMarket matrix array real general"));
        assert!(text.contains("3 3"));
    }
}
