//! Maximal Følner sets and their duality with expansion certificates.
//!
//! Run with: cargo run --example folner_sets

use gpd::constructions::{family_union, pair_groupoid, FiniteMetricSpace};
use gpd::exact::{format_ratio, ratio};
use gpd::expansion::{certify_expansion, maximal_folner, Budget, Verdict};
use gpd::groupoid::{ball, AtomicMeasureSpace};
use gpd::sets::decompose_unital_symmetric;
use num_traits::Zero;

fn main() {
    let budget = Budget::default();

    // expander: only the empty set is Følner at small ε
    let (g, ell, mu) = pair_groupoid(
        &FiniteMetricSpace::complete(8),
        AtomicMeasureSpace::uniform_probability(8),
    );
    let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio(1, 1)));
    let res = maximal_folner(&mu, mu.full_set(), &k, &ratio(1, 10), &budget).unwrap();
    println!(
        "K8 at ε = 1/10: F = {:?} (separation check: {:?})",
        res.f.atoms(),
        res.separation_check
    );

    // two glued-by-nothing cliques: one whole clique is Følner
    let blocks = [
        pair_groupoid(&FiniteMetricSpace::complete(4), AtomicMeasureSpace::uniform(4)),
        pair_groupoid(&FiniteMetricSpace::complete(4), AtomicMeasureSpace::uniform(4)),
    ];
    let (g, ell, mu) = family_union(&blocks);
    let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio(1, 1)));
    let res = maximal_folner(&mu, mu.full_set(), &k, &ratio(1, 10), &budget).unwrap();
    println!(
        "two disjoint 4-cliques: F = {:?} with μ(F) = {}",
        res.f.atoms(),
        format_ratio(&mu.measure(res.f))
    );

    // duality on the 8-cycle: Proven at C iff no nonempty Følner set at C
    let (g, ell, mu) = pair_groupoid(
        &FiniteMetricSpace::cycle(8),
        AtomicMeasureSpace::uniform_probability(8),
    );
    let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio(1, 1)));
    println!("\n8-cycle duality at E1:");
    for eps in [ratio(1, 10), ratio(1, 4), ratio(1, 2), ratio(2, 1)] {
        let cert = certify_expansion(
            &mu,
            mu.full_set(),
            &k,
            &eps,
            &gpd::exact::Ratio::zero(),
            &ratio(1, 2),
            &budget,
        )
        .unwrap();
        let fol = maximal_folner(&mu, mu.full_set(), &k, &eps, &budget).unwrap();
        println!(
            "  ε = {:<4} certify: {:<8} maximal F: {:?}",
            format_ratio(&eps),
            match cert.verdict {
                Verdict::Proven => "proven",
                Verdict::Refuted { .. } => "refuted",
                Verdict::Unknown { .. } => "unknown",
            },
            fol.f.atoms()
        );
    }
}
