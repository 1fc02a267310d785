//! Normalized local Markov kernels: reversing measures, exact Cheeger
//! constants, spectral gaps and the Lawler sandwich.
//!
//! Run with: cargo run --example markov_spectra

use gpd::constructions::{pair_groupoid, FiniteMetricSpace};
use gpd::exact::{ratio, ratio_int};
use gpd::expansion::Budget;
use gpd::groupoid::{ball, AtomicMeasureSpace};
use gpd::markov::{
    build_kernel, cheeger, reversing_measure_bounds_ok, sandwich_ok, spectral_gap, CheegerValue,
};
use gpd::sets::decompose_unital_symmetric;

fn main() {
    let budget = Budget::default();
    for n in [6usize, 8, 12] {
        let (g, ell, mu) = pair_groupoid(
            &FiniteMetricSpace::cycle(n),
            AtomicMeasureSpace::uniform_probability(n),
        );
        let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
        let bundle = build_kernel(&mu, mu.full_set(), &k).unwrap();
        let kappa = cheeger(&bundle.kernel, &budget).unwrap();
        let gap = spectral_gap(&bundle.kernel).unwrap();
        let label = match &kappa {
            CheegerValue::Exact { .. } => "exact",
            CheegerValue::Interval { .. } => "interval",
        };
        println!(
            "{n}-cycle: κ = {:.6} ({label}), λ = {:.6}, sandwich {}",
            kappa.approx(),
            gap.lambda,
            if sandwich_ok(kappa.approx(), gap.lambda, 1e-9) {
                "ok"
            } else {
                "FAILED"
            }
        );
    }

    // a weighted instance: the reversing measure μ̃ = σ·μ is checked
    // against μ(A) ≤ μ̃(A) ≤ N√(μ(A)μ(Y)) by exact radical arithmetic
    let (g, ell, mu) = pair_groupoid(
        &FiniteMetricSpace::cycle(5),
        AtomicMeasureSpace::new(vec![
            ratio(1, 2),
            ratio(1, 8),
            ratio(1, 8),
            ratio(1, 8),
            ratio(1, 8),
        ])
        .unwrap(),
    );
    let k = decompose_unital_symmetric(&g, &ell, &ball(&g, &ell, &ratio_int(1)));
    let bundle = build_kernel(&mu, mu.full_set(), &k).unwrap();
    println!(
        "\nweighted 5-cycle: reversibility {}, row sums exact {}, μ̃ bounds {}",
        bundle.kernel.reversibility_ok(),
        bundle.kernel.rows_sum_to_one(),
        reversing_measure_bounds_ok(&bundle, &mu)
    );
    let kappa = cheeger(&bundle.kernel, &budget).unwrap();
    let gap = spectral_gap(&bundle.kernel).unwrap();
    println!(
        "κ = {:.6}, λ = {:.6}, gap = {:.6}",
        kappa.approx(),
        gap.lambda,
        gap.laplacian_gap
    );
}
