//! Finite-propagation approximants: the averaging projection is
//! approximated through a Markov-kernel power on a certified domain, and
//! rank-one projections reduce to it by a measure change.
//!
//! Run with: cargo run --example project_approximation

use gpd::constructions::{pair_groupoid, FiniteMetricSpace};
use gpd::exact::{format_ratio, ratio, ratio_int, Ratio};
use gpd::expansion::{exhaustive_params, Budget};
use gpd::groupoid::AtomicMeasureSpace;
use gpd::operators::{approximate_averaging, approximate_rank_one, check_propagation, rank_one};
use num_traits::Zero;

fn main() {
    let (g, ell, mu) = pair_groupoid(
        &FiniteMetricSpace::complete(8),
        AtomicMeasureSpace::uniform_probability(8),
    );
    let budget = Budget::default();
    let params = exhaustive_params(&g, &ell, &mu, &budget).unwrap().unwrap();

    println!("ε        n  m    C (Markov)      a priori    measured    propagation");
    for eps in [ratio(1, 10), ratio(1, 100), ratio(1, 1000), ratio(1, 10000)] {
        let cert =
            approximate_averaging(&g, &ell, &mu, &params, &ratio(1, 4), &eps, &budget).unwrap();
        let prop = check_propagation(&cert.operator, &cert.declared_k, 1e-12);
        println!(
            "{:<8} {:<2} {:<4} {:<10.6} {:<11.3e} {:<11.3e} {}",
            format_ratio(&eps),
            cert.n,
            cert.m,
            gpd::exact::ratio_to_f64(&cert.c_markov),
            cert.a_priori_bound,
            cert.measured_error,
            if prop.ok { "ok" } else { "VIOLATED" }
        );
    }

    // a rank-one projection supported on five of the eight atoms: the
    // zero set is split off, the measure is changed to ν = |ξ|²μ, and the
    // averaging machinery runs on the reduction
    let mut xi2 = vec![ratio(8, 5); 5];
    xi2.extend([Ratio::zero(), Ratio::zero(), Ratio::zero()]);
    let proj = rank_one(&mu, xi2, None).unwrap();
    println!(
        "\nrank-one target: support {:?}, zero set {:?}",
        proj.support.atoms(),
        proj.zero_set.atoms()
    );
    let approx = approximate_rank_one(&g, &ell, &mu, &proj, &ratio(1, 100), &budget).unwrap();
    println!(
        "approximant: m = {}, measured ‖T − P‖ = {:.3e}, propagation {}",
        approx.reduced.m,
        approx.measured_error,
        if check_propagation(&approx.operator, &approx.declared_k, 1e-12).ok {
            "ok"
        } else {
            "VIOLATED"
        }
    );
    let _ = ratio_int(1);
}
