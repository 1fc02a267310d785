//! Dynamical propagation and quasi-locality of the averaging projection,
//! and the parameter transfers between expansion and quasi-locality.
//!
//! Run with: cargo run --example quasilocality

use gpd::constructions::{pair_groupoid, FiniteMetricSpace};
use gpd::exact::{format_ratio, ratio, ratio_to_f64, Ratio};
use gpd::expansion::{ball_family, Budget, ExpansionParams, Level};
use gpd::groupoid::AtomicMeasureSpace;
use gpd::operators::{
    averaging_projection, check_propagation, expansion_to_quasilocal, quasi_local_norm,
    quasilocal_to_expansion, QuasiLocalLevel,
};
use gpd::sets::DecomposableSet;

fn main() {
    let (g, ell, mu) = pair_groupoid(
        &FiniteMetricSpace::cycle(8),
        AtomicMeasureSpace::uniform_probability(8),
    );
    let budget = Budget::default();
    let p = averaging_projection(&mu, mu.full_set()).unwrap();

    // P has no finite propagation over the units alone
    let units = DecomposableSet::units_only(&g, &ell);
    let check = check_propagation(&p, &units, 0.0);
    println!(
        "P_G over units: propagation {} (counterexample {:?})",
        check.ok, check.counterexample
    );

    // but its quasi-local norms decay along the ball family
    println!("\nradius  sup‖χ_A P χ_B‖ over separated pairs");
    let mut levels = Vec::new();
    for (r, k) in ball_family(&g, &ell) {
        let rep = quasi_local_norm(&p, &k, &budget);
        println!("{:<7} {:.6}", format_ratio(&r), rep.value);
        levels.push(QuasiLocalLevel {
            eps: Ratio::from_float((rep.value + 1e-9).max(1e-9)).unwrap(),
            k,
        });
    }

    // quasi-local parameters of P_G give expansion parameters with C = 1/2
    let alphas = [ratio(1, 2), ratio(1, 4), ratio(1, 8)];
    let params = quasilocal_to_expansion(&levels, &alphas).unwrap();
    let report = gpd::expansion::certify_asymptotic(&mu, &params, &budget).unwrap();
    println!(
        "\ntransferred expansion schedule certifies: {:?}",
        report.verdict()
    );

    // and back: expansion parameters give quasi-local sets with bound √ε
    let schedule = ExpansionParams::new(vec![Level {
        alpha: ratio(1, 1000),
        c: ratio(1, 4),
        k: ball_family(&g, &ell).last().unwrap().1.clone(),
    }]);
    for eps in [ratio(1, 4), ratio(1, 16)] {
        let (k, n) = expansion_to_quasilocal(&g, &ell, &schedule, &eps).unwrap();
        let rep = quasi_local_norm(&p, &k, &budget);
        println!(
            "ε = {:<5} → K^(2·{n}) with sup {:.6} < √ε = {:.6}",
            format_ratio(&eps),
            rep.value,
            ratio_to_f64(&eps).sqrt()
        );
    }
}
