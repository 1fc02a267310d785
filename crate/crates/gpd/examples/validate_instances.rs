//! Building instances and checking the groupoid axioms.
//!
//! Run with: cargo run --example validate_instances

use gpd::constructions::{pair_groupoid, transformation_groupoid, FiniteMetricSpace, GroupAction};
use gpd::groupoid::{validate, AtomicMeasureSpace};

fn main() {
    // pair groupoid of the 4-cycle
    let space = FiniteMetricSpace::cycle(4);
    let (g, ell, _mu) = pair_groupoid(&space, AtomicMeasureSpace::uniform_probability(4));
    println!(
        "pair groupoid of the 4-cycle: {} elements over {} atoms",
        g.n_elements,
        g.n_atoms()
    );
    let report = validate(&g);
    println!("axioms: {}", if report.ok() { "ok" } else { "violated" });
    println!(
        "length function: {}",
        if ell.validate(&g).ok() { "ok" } else { "violated" }
    );

    // transformation groupoid of Z/6 rotating six points
    let action = GroupAction::cyclic(6);
    let (tg, tell, _tmu) =
        transformation_groupoid(&action, AtomicMeasureSpace::uniform_probability(6)).unwrap();
    println!(
        "\ntransformation groupoid of Z/6: {} elements, axioms {}",
        tg.n_elements,
        if validate(&tg).ok() { "ok" } else { "violated" }
    );
    println!(
        "length laws: {}",
        if tell.validate(&tg).ok() { "ok" } else { "violated" }
    );

    // a planted defect is reported with a witness
    let mut broken = tg.clone();
    let e = (0..broken.n_elements).find(|&e| !broken.is_unit(e)).unwrap();
    broken.inverse[e] = e;
    let report = validate(&broken);
    println!("\nplanted inverse defect:");
    for v in report.violations.iter().take(3) {
        println!("  {}: {}", v.axiom, v.witness);
    }
}
