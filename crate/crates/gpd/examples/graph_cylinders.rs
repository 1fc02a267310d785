//! The symbolic cylinder engine: exact measures on infinite path spaces,
//! one-step saturations, and the two behaviours of the k-step line graph.
//!
//! Run with: cargo run --example graph_cylinders

use gpd::exact::{format_ratio, ratio, ratio_to_f64};
use gpd::expansion::Budget;
use gpd::graphgpd::{
    b1_saturate, expansion_check_cylinders, line_graph, line_graph_witnesses, Cylinder,
    CylinderUnion, CylinderVerdict,
};

fn main() {
    // k = 1: the path space is one ray per starting vertex and the
    // groupoid expands in measure with worst ratio exactly 3/2
    let g = line_graph(1, 12).unwrap();
    let z0 = CylinderUnion::vertex(&g, 0).unwrap();
    let sat = b1_saturate(&g, &z0).unwrap();
    println!(
        "k=1: μ(Z(0)) = {}, μ(r(B₁·Z(0))) = {}",
        format_ratio(&z0.measure(&g).unwrap()),
        format_ratio(&sat.measure(&g).unwrap())
    );
    let cert = expansion_check_cylinders(
        &g,
        &ratio(49, 100),
        &ratio(1, 1 << 30),
        10,
        &Budget::default(),
    )
    .unwrap();
    println!(
        "exhaustive scan over {} unions: worst ratio {} ({})",
        cert.checked,
        format_ratio(cert.worst_ratio.as_ref().unwrap()),
        match cert.verdict {
            CylinderVerdict::Proven => "proven above C = 49/100",
            _ => "unexpected",
        }
    );

    // k = 2: witness unions A_p with vanishing relative boundary
    let (g, report) = line_graph_witnesses(2, 30, 5).unwrap();
    println!("\nk=2 witnesses (window 30):");
    println!("p   n_p  μ(A_p)                    boundary = 1/2^(n_p+2)");
    for s in &report.scales {
        println!(
            "{:<3} {:<4} {:<25} {}",
            s.p,
            s.n_p,
            format!("{} ≈ {:.5}", format_ratio(&s.mu_a_p), ratio_to_f64(&s.mu_a_p)),
            format_ratio(&s.boundary)
        );
    }
    let s = &report.scales[0];
    println!(
        "\nμ(A_1) > 1/6: {}, μ(A_1) ≤ 1/2: {}, boundary identity exact: {}",
        s.lower_bound_ok, s.upper_bound_ok, s.boundary_identity_ok
    );

    // window soundness: operations that would escape the window fail
    let z = Cylinder::vertex(29);
    println!(
        "\nsaturating Z(29) inside a 30-vertex window: {:?}",
        b1_saturate(&g, &CylinderUnion::from_cylinders(&g, [z]).unwrap()).err()
    );
}
