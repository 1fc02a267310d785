//! Driving the CLI in-process: emit a certificate, then re-verify it
//! without repeating the search.
//!
//! Run with: cargo run --example cli_certificates

use gpd::cli::main_with_args;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["gpd"];
    full.extend_from_slice(args);
    let code = main_with_args(full);
    println!("→ exit {code}\n");
    code
}

fn main() {
    let dir = std::env::temp_dir().join(format!("gpd-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cert = dir.join("cycle12.json");
    let csv = dir.join("cycle12.csv");

    println!("$ gpd certify-expansion --example pair-cycle --n 12 --C 1/2 --out ... --csv ...");
    run(&[
        "certify-expansion",
        "--example",
        "pair-cycle",
        "--n",
        "12",
        "--C",
        "1/2",
        "--out",
        cert.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);

    println!("$ gpd verify --cert {}", cert.display());
    run(&["verify", "--cert", cert.to_str().unwrap()]);

    println!("$ gpd markov --example pair-cycle --n 12");
    run(&["markov", "--example", "pair-cycle", "--n", "12"]);

    println!("$ gpd example graph617 --k 2 --M 30 --p 5");
    run(&["example", "graph617", "--k", "2", "--M", "30", "--p", "5"]);

    let _ = std::fs::remove_dir_all(&dir);
}
