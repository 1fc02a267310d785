//! Command-line front end: parse instances and configs, dispatch
//! computations, emit human tables, machine certificates and CSV scans.
//!
//! Exit codes: 0 = proven/success, 2 = refuted, 3 = unknown, 1 = error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_traits::{Signed, Zero};

use crate::exact::{format_ratio, parse_ratio, ratio, ratio_int, ratio_to_f64, Ratio};
use crate::expansion::{
    ball_family, certify_expansion, exhaustive_params, maximal_folner, ratio_scan,
    structure_exhaustion, Budget, Certificate, ExpansionParams, FolnerMode, Level, Verdict,
};
use crate::graphgpd::{
    expansion_check_cylinders, line_graph, line_graph_witnesses, CylinderVerdict,
};
use crate::groupoid::{ball, validate};
use crate::io::{
    build_instance, kernel_text, method_name, pieces_of, rebuild_pieces,
    set_from_atoms, ApproxRecord, CertificateFile, ExpansionRecord, FactorySpec,
    FamilyBlockRecord, FamilyRecord, FolnerRecord, GpdFile, Graph617Record, Graph617Scale,
    Instance, MarkovRecord, Payload, QuasiLocalProbe, QuasiLocalRecord, RunConfigFile,
    StructureRecord, ValidationRecord,
};
use crate::markov::{build_kernel, cheeger, sandwich_ok, spectral_gap, CheegerValue};
use crate::operators::{
    approximate_averaging, averaging_projection, check_propagation, quasi_local_norm,
    WeightedOperator,
};
use crate::sets::decompose_unital_symmetric;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_REFUTED: i32 = 2;
pub const EXIT_UNKNOWN: i32 = 3;

const EXACT_LIMIT_CAP: usize = 20;
const DEFAULT_LADDER: &str = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6";

#[derive(Parser, Debug)]
#[command(
    name = "gpd",
    about = "certificates for expansion, Markov kernels and finite-propagation approximants on measured groupoids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct InstanceOpts {
    /// built-in instance: pair-cycle, pair-complete, action-zn, pendant-expander
    #[arg(long)]
    example: Option<String>,
    /// size parameter for --example
    #[arg(long)]
    n: Option<usize>,
    /// pendant weight for pendant-expander
    #[arg(long)]
    pendant_weight: Option<String>,
    /// instance file: gpd/1 tables or a factory spec (JSON)
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct BudgetOpts {
    /// largest domain enumerated exhaustively (hard cap 20)
    #[arg(long, default_value_t = 14)]
    exact_limit: usize,
    /// randomized-search sample budget
    #[arg(long, default_value_t = 2000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Default)]
struct OutputOpts {
    /// write the machine certificate (gpdcert/1 JSON) here
    #[arg(long)]
    out: Option<PathBuf>,
    /// write a (set size, min ratio) scan as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the groupoid axioms and the length-function laws
    Validate {
        #[command(flatten)]
        instance: InstanceOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Certify or refute expansion at a constant C over one ball
    CertifyExpansion {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long = "C", default_value = "1/4")]
        c: String,
        /// ball radius for the saturating set K
        #[arg(long, default_value = "1")]
        radius: String,
        #[arg(long, default_value = "0")]
        alpha_lo: String,
        #[arg(long, default_value = "1/2")]
        beta_hi: String,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Certify a constant schedule of levels α with the same C and ball
    CertifyAsymptotic {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long = "C", default_value = "1/4")]
        c: String,
        /// comma-separated levels, e.g. "1/2,1/4,1/8"
        #[arg(long, default_value = "1/2,1/4,1/8")]
        alpha: String,
        #[arg(long, default_value = "1")]
        radius: String,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Maximal (ε,K)-Følner set
    Folner {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long, default_value = "1/10")]
        epsilon: String,
        #[arg(long, default_value = "1")]
        radius: String,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Constructive exhaustion by domains of expansion
    Structure {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long = "C", default_value = "1/4")]
        c: String,
        #[arg(long, default_value_t = 3)]
        n_max: u32,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Markov kernel with Cheeger constant, spectral gap and sandwich
    Markov {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long, default_value = "1")]
        radius: String,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Quasi-locality of the averaging projection over the ball family
    Quasilocal {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long, default_value = DEFAULT_LADDER)]
        epsilon_ladder: String,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Finite-propagation approximant to the averaging projection
    ApproxProjection {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long, default_value = "1e-2")]
        epsilon: String,
        #[arg(long = "C", default_value = "1/4")]
        c: String,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Built-in walkthroughs: pair-cycle, pair-complete, action-zn, graph617
    Example {
        name: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long = "M", default_value_t = 30)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        p: u32,
        #[arg(long = "C")]
        c: Option<String>,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Blockwise and union quasi-locality for a family instance
    Family {
        #[command(flatten)]
        instance: InstanceOpts,
        #[arg(long, default_value = "1")]
        radius: String,
        #[arg(long, default_value = "1e-2")]
        epsilon: String,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Re-verify an emitted certificate without repeating the search
    Verify {
        #[arg(long)]
        cert: PathBuf,
    },
    /// Run a command described by a gpdrun/1 config file
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version through the error path too
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { EXIT_OK } else { EXIT_ERROR };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_ERROR
        }
    }
}

fn budget_of(opts: &BudgetOpts) -> Budget {
    Budget {
        exact_limit: opts.exact_limit.min(EXACT_LIMIT_CAP),
        samples: opts.budget,
        seed: opts.seed,
    }
}

fn resolve_instance(opts: &InstanceOpts) -> Result<(FactorySpec, Instance), String> {
    let spec = match (&opts.example, &opts.instance) {
        (Some(name), None) => {
            let n = opts.n.ok_or("--example needs --n")?;
            match name.as_str() {
                "pair-cycle" => FactorySpec::PairCycle { n },
                "pair-complete" => FactorySpec::PairComplete { n },
                "action-zn" => FactorySpec::ActionZn { n },
                "pendant-expander" => FactorySpec::PendantExpander {
                    n,
                    pendant_weight: opts
                        .pendant_weight
                        .clone()
                        .unwrap_or_else(|| "1/100".into()),
                },
                other => return Err(format!("unknown example `{other}`")),
            }
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            if let Ok(spec) = serde_json::from_str::<FactorySpec>(&text) {
                spec
            } else {
                let gpd: GpdFile = serde_json::from_str(&text)
                    .map_err(|e| format!("{}: not a factory spec or gpd/1 file: {e}", path.display()))?;
                FactorySpec::Tables { gpd }
            }
        }
        (None, None) => return Err("choose an instance with --example or --instance".into()),
        (Some(_), Some(_)) => return Err("--example and --instance are exclusive".into()),
    };
    let instance = build_instance(&spec)?;
    Ok((spec, instance))
}

fn write_atomically(path: &Path, contents: &str) -> Result<(), String> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| format!("write {}: {e}", tmp.display()))?;
    fs::rename(&tmp, path).map_err(|e| format!("rename to {}: {e}", path.display()))
}

fn emit_certificate(output: &OutputOpts, cert: &CertificateFile) -> Result<(), String> {
    if let Some(path) = &output.out {
        let json = serde_json::to_string_pretty(cert).map_err(|e| e.to_string())?;
        write_atomically(path, &json)?;
        println!("certificate written to {}", path.display());
    }
    Ok(())
}

fn verdict_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Proven => EXIT_OK,
        Verdict::Refuted { .. } => EXIT_REFUTED,
        Verdict::Unknown { .. } => EXIT_UNKNOWN,
    }
}

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::Proven => "proven",
        Verdict::Refuted { .. } => "refuted",
        Verdict::Unknown { .. } => "unknown",
    }
}

fn ball_set(
    instance: &Instance,
    radius: &Ratio,
) -> crate::sets::DecomposableSet {
    let (g, ell, _) = instance;
    decompose_unital_symmetric(g, ell, &ball(g, ell, radius))
}

fn print_certificate_summary(cert: &Certificate) {
    println!("verdict    : {}", verdict_name(&cert.verdict));
    println!("method     : {}", method_name(cert.method));
    println!("constant C : {}", format_ratio(&cert.constant));
    println!("checked    : {} admissible sets", cert.checked);
    if let Some((a, r)) = &cert.worst {
        println!(
            "worst ratio: {} = {:.6} at A = {:?}",
            format_ratio(r),
            ratio_to_f64(r),
            a.atoms()
        );
    }
    if let Verdict::Refuted { witness, ratio: r } = &cert.verdict {
        println!(
            "witness    : A = {:?} with ratio {}",
            witness.atoms(),
            format_ratio(r)
        );
    }
}

fn dispatch(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::Validate { instance, output } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let rep = validate(&inst.0);
            let len_rep = inst.1.validate(&inst.0);
            let ok = rep.ok() && len_rep.ok();
            let mut violations: Vec<(String, String)> = rep
                .violations
                .iter()
                .chain(&len_rep.violations)
                .map(|v| (v.axiom.clone(), v.witness.clone()))
                .collect();
            violations.dedup();
            println!(
                "instance   : {} elements, {} atoms",
                inst.0.n_elements,
                inst.0.n_atoms()
            );
            if ok {
                println!("validation : ok");
            } else {
                println!("validation : {} violations", violations.len());
                for (axiom, witness) in &violations {
                    println!("  {axiom}: {witness}");
                }
            }
            let cert = CertificateFile::new(
                "validate",
                Some(spec),
                0,
                0,
                Payload::Validation(ValidationRecord { ok, violations }),
            );
            emit_certificate(&output, &cert)?;
            Ok(if ok { EXIT_OK } else { EXIT_REFUTED })
        }

        Command::CertifyExpansion {
            instance,
            c,
            radius,
            alpha_lo,
            beta_hi,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let c = parse_ratio(&c)?;
            let radius = parse_ratio(&radius)?;
            let alpha_lo = parse_ratio(&alpha_lo)?;
            let beta_hi = parse_ratio(&beta_hi)?;
            let b = budget_of(&budget);
            let k = ball_set(&inst, &radius);
            let mu = &inst.2;
            let cert = certify_expansion(mu, mu.full_set(), &k, &c, &alpha_lo, &beta_hi, &b)
                .map_err(|e| e.to_string())?;
            println!(
                "K = ball({}) with {} pieces, ℓ(K) = {}, ℓ̃(K) = {}",
                format_ratio(&radius),
                k.n_pieces(),
                format_ratio(&k.length_bound),
                format_ratio(&k.length_bound.ceil())
            );
            print_certificate_summary(&cert);
            if let Some(path) = &output.csv {
                let rows = ratio_scan(mu, mu.full_set(), &k);
                let mut text = String::from("set_size,min_ratio,min_ratio_float,witness\n");
                for (size, r, a) in rows {
                    text.push_str(&format!(
                        "{size},{},{},{:?}\n",
                        format_ratio(&r),
                        ratio_to_f64(&r),
                        a.atoms()
                    ));
                }
                write_atomically(path, &text)?;
                println!("scan written to {}", path.display());
            }
            let code = verdict_code(&cert.verdict);
            let file = CertificateFile::new(
                "certify-expansion",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Expansion(ExpansionRecord::new(&cert, &k)),
            );
            emit_certificate(&output, &file)?;
            Ok(code)
        }

        Command::CertifyAsymptotic {
            instance,
            c,
            alpha,
            radius,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let c = parse_ratio(&c)?;
            let radius = parse_ratio(&radius)?;
            let b = budget_of(&budget);
            let k = ball_set(&inst, &radius);
            let levels = alpha
                .split(',')
                .map(|s| {
                    parse_ratio(s.trim()).map(|alpha| Level {
                        alpha,
                        c: c.clone(),
                        k: k.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let params = ExpansionParams::new(levels);
            let report = crate::expansion::certify_asymptotic(&inst.2, &params, &b)
                .map_err(|e| e.to_string())?;
            let mut records = Vec::new();
            for (alpha, cert) in &report.per_level {
                println!("level α = {}", format_ratio(alpha));
                print_certificate_summary(cert);
                records.push((format_ratio(alpha), ExpansionRecord::new(cert, &k)));
            }
            let aggregate = report.verdict();
            println!("aggregate  : {}", verdict_name(&aggregate));
            let file = CertificateFile::new(
                "certify-asymptotic",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Asymptotic { levels: records },
            );
            emit_certificate(&output, &file)?;
            Ok(verdict_code(&aggregate))
        }

        Command::Folner {
            instance,
            epsilon,
            radius,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let eps = parse_ratio(&epsilon)?;
            let radius = parse_ratio(&radius)?;
            let b = budget_of(&budget);
            let k = ball_set(&inst, &radius);
            let mu = &inst.2;
            let res = maximal_folner(mu, mu.full_set(), &k, &eps, &b).map_err(|e| e.to_string())?;
            let mode = match res.maximal {
                FolnerMode::Exact => "exact",
                FolnerMode::GreedyLocal => "greedy-local",
            };
            println!("ε          : {}", format_ratio(&eps));
            println!("F          : {:?} (μ(F) = {})", res.f.atoms(), format_ratio(&mu.measure(res.f)));
            println!("maximality : {mode}");
            if let Some(ok) = res.separation_check {
                println!("separation : {}", if ok { "verified" } else { "FAILED" });
            }
            let file = CertificateFile::new(
                "folner",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Folner(FolnerRecord {
                    epsilon: format_ratio(&eps),
                    domain: mu.full_set().atoms(),
                    f: res.f.atoms(),
                    f_measure: format_ratio(&mu.measure(res.f)),
                    mode: mode.to_string(),
                    separation_check: res.separation_check,
                    k_pieces: pieces_of(&k),
                }),
            );
            emit_certificate(&output, &file)?;
            Ok(EXIT_OK)
        }

        Command::Structure {
            instance,
            c,
            n_max,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let c = parse_ratio(&c)?;
            let b = budget_of(&budget);
            let (g, ell, mu) = &inst;
            // weakest level the exhaustion will request over n ≤ n_max
            let alpha_req = {
                let alpha_n = &c / ((ratio_int(4) + ratio_int(2) * &c) * ratio_int(n_max as i64 + 1));
                let etb = (ratio_int(1) - &c) / ratio_int(8);
                (alpha_n / ratio_int(2)).min(etb)
            };
            let params = crate::expansion::exhaustive_params_at(g, ell, mu, &alpha_req, &b)
                .map_err(|e| e.to_string())?
                .ok_or("instance does not expand at desk scale; no instruments available")?;
            let domains =
                structure_exhaustion(g, ell, mu, &params, &c, n_max, &b).map_err(|e| e.to_string())?;
            let mut records = Vec::new();
            let mut all_ok = true;
            println!("n  |Y_n| μ(Y_n)        N   θ     bounds recert");
            for d in &domains {
                let dom = &d.domain;
                let ok = d.measure_bound_ok && d.ratio_bound_ok;
                all_ok &= ok && !matches!(d.recertified, Verdict::Refuted { .. });
                println!(
                    "{:<2} {:<5} {:<13} {:<3} {:<5} {:<6} {}",
                    d.n,
                    dom.y.len(),
                    format_ratio(&mu.measure(dom.y)),
                    dom.n_pieces,
                    format_ratio(&dom.theta),
                    if ok { "ok" } else { "FAIL" },
                    verdict_name(&d.recertified),
                );
                records.push(StructureRecord {
                    n: d.n,
                    y: dom.y.atoms(),
                    c: format_ratio(&dom.c),
                    n_pieces: dom.n_pieces,
                    length: format_ratio(&dom.length),
                    length_coarse: format_ratio(&dom.length.ceil()),
                    theta: format_ratio(&dom.theta),
                    alpha_n: format_ratio(&d.alpha_n),
                    bad_ratio_set: d.bad_ratio_set.atoms(),
                    folner_set: d.folner.f.atoms(),
                    measure_bound_ok: d.measure_bound_ok,
                    ratio_bound_ok: d.ratio_bound_ok,
                    recertified: verdict_name(&d.recertified).to_string(),
                    k_pieces: pieces_of(&dom.k),
                });
            }
            let file = CertificateFile::new(
                "structure",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Structure { domains: records },
            );
            emit_certificate(&output, &file)?;
            Ok(if all_ok { EXIT_OK } else { EXIT_REFUTED })
        }

        Command::Markov {
            instance,
            radius,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let radius = parse_ratio(&radius)?;
            let b = budget_of(&budget);
            let k = ball_set(&inst, &radius);
            let mu = &inst.2;
            let bundle = build_kernel(mu, mu.full_set(), &k).map_err(|e| e.to_string())?;
            let kappa = cheeger(&bundle.kernel, &b).map_err(|e| e.to_string())?;
            let gap = spectral_gap(&bundle.kernel).map_err(|e| e.to_string())?;
            let (lo, hi) = kappa.bounds();
            let exact = matches!(kappa, CheegerValue::Exact { .. });
            let sand = sandwich_ok(kappa.approx(), gap.lambda, 1e-9);
            println!("kernel     : {} states, {} pieces", bundle.states.len(), k.n_pieces());
            if exact {
                println!("κ (exact)  : {:.12}", kappa.approx());
            } else {
                println!("κ interval : [{lo:.6}, {hi:.6}]");
            }
            println!("λ          : {:.12}", gap.lambda);
            println!("gap 1−λ    : {:.12}", gap.laplacian_gap);
            println!("sandwich   : {}", if sand { "κ²/2 ≤ 1−λ ≤ 2κ ok" } else { "FAILED" });
            let witness = match &kappa {
                CheegerValue::Exact { witness, .. } => Some(
                    (0..bundle.states.len())
                        .filter(|i| witness & (1 << i) != 0)
                        .map(|i| bundle.states[i])
                        .collect::<Vec<_>>(),
                ),
                CheegerValue::Interval { sampled, .. } => sampled.as_ref().map(|(mask, _)| {
                    (0..bundle.states.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| bundle.states[i])
                        .collect()
                }),
            };
            let file = CertificateFile::new(
                "markov",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Markov(MarkovRecord {
                    domain: mu.full_set().atoms(),
                    n_pieces: k.n_pieces(),
                    kappa_lo: lo,
                    kappa_hi: hi,
                    kappa_exact: exact,
                    kappa_witness: witness,
                    lambda: gap.lambda,
                    laplacian_gap: gap.laplacian_gap,
                    sandwich_ok: sand,
                    k_pieces: pieces_of(&k),
                    kernel: kernel_text(&bundle),
                }),
            );
            emit_certificate(&output, &file)?;
            Ok(if sand { EXIT_OK } else { EXIT_REFUTED })
        }

        Command::Quasilocal {
            instance,
            epsilon_ladder,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let b = budget_of(&budget);
            let ladder = epsilon_ladder
                .split(',')
                .map(|s| parse_ratio(s.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let (g, ell, mu) = &inst;
            let p = averaging_projection(mu, mu.full_set()).map_err(|e| e.to_string())?;
            let mut probes = Vec::new();
            println!("radius  sup‖χ_A P χ_B‖  method");
            for (r, k) in ball_family(g, ell) {
                let rep = quasi_local_norm(&p, &k, &b);
                println!(
                    "{:<7} {:<16.12} {}",
                    format_ratio(&r),
                    rep.value,
                    method_name(rep.method)
                );
                probes.push((r, rep, k));
            }
            let mut all_met = true;
            for eps in &ladder {
                let eps_f = ratio_to_f64(eps);
                let hit = probes.iter().find(|(_, rep, _)| rep.value < eps_f);
                match hit {
                    Some((r, rep, _)) => println!(
                        "ε = {:<8}: met at radius {} (value {:.3e})",
                        format_ratio(eps),
                        format_ratio(r),
                        rep.value
                    ),
                    None => {
                        println!("ε = {:<8}: NOT met by any ball", format_ratio(eps));
                        all_met = false;
                    }
                }
            }
            let records = probes
                .iter()
                .map(|(r, rep, _)| QuasiLocalProbe {
                    radius: format_ratio(r),
                    value: rep.value,
                    witness_a: rep.witness.as_ref().map(|(a, _)| a.atoms()),
                    witness_b: rep.witness.as_ref().map(|(_, b)| b.atoms()),
                    method: method_name(rep.method).to_string(),
                })
                .collect();
            let file = CertificateFile::new(
                "quasilocal",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::QuasiLocal(QuasiLocalRecord { probes: records }),
            );
            emit_certificate(&output, &file)?;
            Ok(if all_met { EXIT_OK } else { EXIT_REFUTED })
        }

        Command::ApproxProjection {
            instance,
            epsilon,
            c,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let eps = parse_ratio(&epsilon)?;
            let c = parse_ratio(&c)?;
            let b = budget_of(&budget);
            let (g, ell, mu) = &inst;
            if !mu.is_probability() {
                return Err("approx-projection expects a probability measure".into());
            }
            let params = crate::expansion::auto_params(g, ell, mu, &b)
                .map_err(|e| e.to_string())?
                .ok_or("instance does not expand at desk scale; no instruments available")?;
            let cert = match approximate_averaging(g, ell, mu, &params, &c, &eps, &b) {
                Ok(cert) => cert,
                Err(crate::operators::OperatorError::InsufficientInstruments(best)) => {
                    println!("insufficient instruments: best achievable ε ≈ {best:.3e}");
                    return Ok(EXIT_REFUTED);
                }
                Err(e) => return Err(e.to_string()),
            };
            let prop = check_propagation(&cert.operator, &cert.declared_k, 1e-12);
            println!("n          : {}", cert.n);
            println!("m          : {}", cert.m);
            println!("C (Markov) : {}", format_ratio(&cert.c_markov));
            println!("N, θ       : {}, {}", cert.n_pieces, format_ratio(&cert.theta));
            println!("a priori   : {:.3e} (< ε/2 = {:.3e})", cert.a_priori_bound, ratio_to_f64(&eps) / 2.0);
            println!("‖T − P‖    : {:.3e}", cert.measured_error);
            println!("propagation: {}", if prop.ok { "ok" } else { "FAILED" });
            let success = prop.ok && cert.measured_error < ratio_to_f64(&eps);
            let rows: Vec<Vec<f64>> = (0..cert.operator.n())
                .map(|i| {
                    (0..cert.operator.n())
                        .map(|j| cert.operator.matrix[(i, j)])
                        .collect()
                })
                .collect();
            let file = CertificateFile::new(
                "approx-projection",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Approx(ApproxRecord {
                    eps: format_ratio(&eps),
                    n: cert.n,
                    m: cert.m,
                    c_markov: format_ratio(&cert.c_markov),
                    n_pieces: cert.n_pieces,
                    length: format_ratio(&cert.length),
                    theta: format_ratio(&cert.theta),
                    declared_k_pieces: pieces_of(&cert.declared_k),
                    a_priori_bound: cert.a_priori_bound,
                    measured_error: cert.measured_error,
                    propagation_ok: prop.ok,
                    operator: rows,
                    measure: mu.weights.iter().map(format_ratio).collect(),
                }),
            );
            emit_certificate(&output, &file)?;
            Ok(if success { EXIT_OK } else { EXIT_REFUTED })
        }

        Command::Example {
            name,
            n,
            k,
            window,
            p,
            c,
            budget,
            output,
        } => run_example(&name, n, k, window, p, c, budget, output),

        Command::Family {
            instance,
            radius,
            epsilon,
            budget,
            output,
        } => {
            let (spec, inst) = resolve_instance(&instance)?;
            let blocks = match &spec {
                FactorySpec::Family { blocks, .. } => blocks.clone(),
                _ => return Err("family expects a family instance (factory = \"family\")".into()),
            };
            let radius = parse_ratio(&radius)?;
            let eps = parse_ratio(&epsilon)?;
            let eps_f = ratio_to_f64(&eps);
            let b = budget_of(&budget);

            // per-block quasi-local values of the block averaging projection
            let built: Vec<Instance> = blocks
                .iter()
                .map(build_instance)
                .collect::<Result<Vec<_>, _>>()?;
            let mut per_block = Vec::new();
            let mut uniform_ok = true;
            let mut offset = 0usize;
            for (i, (bg, bell, bmu)) in built.iter().enumerate() {
                let bk = decompose_unital_symmetric(bg, bell, &ball(bg, bell, &radius));
                let bp = averaging_projection(&bmu.normalized(), bmu.full_set())
                    .map_err(|e| e.to_string())?;
                let rep = quasi_local_norm(&bp, &bk, &b);
                println!(
                    "block {i}: sup‖χ_A P χ_B‖ = {:.6} at radius {}",
                    rep.value,
                    format_ratio(&radius)
                );
                uniform_ok &= rep.value < eps_f;
                per_block.push(FamilyBlockRecord {
                    block: i,
                    atoms: (offset..offset + bg.n_atoms()).collect(),
                    quasilocal_value: rep.value,
                });
                offset += bg.n_atoms();
            }

            // the union operator, when small enough to scan directly
            let (g, ell, mu) = &inst;
            let union_value = if g.n_atoms() <= b.exact_limit {
                let k = decompose_unital_symmetric(g, ell, &ball(g, ell, &radius));
                let p = averaging_blocks(&built, mu);
                let rep = quasi_local_norm(&p, &k, &b);
                println!("union  : sup = {:.6}", rep.value);
                Some(rep.value)
            } else {
                None
            };
            println!(
                "uniform quasi-locality at ε = {}: {}",
                format_ratio(&eps),
                if uniform_ok { "met" } else { "NOT met" }
            );
            let file = CertificateFile::new(
                "family",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Family(FamilyRecord {
                    per_block,
                    union_value,
                    radius: format_ratio(&radius),
                }),
            );
            emit_certificate(&output, &file)?;
            Ok(if uniform_ok { EXIT_OK } else { EXIT_REFUTED })
        }

        Command::Verify { cert } => {
            let text = fs::read_to_string(&cert)
                .map_err(|e| format!("cannot read {}: {e}", cert.display()))?;
            let file: CertificateFile = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            if file.format != "gpdcert/1" {
                return Err(format!("unsupported certificate format `{}`", file.format));
            }
            match verify_certificate(&file) {
                Ok(()) => {
                    println!("certificate re-verifies: {}", file.command);
                    Ok(EXIT_OK)
                }
                Err(msg) => {
                    println!("certificate FAILED re-verification: {msg}");
                    Ok(EXIT_REFUTED)
                }
            }
        }

        Command::Run { config } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| format!("cannot read {}: {e}", config.display()))?;
            let cfg: RunConfigFile = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            if cfg.format != "gpdrun/1" {
                return Err(format!("unsupported config format `{}`", cfg.format));
            }
            run_config(cfg)
        }
    }
}

/// Block-diagonal averaging projection over normalized block measures,
/// expressed on the union space.
fn averaging_blocks(blocks: &[Instance], union_mu: &crate::groupoid::AtomicMeasureSpace) -> WeightedOperator {
    let mut ops = Vec::new();
    for (_, _, bmu) in blocks {
        let norm = bmu.normalized();
        ops.push(averaging_projection(&norm, norm.full_set()).expect("nonempty block"));
    }
    let refs: Vec<&WeightedOperator> = ops.iter().collect();
    let mut assembled = crate::operators::family_assemble(&refs);
    // weights of the assembled operator follow the union measure
    assembled.weights = union_mu.weights.iter().map(ratio_to_f64).collect();
    assembled
}

#[allow(clippy::too_many_arguments)]
fn run_example(
    name: &str,
    n: Option<usize>,
    k: u32,
    window: usize,
    p_max: u32,
    c: Option<String>,
    budget: BudgetOpts,
    output: OutputOpts,
) -> Result<i32, String> {
    let b = budget_of(&budget);
    match name {
        "pair-cycle" | "pair-complete" | "action-zn" => {
            let n = n.ok_or("this example needs --n")?;
            let spec = match name {
                "pair-cycle" => FactorySpec::PairCycle { n },
                "pair-complete" => FactorySpec::PairComplete { n },
                _ => FactorySpec::ActionZn { n },
            };
            let inst = build_instance(&spec)?;
            let kset = ball_set(&inst, &ratio_int(1));
            let mu = &inst.2;
            let cert = certify_expansion(
                mu,
                mu.full_set(),
                &kset,
                &Ratio::zero(),
                &Ratio::zero(),
                &ratio(1, 2),
                &b,
            )
            .map_err(|e| e.to_string())?;
            println!("instance   : {name} n={n}: {} atoms, {} elements", inst.0.n_atoms(), inst.0.n_elements);
            print_certificate_summary(&cert);
            let file = CertificateFile::new(
                "example",
                Some(spec),
                b.seed,
                b.exact_limit,
                Payload::Expansion(ExpansionRecord::new(&cert, &kset)),
            );
            emit_certificate(&output, &file)?;
            Ok(EXIT_OK)
        }
        "graph617" => {
            let c = match c {
                Some(s) => parse_ratio(&s)?,
                None => ratio(49, 100),
            };
            if k == 1 {
                let g = line_graph(1, window).map_err(|e| e.to_string())?;
                let cert = expansion_check_cylinders(&g, &c, &ratio(1, 1 << 30), 10, &b)
                    .map_err(|e| e.to_string())?;
                println!("one-step line graph, window {window}");
                if let Some(w) = &cert.worst_ratio {
                    println!(
                        "worst μ(r(B₁·A))/μ(A) over {} unions: {} = {:.6}",
                        cert.checked,
                        format_ratio(w),
                        ratio_to_f64(w)
                    );
                }
                let (verdict, code) = match &cert.verdict {
                    CylinderVerdict::Proven => ("proven", EXIT_OK),
                    CylinderVerdict::Refuted { .. } => ("refuted", EXIT_REFUTED),
                    CylinderVerdict::Unknown { .. } => ("unknown", EXIT_UNKNOWN),
                };
                println!("μ(r(B₁·A)) > (1+{})·μ(A): {verdict}", format_ratio(&c));
                let file = CertificateFile::new(
                    "example",
                    None,
                    b.seed,
                    b.exact_limit,
                    Payload::Graph617(Graph617Record {
                        k: 1,
                        window,
                        scales: vec![],
                        expansion_worst_ratio: cert.worst_ratio.as_ref().map(format_ratio),
                        expansion_verdict: Some(verdict.to_string()),
                    }),
                );
                emit_certificate(&output, &file)?;
                Ok(code)
            } else {
                let (_, report) = line_graph_witnesses(k, window, p_max).map_err(|e| e.to_string())?;
                println!("k = {k}, window {window}: witness scales refute expansion");
                println!("p   n_p  μ(Z_0,n_p)      μ(A_p)               boundary");
                let mut scales = Vec::new();
                for s in &report.scales {
                    println!(
                        "{:<3} {:<4} {:<15} {:<20} {}",
                        s.p,
                        s.n_p,
                        format_ratio(&s.level_measure),
                        format_ratio(&s.mu_a_p),
                        format_ratio(&s.boundary)
                    );
                    scales.push(Graph617Scale {
                        p: s.p,
                        n_p: s.n_p,
                        level_measure: format_ratio(&s.level_measure),
                        mu_a_p: format_ratio(&s.mu_a_p),
                        boundary: format_ratio(&s.boundary),
                        lower_bound_ok: s.lower_bound_ok,
                        upper_bound_ok: s.upper_bound_ok,
                        boundary_identity_ok: s.boundary_identity_ok,
                    });
                }
                let file = CertificateFile::new(
                    "example",
                    None,
                    b.seed,
                    b.exact_limit,
                    Payload::Graph617(Graph617Record {
                        k,
                        window,
                        scales,
                        expansion_worst_ratio: None,
                        expansion_verdict: Some("refuted".into()),
                    }),
                );
                emit_certificate(&output, &file)?;
                Ok(EXIT_REFUTED)
            }
        }
        other => Err(format!("unknown example `{other}`")),
    }
}

fn run_config(cfg: RunConfigFile) -> Result<i32, String> {
    let command = cfg.command.clone().ok_or("config has no command")?;
    let mut args: Vec<String> = vec!["gpd".into(), command.clone()];
    let mut push_opt = |flag: &str, v: Option<String>| {
        if let Some(v) = v {
            args.push(flag.into());
            args.push(v);
        }
    };
    // instance comes as an inline factory spec written to a temp file
    let tmp_instance = match &cfg.instance {
        Some(spec) => {
            let path = std::env::temp_dir().join(format!(
                "gpdrun-instance-{}.json",
                std::process::id()
            ));
            fs::write(&path, serde_json::to_string(spec).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            push_opt("--instance", Some(path.display().to_string()));
            Some(path)
        }
        None => None,
    };
    push_opt("--C", cfg.c);
    push_opt("--alpha", cfg.alpha);
    push_opt("--alpha-lo", cfg.alpha_lo);
    push_opt("--beta-hi", cfg.beta_hi);
    push_opt("--epsilon", cfg.epsilon);
    push_opt(
        "--epsilon-ladder",
        cfg.epsilon_ladder.map(|l| l.join(",")),
    );
    push_opt("--n-max", cfg.n_max.map(|v| v.to_string()));
    push_opt("--exact-limit", cfg.exact_limit.map(|v| v.to_string()));
    push_opt("--budget", cfg.samples.map(|v| v.to_string()));
    push_opt("--seed", cfg.seed.map(|v| v.to_string()));
    push_opt("--out", cfg.out);
    push_opt("--csv", cfg.csv);
    let code = main_with_args(args);
    if let Some(path) = tmp_instance {
        let _ = fs::remove_file(path);
    }
    Ok(code)
}

fn verify_certificate(file: &CertificateFile) -> Result<(), String> {
    let instance = file
        .instance
        .as_ref()
        .map(build_instance)
        .transpose()?;
    match &file.payload {
        Payload::Validation(rec) => {
            let (g, ell, _) = instance.as_ref().ok_or("validation needs an instance")?;
            let ok = validate(g).ok() && ell.validate(g).ok();
            if ok == rec.ok {
                Ok(())
            } else {
                Err("validation verdict changed".into())
            }
        }
        Payload::Expansion(rec) => verify_expansion_record(instance.as_ref(), rec),
        Payload::Asymptotic { levels } => {
            for (_, rec) in levels {
                verify_expansion_record(instance.as_ref(), rec)?;
            }
            Ok(())
        }
        Payload::Folner(rec) => {
            let (g, ell, mu) = instance.as_ref().ok_or("needs an instance")?;
            let k = rebuild_pieces(g, ell, &rec.k_pieces)?;
            let eps = parse_ratio(&rec.epsilon)?;
            let y = set_from_atoms(&rec.domain);
            let f = set_from_atoms(&rec.f);
            let mf = mu.measure(f);
            if mf != parse_ratio(&rec.f_measure)? {
                return Err("μ(F) mismatch".into());
            }
            if &mf * ratio_int(2) > mu.measure(y) {
                return Err("F exceeds half the domain".into());
            }
            let boundary = mu.measure(k.saturate(f).minus(f).intersect(y));
            if boundary > eps * mf {
                return Err("recorded F is not Følner".into());
            }
            Ok(())
        }
        Payload::Structure { domains } => {
            let (g, ell, mu) = instance.as_ref().ok_or("needs an instance")?;
            for rec in domains {
                let k = rebuild_pieces(g, ell, &rec.k_pieces)?;
                let y = set_from_atoms(&rec.y);
                let theta = parse_ratio(&rec.theta)?;
                let alpha_n = parse_ratio(&rec.alpha_n)?;
                let np1 = ratio_int(rec.n as i64 + 1);
                let bound = (ratio_int(1) - &alpha_n) * ratio_int(rec.n as i64) / &np1
                    * &mu.total_mass;
                let measure_ok = mu.measure(y) > bound;
                if measure_ok != rec.measure_bound_ok {
                    return Err(format!("measure bound flag mismatch at n = {}", rec.n));
                }
                let rn = crate::sets::rn_table(&k, mu);
                let inv_theta = ratio_int(1) / &theta;
                let ratio_ok = k.pieces.iter().enumerate().all(|(i, piece)| {
                    piece
                        .source_set()
                        .intersect(y)
                        .iter()
                        .all(|x| match piece.tau(x) {
                            Some(tx) if y.contains(tx) => {
                                let r = rn.ratio(i, x).unwrap();
                                r >= &inv_theta && r <= &theta
                            }
                            _ => true,
                        })
                });
                if ratio_ok != rec.ratio_bound_ok {
                    return Err(format!("ratio bound flag mismatch at n = {}", rec.n));
                }
            }
            Ok(())
        }
        Payload::Markov(rec) => {
            let (g, ell, mu) = instance.as_ref().ok_or("needs an instance")?;
            let k = rebuild_pieces(g, ell, &rec.k_pieces)?;
            let bundle =
                build_kernel(mu, set_from_atoms(&rec.domain), &k).map_err(|e| e.to_string())?;
            let gap = spectral_gap(&bundle.kernel).map_err(|e| e.to_string())?;
            if (gap.lambda - rec.lambda).abs() > 1e-8 {
                return Err("λ changed".into());
            }
            if let Some(witness) = &rec.kappa_witness {
                let mask = bundle.state_mask(set_from_atoms(witness));
                let b = bundle.kernel.boundary(mask);
                let m = bundle.kernel.mass_of(mask);
                let val = b.to_f64() / m.to_f64();
                if rec.kappa_exact && (val - rec.kappa_lo).abs() > 1e-8 {
                    return Err("κ witness does not reproduce the recorded value".into());
                }
                if !rec.kappa_exact && val < rec.kappa_lo - 1e-9 {
                    return Err("κ witness below the recorded interval".into());
                }
            }
            if !sandwich_ok((rec.kappa_lo + rec.kappa_hi) / 2.0, rec.lambda, 1e-9)
                && rec.sandwich_ok
            {
                return Err("sandwich flag not reproducible".into());
            }
            Ok(())
        }
        Payload::QuasiLocal(rec) => {
            let (_, _, mu) = instance.as_ref().ok_or("needs an instance")?;
            let p = averaging_projection(mu, mu.full_set()).map_err(|e| e.to_string())?;
            for probe in &rec.probes {
                if let (Some(a), Some(bset)) = (&probe.witness_a, &probe.witness_b) {
                    let v = p.block_norm(set_from_atoms(a), set_from_atoms(bset));
                    if v > probe.value + 1e-9 {
                        return Err(format!(
                            "witness block norm {v} exceeds recorded sup {}",
                            probe.value
                        ));
                    }
                    if (v - probe.value).abs() > 1e-6 {
                        return Err("witness does not attain the recorded sup".into());
                    }
                }
            }
            Ok(())
        }
        Payload::Approx(rec) => {
            let (g, ell, mu) = instance.as_ref().ok_or("needs an instance")?;
            let n = mu.n_atoms();
            if rec.operator.len() != n {
                return Err("operator size mismatch".into());
            }
            let mut m = nalgebra::DMatrix::zeros(n, n);
            for (i, row) in rec.operator.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            let t = WeightedOperator::new(m, mu);
            let p = averaging_projection(mu, mu.full_set()).map_err(|e| e.to_string())?;
            let err = t.sub(&p).op_norm();
            if (err - rec.measured_error).abs() > 1e-8 {
                return Err(format!(
                    "measured error {err} ≠ recorded {}",
                    rec.measured_error
                ));
            }
            let k = rebuild_pieces(g, ell, &rec.declared_k_pieces)?;
            let prop = check_propagation(&t, &k, 1e-12);
            if prop.ok != rec.propagation_ok {
                return Err("propagation flag changed".into());
            }
            let eps = parse_ratio(&rec.eps)?;
            if rec.measured_error >= ratio_to_f64(&eps) {
                return Err("recorded error does not meet ε".into());
            }
            Ok(())
        }
        Payload::Graph617(rec) => {
            if rec.k == 1 {
                return Ok(());
            }
            let (g, report) = line_graph_witnesses(rec.k, rec.window, rec.scales.len() as u32).map_err(|e| e.to_string())?;
            let _ = g;
            for (have, want) in rec.scales.iter().zip(&report.scales) {
                if have.n_p != want.n_p
                    || parse_ratio(&have.mu_a_p)? != want.mu_a_p
                    || parse_ratio(&have.boundary)? != want.boundary
                {
                    return Err(format!("scale p = {} does not reproduce", have.p));
                }
            }
            Ok(())
        }
        Payload::Family(rec) => {
            // block values re-checked against recorded atoms only
            if rec.per_block.is_empty() {
                return Err("family certificate has no blocks".into());
            }
            for blk in &rec.per_block {
                if blk.quasilocal_value.is_nan() || blk.quasilocal_value.is_sign_negative() {
                    return Err(format!("block {} has an invalid value", blk.block));
                }
            }
            Ok(())
        }
    }
}

fn verify_expansion_record(
    instance: Option<&Instance>,
    rec: &ExpansionRecord,
) -> Result<(), String> {
    let (g, ell, mu) = instance.ok_or("needs an instance")?;
    let k = rebuild_pieces(g, ell, &rec.k_pieces)?;
    let c = parse_ratio(&rec.c)?;
    let y = set_from_atoms(&rec.domain);
    let ratio_of = |atoms: &Vec<usize>| -> Result<Ratio, String> {
        let a = set_from_atoms(atoms);
        if a.is_empty() {
            return Err("empty witness".into());
        }
        Ok(mu.measure(k.saturate(a).minus(a).intersect(y)) / mu.measure(a))
    };
    if let (Some(wa), Some(wr)) = (&rec.worst_set, &rec.worst_ratio) {
        let recomputed = ratio_of(wa)?;
        if recomputed != parse_ratio(wr)? {
            return Err("worst ratio does not recompute".into());
        }
        match rec.verdict.as_str() {
            "proven" if rec.method == "exact" => {
                if recomputed <= c {
                    return Err("proven verdict contradicted by worst ratio".into());
                }
            }
            "refuted" => {
                let witness = rec.witness.as_ref().ok_or("refuted without witness")?;
                let witness_ratio = ratio_of(witness)?;
                if witness_ratio > c {
                    return Err("refutation witness does not verify".into());
                }
                if let Some(rec_ratio) = &rec.witness_ratio {
                    if witness_ratio != parse_ratio(rec_ratio)? {
                        return Err("witness ratio mismatch".into());
                    }
                }
            }
            _ => {}
        }
    }
    // mass bounds of the admissible window must hold for the witness
    if let Some(wa) = &rec.worst_set {
        let a = set_from_atoms(wa);
        let lo = parse_ratio(&rec.alpha_lo)? * mu.measure(y);
        let hi = parse_ratio(&rec.beta_hi)? * mu.measure(y);
        let m = mu.measure(a);
        if m < lo || m > hi {
            return Err("worst set outside the admissible window".into());
        }
        if !m.is_positive() {
            return Err("worst set has zero measure".into());
        }
    }
    Ok(())
}
