//! akns: scenario runner for the noncommutative AKNS toolkit. Every
//! subcommand assembles a scenario, executes it, prints the JSON report to
//! stdout and a human summary to stderr, and exits 0 on pass, 1 on a failed
//! or aborted verification, 2 on a configuration problem.

mod config;
mod engine;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::*;
use engine::CliError;

const BUNDLED: &[(&str, &str)] = &[
    (
        "one_soliton_nls",
        include_str!("../scenarios/one_soliton_nls.json"),
    ),
    (
        "negative_control",
        include_str!("../scenarios/negative_control.json"),
    ),
    (
        "hierarchy_v3_print",
        include_str!("../scenarios/hierarchy_v3_print.json"),
    ),
    (
        "glm_vs_closedform",
        include_str!("../scenarios/glm_vs_closedform.json"),
    ),
    ("airy_mkdv", include_str!("../scenarios/airy_mkdv.json")),
    (
        "charges_soliton",
        include_str!("../scenarios/charges_soliton.json"),
    ),
    (
        "burgers_colehopf",
        include_str!("../scenarios/burgers_colehopf.json"),
    ),
    (
        "riccati_truncation",
        include_str!("../scenarios/riccati_truncation.json"),
    ),
    (
        "backlund_darboux",
        include_str!("../scenarios/backlund_darboux.json"),
    ),
];

#[derive(Parser)]
#[command(name = "akns", version, about = "noncommutative AKNS hierarchy toolkit")]
struct Cli {
    /// Directory CSV artifacts and report copies are written into.
    #[arg(long, global = true, default_value = "akns-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario from a JSON config file or a bundled name.
    Run { config: String },
    /// List bundled scenarios.
    List,
    /// Print the symbolic time component of the Lax pair for flow n.
    Hierarchy {
        #[arg(long)]
        n: u32,
        /// Also print the induced equations of motion.
        #[arg(long)]
        eom: bool,
    },
    /// Conserved-charge drift on a moving two-speed soliton.
    Charges {
        #[arg(long, default_value_t = 3)]
        kmax: u32,
    },
    /// Sample the canonical one-soliton trajectory to CSV.
    Soliton,
    /// Solve the coupled GLM system and gate its identities.
    Glm {
        /// Kernel source: soliton, airy, or file.
        #[arg(long, default_value = "soliton")]
        kernel: String,
        #[arg(long, default_value_t = 0.02)]
        dx: f64,
        #[arg(long, default_value_t = -0.65)]
        x0: f64,
        #[arg(long, default_value_t = 8.95)]
        xmax: f64,
        /// Kernel evaluation time (airy kernels carry their own clock).
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// CSV kernel file for --kernel file.
        #[arg(long)]
        file: Option<String>,
        /// CSV hatted-kernel file for --kernel file.
        #[arg(long)]
        file_hat: Option<String>,
        /// Weight w1 as "re" or "re,im" for --kernel file.
        #[arg(long, default_value = "1")]
        w1: String,
        /// Weight w2 as "re" or "re,im" for --kernel file.
        #[arg(long, default_value = "-2")]
        w2: String,
    },
    /// Residual check of one named equation on a field or kernel source.
    Verify {
        #[arg(long)]
        eq: String,
        /// Data source: soliton, glm, or file.
        #[arg(long, default_value = "soliton")]
        source: String,
        /// Trajectory JSON for --source file.
        #[arg(long)]
        file: Option<String>,
        #[arg(long, default_value_t = 4)]
        order: u32,
        #[arg(long)]
        tol: Option<f64>,
        /// Multiply u by this factor first (negative control).
        #[arg(long)]
        perturb: Option<f64>,
        /// Seed for the randomized perturbation jitter.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        w1: Option<String>,
        #[arg(long)]
        w2: Option<String>,
        #[arg(long)]
        what1: Option<String>,
        #[arg(long)]
        what2: Option<String>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        n: Option<u32>,
    },
    /// Airy kernel: linear PDE residuals plus the pointwise Airy equation.
    Airy,
    /// Matrix Cole-Hopf solution of viscous Burgers, with scalar reduction.
    Burgers,
}

fn parse_cx(s: &str, flag: &str) -> Result<Cx, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || CliError::Config(format!("--{}: expected \"re\" or \"re,im\", got \"{}\"", flag, s));
    match parts.as_slice() {
        [re] => Ok([re.trim().parse().map_err(|_| bad())?, 0.0]),
        [re, im] => Ok([
            re.trim().parse().map_err(|_| bad())?,
            im.trim().parse().map_err(|_| bad())?,
        ]),
        _ => Err(bad()),
    }
}

/// Canonical rank-one soliton data on the weighted pair (1, -2).
fn canonical_soliton(flow: u32, provenance: ProvenanceSpec) -> SolitonSpec {
    SolitonSpec {
        w1: [1.0, 0.0],
        w2: [-2.0, 0.0],
        kappa: vec![[1.4, 0.0]],
        kappa_hat: vec![[1.5, 0.0]],
        flow,
        b: vec![vec![vec![[1.0, 0.0]]]],
        bhat: vec![vec![vec![[-1.0, 0.0]]]],
        tl_xi: Some([-1.0, 0.0]),
        provenance,
    }
}

fn scenario(name: &str, context: &str, target: Target) -> Scenario {
    Scenario {
        schema: 1,
        name: name.into(),
        context: context.into(),
        seed: 0,
        target,
    }
}

fn verify_scenario(
    eq: &str,
    source: &str,
    file: Option<String>,
    order: u32,
    tol: Option<f64>,
    perturb: Option<f64>,
    seed: u64,
    w1: Option<String>,
    w2: Option<String>,
    what1: Option<String>,
    what2: Option<String>,
    nu: Option<f64>,
    n: Option<u32>,
) -> Result<Scenario, CliError> {
    // per-equation defaults: grid, clock, gate, and the soliton flow that
    // realizes the equation
    let (flow, dx, dt, x0, xmax, def_tol) = match eq {
        "nls_s3" => (2, 5e-3, 5e-3, -15.0, 15.0, 1e-6),
        "mkdv_s3" => (3, 2.5e-3, 2.5e-3, -8.0, 8.0, 1e-6),
        "transport_s4" => (1, 5e-3, 5e-3, -8.0, 8.0, 1e-6),
        "nls_s4" => (2, 5e-3, 2e-3, -8.0, 8.0, 1e-6),
        "mkdv_s4_derived" => (3, 2.5e-3, 1e-3, -8.0, 8.0, 1e-5),
        "linear_space" | "linear_time" => (2, 0.01, 0.01, 0.0, 2.4, 1e-8),
        _ => (2, 5e-3, 5e-3, -8.0, 8.0, 1e-6),
    };
    let source = match source {
        "soliton" => SourceSpec::Soliton {
            soliton: canonical_soliton(flow, ProvenanceSpec::ClosedFormTl),
            grid: GridSpec { x0, xmax, dx },
            time: TimeSpec { t0: 0.0, dt, steps: 7 },
        },
        "glm" => SourceSpec::Glm {
            soliton: SolitonSpec {
                kappa_hat: vec![[1.4, 0.0]],
                ..canonical_soliton(2, ProvenanceSpec::ClosedFormTl)
            },
            grid: GridSpec { x0: -0.65, xmax: 8.95, dx: 0.05 },
            time: TimeSpec { t0: 0.0, dt: 0.01, steps: 5 },
        },
        "file" => SourceSpec::File {
            path: file.ok_or_else(|| {
                CliError::Config("--file: required with --source file".into())
            })?,
        },
        other => {
            return Err(CliError::Config(format!(
                "--source: expected soliton, glm, or file, got \"{}\"",
                other
            )))
        }
    };
    // weights default to the canonical pair when the equation needs them
    // and the user gave none
    let weighted = matches!(eq, "nls_s3" | "mkdv_s3" | "linear_space");
    let w1 = match w1 {
        Some(s) => Some(parse_cx(&s, "w1")?),
        None if weighted => Some([1.0, 0.0]),
        None => None,
    };
    let w2 = match w2 {
        Some(s) => Some(parse_cx(&s, "w2")?),
        None if weighted => Some([-2.0, 0.0]),
        None => None,
    };
    let what1 = match what1 {
        Some(s) => Some(parse_cx(&s, "what1")?),
        None => None,
    };
    let what2 = match what2 {
        Some(s) => Some(parse_cx(&s, "what2")?),
        None => None,
    };
    let n = match (eq, n) {
        ("linear_time", None) => Some(flow),
        _ => n,
    };
    let spec = VerifySpec {
        eq: eq.into(),
        w1,
        w2,
        what1,
        what2,
        nu,
        n,
        source,
        order,
        tol: tol.unwrap_or(def_tol),
        perturb,
        curvature: None,
    };
    let mut sc = scenario(
        &format!("cli_verify_{}", eq),
        "residual gate on a single named equation",
        Target::Verify(spec),
    );
    sc.seed = seed;
    Ok(sc)
}

fn glm_scenario(
    kernel: &str,
    dx: f64,
    x0: f64,
    xmax: f64,
    t: f64,
    file: Option<String>,
    file_hat: Option<String>,
    w1: &str,
    w2: &str,
) -> Result<Scenario, CliError> {
    let (kernel, tol_diag, name) = match kernel {
        "soliton" => (
            GlmKernelSpec::Soliton {
                soliton: SolitonSpec {
                    kappa_hat: vec![[1.4, 0.0]],
                    ..canonical_soliton(2, ProvenanceSpec::ClosedFormTl)
                },
            },
            Some(1e-3),
            "cli_glm_soliton",
        ),
        "airy" => (
            GlmKernelSpec::Airy { w1: 1.0, w2: -2.0, t: if t > 0.0 { t } else { 0.8 } },
            None,
            "cli_glm_airy",
        ),
        "file" => (
            GlmKernelSpec::File {
                path: file.ok_or_else(|| {
                    CliError::Config("--file: required with --kernel file".into())
                })?,
                path_hat: file_hat.ok_or_else(|| {
                    CliError::Config("--file-hat: required with --kernel file".into())
                })?,
                w1: parse_cx(w1, "w1")?,
                w2: parse_cx(w2, "w2")?,
            },
            None,
            "cli_glm_file",
        ),
        other => {
            return Err(CliError::Config(format!(
                "--kernel: expected soliton, airy, or file, got \"{}\"",
                other
            )))
        }
    };
    Ok(scenario(
        name,
        "coupled integral-equation solve gated on its exact identities",
        Target::Glm(GlmSpec {
            kernel,
            grid: GridSpec { x0, xmax, dx },
            t,
            tol_fact: 1e-3,
            tol_constr: 2e-3,
            tol_diag,
            tol_riccati: Some(5e-3),
            kernel_csv: true,
        }),
    ))
}

fn build_scenario(cmd: &Cmd) -> Result<Scenario, CliError> {
    match cmd {
        Cmd::Run { config } => {
            let src = if Path::new(config).is_file() {
                fs::read_to_string(config)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {}", config, e)))?
            } else if let Some((_, src)) = BUNDLED.iter().find(|(n, _)| n == config) {
                (*src).to_string()
            } else {
                return Err(CliError::Config(format!(
                    "\"{}\" is neither a config file nor a bundled scenario; \
                     akns list shows the bundled names",
                    config
                )));
            };
            parse_scenario(&src).map_err(CliError::Config)
        }
        Cmd::Hierarchy { n, eom } => Ok(scenario(
            &format!("cli_hierarchy_v{}", n),
            "symbolic time component of the Lax pair",
            Target::Hierarchy(HierarchySpec { n: *n, eom: *eom }),
        )),
        Cmd::Charges { kmax } => Ok(scenario(
            "cli_charges",
            "conserved-charge drift along a two-speed soliton",
            Target::Charges(ChargesSpec {
                soliton: SolitonSpec {
                    kappa: vec![[1.6, 0.0]],
                    kappa_hat: vec![[1.2, 0.0]],
                    tl_xi: None,
                    provenance: ProvenanceSpec::MatrixSolve,
                    ..canonical_soliton(2, ProvenanceSpec::MatrixSolve)
                },
                grid: GridSpec { x0: -15.0, xmax: 15.0, dx: 5e-3 },
                time: TimeSpec { t0: 0.0, dt: 0.05, steps: 21 },
                kmax: *kmax,
                tol: 1e-6,
            }),
        )),
        Cmd::Soliton => Ok(scenario(
            "cli_soliton",
            "closed-form one-soliton field samples",
            Target::Soliton(SolitonSampleSpec {
                soliton: canonical_soliton(2, ProvenanceSpec::ClosedFormTl),
                grid: GridSpec { x0: -8.0, xmax: 8.0, dx: 0.01 },
                time: TimeSpec { t0: 0.0, dt: 0.05, steps: 5 },
            }),
        )),
        Cmd::Glm { kernel, dx, x0, xmax, t, file, file_hat, w1, w2 } => glm_scenario(
            kernel,
            *dx,
            *x0,
            *xmax,
            *t,
            file.clone(),
            file_hat.clone(),
            w1,
            w2,
        ),
        Cmd::Verify {
            eq,
            source,
            file,
            order,
            tol,
            perturb,
            seed,
            w1,
            w2,
            what1,
            what2,
            nu,
            n,
        } => verify_scenario(
            eq,
            source,
            file.clone(),
            *order,
            *tol,
            *perturb,
            *seed,
            w1.clone(),
            w2.clone(),
            what1.clone(),
            what2.clone(),
            *nu,
            *n,
        ),
        Cmd::Airy => Ok(scenario(
            "cli_airy",
            "self-similar Airy kernel and the Airy function it integrates",
            Target::Airy(AirySpec {
                w1: 1.0,
                w2: -2.0,
                t: 0.8,
                grid: GridSpec { x0: -2.0, xmax: 2.0, dx: 0.01 },
                time: TimeSpec { t0: 0.8, dt: 0.01, steps: 7 },
                ode_grid: GridSpec { x0: -5.0, xmax: 5.0, dx: 5e-3 },
                tol: 1e-6,
                table_csv: true,
            }),
        )),
        Cmd::Burgers => Ok(scenario(
            "cli_burgers",
            "matrix Cole-Hopf solution of viscous Burgers",
            Target::Burgers(BurgersSpec {
                profile: ProfileSpec::Gaussian {
                    amplitude: 1.0,
                    floor: 0.5,
                    center: 0.0,
                    t_shift: 0.5,
                },
                nu_hat: 0.25,
                b: vec![
                    vec![[1.0, 0.0], [1.0, 0.0]],
                    vec![[1.0, 0.0], [1.0, 0.0]],
                ],
                grid: GridSpec { x0: -3.0, xmax: 3.0, dx: 5e-3 },
                time: TimeSpec { t0: 0.05, dt: 5e-3, steps: 7 },
                tol: 1e-6,
                tol_scalar: 1e-12,
            }),
        )),
        Cmd::List => unreachable!("handled before scenario build"),
    }
}

fn threads_from_env() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os("AKNS_THREADS") else {
        return Ok(());
    };
    let raw = raw.to_string_lossy();
    let k: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|k| *k >= 1)
        .ok_or_else(|| {
            CliError::Config(format!(
                "AKNS_THREADS: expected a positive integer, got \"{}\"",
                raw
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Config(format!("AKNS_THREADS: {}", e)))
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Cmd::List = cli.cmd {
        for (name, src) in BUNDLED {
            let sc = parse_scenario(src).map_err(CliError::Config)?;
            println!("{:20} {}", name, sc.context);
        }
        return Ok(true);
    }
    let sc = build_scenario(&cli.cmd)?;
    fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Run(format!("cannot create {}: {}", cli.out_dir.display(), e)))?;
    let report = engine::execute(&sc, &cli.out_dir)?;
    let json = report.to_json();
    print!("{}", json);
    fs::write(
        cli.out_dir.join(format!("{}_report.json", report.scenario)),
        &json,
    )
    .map_err(|e| CliError::Run(format!("cannot write report: {}", e)))?;
    for c in &report.checks {
        let verdict = if c.pass { "pass" } else { "FAIL" };
        let rel = if c.op == "lt" { "<" } else { ">" };
        eprintln!(
            "{}: {} = {:.6e} {} {:.1e} ... {}",
            report.scenario, c.name, c.value, rel, c.tolerance, verdict
        );
    }
    if !report.pass {
        let names: Vec<&str> = report.failing().iter().map(|c| c.name.as_str()).collect();
        eprintln!("{}: failed checks: {}", report.scenario, names.join(", "));
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = threads_from_env().and_then(|_| run(&cli));
    match outcome {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("akns: {}", e.message());
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Run(_) => 1,
            })
        }
    }
}
