//! `bgrowth`: command-line front end for orbit enumeration, generator counts,
//! bound certificates, mollification, Delzant counting and barcode tools.
//!
//! Every run writes its artifacts plus a `<command>.manifest.json` into the
//! output directory. Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use barcode_growth::barcode::{bottleneck_distance, count_long_bars, entropy_estimates, GrowthSamples};
use barcode_growth::bm_metric::{beps_liminf, log_ratio_bound, ApproximationLadder};
use barcode_growth::delzant::{
    certify_k_bound, count_fixed_points, counts_csv, regularize_shift, CountMode, DelzantPolytope, Hamiltonian,
};
use barcode_growth::filtered_complex::reduce;
use barcode_growth::mollify::run_pipeline;
use barcode_growth::orbit_enum::{certify_bound, count_classes, enumerate_spectrum, EnumConfig, Route};
use barcode_growth::{Barcode, Error, FilteredComplex, ToricDomain};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::{Manifest, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "bgrowth", version, about = "Barcode growth tools for toric domains and toric manifolds")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GlobalOpts {
    /// Directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, global = true, env = "BGROWTH_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Two actions closer than this are one spectral value.
    #[arg(long, global = true, default_value_t = 1e-9)]
    action_dedup: f64,
    #[arg(long, global = true, default_value_t = 1e-8)]
    angular_dedup: f64,
    #[arg(long, global = true, default_value_t = 1e-12)]
    newton_residual: f64,
    /// Grid resolution for `m_Δ` bounds and log-ratio scans.
    #[arg(long, global = true, default_value_t = 400)]
    resolution: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Orbit classes with action ≤ smax, as CSV.
    Spectrum {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        smax: f64,
        #[arg(long, value_enum, default_value_t = RouteArg::Auto)]
        route: RouteArg,
    },
    /// Generator counts on an even s-grid plus growth-rate fits.
    Growth {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        smax: f64,
        /// Smallest grid value; defaults to smax/10.
        #[arg(long)]
        smin: Option<f64>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Certificate for `count(s) ≤ C_n sⁿ + C_0` at the given levels.
    Bound {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        s: Vec<f64>,
    },
    /// Mollify a convex radial profile and report the uniform `m` bound.
    Mollify {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        eta: f64,
    },
    #[command(subcommand)]
    Delzant(DelzantCmd),
    #[command(subcommand)]
    Barcode(BarcodeCmd),
    #[command(subcommand)]
    Bm(BmCmd),
}

#[derive(Subcommand, Debug)]
enum DelzantCmd {
    /// Fixed tori of `φ_H^k` per face.
    Count {
        #[arg(long)]
        polytope: PathBuf,
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<u64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Divisor)]
        mode: ModeArg,
        /// Search up to this many random linear shifts for a regular count.
        #[arg(long)]
        regularize: Option<usize>,
    },
    /// Certificate for `count(k) ≤ C_n kⁿ + C_0` for k = 1..=kmax.
    Bound {
        #[arg(long)]
        polytope: PathBuf,
        #[arg(long)]
        hamiltonian: PathBuf,
        #[arg(long)]
        kmax: u64,
    },
}

#[derive(Subcommand, Debug)]
enum BarcodeCmd {
    /// Barcode of a filtered complex.
    Reduce {
        #[arg(long)]
        complex: PathBuf,
    },
    /// `b_ε(s)`.
    Beps {
        #[arg(long)]
        bars: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        s: f64,
    },
    Bottleneck {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum BmCmd {
    /// `sup |ln(f/g)|` and the induced interleaving radius.
    Ratio {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
        /// Action level for the interleaving radius.
        #[arg(long)]
        s: Option<f64>,
    },
    /// `liminf` estimate of `b_ε` along an approximation ladder.
    Ladder {
        #[arg(long)]
        ladder: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum RouteArg {
    Auto,
    Support,
    Gauss,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Divisor,
    Qlek,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

/// Artifact sink that records every file it writes.
struct Run {
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn manifest_name(&self) -> String {
        format!("{}.manifest.json", self.manifest.command.replace(' ', "_"))
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// JSON artifact wrapped with a pointer to its manifest.
    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            manifest: &'a str,
            report: &'a T,
        }
        let manifest = self.manifest_name();
        let text = serde_json::to_string_pretty(&Wrapped {
            manifest: &manifest,
            report: value,
        })
        .map_err(|e| invalid(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    fn finish(self) -> Result<(), Failure> {
        let path = self.out.join(self.manifest_name());
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| invalid(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
    }
}

fn load_domain(path: &Path) -> Result<ToricDomain, Failure> {
    Ok(ToricDomain::from_json(&read(path)?)?)
}

fn load_polytope(path: &Path) -> Result<DelzantPolytope, Failure> {
    Ok(DelzantPolytope::from_json(&read(path)?)?)
}

fn load_hamiltonian(path: &Path) -> Result<Hamiltonian, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(format!("bad Hamiltonian {}: {e}", path.display())))
}

fn load_barcode(path: &Path) -> Result<Barcode, Failure> {
    Ok(Barcode::from_json(&read(path)?)?)
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn enum_config(g: &GlobalOpts, route: RouteArg) -> Result<EnumConfig, Failure> {
    positive("action-dedup", g.action_dedup)?;
    positive("angular-dedup", g.angular_dedup)?;
    positive("newton-residual", g.newton_residual)?;
    if g.resolution < 2 {
        return Err(invalid("--resolution must be at least 2"));
    }
    Ok(EnumConfig {
        action_dedup: g.action_dedup,
        angular_dedup: g.angular_dedup,
        newton_residual: g.newton_residual,
        m_resolution: g.resolution,
        route: match route {
            RouteArg::Auto => Route::Auto,
            RouteArg::Support => Route::Support,
            RouteArg::Gauss => Route::Gauss,
        },
        ..EnumConfig::default()
    })
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<(), Failure> {
    let g = cli.global.clone();
    if g.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build_global()
            .map_err(|e| invalid(format!("cannot size worker pool: {e}")))?;
    }
    fs::create_dir_all(&g.out).map_err(|e| invalid(format!("cannot create {}: {e}", g.out.display())))?;
    let route = match &cli.command {
        Command::Spectrum { route, .. } => *route,
        _ => RouteArg::Auto,
    };
    let cfg = enum_config(&g, route)?;
    let (command, inputs) = describe(&cli.command);
    let mut run = Run {
        out: g.out.clone(),
        manifest: Manifest::new(
            command,
            argv,
            RunConfig {
                inputs,
                enumeration: cfg.clone(),
                resolution: g.resolution,
                threads: rayon::current_num_threads(),
                seed: g.seed,
            },
        ),
    };

    match cli.command {
        Command::Spectrum { domain, smax, .. } => {
            positive("smax", smax)?;
            let d = load_domain(&domain)?;
            let spec = enumerate_spectrum(&d, smax, &cfg)?;
            for w in &spec.warnings {
                eprintln!("warning: {w}");
            }
            run.write("spectrum.csv", &spec.to_csv()?)?;
            println!("{} orbit classes", spec.classes.len());
        }
        Command::Growth { domain, smax, smin, samples } => {
            positive("smax", smax)?;
            let smin = smin.unwrap_or(smax / 10.0);
            positive("smin", smin)?;
            if samples < 4 || smin >= smax {
                return Err(invalid("need --samples ≥ 4 and smin < smax"));
            }
            let d = load_domain(&domain)?;
            let spec = enumerate_spectrum(&d, smax, &cfg)?;
            let pts: Vec<(f64, u64)> = (0..samples)
                .map(|i| {
                    let s = smin + (smax - smin) * i as f64 / (samples - 1) as f64;
                    (s, count_classes(&spec.classes, d.n(), s).total_generators)
                })
                .collect();
            let growth = GrowthSamples::new(pts)?;
            let est = entropy_estimates(&growth, (smin, smax))?;
            run.write("growth.csv", &growth.to_csv()?)?;
            run.write_json("growth.json", &est)?;
            println!("poly_degree {:.6} exp_rate {:.6e}", est.poly_degree, est.exp_rate);
        }
        Command::Bound { domain, s } => {
            let d = load_domain(&domain)?;
            let cert = certify_bound(&d, &s, &cfg)?;
            run.write_json("bound.json", &cert)?;
            println!("ok {} C_n {:.6e} C_0 {:.6e}", cert.ok, cert.c_n, cert.c_0);
        }
        Command::Mollify { domain, eta } => {
            positive("eta", eta)?;
            let d = load_domain(&domain)?;
            let m = run_pipeline(&d, eta)?;
            run.write_json("mollify_grid.json", &m.f_eta)?;
            run.write_json("mollify_report.json", &m.report)?;
            println!(
                "xi {:.6} m_lower {:.6} gradient_ok {}",
                m.report.xi_hat, m.report.m_lower, m.report.gradient_ok
            );
        }
        Command::Delzant(DelzantCmd::Count { polytope, hamiltonian, k, mode, regularize }) => {
            let p = load_polytope(&polytope)?;
            let h = load_hamiltonian(&hamiltonian)?;
            let mode = match mode {
                ModeArg::Divisor => CountMode::Divisor,
                ModeArg::Qlek => CountMode::QLeK,
            };
            let mut counts = Vec::new();
            let mut shifts = Vec::new();
            for &kk in &k {
                let c = match regularize {
                    Some(budget) => {
                        let (lambda, c) = regularize_shift(&p, &h, kk, g.seed, budget)?;
                        shifts.push((kk, lambda));
                        c
                    }
                    None => count_fixed_points(&p, &h, kk, mode)?,
                };
                for w in &c.warnings {
                    eprintln!("warning: k = {kk}: {w}");
                }
                println!("k {} total {} {}", c.k, c.total, c.breakdown());
                counts.push(c);
            }
            run.write("delzant_counts.csv", &counts_csv(&counts)?)?;
            if regularize.is_some() {
                run.write_json("delzant_shifts.json", &shifts)?;
            }
        }
        Command::Delzant(DelzantCmd::Bound { polytope, hamiltonian, kmax }) => {
            if kmax < 4 {
                return Err(invalid("--kmax must be at least 4"));
            }
            let p = load_polytope(&polytope)?;
            let h = load_hamiltonian(&hamiltonian)?;
            let ks: Vec<u64> = (1..=kmax).collect();
            let cert = certify_k_bound(&p, &h, &ks)?;
            run.write_json("delzant_bound.json", &cert)?;
            println!("ok {} C_n {:.6e} C_0 {}", cert.ok, cert.c_n, cert.c_0);
        }
        Command::Barcode(BarcodeCmd::Reduce { complex }) => {
            let c = FilteredComplex::from_json(&read(&complex)?)?;
            let code = reduce(&c);
            run.write("barcode.json", &(code.to_json() + "\n"))?;
            println!("{} bars", code.len());
        }
        Command::Barcode(BarcodeCmd::Beps { bars, eps, s }) => {
            let code = load_barcode(&bars)?;
            let n = count_long_bars(&code, eps, s)?;
            run.write_json("beps.json", &serde_json::json!({ "eps": eps, "s": s, "count": n }))?;
            println!("{n}");
        }
        Command::Barcode(BarcodeCmd::Bottleneck { a, b }) => {
            let d = bottleneck_distance(&load_barcode(&a)?, &load_barcode(&b)?);
            // JSON has no infinity; an unmatched infinite bar is reported as null.
            let value = d.is_finite().then_some(d);
            run.write_json("bottleneck.json", &serde_json::json!({ "distance": value }))?;
            println!("{d}");
        }
        Command::Bm(BmCmd::Ratio { f, g: gg, s }) => {
            let report = log_ratio_bound(&load_domain(&f)?, &load_domain(&gg)?, g.resolution)?;
            let radius = s.map(|s| report.interleaving_upper(s)).transpose()?;
            run.write_json("bm_ratio.json", &serde_json::json!({ "bound": report, "s": s, "interleaving": radius }))?;
            println!("dSBM_upper {:.6e}", report.dsbm_upper);
        }
        Command::Bm(BmCmd::Ladder { ladder, tol }) => {
            let l = ApproximationLadder::from_json(&read(&ladder)?)?;
            let r = beps_liminf(&l, tol)?;
            run.write_json("bm_ladder.json", &r)?;
            println!("liminf {} stabilized {}", r.value, r.stabilized);
        }
    }
    run.finish()
}

/// Command name and input files for the manifest.
fn describe(c: &Command) -> (String, Vec<PathBuf>) {
    match c {
        Command::Spectrum { domain, .. } => ("spectrum".into(), vec![domain.clone()]),
        Command::Growth { domain, .. } => ("growth".into(), vec![domain.clone()]),
        Command::Bound { domain, .. } => ("bound".into(), vec![domain.clone()]),
        Command::Mollify { domain, .. } => ("mollify".into(), vec![domain.clone()]),
        Command::Delzant(DelzantCmd::Count { polytope, hamiltonian, .. }) => {
            ("delzant count".into(), vec![polytope.clone(), hamiltonian.clone()])
        }
        Command::Delzant(DelzantCmd::Bound { polytope, hamiltonian, .. }) => {
            ("delzant bound".into(), vec![polytope.clone(), hamiltonian.clone()])
        }
        Command::Barcode(BarcodeCmd::Reduce { complex }) => ("barcode reduce".into(), vec![complex.clone()]),
        Command::Barcode(BarcodeCmd::Beps { bars, .. }) => ("barcode beps".into(), vec![bars.clone()]),
        Command::Barcode(BarcodeCmd::Bottleneck { a, b }) => ("barcode bottleneck".into(), vec![a.clone(), b.clone()]),
        Command::Bm(BmCmd::Ratio { f, g, .. }) => ("bm ratio".into(), vec![f.clone(), g.clone()]),
        Command::Bm(BmCmd::Ladder { ladder, .. }) => ("bm ladder".into(), vec![ladder.clone()]),
    }
}

fn main() -> ExitCode {
    // The binary path differs between installs; keep manifests comparable.
    let argv: Vec<String> = std::iter::once("bgrowth".to_string()).chain(std::env::args().skip(1)).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
