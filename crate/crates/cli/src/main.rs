//! `zrp`: command-line front end for zrp-core.
//!
//! Exit codes: 0 success, 2 validation error, 3 budget exceeded,
//! 4 a `verify` property failed.

mod output;
mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use zrp_core::bounds::bounds_table;
use zrp_core::file::ModelFile;
use zrp_core::forms::ZrpSystem;
use zrp_core::mixing::{self, Distance};
use zrp_core::simulate::{simulate_replicas, Trajectory};
use zrp_core::spectral::{
    comparison_constant_jump, comparison_constant_zrp_within, poincare_jump, poincare_system,
    Method,
};
use zrp_core::{Budget, Config, ZrpError, ZrpModel};

use output::{float, key_value_csv, to_json};

#[derive(Parser, Debug)]
#[command(name = "zrp", version, about = "Spectral gaps, bounds, mixing and simulation for zero-range processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Seed for every random choice.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Rescale every row of P to sum to one before validation.
    #[arg(long, global = true)]
    renormalize: bool,
    /// Largest state space handled exactly.
    #[arg(long, default_value_t = Budget::default().exact_states, global = true)]
    max_states: usize,
    /// Largest state space handled by dense eigensolvers.
    #[arg(long, default_value_t = Budget::default().dense_states, global = true)]
    dense_states: usize,
    /// Largest state space for dense transition kernels.
    #[arg(long, default_value_t = Budget::default().kernel_states, global = true)]
    kernel_states: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral gaps of P and of the particle system.
    Gap { model: PathBuf },
    /// Comparison constants of two models that share the stationary law.
    Compare {
        model: PathBuf,
        /// Second model; must have the same n, m, rates and stationary law.
        #[arg(long)]
        other: PathBuf,
        /// Agreement tolerance between the two constants.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Lower and upper bounds on the particle-system gap.
    Bounds { model: PathBuf },
    /// Mixing times and the spectral upper bound.
    Mix {
        model: PathBuf,
        /// Total-variation mixing time.
        #[arg(long)]
        tv: bool,
        /// Relative-density mixing time.
        #[arg(long)]
        linf: bool,
        /// Spectral upper bound on the relative-density mixing time.
        #[arg(long)]
        bound: bool,
    },
    /// Exact-dynamics simulation.
    Simulate {
        model: PathBuf,
        /// Initial configuration: `site:count,...` or `all-on:site`.
        #[arg(long, default_value = "all-on:0")]
        eta0: String,
        /// Time horizon.
        #[arg(long = "T", visible_alias = "horizon")]
        horizon: f64,
        /// Independent replicas.
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        /// Write every event as `replica,time,src,dst` CSV to this file.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Checks every invariant on the model and reports each one.
    Verify {
        model: PathBuf,
        /// Tolerance for identities.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Tolerance for eigenvalue agreement.
        #[arg(long, default_value_t = 1e-9)]
        spectral_tol: f64,
        /// Slack for inequalities.
        #[arg(long, default_value_t = 1e-10)]
        slack: f64,
        /// Random test functions per identity.
        #[arg(long, default_value_t = 20)]
        draws: usize,
    },
}

/// A failed run: exit status and a message for standard error.
struct Failure {
    code: u8,
    message: String,
}

impl From<ZrpError> for Failure {
    fn from(e: ZrpError) -> Self {
        if e.is_validation() {
            let message = match field_of(&e) {
                Some(field) => format!("validation error in field `{field}`: {e}"),
                None => format!("validation error: {e}"),
            };
            Failure { code: 2, message }
        } else {
            Failure {
                code: 3,
                message: format!("budget exceeded: {e}"),
            }
        }
    }
}

fn field_of(e: &ZrpError) -> Option<&'static str> {
    match e {
        ZrpError::NotStochastic(_)
        | ZrpError::NotIrreducible { .. }
        | ZrpError::NotDoublyStochastic
        | ZrpError::InvalidDistribution(_) => Some("P"),
        ZrpError::InvalidRates(_) | ZrpError::NotHomogeneous => Some("rates"),
        ZrpError::MismatchedStationaryLaw { .. } => Some("other.P"),
        ZrpError::InvalidConfig(_) => Some("eta0"),
        _ => None,
    }
}

fn validation(field: &str, message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("validation error in field `{field}`: {message}"),
    }
}

impl Common {
    fn budget(&self) -> Budget {
        Budget {
            exact_states: self.max_states,
            dense_states: self.dense_states,
            kernel_states: self.kernel_states,
        }
    }

    fn load(&self, path: &Path) -> Result<(ModelFile, ZrpModel), Failure> {
        let file = ModelFile::load(path)?;
        let model = file.to_model(self.renormalize)?;
        Ok((file, model))
    }
}

#[derive(Serialize)]
struct GapOutput {
    #[serde(rename = "lambda_P")]
    lambda_p: f64,
    lambda_zrp: f64,
    states: usize,
    method: Method,
}

#[derive(Serialize)]
struct CompareOutput {
    zrp_constant: f64,
    jump_constant: f64,
    gap: f64,
    agree: bool,
}

#[derive(Serialize)]
struct MixOutput {
    t_mix_tv: Option<f64>,
    t_mix_linf: Option<f64>,
    spectral_bound: Option<f64>,
}

#[derive(Serialize)]
struct ReplicaSummary {
    replica: u64,
    events: usize,
    self_jumps: usize,
    final_config: Vec<usize>,
    mean_occupancy: Vec<f64>,
}

#[derive(Serialize)]
struct SimulateOutput {
    seed: u64,
    horizon: f64,
    initial: Vec<usize>,
    replicas: Vec<ReplicaSummary>,
}

fn gap(common: &Common, path: &Path) -> Result<String, Failure> {
    let (_, model) = common.load(path)?;
    let budget = common.budget();
    let lambda_p = poincare_jump(model.geometry())?.value;
    let sys = ZrpSystem::within(&model, &budget)?;
    let g = poincare_system(&sys, &budget)?;
    let out = GapOutput {
        lambda_p,
        lambda_zrp: g.value,
        states: sys.len(),
        method: g.method,
    };
    Ok(match common.format {
        Format::Json => to_json(&out),
        Format::Csv => key_value_csv(&[
            ("lambda_P", Some(out.lambda_p)),
            ("lambda_zrp", Some(out.lambda_zrp)),
            ("states", Some(out.states as f64)),
        ]),
    })
}

fn compare(common: &Common, path: &Path, other: &Path, tol: f64) -> Result<String, Failure> {
    let (file_p, model) = common.load(path)?;
    let (file_q, other_model) = common.load(other)?;
    if file_p.n != file_q.n {
        return Err(validation("other.n", format!("{} differs from {}", file_q.n, file_p.n)));
    }
    let (p, q) = (model.geometry(), other_model.geometry());
    let jump = comparison_constant_jump(p, q)?.value;
    if file_p.m != file_q.m {
        return Err(validation("other.m", format!("{} differs from {}", file_q.m, file_p.m)));
    }
    if file_p.rates != file_q.rates {
        return Err(validation("other.rates", "rates must match the first model"));
    }
    let zrp =
        comparison_constant_zrp_within(p, q, model.rates(), model.particles(), &common.budget())?
            .value;
    let gap = (zrp - jump).abs();
    let out = CompareOutput {
        zrp_constant: zrp,
        jump_constant: jump,
        gap,
        agree: gap <= tol * jump.abs().max(1.0),
    };
    Ok(match common.format {
        Format::Json => to_json(&out),
        Format::Csv => key_value_csv(&[
            ("zrp_constant", Some(zrp)),
            ("jump_constant", Some(jump)),
            ("gap", Some(gap)),
        ]),
    })
}

fn bounds(common: &Common, path: &Path) -> Result<String, Failure> {
    let (_, model) = common.load(path)?;
    let t = bounds_table(&model, &common.budget())?;
    Ok(match common.format {
        Format::Json => to_json(&t),
        Format::Csv => key_value_csv(&[
            ("lambda_p", Some(t.lambda_p)),
            ("lower_mean_field", t.lower_mean_field),
            ("lower_increasing_rates", t.lower_increasing_rates),
            ("lower_congestion", Some(t.lower_congestion)),
            ("exact_lambda_zrp", t.exact_lambda_zrp),
            ("upper_general", t.upper_general),
            ("upper_unit_rate", t.upper_unit_rate),
        ]),
    })
}

fn mix(common: &Common, path: &Path, tv: bool, linf: bool, bound: bool) -> Result<String, Failure> {
    let (_, model) = common.load(path)?;
    let budget = common.budget();
    let all = !(tv || linf || bound);
    let t_mix_tv = if tv || all {
        Some(mixing::mixing_time(&model, Distance::TotalVariation, &budget)?)
    } else {
        None
    };
    let t_mix_linf = if linf || all {
        Some(mixing::mixing_time(&model, Distance::Linf, &budget)?)
    } else {
        None
    };
    let spectral_bound = if bound || all {
        let sys = ZrpSystem::within(&model, &budget)?;
        if sys.len() < 2 {
            Some(0.0)
        } else {
            let lambda = poincare_system(&sys, &budget)?.value;
            Some(mixing::linf_upper_bound(lambda, sys.measure().min_prob())?)
        }
    } else {
        None
    };
    let out = MixOutput {
        t_mix_tv,
        t_mix_linf,
        spectral_bound,
    };
    Ok(match common.format {
        Format::Json => to_json(&out),
        Format::Csv => key_value_csv(&[
            ("t_mix_tv", t_mix_tv),
            ("t_mix_linf", t_mix_linf),
            ("spectral_bound", spectral_bound),
        ]),
    })
}

fn parse_eta0(spec: &str, n: usize, m: usize) -> Result<Config, Failure> {
    let bad = |msg: String| validation("eta0", msg);
    if let Some(site) = spec.strip_prefix("all-on:") {
        let x: usize = site
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{site}` is not a site index")))?;
        if x >= n {
            return Err(bad(format!("site {x} out of range for {n} sites")));
        }
        return Ok(Config::concentrated(n, x, m));
    }
    let mut occ = vec![0usize; n];
    for part in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (site, count) = part
            .split_once(':')
            .ok_or_else(|| bad(format!("`{part}` is not `site:count`")))?;
        let x: usize = site
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{site}` is not a site index")))?;
        let k: usize = count
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{count}` is not a count")))?;
        if x >= n {
            return Err(bad(format!("site {x} out of range for {n} sites")));
        }
        occ[x] += k;
    }
    let total: usize = occ.iter().sum();
    if total != m {
        return Err(bad(format!("holds {total} particles, the model has m = {m}")));
    }
    Ok(Config::new(occ))
}

fn mean_occupancy(t: &Trajectory) -> Vec<f64> {
    let mut occ: Vec<f64> = t.initial.occupations().iter().map(|&k| k as f64).collect();
    let mut area = vec![0.0; occ.len()];
    let mut last = 0.0;
    for e in &t.events {
        for (a, k) in area.iter_mut().zip(&occ) {
            *a += k * (e.time - last);
        }
        last = e.time;
        occ[e.source] -= 1.0;
        occ[e.target] += 1.0;
    }
    for (a, k) in area.iter_mut().zip(&occ) {
        *a += k * (t.horizon - last);
    }
    if t.horizon > 0.0 {
        area.iter().map(|a| a / t.horizon).collect()
    } else {
        occ
    }
}

fn simulate(
    common: &Common,
    path: &Path,
    eta0: &str,
    horizon: f64,
    replicas: u64,
    events: Option<&Path>,
) -> Result<String, Failure> {
    let (_, model) = common.load(path)?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(validation("T", "horizon must be finite and non-negative"));
    }
    if replicas == 0 {
        return Err(validation("replicas", "need at least one replica"));
    }
    let eta0 = parse_eta0(eta0, model.sites(), model.particles())?;
    let runs = simulate_replicas(&model, &eta0, horizon, common.seed, replicas)?;
    if let Some(p) = events {
        write_events(p, &runs).map_err(|e| validation("events", e))?;
    }
    let summaries: Vec<ReplicaSummary> = runs
        .iter()
        .map(|t| ReplicaSummary {
            replica: t.replica,
            events: t.events.len(),
            self_jumps: t.events.iter().filter(|e| e.is_self_jump()).count(),
            final_config: t.final_config().occupations().to_vec(),
            mean_occupancy: mean_occupancy(t),
        })
        .collect();
    Ok(match common.format {
        Format::Json => to_json(&SimulateOutput {
            seed: common.seed,
            horizon,
            initial: eta0.occupations().to_vec(),
            replicas: summaries,
        }),
        Format::Csv => {
            let mut out = String::from("replica,events,self_jumps,final_config,mean_occupancy\n");
            for s in &summaries {
                let fin: Vec<String> = s.final_config.iter().map(|k| k.to_string()).collect();
                let mean: Vec<String> = s.mean_occupancy.iter().map(|&v| float(v)).collect();
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s.replica,
                    s.events,
                    s.self_jumps,
                    fin.join(" "),
                    mean.join(" ")
                ));
            }
            out
        }
    })
}

fn write_events(path: &Path, runs: &[Trajectory]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "replica,time,src,dst")?;
    for t in runs {
        for e in &t.events {
            writeln!(w, "{},{},{},{}", t.replica, float(e.time), e.source, e.target)?;
        }
    }
    w.flush()
}

fn verify(
    common: &Common,
    path: &Path,
    tol: verify::Tolerances,
) -> Result<(String, bool), Failure> {
    let (_, model) = common.load(path)?;
    let report = verify::run(&model, &common.budget(), &tol, common.seed)?;
    let text = match common.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut out = String::from("property,status,detail\n");
            for p in &report.properties {
                let status = match p.status {
                    verify::Status::Pass => "pass",
                    verify::Status::Fail => "fail",
                    verify::Status::Skipped => "skipped",
                };
                out.push_str(&format!("{},{status},\"{}\"\n", p.name, p.detail.replace('"', "'")));
            }
            out
        }
    };
    Ok((text, report.pass))
}

fn run(cli: &Cli) -> Result<(String, u8), Failure> {
    let c = &cli.common;
    match &cli.command {
        Command::Gap { model } => gap(c, model).map(|s| (s, 0)),
        Command::Compare { model, other, tol } => compare(c, model, other, *tol).map(|s| (s, 0)),
        Command::Bounds { model } => bounds(c, model).map(|s| (s, 0)),
        Command::Mix {
            model,
            tv,
            linf,
            bound,
        } => mix(c, model, *tv, *linf, *bound).map(|s| (s, 0)),
        Command::Simulate {
            model,
            eta0,
            horizon,
            replicas,
            events,
        } => simulate(c, model, eta0, *horizon, *replicas, events.as_deref()).map(|s| (s, 0)),
        Command::Verify {
            model,
            tol,
            spectral_tol,
            slack,
            draws,
        } => {
            let tol = verify::Tolerances {
                identity: *tol,
                spectral: *spectral_tol,
                slack: *slack,
                draws: *draws,
            };
            verify(c, model, tol).map(|(s, pass)| (s, if pass { 0 } else { 4 }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok((text, code)) => {
            print!("{text}");
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
