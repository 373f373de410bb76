//! Command-line front end. Exit codes: 0 success, 2 certificate failure, 1 error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimates::{
    convexity_defect, default_convexity_constant, density_bound, displacement_identity_check, energy_trajectory,
    lemma_bound, supnorm_monitor, BoundCertificate, ConvexityDefect, DisplacementDefects, EnergyTrajectory,
    SupNormReport, DEFAULT_TOLERANCE,
};
use crate::grid::ScalarField;
use crate::io::{ensure_dir, read_scalar, write_json, write_scalar, write_table, write_vector};
use crate::manufactured::{manufactured_fields, refinement_study, BLOWUP_COLUMNS, RESIDUAL_COLUMNS};
use crate::moser::{certify, MoserCertificate, MoserParams, PoincareConstants, RecurrenceMode};
use crate::problem::{validate_problem, Coupling, PlanningProblem, ValidationReport};
use crate::scenarios::scenario;
use crate::solver::{solve_planning, SolveReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CERTIFICATE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mfgplan", version, about = "Mean-field planning solver and estimate checks on the torus")]
pub struct Cli {
    /// Print the full JSON record instead of the summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario: trivial, bump, small-cosine-potential, manufactured.
    #[arg(long)]
    pub scenario: Option<String>,
}

impl Source {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        match (&self.config, &self.scenario) {
            (Some(path), _) => {
                let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok((RunConfig::load(path)?, base))
            }
            (None, Some(name)) => Ok((scenario(name)?, PathBuf::new())),
            (None, None) => Err(Error::Config("one of --config or --scenario is required".into())),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the problem data against the admissibility conditions.
    Validate {
        #[command(flatten)]
        source: Source,
        /// Exponent p to test.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Solve the planning problem and run the configured analyses.
    Solve {
        #[command(flatten)]
        source: Source,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Iteration cap (overrides the config).
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Energy trajectories, convexity and sup-norm checks on field files.
    Monitor {
        /// Slice-indexed density field.
        #[arg(long)]
        m: PathBuf,
        /// Value field, for the displacement identities.
        #[arg(long, requires = "v")]
        u: Option<PathBuf>,
        /// Potential field (defaults to zero).
        #[arg(long)]
        v: Option<PathBuf>,
        /// Exponents s.
        #[arg(long, value_delimiter = ',', default_value = "2")]
        s: Vec<f64>,
        /// Convexity constant (default |s - 1| max|Delta V|).
        #[arg(long)]
        c: Option<f64>,
        /// Exponent of the coupling g(m) = m^alpha.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Output directory for fields and tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form two-zero solution: fields, residual refinement and Delta V growth.
    Manufactured {
        #[arg(long, default_value_t = 256)]
        nx: usize,
        /// Defaults to nx.
        #[arg(long)]
        nt: Option<usize>,
        /// Refinement levels n (nx = nt = n).
        #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
        levels: Vec<usize>,
        /// Output directory for fields and tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Moser iteration certificate.
    CertifyMoser {
        /// Exponent of the coupling g(m) = m^alpha.
        #[arg(long)]
        alpha: f64,
        /// Base integrability exponent, r > alpha.
        #[arg(long)]
        r: f64,
        #[arg(long = "C", default_value_t = 1.0)]
        c: f64,
        #[arg(long = "Cl", default_value_t = 1.0)]
        cl: f64,
        /// Starting moment M_{q_{N0}}.
        #[arg(long = "M", default_value_t = 1.0)]
        m: f64,
        /// Base moment M_r (defaults to --M).
        #[arg(long = "Mr")]
        m_r: Option<f64>,
        /// Last index n of the recurrence.
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        /// Self-test mode: gamma = 0 and no q factor.
        #[arg(long)]
        degenerate: bool,
        /// Output directory for fields and tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Endpoint bound for f'' + c f >= 0.
    LemmaBound {
        /// f(0).
        #[arg(long)]
        a: f64,
        /// f(T).
        #[arg(long)]
        b: f64,
        /// Convexity constant, c T^2 < 2.
        #[arg(long)]
        c: f64,
        /// Time horizon.
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        /// Observed max f to certify.
        #[arg(long)]
        observed: Option<f64>,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryReport {
    pub s: f64,
    pub convexity: ConvexityDefect,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveRecord {
    pub validation: ValidationReport,
    pub solve: SolveReport,
    pub trajectories: Vec<TrajectoryReport>,
    pub certificates: Vec<BoundCertificate>,
    pub supnorm: SupNormReport,
    pub moser: Option<MoserCertificate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MonitorRecord {
    pub supnorm: SupNormReport,
    pub trajectories: Vec<TrajectoryReport>,
    pub identities: Vec<DisplacementDefects>,
}

/// Outcome of a successful command.
enum Outcome {
    Pass,
    CertificateFailed,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn exponent_tag(s: f64) -> String {
    format!("{s}").replace('-', "m").replace('.', "p")
}

fn trajectory_table(path: &Path, f: &EnergyTrajectory, c: f64, bound: f64) -> Result<()> {
    let rows: Vec<Vec<f64>> = f.rows().iter().map(|r| vec![r[0], r[1], r[3] + c * r[1], bound]).collect();
    write_table(path, &["t", "f", "f2_plus_cf", "bound"], &rows)
}

fn analyse_trajectory(
    m: &ScalarField,
    v: &ScalarField,
    s: f64,
    c: Option<f64>,
) -> Result<(EnergyTrajectory, TrajectoryReport, f64)> {
    let f = energy_trajectory(m, s)?;
    let c = c.unwrap_or_else(|| default_convexity_constant(s, v));
    let convexity = convexity_defect(&f, c)?;
    let report = TrajectoryReport { s, convexity, max: f.max() };
    Ok((f, report, c))
}

fn endpoint_bound(f: &EnergyTrajectory, c: f64, horizon: f64) -> f64 {
    let n = f.values.len();
    lemma_bound(f.values[0], f.values[n - 1], c, horizon).map(|b| b.bound).unwrap_or(f64::NAN)
}

fn run_validate(source: &Source, p: Option<f64>, json: bool) -> Result<Outcome> {
    let (cfg, base) = source.load()?;
    let problem = cfg.problem.build(&base)?;
    let report = validate_problem(&problem, p);
    if json {
        print_json(&report)?;
    } else {
        println!("grid: {}", report.grid);
        println!("potential: {}  max|Delta V| = {}", report.potential, report.delta_v_sup);
        println!("p_sup = {}", report.p_sup);
        if let (Some(p), Some(eps)) = (report.p, report.epsilon) {
            println!("p = {p}: eps = {eps}, admissible = {}", report.p_admissible.unwrap_or(false));
        }
        println!("k0 = {}  lower bound holds: {}", report.k0, report.lower_bound_holds);
    }
    Ok(Outcome::Pass)
}

fn run_solve(source: &Source, out: Option<PathBuf>, max_iters: Option<usize>, json: bool) -> Result<Outcome> {
    let (mut cfg, base) = source.load()?;
    if let Some(n) = max_iters {
        cfg.solver.max_iters = n;
    }
    cfg.solver.validate()?;
    let out = out.or_else(|| cfg.output_dir.as_ref().map(|d| base.join(d)));
    let problem: PlanningProblem = cfg.problem.build(&base)?;
    let solution = solve_planning(&problem, &cfg.solver)?;
    let tolerance = cfg.analysis.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let horizon = problem.grid().horizon();

    let mut trajectories = Vec::new();
    let mut tables = Vec::new();
    for &s in &cfg.analysis.exponents {
        let (f, report, c) = analyse_trajectory(&solution.m, problem.v(), s, None)?;
        tables.push((s, f, c));
        trajectories.push(report);
    }
    let mut certificates = Vec::new();
    for &p in &cfg.analysis.certificates {
        let (density, inverse) = density_bound(&problem, p, &solution.m, cfg.analysis.inverse, tolerance)?;
        certificates.push(density);
        certificates.extend(inverse);
    }
    let moser = match &cfg.analysis.moser {
        Some(params) => Some(certify(params, cfg.analysis.moser_horizon.unwrap_or(60))?),
        None => None,
    };
    let record = SolveRecord {
        validation: validate_problem(&problem, cfg.analysis.certificates.first().copied()),
        solve: solution.report.clone(),
        trajectories,
        certificates,
        supnorm: supnorm_monitor(&solution.m),
        moser,
    };

    if let Some(dir) = &out {
        ensure_dir(dir)?;
        write_scalar(&dir.join("m.bin"), "m", &solution.m)?;
        write_vector(&dir.join("w.bin"), "w", &solution.w)?;
        if let Some(u) = &solution.u {
            write_scalar(&dir.join("u.bin"), "u", u)?;
        }
        write_scalar(&dir.join("V.bin"), "V", problem.v())?;
        for (s, f, c) in &tables {
            let bound = record
                .certificates
                .iter()
                .find(|b| b.p.map(|p| p + 1.0) == Some(*s) || b.p.map(|p| 1.0 - p) == Some(*s))
                .map(|b| b.bound)
                .unwrap_or_else(|| endpoint_bound(f, *c, horizon));
            trajectory_table(&dir.join(format!("energy_s{}.csv", exponent_tag(*s))), f, *c, bound)?;
        }
        let history: Vec<Vec<f64>> = solution
            .report
            .residual_history
            .iter()
            .zip(&solution.report.energy_history)
            .enumerate()
            .map(|(i, (r, e))| vec![(i + 1) as f64, *r, *e])
            .collect();
        write_table(&dir.join("history.csv"), &["iteration", "residual", "energy"], &history)?;
        write_json(&dir.join("report.json"), &record)?;
    }

    if json {
        print_json(&record)?;
    } else {
        let r = &record.solve;
        println!(
            "iterations = {}  converged = {}  residual = {:e}  energy = {}",
            r.iterations, r.converged, r.final_residual, r.final_energy
        );
        println!("max mass error = {:e}  min m = {}", r.max_mass_error, r.min_density);
        if let Some(pde) = &r.pde {
            println!("hjb_l2 = {:e}  fp_l2 = {:e}", pde.hjb_l2, pde.fp_l2);
        }
        for t in &record.trajectories {
            println!(
                "s = {}: max f = {}  min(f'' + c f) = {} at t = {}",
                t.s, t.max, t.convexity.defect, t.convexity.t_argmin
            );
        }
        for b in &record.certificates {
            println!(
                "{:?} p = {}: observed {} <= bound {}: {}",
                b.kind,
                b.p.unwrap_or(f64::NAN),
                b.observed.unwrap_or(f64::NAN),
                b.bound,
                if b.pass == Some(true) { "pass" } else { "FAIL" }
            );
        }
    }
    if !record.solve.converged {
        eprintln!(
            "warning: solver stopped after {} iterations without reaching the tolerance",
            record.solve.iterations
        );
    }
    let failed =
        record.certificates.iter().any(|b| b.pass != Some(true)) || record.moser.as_ref().is_some_and(|m| !m.pass());
    Ok(if failed { Outcome::CertificateFailed } else { Outcome::Pass })
}

#[allow(clippy::too_many_arguments)]
fn run_monitor(
    m: &Path,
    u: Option<&Path>,
    v: Option<&Path>,
    exponents: &[f64],
    c: Option<f64>,
    alpha: f64,
    out: Option<&Path>,
    json: bool,
) -> Result<Outcome> {
    let (_, m) = read_scalar(m)?;
    let v = match v {
        Some(p) => {
            let (_, v) = read_scalar(p)?;
            m.ensure_same(&v)?;
            v
        }
        None => ScalarField::zeros(*m.grid(), m.layout()),
    };
    let coupling = Coupling::power(alpha)?;
    let mut trajectories = Vec::new();
    let mut identities = Vec::new();
    if let Some(dir) = out {
        ensure_dir(dir)?;
    }
    for &s in exponents {
        let (f, report, cc) = analyse_trajectory(&m, &v, s, c)?;
        if let Some(dir) = out {
            let bound = endpoint_bound(&f, cc, m.grid().horizon());
            trajectory_table(&dir.join(format!("energy_s{}.csv", exponent_tag(s))), &f, cc, bound)?;
        }
        trajectories.push(report);
    }
    if let Some(u) = u {
        let (_, u) = read_scalar(u)?;
        for &s in exponents {
            identities.push(displacement_identity_check(&m, &u, &v, &coupling, s)?);
        }
    }
    let record = MonitorRecord { supnorm: supnorm_monitor(&m), trajectories, identities };
    if let Some(dir) = out {
        write_json(&dir.join("monitor.json"), &record)?;
    }
    if json {
        print_json(&record)?;
    } else {
        let s = &record.supnorm;
        println!(
            "max m = {}  min m = {} at t = {}, x = {:?}  vacuum = {}",
            s.max_m, s.min_m, s.argmin_t, s.argmin_x, s.vacuum
        );
        for t in &record.trajectories {
            println!("s = {}: max f = {}  min(f'' + c f) = {} (c = {})", t.s, t.max, t.convexity.defect, t.convexity.c);
        }
        for d in &record.identities {
            println!("s = {}: d1 = {:e}  d2 = {:?}", d.s, d.d1, d.d2);
        }
    }
    Ok(Outcome::Pass)
}

fn run_manufactured(nx: usize, nt: Option<usize>, levels: &[usize], out: Option<&Path>, json: bool) -> Result<Outcome> {
    let grid = crate::grid::TorusGrid::new_1d(nx, nt.unwrap_or(nx), 1.0)?;
    let fields = manufactured_fields(&grid)?;
    let study = refinement_study(levels)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_scalar(&dir.join("m.bin"), "m", &fields.m)?;
        write_scalar(&dir.join("u.bin"), "u", &fields.u)?;
        write_scalar(&dir.join("V.bin"), "V", &fields.v)?;
        write_table(&dir.join("residuals.csv"), &RESIDUAL_COLUMNS, &study.residual_rows())?;
        write_table(&dir.join("blowup.csv"), &BLOWUP_COLUMNS, &study.blowup_rows())?;
        write_json(&dir.join("study.json"), &study)?;
    }
    if json {
        print_json(&study)?;
    } else {
        println!("{}", RESIDUAL_COLUMNS.join(" "));
        for row in study.residual_rows() {
            println!("{}", row.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" "));
        }
        let o = &study.orders;
        println!(
            "orders: hjb_l2 {:?}  hjb_weighted_l2 {:?}  fp_l2 {:?}  d1 {:?}  d2 {:?}",
            o.hjb_l2, o.hjb_weighted_l2, o.fp_l2, o.d1, o.d2
        );
        println!("{}", BLOWUP_COLUMNS.join(" "));
        for row in study.blowup_rows() {
            println!("{}", row.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" "));
        }
        println!("max|Delta V| growth per level: {:?}", o.delta_v_growth);
    }
    Ok(Outcome::Pass)
}

fn run_moser(params: MoserParams, horizon: usize, out: Option<&Path>, json: bool) -> Result<Outcome> {
    let cert = certify(&params, horizon)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let rows: Vec<Vec<f64>> = cert
            .indices
            .iter()
            .enumerate()
            .map(|(i, n)| {
                vec![*n as f64, cert.log_m[i], cert.normalized[i], cert.unrolled[i], cert.psi[i], cert.psi_cap[i]]
            })
            .collect();
        write_table(&dir.join("moser.csv"), &["n", "log_m", "normalized", "unrolled", "psi", "psi_cap"], &rows)?;
        write_json(&dir.join("moser.json"), &cert)?;
    }
    if json {
        print_json(&cert)?;
    } else {
        println!("n0 = {}  N0 = {}  beta = {}", cert.n0, cert.big_n0, cert.beta);
        println!("rho = {}", cert.rho);
        println!("cap = {:e}", cert.cap);
        println!("M_q^(1/q) at n = {}: {}", cert.horizon, cert.normalized.last().copied().unwrap_or(f64::NAN));
        println!("below cap: {}  converged: {}", cert.below_cap, cert.converged);
    }
    Ok(if cert.pass() { Outcome::Pass } else { Outcome::CertificateFailed })
}

fn run_lemma(a: f64, b: f64, c: f64, horizon: f64, observed: Option<f64>, json: bool) -> Result<Outcome> {
    let mut cert = lemma_bound(a, b, c, horizon)?;
    if let Some(o) = observed {
        cert = cert.with_observed(o);
    }
    if json {
        print_json(&cert)?;
    } else {
        println!("bound = {}  (eps = {})", cert.bound, cert.epsilon);
        if let (Some(o), Some(p)) = (cert.observed, cert.pass) {
            println!("observed {o}: {}", if p { "pass" } else { "FAIL" });
        }
    }
    Ok(if cert.pass == Some(false) { Outcome::CertificateFailed } else { Outcome::Pass })
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    let json = cli.json;
    match cli.command {
        Command::Validate { source, p } => run_validate(&source, p, json),
        Command::Solve { source, out, max_iters } => run_solve(&source, out, max_iters, json),
        Command::Monitor { m, u, v, s, c, alpha, out } => {
            run_monitor(&m, u.as_deref(), v.as_deref(), &s, c, alpha, out.as_deref(), json)
        }
        Command::Manufactured { nx, nt, levels, out } => run_manufactured(nx, nt, &levels, out.as_deref(), json),
        Command::CertifyMoser { alpha, r, c, cl, m, m_r, horizon, degenerate, out } => {
            let params = MoserParams {
                alpha,
                r,
                m_r: m_r.unwrap_or(m),
                c,
                c_ell: PoincareConstants::Constant(cl),
                m_start: m,
                mode: if degenerate { RecurrenceMode::Degenerate } else { RecurrenceMode::Full },
            };
            run_moser(params, horizon, out.as_deref(), json)
        }
        Command::LemmaBound { a, b, c, horizon, observed } => run_lemma(a, b, c, horizon, observed, json),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let name = command_name(&cli.command);
    let start = Instant::now();
    let result = dispatch(cli);
    eprintln!("mfgplan {name}: {:.3} s", start.elapsed().as_secs_f64());
    match result {
        Ok(Outcome::Pass) => EXIT_OK,
        Ok(Outcome::CertificateFailed) => EXIT_CERTIFICATE,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Solve { .. } => "solve",
        Command::Monitor { .. } => "monitor",
        Command::Manufactured { .. } => "manufactured",
        Command::CertifyMoser { .. } => "certify-moser",
        Command::LemmaBound { .. } => "lemma-bound",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["mfgplan", "lemma-bound", "--a", "1", "--b", "1", "--c", "1"]), EXIT_OK);
        assert_eq!(
            run(["mfgplan", "lemma-bound", "--a", "1", "--b", "1", "--c", "1", "--observed", "5"]),
            EXIT_CERTIFICATE
        );
        assert_eq!(run(["mfgplan", "lemma-bound", "--a", "1", "--b", "1", "--c", "10"]), EXIT_ERROR);
        assert_eq!(run(["mfgplan", "bogus"]), EXIT_ERROR);
        assert_eq!(run(["mfgplan", "validate", "--scenario", "trivial", "--config", "x.toml"]), EXIT_ERROR);
        assert_eq!(run(["mfgplan", "--help"]), EXIT_OK);
    }

    #[test]
    fn moser_command() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let args = [
            "mfgplan",
            "certify-moser",
            "--alpha",
            "1",
            "--r",
            "2",
            "--C",
            "1",
            "--Cl",
            "1",
            "--M",
            "1",
            "--horizon",
            "60",
            "--out",
            out,
        ];
        assert_eq!(run(args), EXIT_OK);
        let rec: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("moser.json")).unwrap()).unwrap();
        assert_eq!(rec["big_n0"], 4);
        assert!((rec["rho"].as_f64().unwrap() - 1.752).abs() < 1e-3);
        assert!(rec["cap"].as_f64().is_some());
        assert_eq!(run(["mfgplan", "certify-moser", "--alpha", "1", "--r", "0.5"]), EXIT_ERROR);
    }
}
