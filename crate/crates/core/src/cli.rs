//! Command-line front end shared by the `splitpf` binary.
//!
//! Settings come from an optional TOML file and are then overridden by
//! flags. Exit codes: 0 success, 1 usage or configuration error, 2 power
//! flow did not converge, 3 base case infeasible.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::case::{read_matpower, NetworkCase};
use crate::contingency::{run_contingency_study, ContingencyError, ContingencySpec, OutageSet};
use crate::montecarlo::{
    run_study_with_progress, CiTarget, LoadDistribution, LoadScope, Probe, StudyConfig, StudyReport, UncertaintySpec,
};
use crate::solver::{classify, robust_solve, ClassKind, LimitSpec, SolverOptions};
use crate::stats::ConfLevel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_BASE_INFEASIBLE: i32 = 3;

/// Default output directory when neither `--out` nor the config sets one.
pub const OUT_ENV: &str = "SPLITPF_OUT";

#[derive(Debug, Parser)]
#[command(name = "splitpf", version, about = "Split-circuit power flow and Monte Carlo risk studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one deterministic power flow and print voltages and generation.
    Solve(SolveArgs),
    /// Monte Carlo study over load uncertainty.
    Mc(McArgs),
    /// One Monte Carlo study per N-1/N-2 contingency.
    Contingency(ContingencyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// MATPOWER case file.
    #[arg(value_name = "CASE")]
    pub case_pos: Option<PathBuf>,
    #[arg(long = "case", value_name = "PATH", conflicts_with = "case_pos")]
    pub case: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output formats (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
    /// Disable the Tx-stepping fallback.
    #[arg(long)]
    pub no_txstep: bool,
    /// Disable reactive-limit enforcement.
    #[arg(long)]
    pub no_qlim: bool,
    /// Angular stability limit in degrees.
    #[arg(long, value_name = "DEG")]
    pub angle_max_deg: Option<f64>,
    /// Lower voltage band applied to every bus (pu).
    #[arg(long, value_name = "PU")]
    pub vmin: Option<f64>,
    /// Upper voltage band applied to every bus (pu).
    #[arg(long, value_name = "PU")]
    pub vmax: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Print every Newton iteration.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args, Default)]
pub struct StudyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum number of samples.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
    /// Normal load uncertainty, standard deviation in percent of nominal.
    #[arg(long, value_name = "PCT", conflicts_with = "uniform_pct")]
    pub sigma_pct: Option<f64>,
    /// Uniform load uncertainty, half-range in percent of nominal.
    #[arg(long, value_name = "PCT")]
    pub uniform_pct: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Output directory (default: $SPLITPF_OUT, then ./splitpf-out).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Record a quantity per sample: `angle:F-T` or `vm:BUS`.
    #[arg(long, value_name = "PROBE")]
    pub probe: Vec<Probe>,
    /// Stop early: `CLASS:LEVEL:HALF_WIDTH`, e.g. `angular:99:0.005`.
    #[arg(long, value_name = "SPEC", value_parser = parse_ci_target)]
    pub ci_target: Option<CiTarget>,
    /// Print progress after every batch of samples.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Args)]
pub struct ContingencyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub study: StudyArgs,
    /// Largest generators taken out one at a time.
    #[arg(long, value_name = "K")]
    pub n1_generators: Option<usize>,
    /// Largest remaining generators paired with each N-1 generator.
    #[arg(long, value_name = "M")]
    pub n2_generators: Option<usize>,
    /// Most loaded branches taken out one at a time.
    #[arg(long, value_name = "K")]
    pub n1_branches: Option<usize>,
    /// Generator × branch pairs as `K,J`.
    #[arg(long, value_name = "K,J", value_parser = parse_pair)]
    pub gen_branch: Option<(usize, usize)>,
    /// Explicit outage set, e.g. "B130-131 B131-144" (repeatable).
    #[arg(long, value_name = "SET")]
    pub outage: Vec<OutageSet>,
    /// Run contingencies concurrently instead of samples.
    #[arg(long)]
    pub parallel_contingencies: bool,
}

fn parse_ci_target(s: &str) -> Result<CiTarget, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [class, level, hw] = parts[..] else {
        return Err("expected CLASS:LEVEL:HALF_WIDTH".into());
    };
    let class = ClassKind::parse(class).ok_or_else(|| format!("unknown class {class:?}"))?;
    let level = match level.trim_end_matches('%') {
        "95" => ConfLevel::CL95,
        "99" => ConfLevel::CL99,
        other => return Err(format!("confidence level must be 95 or 99, got {other}")),
    };
    let half_width = hw.parse().map_err(|_| format!("bad half-width {hw:?}"))?;
    Ok(CiTarget { class, level, half_width })
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected K,J")?;
    Ok((a.trim().parse().map_err(|_| "bad K")?, b.trim().parse().map_err(|_| "bad J")?))
}

/// Limits as written by humans: degrees and optional band overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub angle_max_deg: Option<f64>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub enforce_v_band: Option<bool>,
    pub enforce_branch_rating: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub sigma_pct: Option<f64>,
    pub uniform_pct: Option<f64>,
    /// Restrict perturbation to loads at these buses.
    pub buses: Option<Vec<usize>>,
}

/// Contents of a `--config` file; also written back as the run's echo.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<Vec<Format>>,
    pub solver: SolverOptions,
    pub limits: LimitsConfig,
    pub uncertainty: UncertaintyConfig,
    pub study: StudyConfig,
    pub contingency: ContingencySpec,
}

/// Error message plus the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

pub type CmdResult = Result<i32, Failure>;

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    // paths inside the file are relative to the file
    let dir = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.case, &mut cfg.out].into_iter().flatten() {
        if p.is_relative() {
            *p = dir.join(&*p);
        }
    }
    Ok(cfg)
}

impl RunConfig {
    fn apply_common(&mut self, a: &CommonArgs) {
        if let Some(c) = a.case.clone().or_else(|| a.case_pos.clone()) {
            self.case = Some(c);
        }
        if !a.format.is_empty() {
            self.format = Some(a.format.clone());
        }
        if a.no_txstep {
            self.solver.tx_fallback = false;
        }
        if a.no_qlim {
            self.solver.enforce_q_limits = false;
        }
        self.limits.angle_max_deg = a.angle_max_deg.or(self.limits.angle_max_deg);
        self.limits.v_min = a.vmin.or(self.limits.v_min);
        self.limits.v_max = a.vmax.or(self.limits.v_max);
    }

    fn apply_study(&mut self, a: &StudyArgs) {
        let s = &mut self.study;
        s.seed = a.seed.unwrap_or(s.seed);
        s.max_samples = a.samples.unwrap_or(s.max_samples);
        s.workers = a.workers.unwrap_or(s.workers);
        if !a.probe.is_empty() {
            s.probes = a.probe.clone();
        }
        if a.ci_target.is_some() {
            s.ci_target = a.ci_target;
        }
        if a.sigma_pct.is_some() {
            self.uncertainty.sigma_pct = a.sigma_pct;
            self.uncertainty.uniform_pct = None;
        }
        if a.uniform_pct.is_some() {
            self.uncertainty.uniform_pct = a.uniform_pct;
            self.uncertainty.sigma_pct = None;
        }
        if a.out.is_some() {
            self.out = a.out.clone();
        }
    }

    fn limit_spec(&self) -> Result<LimitSpec, Failure> {
        let mut l = LimitSpec::default();
        if let Some(deg) = self.limits.angle_max_deg {
            l.angle_max = deg.to_radians();
        }
        l.enforce_v_band = self.limits.enforce_v_band.unwrap_or(l.enforce_v_band);
        l.enforce_branch_rating = self.limits.enforce_branch_rating.unwrap_or(l.enforce_branch_rating);
        l.check().map_err(Failure::usage)?;
        Ok(l)
    }

    fn uncertainty_spec(&self) -> Result<UncertaintySpec, Failure> {
        let u = &self.uncertainty;
        let distribution = match (u.sigma_pct, u.uniform_pct) {
            (Some(s), None) => LoadDistribution::Normal { sigma_pct: s },
            (None, Some(r)) => LoadDistribution::Uniform { range_pct: r },
            (None, None) => return Err(Failure::usage("no load uncertainty given (--sigma-pct or --uniform-pct)")),
            (Some(_), Some(_)) => return Err(Failure::usage("sigma_pct and uniform_pct are mutually exclusive")),
        };
        let scope = u.buses.clone().map(LoadScope::BusList).unwrap_or_default();
        Ok(UncertaintySpec { distribution, scope })
    }

    fn load_case(&self) -> Result<NetworkCase, Failure> {
        let path = self.case.as_ref().ok_or_else(|| Failure::usage("no case file given"))?;
        let mut case = read_matpower(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        for b in &mut case.buses {
            b.v_min = self.limits.v_min.unwrap_or(b.v_min);
            b.v_max = self.limits.v_max.unwrap_or(b.v_max);
        }
        let violations = case.validate();
        if !violations.is_empty() {
            let v: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Failure::usage(format!("{}: invalid case: {}", path.display(), v.join("; "))));
        }
        Ok(case)
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("splitpf-out"))
    }

    fn formats(&self, default: &[Format]) -> Vec<Format> {
        self.format.clone().unwrap_or_else(|| default.to_vec())
    }
}

fn build_config(common: &CommonArgs, study: Option<&StudyArgs>) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_common(common);
    if let Some(s) = study {
        cfg.apply_study(s);
    }
    cfg.solver.check().map_err(Failure::usage)?;
    cfg.study.check().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn with_writer(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn echo_toml(cfg: &RunConfig) -> Vec<u8> {
    let mut s = String::from("# effective configuration of this run; angles in degrees\n");
    s.push_str(&toml::to_string(cfg).expect("config is serializable"));
    s.into_bytes()
}

fn progress_printer(enabled: bool) -> impl FnMut(crate::montecarlo::Progress) {
    move |p| {
        if enabled {
            eprintln!("  {}/{} samples", p.done, p.max);
        }
    }
}

pub fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write) -> CmdResult {
    let cfg = build_config(&args.common, None)?;
    let case = cfg.load_case()?;
    let limits = cfg.limit_spec()?;
    let opts = SolverOptions { trace: args.trace || cfg.solver.trace, ..cfg.solver.clone() };
    let sol = robust_solve(&case, None, &opts);
    let class = classify(&case, &sol, &limits);
    let formats = cfg.formats(&[Format::Text]);
    let io = |e: io::Error| Failure::usage(e.to_string());

    if args.trace {
        for t in &sol.trace {
            writeln!(stdout, "{t}").map_err(io)?;
        }
    }
    let vm = sol.state.magnitudes();
    let va = sol.state.angles();
    for f in &formats {
        match f {
            Format::Text => {
                writeln!(
                    stdout,
                    "{}: {} after {} iterations (residual {:.3e}), tx-stepping {}, q-limit switches {}",
                    case.name,
                    if sol.converged { "converged" } else { "NOT converged" },
                    sol.iterations,
                    sol.residual_norm,
                    if sol.used_tx_stepping { "used" } else { "not used" },
                    sol.q_limit_switches.len()
                )
                .map_err(io)?;
                if !sol.converged {
                    continue;
                }
                writeln!(stdout, "class: {}\n", class.kind()).map_err(io)?;
                writeln!(stdout, "{:>7} {:>5} {:>10} {:>12}", "bus", "type", "|V| [pu]", "angle [deg]").map_err(io)?;
                for (k, b) in case.buses.iter().enumerate() {
                    writeln!(stdout, "{:>7} {:>5} {:>10.6} {:>12.5}", b.id, format!("{:?}", b.kind), vm[k], va[k].to_degrees())
                        .map_err(io)?;
                }
                writeln!(stdout, "\n{:>7} {:>12} {:>12}", "gen bus", "P [pu]", "Q [pu]").map_err(io)?;
                for (bus, s) in sol.generation(&case) {
                    writeln!(stdout, "{bus:>7} {:>12.6} {:>12.6}", s.re, s.im).map_err(io)?;
                }
            }
            Format::Csv => {
                writeln!(stdout, "bus,vm_pu,va_rad").map_err(io)?;
                for (k, b) in case.buses.iter().enumerate() {
                    writeln!(stdout, "{},{},{}", b.id, vm[k], va[k]).map_err(io)?;
                }
            }
            Format::Json => {
                let gens: Vec<_> = sol
                    .generation(&case)
                    .into_iter()
                    .map(|(bus, s)| serde_json::json!({"bus": bus, "p": s.re, "q": s.im}))
                    .collect();
                let buses: Vec<_> = case
                    .buses
                    .iter()
                    .enumerate()
                    .map(|(k, b)| serde_json::json!({"bus": b.id, "vm": vm[k], "va_rad": va[k]}))
                    .collect();
                let doc = serde_json::json!({
                    "case": case.name,
                    "converged": sol.converged,
                    "iterations": sol.iterations,
                    "residual_norm": sol.residual_norm,
                    "used_tx_stepping": sol.used_tx_stepping,
                    "q_limit_switches": sol.q_limit_switches,
                    "failure": sol.failure.as_ref().map(|f| f.to_string()),
                    "class": class.kind(),
                    "violations": class.violations(),
                    "buses": buses,
                    "generators": gens,
                    "solver": opts,
                });
                writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).expect("json")).map_err(io)?;
            }
        }
    }
    if sol.converged {
        Ok(EXIT_OK)
    } else {
        let why = sol.failure.as_ref().map(|f| f.to_string()).unwrap_or_default();
        let hint = if args.trace { "" } else { " (rerun with --trace for the residual history)" };
        let last = sol.trace.last().map(|t| format!("; last: {t}")).unwrap_or_default();
        Err(Failure { code: EXIT_NONCONVERGENCE, message: format!("no power flow solution: {why}{last}{hint}") })
    }
}

fn write_study_outputs(report: &StudyReport, dir: &Path, formats: &[Format], prefix: &str) -> Result<Vec<PathBuf>, Failure> {
    let mut written = Vec::new();
    for f in formats {
        match f {
            Format::Json => written.push(write_file(dir, &format!("{prefix}report.json"), report.to_json().as_bytes())?),
            Format::Text => written.push(write_file(dir, &format!("{prefix}report.txt"), report.text().as_bytes())?),
            Format::Csv => {
                written.push(write_file(dir, &format!("{prefix}samples.csv"), &with_writer(|w| report.write_ledger_csv(w)))?);
                for h in &report.histograms {
                    let name = format!("{prefix}hist_{}.csv", h.probe.to_string().replace([':', '#'], "_"));
                    written.push(write_file(dir, &name, &with_writer(|w| h.histogram.write_csv(w)))?);
                }
            }
        }
    }
    Ok(written)
}

pub fn cmd_mc(args: &McArgs, stdout: &mut dyn Write) -> CmdResult {
    let cfg = build_config(&args.common, Some(&args.study))?;
    let case = cfg.load_case()?;
    let limits = cfg.limit_spec()?;
    let spec = cfg.uncertainty_spec()?;
    let mut progress = progress_printer(args.study.progress);
    let report = run_study_with_progress(&case, &spec, &cfg.study, &cfg.solver, &limits, &mut progress)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let dir = cfg.out_dir();
    write_file(&dir, "config.toml", &echo_toml(&cfg))?;
    write_study_outputs(&report, &dir, &cfg.formats(&[Format::Json, Format::Text]), "")?;
    stdout.write_all(report.text().as_bytes()).map_err(|e| Failure::usage(e.to_string()))?;
    writeln!(stdout, "outputs in {}", dir.display()).map_err(|e| Failure::usage(e.to_string()))?;
    if report.base_feasible {
        Ok(EXIT_OK)
    } else {
        Err(Failure { code: EXIT_BASE_INFEASIBLE, message: "base case has no power flow solution".into() })
    }
}

pub fn cmd_contingency(args: &ContingencyArgs, stdout: &mut dyn Write) -> CmdResult {
    let mut cfg = build_config(&args.common, Some(&args.study))?;
    let c = &mut cfg.contingency;
    c.n1_generators = args.n1_generators.unwrap_or(c.n1_generators);
    c.n2_generators = args.n2_generators.unwrap_or(c.n2_generators);
    c.n1_branches = args.n1_branches.unwrap_or(c.n1_branches);
    c.n2_gen_branch = args.gen_branch.unwrap_or(c.n2_gen_branch);
    if !args.outage.is_empty() {
        c.explicit = args.outage.clone();
    }
    c.parallel_contingencies |= args.parallel_contingencies;

    let case = cfg.load_case()?;
    let limits = cfg.limit_spec()?;
    let spec = cfg.uncertainty_spec()?;
    let study = run_contingency_study(&case, &cfg.contingency, &spec, &cfg.study, &cfg.solver, &limits).map_err(|e| match e {
        ContingencyError::BaseInfeasible(_) => Failure { code: EXIT_BASE_INFEASIBLE, message: e.to_string() },
        other => Failure::usage(other.to_string()),
    })?;
    let dir = cfg.out_dir();
    let formats = cfg.formats(&[Format::Json, Format::Csv, Format::Text]);
    write_file(&dir, "config.toml", &echo_toml(&cfg))?;
    for f in &formats {
        match f {
            Format::Json => write_file(&dir, "risk_table.json", study.to_json().as_bytes())?,
            Format::Csv => write_file(&dir, "risk_table.csv", &with_writer(|w| study.write_csv(w)))?,
            Format::Text => write_file(&dir, "risk_table.txt", study.text().as_bytes())?,
        };
    }
    let per_study: Vec<Format> = formats.iter().copied().filter(|f| *f != Format::Csv).collect();
    if let Some(base) = &study.base {
        write_study_outputs(base, &dir, &per_study, "C0_")?;
    }
    for r in &study.results {
        write_study_outputs(&r.report, &dir, &per_study, &format!("C{}_", r.ordinal))?;
    }
    let io = |e: io::Error| Failure::usage(e.to_string());
    stdout.write_all(study.text().as_bytes()).map_err(io)?;
    for r in &study.results {
        writeln!(stdout, "{}  seed {}", r.label, r.seed).map_err(io)?;
    }
    writeln!(stdout, "outputs in {}", dir.display()).map_err(io)?;
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(stderr, "{}", e.render()) } else { write!(stdout, "{}", e.render()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, stdout),
        Command::Mc(a) => cmd_mc(a, stdout),
        Command::Contingency(a) => cmd_contingency(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "splitpf: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_target_syntax() {
        let t = parse_ci_target("angular:99:0.005").unwrap();
        assert_eq!((t.class, t.level, t.half_width), (ClassKind::AngularUnstable, ConfLevel::CL99, 0.005));
        assert!(parse_ci_target("angular:90:0.1").is_err());
        assert!(parse_ci_target("nope:95:0.1").is_err());
        assert!(parse_ci_target("normal:95").is_err());
        assert_eq!(parse_pair("10, 2").unwrap(), (10, 2));
    }

    #[test]
    fn flags_override_the_file() {
        let file = r#"
            case = "grid.m"
            [solver]
            max_iter = 30
            [limits]
            angle_max_deg = 60.0
            [uncertainty]
            uniform_pct = 3.0
            [study]
            seed = 5
            max_samples = 200
            probes = ["vm:3"]
            [contingency]
            n1_generators = 5
            explicit = ["B1-2 B2-3"]
        "#;
        let mut cfg: RunConfig = toml::from_str(file).unwrap();
        assert_eq!(cfg.contingency.explicit[0].to_string(), "B1-2 B2-3");
        assert_eq!(cfg.limit_spec().unwrap().angle_max, 60f64.to_radians());
        let common = CommonArgs { no_txstep: true, angle_max_deg: Some(80.0), ..Default::default() };
        let study = StudyArgs { seed: Some(9), sigma_pct: Some(1.0), ..Default::default() };
        cfg.apply_common(&common);
        cfg.apply_study(&study);
        assert_eq!((cfg.study.seed, cfg.study.max_samples, cfg.solver.max_iter), (9, 200, 30));
        assert!(!cfg.solver.tx_fallback);
        assert_eq!(cfg.uncertainty_spec().unwrap(), UncertaintySpec::normal(1.0));
        assert_eq!(cfg.limit_spec().unwrap().angle_max, 80f64.to_radians());
        // the echo reads back to the same configuration
        let echo = String::from_utf8(echo_toml(&cfg)).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&echo).unwrap(), cfg);
        assert!(toml::from_str::<RunConfig>("[study]\nbogus = 1").is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["splitpf", "frobnicate"], &mut out, &mut err), EXIT_USAGE);
        assert_eq!(run(["splitpf", "solve", "/no/such/case.m"], &mut out, &mut err), EXIT_USAGE);
        assert_eq!(run(["splitpf", "--help"], &mut out, &mut err), EXIT_OK);
    }
}
