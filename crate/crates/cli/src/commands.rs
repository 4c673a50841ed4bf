use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};

use qgcc_core::analysis::{self, Method, Settings};
use qgcc_core::parallel::{self, Execution};
use qgcc_core::qmodel::{j_matrix, UncertainSystem};
use qgcc_core::realize;
use qgcc_core::synthesis::{self, SynthesisOutcome};
use qgcc_core::{linalg, oracle, Error};

use crate::config::{ConfigError, MethodChoice, RunConfig};
use crate::report::{render_csv, ControllerFile, RealizationFile, Row, Task, VerificationFile};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_VERIFY: u8 = 4;

/// A command's failure: exit code plus diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: e.0,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotHurwitz(_) | Error::Unrealizable(_) | Error::NoControllerNeeded | Error::SingularSqueezer => {
            EXIT_INFEASIBLE
        }
        Error::NumericalFailure(_) | Error::IllConditioned(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn status_for(e: &Error) -> &'static str {
    match e {
        Error::NotHurwitz(_) => "not_hurwitz",
        Error::NumericalFailure(_) | Error::IllConditioned(_) => "numerical_failure",
        _ => "error",
    }
}

type CmdResult = Result<u8, Failure>;

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration (defaults to the amplifier fixture at kappa = 4.5).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    /// Overrides the fixture damping rate.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leave the wall_ms column empty so output is byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(k) = self.kappa {
            if !cfg.is_fixture() {
                return Err(ConfigError("--kappa only applies to the dpa fixture".into()).into());
            }
            cfg.system.kappa = Some(k);
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(s) = self.samples {
            if s == 0 {
                return Err(ConfigError("--samples must be at least 1".into()).into());
            }
            cfg.verification.samples = s;
        }
        if let Some(s) = self.seed {
            cfg.verification.seed = s;
        }
        Ok(cfg)
    }

    fn out_path(&self, cfg: &RunConfig) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure {
            code: EXIT_CONFIG,
            message: format!("cannot write {}: {e}", p.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn settings(cfg: &RunConfig) -> Settings {
    Settings {
        margin: cfg.epsilon,
        execution: Execution::default(),
    }
}

fn metadata(cfg: &RunConfig, command: &str, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut m = vec![
        ("command".to_string(), command.to_string()),
        ("method".to_string(), cfg.method.as_str().to_string()),
    ];
    if let Some(k) = cfg.kappa() {
        m.push(("kappa".into(), k.to_string()));
    }
    m.extend(cfg.metadata());
    m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

fn timed<T>(no_timing: bool, f: impl FnOnce() -> T) -> (T, Option<f64>) {
    let start = Instant::now();
    let out = f();
    let ms = (!no_timing).then(|| start.elapsed().as_secs_f64() * 1e3);
    (out, ms)
}

/// Structural errors abort the command; solver-side problems become rows.
fn classify(e: Error) -> Result<(&'static str, u8), Failure> {
    match exit_code(&e) {
        EXIT_CONFIG => Err(e.into()),
        code => {
            eprintln!("{e}");
            Ok((status_for(&e), code))
        }
    }
}

fn run_analysis(cfg: &RunConfig, sys: &UncertainSystem, method: Method) -> qgcc_core::Result<analysis::AnalysisOutcome> {
    let r = cfg.cost_spec(sys.modes()).map_err(|e| Error::InvalidArgument(e.0))?;
    match method {
        Method::SmallGain => analysis::analyze_smallgain_with(sys, r.r(), &settings(cfg)),
        Method::Popov => analysis::analyze_popov_with(sys, r.r(), &cfg.theta_points(), &settings(cfg)),
    }
}

fn run_synthesis(cfg: &RunConfig, sys: &UncertainSystem, method: Method) -> qgcc_core::Result<SynthesisOutcome> {
    let cost = cfg.cost_spec(sys.modes()).map_err(|e| Error::InvalidArgument(e.0))?;
    match method {
        Method::SmallGain => synthesis::synth_smallgain_with(sys, &cost, &settings(cfg)),
        Method::Popov => synthesis::synth_popov_with(sys, &cost, &cfg.theta_points(), &settings(cfg)),
    }
}

fn feasibility_code(feasible: bool) -> u8 {
    if feasible {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

pub fn analyze(common: &Common) -> CmdResult {
    let cfg = common.load()?;
    let mut rows = Vec::new();
    let mut code = EXIT_OK;
    for method in cfg.method.methods() {
        let sys = cfg.system_for(method, None)?;
        let (out, ms) = timed(common.no_timing, || run_analysis(&cfg, &sys, method));
        let mut row = match out {
            Ok(o) => {
                code = code.max(feasibility_code(o.feasible));
                Row::from_analysis(&o, cfg.kappa())
            }
            Err(e) => {
                let (status, c) = classify(e)?;
                code = code.max(c);
                Row::failed(method, Task::Analysis, cfg.kappa(), None, status)
            }
        };
        row.wall_ms = ms;
        rows.push(row);
    }
    write_output(common.out_path(&cfg).as_deref(), &render_csv(&metadata(&cfg, "analyze", &[]), &rows))?;
    Ok(code)
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Where the controller JSON is written on success.
    #[arg(long, default_value = "controller.json")]
    pub controller: PathBuf,
}

pub fn synthesize(args: &SynthArgs) -> CmdResult {
    let common = &args.common;
    let cfg = common.load()?;
    let mut rows = Vec::new();
    let mut code = EXIT_OK;
    let mut best: Option<SynthesisOutcome> = None;
    for method in cfg.method.methods() {
        let sys = cfg.system_for(method, None)?;
        let (out, ms) = timed(common.no_timing, || run_synthesis(&cfg, &sys, method));
        let mut row = match out {
            Ok(o) => {
                code = code.max(feasibility_code(o.feasible));
                let row = Row::from_synthesis(&o, cfg.kappa());
                if o.feasible && best.as_ref().is_none_or(|b| o.bound < b.bound) {
                    best = Some(o);
                }
                row
            }
            Err(e) => {
                let (status, c) = classify(e)?;
                code = code.max(c);
                Row::failed(method, Task::Synthesis, cfg.kappa(), None, status)
            }
        };
        row.wall_ms = ms;
        rows.push(row);
    }
    write_output(common.out_path(&cfg).as_deref(), &render_csv(&metadata(&cfg, "synthesize", &[]), &rows))?;
    if let Some(o) = best {
        let file = ControllerFile::from_outcome(&o, cfg.kappa()).expect("feasible outcome has K");
        let json = serde_json::to_string_pretty(&file).expect("controller serializes") + "\n";
        write_output(Some(&args.controller), &json)?;
    }
    Ok(code)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Kappa,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskChoice {
    Analysis,
    Synthesis,
    Both,
}

impl TaskChoice {
    fn tasks(self) -> Vec<Task> {
        match self {
            TaskChoice::Analysis => vec![Task::Analysis],
            TaskChoice::Synthesis => vec![Task::Synthesis],
            TaskChoice::Both => vec![Task::Analysis, Task::Synthesis],
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long)]
    pub step: f64,
    #[arg(long, value_enum, default_value = "synthesis")]
    pub task: TaskChoice,
}

struct Job {
    method: Method,
    task: Task,
    kappa: Option<f64>,
    theta: Option<f64>,
}

fn run_job(cfg: &RunConfig, job: &Job, no_timing: bool) -> Result<Row, Failure> {
    let sys = cfg.system_for(job.method, job.kappa)?;
    let (out, ms) = timed(no_timing, || -> qgcc_core::Result<Row> {
        let cost = cfg.cost_spec(sys.modes()).map_err(|e| Error::InvalidArgument(e.0))?;
        let margin = cfg.epsilon;
        Ok(match (job.task, job.theta) {
            (Task::Analysis, None) => Row::from_analysis(&run_analysis(cfg, &sys, job.method)?, job.kappa),
            (Task::Synthesis, None) => Row::from_synthesis(&run_synthesis(cfg, &sys, job.method)?, job.kappa),
            (Task::Analysis, Some(th)) => Row::from_analysis(&analysis::popov_analysis_at(&sys, cost.r(), th, margin)?, job.kappa),
            (Task::Synthesis, Some(th)) => Row::from_synthesis(&synthesis::synth_popov_at(&sys, &cost, th, margin)?, job.kappa),
        })
    });
    let mut row = match out {
        Ok(r) => r,
        Err(e) if exit_code(&e) == EXIT_CONFIG && !matches!(e, Error::NonPositiveKappa(_)) => return Err(e.into()),
        Err(e) => Row::failed(job.method, job.task, job.kappa, job.theta, status_for(&e)),
    };
    row.wall_ms = ms;
    Ok(row)
}

pub fn sweep(args: &SweepArgs) -> CmdResult {
    let common = &args.common;
    let mut cfg = common.load()?;
    if args.param == SweepParam::Theta {
        cfg.method = MethodChoice::Popov;
    }
    if !(args.step > 0.0 && args.step.is_finite()) || !(args.from < args.to) {
        return Err(ConfigError(format!(
            "sweep needs from < to and step > 0 (got from={}, to={}, step={})",
            args.from, args.to, args.step
        ))
        .into());
    }
    let points = crate::config::Range {
        from: args.from,
        to: args.to,
        step: args.step,
    }
    .points()?;
    let mut jobs = Vec::new();
    match args.param {
        SweepParam::Kappa => {
            if !cfg.is_fixture() {
                return Err(ConfigError("kappa sweeps need the dpa fixture".into()).into());
            }
            for &k in &points {
                for task in args.task.tasks() {
                    for method in cfg.method.methods() {
                        jobs.push(Job {
                            method,
                            task,
                            kappa: Some(k),
                            theta: None,
                        });
                    }
                }
            }
        }
        SweepParam::Theta => {
            if common.method == Some(MethodChoice::Smallgain) {
                return Err(ConfigError("theta sweeps apply to the popov method only".into()).into());
            }
            if args.from < 0.0 {
                return Err(ConfigError("theta must be non-negative".into()).into());
            }
            for &th in &points {
                for task in args.task.tasks() {
                    jobs.push(Job {
                        method: Method::Popov,
                        task,
                        kappa: cfg.kappa(),
                        theta: Some(th),
                    });
                }
            }
        }
    }
    let rows = parallel::map_indexed(Execution::default(), jobs.len(), |i| run_job(&cfg, &jobs[i], common.no_timing));
    let rows: Vec<Row> = rows.into_iter().collect::<Result<_, _>>()?;
    let param = match args.param {
        SweepParam::Kappa => "kappa",
        SweepParam::Theta => "theta",
    };
    let extra = [
        ("sweep", format!("{param}={}:{}:{}", args.from, args.step, args.to)),
        ("task", format!("{:?}", args.task).to_lowercase()),
    ];
    write_output(common.out_path(&cfg).as_deref(), &render_csv(&metadata(&cfg, "sweep", &extra), &rows))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Controller JSON from `synthesize`; its method, kappa and bound are used
    /// unless overridden.
    #[arg(long)]
    pub controller: Option<PathBuf>,
    /// Bound to check instead of the one from the controller or a fresh analysis.
    #[arg(long)]
    pub bound: Option<f64>,
}

pub fn verify(args: &VerifyArgs) -> CmdResult {
    let common = &args.common;
    let mut cfg = common.load()?;
    let controller = args.controller.as_deref().map(ControllerFile::load).transpose()?;
    let methods = match &controller {
        Some(c) => {
            if common.kappa.is_none() && cfg.is_fixture() {
                if let Some(k) = c.kappa {
                    cfg.system.kappa = Some(k);
                }
            }
            vec![c.method()?]
        }
        None => cfg.method.methods(),
    };
    if let Some(b) = args.bound {
        if !b.is_finite() {
            return Err(ConfigError("--bound must be finite".into()).into());
        }
    }
    let k = controller.as_ref().map(ControllerFile::controller).transpose()?;
    let mut reports = Vec::new();
    let mut code = EXIT_OK;
    for method in methods {
        let sys = cfg.system_for(method, None)?;
        let cost = cfg.cost_spec(sys.modes())?;
        let bound = match (args.bound, controller.as_ref().and_then(|c| c.bound)) {
            (Some(b), _) | (None, Some(b)) => b,
            (None, None) if k.is_some() => {
                return Err(ConfigError("controller file has no bound; pass --bound".into()).into())
            }
            (None, None) => {
                let out = run_analysis(&cfg, &sys, method)?;
                if !out.feasible {
                    return Err(Failure {
                        code: EXIT_INFEASIBLE,
                        message: format!("{} analysis is infeasible; no bound to verify", method.as_str()),
                    });
                }
                out.bound
            }
        };
        let report = oracle::verify_bound(
            &sys,
            k.as_ref(),
            &cost,
            bound,
            cfg.verification.samples,
            cfg.verification.seed,
        );
        if !report.is_sound() {
            eprintln!(
                "{}: {} violations, {} unstable samples out of {}",
                method.as_str(),
                report.violations,
                report.unstable_samples,
                report.samples
            );
            code = EXIT_VERIFY;
        }
        reports.push(VerificationFile::new(method, bound, &report));
    }
    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(&reports)
    }
    .expect("report serializes")
        + "\n";
    write_output(common.out_path(&cfg).as_deref(), &json)?;
    Ok(code)
}

#[derive(Debug, Args)]
pub struct RealizeArgs {
    /// Controller JSON from `synthesize`.
    #[arg(long, default_value = "controller.json", conflicts_with = "example")]
    pub controller: PathBuf,
    /// Realize the example controller K = [[0, -0.5i], [0.5i, 0]] instead of a file.
    #[arg(long)]
    pub example: bool,
    /// Squeezer coupling rate.
    #[arg(long)]
    pub ktilde: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn realize(args: &RealizeArgs) -> CmdResult {
    if !(args.ktilde > 0.0 && args.ktilde.is_finite()) {
        return Err(ConfigError(format!("--ktilde must be positive, got {}", args.ktilde)).into());
    }
    let k = if args.example {
        qgcc_core::qmodel::dpa_fixture(0.0)?.k_example
    } else {
        ControllerFile::load(&args.controller)?.controller()?
    };
    let s = realize::solve_squeezer(&k, args.ktilde)?;
    let realized = realize::realized_coupling_term(&s)?;
    let target = (j_matrix(1) * k.assemble()).map(|z| -z * linalg::I);
    let file = RealizationFile::new(&s, &realized, &target);
    let json = serde_json::to_string_pretty(&file).expect("realization serializes") + "\n";
    write_output(args.out.as_deref(), &json)?;
    Ok(EXIT_OK)
}
