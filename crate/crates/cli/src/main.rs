use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zdjscc::analysis::{
    db, fixed_resolution_compare, match_check, monte_carlo_eval, opta, opta_side_info, GridSampler,
};
use zdjscc::csvio;
use zdjscc::density::{make_correlated_gaussian_pair, make_iid_product, DensitySpec, DEFAULT_STEP, DEFAULT_SUPPORT_SIGMAS};
use zdjscc::descent::{descend_for_power, Tabulated, POWER_TOLERANCE};
use zdjscc::recipes::{parse_override, run_recipe, RecipeOptions, RECIPES};
use zdjscc::sideinfo::{linear_si_lambda, si_solve_best_of};
use zdjscc::solver::{opta_slope_lambda, solve, solve_for_power};
use zdjscc::{Error, GridSpec, Init, ProblemInstance, SampledDensity, SideInfoProblem, SolveReport, SolverConfig, SpiralParams};

#[derive(Parser)]
#[command(name = "zdjscc", version, about = "Design and evaluate zero-delay source-channel mappings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Tabulation step shared by all grids.
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Grid half-width in standard deviations.
    #[arg(long, global = true)]
    support: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for recipe output.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    quiet: bool,
}

impl Global {
    fn step(&self) -> f64 {
        self.grid_step.unwrap_or(DEFAULT_STEP)
    }

    fn support(&self) -> f64 {
        self.support.unwrap_or(DEFAULT_SUPPORT_SIGMAS)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a point-to-point encoder/decoder pair.
    Solve(SolveArgs),
    /// Optimize a scalar encoder with Gaussian side information at the decoder.
    SolveSi(SolveSiArgs),
    /// Distortion bound for Gaussian source and channel.
    Opta(OptaArgs),
    /// Test whether the optimal mappings are linear for a source/noise pair.
    Match(MatchArgs),
    /// Monte Carlo evaluation of stored mappings.
    Eval(EvalArgs),
    /// Fixed-resolution comparison against a discrete codebook design.
    Compare(CompareArgs),
    /// Run a named experiment recipe.
    Recipe(RecipeArgs),
}

#[derive(Args)]
struct Problem {
    #[arg(long)]
    source: String,
    #[arg(long)]
    noise: String,
    #[arg(long, group = "target")]
    lambda: Option<f64>,
    #[arg(long, group = "target")]
    power: Option<f64>,
    /// linear, spiral, random or file:<path>
    #[arg(long, default_value = "linear")]
    init: String,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Anneal λ down from above, capped at this value.
    #[arg(long)]
    anneal_cap: Option<f64>,
    #[arg(long)]
    out_encoder: Option<PathBuf>,
    #[arg(long)]
    out_decoder: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: Problem,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Noise grid step, if different from --grid-step.
    #[arg(long)]
    noise_step: Option<f64>,
}

#[derive(Args)]
struct SolveSiArgs {
    #[command(flatten)]
    problem: Problem,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
}

#[derive(Args)]
struct OptaArgs {
    #[arg(long)]
    var_x: f64,
    #[arg(long)]
    var_z: f64,
    #[arg(long)]
    power: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    source: String,
    #[arg(long)]
    noise: String,
    #[arg(long)]
    power: f64,
    #[arg(long)]
    wmax: f64,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    encoder: PathBuf,
    #[arg(long)]
    decoder: PathBuf,
    #[arg(long)]
    source: String,
    #[arg(long)]
    noise: String,
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    points: usize,
    /// Comma-separated channel SNRs in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    csnr: Vec<f64>,
    #[arg(long, default_value = "gmm:w=0.5,0.5;mu=-3,3;var=1,1")]
    source: String,
    #[arg(long, default_value = "gaussian:var=1")]
    noise: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecipeArgs {
    /// One of fig3-gmm, fig4-compare, fig5-6-asymptotic, fig7-8-spiral21, fig9-sideinfo.
    name: String,
    /// Extra `key=value` settings (max-iters, seeds, ...).
    #[arg(long = "set")]
    overrides: Vec<String>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(&cli.global, a),
        Command::SolveSi(a) => cmd_solve_si(&cli.global, a),
        Command::Opta(a) => cmd_opta(a),
        Command::Match(a) => cmd_match(&cli.global, a),
        Command::Eval(a) => cmd_eval(&cli.global, a),
        Command::Compare(a) => cmd_compare(&cli.global, a),
        Command::Recipe(a) => cmd_recipe(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn note(g: &Global, msg: impl AsRef<str>) {
    if !g.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

/// Builds `spec` on its default grid, as an i.i.d. product when `dim` exceeds the spec's own dimension.
fn density(spec: &str, dim: usize, step: f64, support: f64) -> Result<SampledDensity, Failure> {
    let s: DensitySpec = spec.parse()?;
    if s.dim() == dim {
        return Ok(s.build(step, support)?);
    }
    if s.dim() == 1 {
        return Ok(make_iid_product(&s.build(step, support)?, dim)?);
    }
    Err(Failure::Usage(format!("density `{spec}` has dimension {} but {dim} is needed", s.dim())))
}

fn init_of(spec: &str, gain: f64) -> Result<Init, Failure> {
    Ok(match spec {
        "linear" => Init::Linear { gain },
        "spiral" => Init::Spiral(SpiralParams::default()),
        "random" => Init::Random,
        _ => match spec.strip_prefix("file:") {
            Some(path) => Init::Mapping(csvio::load_mapping(path)?),
            None => return Err(Failure::Usage(format!("unknown init `{spec}`"))),
        },
    })
}

fn config(g: &Global, p: &Problem, lambda: f64) -> Result<SolverConfig, Failure> {
    let mut c = SolverConfig::default().with_seed(g.seed);
    if let Some(n) = p.max_iters {
        c.max_iters = n;
    }
    if let Some(cap) = p.anneal_cap {
        c = c.annealed_below(lambda, cap)?;
    }
    Ok(c)
}

fn write_outputs(g: &Global, p: &Problem, r: &SolveReport) -> Outcome {
    if let Some(path) = &p.out_encoder {
        csvio::save_mapping(path, &r.final_encoder)?;
    }
    if let Some(path) = &p.out_decoder {
        csvio::save_mapping(path, &r.final_decoder)?;
    }
    if let Some(path) = &p.trace {
        csvio::save_trace(path, &r.trace)?;
    }
    note(g, format!("stop: {:?} after {} trace rows", r.stop, r.trace.len()));
    let text = format!(
        "lambda,D,P,J,grad_norm,converged\n{},{},{},{},{},{}\n",
        r.lambda_used,
        r.distortion,
        r.power,
        r.lagrangian,
        r.final_grad_norm(),
        r.converged
    );
    emit(None, &text)
}

fn check_target(p: &Problem) -> Outcome {
    if p.lambda.is_none() && p.power.is_none() {
        return Err(Failure::Usage("one of --lambda or --power is required".into()));
    }
    Ok(())
}

fn cmd_solve(g: &Global, a: &SolveArgs) -> Outcome {
    let p = &a.problem;
    check_target(p)?;
    let x = density(&p.source, a.m, g.step(), g.support())?;
    let z = density(&p.noise, a.k, a.noise_step.unwrap_or(g.step()), g.support())?;
    let (var_x, var_z) = (x.variance_per_dim(), z.variance_per_dim());
    let lambda = match (p.lambda, p.power) {
        (Some(l), _) => l,
        (None, Some(t)) => opta_slope_lambda(var_x, var_z, a.m, a.k, t),
        _ => unreachable!(),
    };
    let gain = p.power.map_or(1.0, |t| (t / (a.k as f64 * var_x)).sqrt());
    let init = init_of(&p.init, gain)?;
    let prob = ProblemInstance::new(x, z, lambda)?;
    let cfg = config(g, p, lambda)?;
    let r = match p.power {
        Some(t) if p.lambda.is_none() => solve_for_power(&prob, &cfg, &init, t)?,
        _ => solve(&prob, &cfg, &init)?,
    };
    write_outputs(g, p, &r)
}

fn cmd_solve_si(g: &Global, a: &SolveSiArgs) -> Outcome {
    let p = &a.problem;
    check_target(p)?;
    let s: DensitySpec = p.source.parse()?;
    let DensitySpec::Gaussian { var } = s else {
        return Err(Failure::Usage("side information needs a `gaussian:var=<v>` source".into()));
    };
    let step = g.step();
    let grid = GridSpec::symmetric(g.support() * var.sqrt(), step, 2)?;
    let joint = make_correlated_gaussian_pair(var, a.rho, &grid)?;
    let z = density(&p.noise, 1, step, g.support())?;
    let var_z = z.variance_per_dim();
    let lambda = match (p.lambda, p.power) {
        (Some(l), _) => l,
        (None, Some(t)) => linear_si_lambda(var, a.rho, var_z, t)?,
        _ => unreachable!(),
    };
    if a.seeds == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    let prob = SideInfoProblem::new(joint, z, lambda)?;
    let mut cfg = config(g, p, lambda)?;
    if p.anneal_cap.is_none() {
        let v = var * (1.0 - a.rho * a.rho);
        cfg = cfg.annealed_below(lambda, v * v / (var * var_z))?;
    }
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| g.seed.wrapping_add(i)).collect();
    let (mut r, costs) = si_solve_best_of(&prob, &cfg, &seeds)?;
    note(g, format!("seed lagrangians: {costs:?}"));
    if let (Some(t), None) = (p.power, p.lambda) {
        let mut c = cfg.clone();
        c.anneal_schedule.clear();
        let param = Tabulated::new(prob.x1_grid().clone(), 1);
        r = descend_for_power(&prob, &param, r.parameters.clone(), &c, t, POWER_TOLERANCE)?;
    }
    write_outputs(g, p, &r)
}

fn cmd_opta(a: &OptaArgs) -> Outcome {
    let d = match a.rho {
        Some(rho) => opta_side_info(a.var_x, a.var_z, a.power, rho, a.k, a.m)?,
        None => opta(a.var_x, a.var_z, a.power, a.k, a.m)?,
    };
    emit(a.out.as_deref(), &format!("csnr_db,opta,snr_db\n{},{},{}\n", db(a.power / a.var_z), d, db(a.var_x / d)))
}

fn cmd_match(g: &Global, a: &MatchArgs) -> Outcome {
    let x = density(&a.source, 1, g.step(), g.support())?;
    let z = density(&a.noise, 1, g.step(), g.support())?;
    let r = match_check(&x, &z, a.power, a.wmax, a.n)?;
    emit(
        a.out.as_deref(),
        &format!(
            "gamma,alpha,max_abs_mismatch,coverage,usable\n{},{},{},{},{}\n",
            r.gamma, r.alpha, r.max_abs_mismatch, r.coverage, r.usable
        ),
    )
}

fn cmd_eval(g: &Global, a: &EvalArgs) -> Outcome {
    let enc = csvio::load_mapping(&a.encoder)?;
    let dec = csvio::load_mapping(&a.decoder)?;
    let x = density(&a.source, enc.dim_in(), g.step(), g.support())?;
    let z = density(&a.noise, enc.dim_out(), g.step(), g.support())?;
    let e = monte_carlo_eval(&enc, &dec, &GridSampler::new(&x)?, &GridSampler::new(&z)?, a.n, g.seed)?;
    emit(
        a.out.as_deref(),
        &format!(
            "n,D,D_stderr,P,P_stderr\n{},{},{},{},{}\n",
            e.n, e.distortion, e.distortion_stderr, e.power, e.power_stderr
        ),
    )
}

fn cmd_compare(g: &Global, a: &CompareArgs) -> Outcome {
    if a.csnr.is_empty() {
        return Err(Failure::Usage("--csnr needs at least one value".into()));
    }
    let x = density(&a.source, 1, g.step(), g.support())?;
    let z = density(&a.noise, 1, g.step(), g.support())?;
    let prob = ProblemInstance::new(x, z, 1.0)?;
    let cfg = SolverConfig::default().with_seed(g.seed);
    let rows = fixed_resolution_compare(&prob, a.points, &a.csnr, &cfg)?;
    let mut text = String::from("n_points,csnr_db,proposed_snr_db,baseline_snr_db,baseline_ml_snr_db\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n_points, r.csnr_db, r.proposed_snr_db, r.baseline_snr_db, r.baseline_ml_snr_db
        ));
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_recipe(g: &Global, a: &RecipeArgs) -> Outcome {
    if !RECIPES.contains(&a.name.as_str()) {
        return Err(Failure::Usage(format!("unknown recipe `{}` (expected one of {})", a.name, RECIPES.join(", "))));
    }
    let mut kv = Vec::new();
    if let Some(s) = g.grid_step {
        kv.push(("grid-step".to_string(), s.to_string()));
    }
    if let Some(s) = g.support {
        kv.push(("support".to_string(), s.to_string()));
    }
    kv.push(("seed".to_string(), g.seed.to_string()));
    for o in &a.overrides {
        kv.push(parse_override(o)?);
    }
    let opts = RecipeOptions::from_overrides(&kv)?;
    let out = run_recipe(&a.name, &opts)?;
    for p in out.write_to(&g.out_dir)? {
        note(g, format!("wrote {}", p.display()));
    }
    Ok(())
}
