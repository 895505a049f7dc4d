//! `capalloc` command-line harness.
//!
//! Every command prints the seed it used. File outputs are written
//! atomically and CSVs start with a `#` header block echoing the version,
//! command, seed and configuration. Exit codes: 2 for bad input, 3 when a
//! work budget is exceeded, 4 when an audit or feasibility check fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use capalloc::allocator::{aggregate_csv, AlgoConfig, Plan, RhoMode, DEFAULT_EPSILON, DEFAULT_KAPPA};
use capalloc::diagnostics::{self, Algorithm};
use capalloc::instance::{self, Instance, RandomParams};
use capalloc::lp::{self, LpSolution};
use capalloc::oracles::{self, DEFAULT_OPT_BUDGET};
use capalloc::util::write_atomic;
use capalloc::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "capalloc", version, about = "Online capacitated allocation: LP, rounding, oracles and audits")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Solve the LP relaxation and write the solution.
    Lp(LpArgs),
    /// Simulate one algorithm.
    Run(RunArgs),
    /// Compute the optimum online value (and optionally the offline one).
    Oracle(OracleArgs),
    /// Exact law and correlation audit of the two-proposal scheme.
    Audit(AuditArgs),
    /// Mean welfare of several algorithms against LP and optimum online.
    Ratio(RatioArgs),
    /// Smallest admissible kappa per minimum capacity.
    KappaTable(KappaTableArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    LpGap,
    Bdm,
    Poscorr,
    Random,
}

#[derive(Args, Debug)]
struct Source {
    /// Instance file (JSON).
    #[arg(long, conflicts_with = "family")]
    instance: Option<PathBuf>,

    /// Built-in instance family, generated on the fly with `--seed`.
    #[arg(long, value_enum)]
    family: Option<Family>,

    /// Number of users (bdm, random).
    #[arg(long)]
    n: Option<usize>,

    /// Number of rounds (random).
    #[arg(long, default_value_t = 3)]
    rounds: usize,

    /// Capacity range upper end (random); the lower end is 1.
    #[arg(long, default_value_t = 2)]
    cap: u32,

    /// Draw success probabilities in [0.3, 1] instead of fixing them at 1 (random).
    #[arg(long)]
    stochastic: bool,

    /// Arrival probability of the gadget resource (poscorr).
    #[arg(long, default_value_t = 0.1)]
    arrival_p: f64,
}

impl Source {
    fn describe(&self) -> Vec<(&'static str, String)> {
        match (&self.instance, self.family) {
            (Some(p), _) => vec![("instance", p.display().to_string())],
            (None, Some(f)) => {
                let name = f.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
                let mut out = vec![("family", name)];
                match f {
                    Family::Bdm => out.push(("n", self.n.unwrap_or(4).to_string())),
                    Family::Random => {
                        out.push(("n", self.n.unwrap_or(3).to_string()));
                        out.push(("rounds", self.rounds.to_string()));
                        out.push(("cap", self.cap.to_string()));
                        out.push(("stochastic", self.stochastic.to_string()));
                    }
                    Family::Poscorr => out.push(("arrival_p", self.arrival_p.to_string())),
                    Family::LpGap => {}
                }
                out
            }
            (None, None) => Vec::new(),
        }
    }

    fn load(&self, seed: u64) -> Result<Instance, CliError> {
        if let Some(path) = &self.instance {
            let (inst, warnings) = instance::read_with_warnings(path)?;
            for w in warnings {
                log::warn!("{}: {w}", path.display());
            }
            return Ok(inst);
        }
        let family = self.family.ok_or_else(|| CliError::usage("give either --instance or --family"))?;
        let inst = match family {
            Family::LpGap => instance::gen_lp_gap(),
            Family::Bdm => instance::gen_bdm_counterexample(self.n.unwrap_or(4))?,
            Family::Poscorr => instance::gen_positive_correlation(self.arrival_p)?,
            Family::Random => {
                if self.cap == 0 {
                    return Err(CliError::usage("--cap must be at least 1"));
                }
                let params = RandomParams {
                    n: self.n.unwrap_or(3),
                    rounds: self.rounds,
                    capacity: (1, self.cap),
                    value: (0.0, 1.0),
                    q: if self.stochastic { (0.3, 1.0) } else { (1.0, 1.0) },
                    p: (0.2, 1.0),
                };
                instance::gen_random(&params, seed)?
            }
        };
        Ok(inst.into())
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    source: Source,

    /// Output file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LpArgs {
    #[command(flatten)]
    source: Source,

    /// Solution file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write the model in CPLEX LP format.
    #[arg(long)]
    lp_file: Option<PathBuf>,
}

#[derive(Args)]
struct AlgoArgs {
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,

    /// Slack subtracted from kappa in sampled mode.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,

    /// Replays per estimate in sampled mode.
    #[arg(long)]
    samples: Option<usize>,

    /// Use the worst-case sample-count formula (usually over budget).
    #[arg(long)]
    formula_samples: bool,
}

impl AlgoArgs {
    fn config(&self, seed: u64) -> AlgoConfig {
        AlgoConfig {
            kappa: self.kappa,
            epsilon: self.eps,
            rho_mode: RhoMode::Exact,
            sample_count_override: self.samples,
            use_formula_sample_count: self.formula_samples,
            seed,
        }
    }

    fn describe(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![("kappa", self.kappa.to_string()), ("eps", self.eps.to_string())];
        if let Some(s) = self.samples {
            out.push(("samples", s.to_string()));
        }
        if self.formula_samples {
            out.push(("formula_samples", "true".into()));
        }
        out
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,

    #[command(flatten)]
    algo: AlgoArgs,

    /// twoproposal-exact, twoproposal-sampled, twoproposal-general, bdm or greedy.
    #[arg(long, default_value = "twoproposal-exact")]
    alg: Algorithm,

    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,

    /// Output directory for summary.csv and, for two-proposal runs, pairs.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    source: Source,

    /// Work-unit budget of the optimum online recursion.
    #[arg(long, default_value_t = DEFAULT_OPT_BUDGET)]
    budget: u128,

    /// Also estimate the offline optimum from this many sampled paths.
    #[arg(long)]
    offline_trials: Option<u64>,

    /// Output CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    source: Source,

    /// LP solution file; the LP optimum is used when omitted.
    #[arg(long)]
    solution: Option<PathBuf>,

    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,

    /// Output directory for summary.csv, pairs.csv and correlation.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RatioArgs {
    #[command(flatten)]
    source: Source,

    #[command(flatten)]
    algo: AlgoArgs,

    /// Comma-separated algorithms; defaults to every one applicable.
    #[arg(long, value_delimiter = ',')]
    alg: Vec<Algorithm>,

    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    #[arg(long, default_value_t = 0)]
    jobs: usize,

    /// Output CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KappaTableArgs {
    #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u32).range(1..=64))]
    max_c: u32,

    /// Output CSV file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Usage(String),
    Violation(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Violation(_) => 4,
            CliError::Core(e) => match e {
                Error::InvalidInstance(_)
                | Error::InvalidArgument(_)
                | Error::Schema(_)
                | Error::Io(_)
                | Error::Json(_) => 2,
                Error::BudgetExceeded { .. } => 3,
                Error::InfeasibleSolution(_) => 4,
                Error::Solver(_) => 1,
            },
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Violation(m) => write!(f, "violation: {m}"),
        }
    }
}

type CliResult = Result<(), CliError>;

fn header(command: &str, seed: u64, config: &[(&str, String)]) -> String {
    let mut out = format!("# capalloc {VERSION}\n# command: {command}\n# seed: {seed}\n");
    for (k, v) in config {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

fn write_file(path: &Path, body: &str) -> CliResult {
    write_atomic(path, body.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(Error::from)?;
    Ok(())
}

fn solve(inst: &Instance) -> Result<LpSolution, Error> {
    match inst {
        Instance::Bernoulli(b) => lp::solve_bernoulli(b),
        Instance::General(g) => lp::solve_general(g),
    }
}

fn cmd_gen(args: &GenArgs, seed: u64) -> CliResult {
    let inst = args.source.load(seed)?;
    match &args.out {
        Some(path) => {
            instance::write(&inst, path)?;
            println!("wrote {}", path.display());
        }
        None => println!("{}", instance::to_json_string(&inst)?),
    }
    Ok(())
}

fn cmd_lp(args: &LpArgs, seed: u64) -> CliResult {
    let inst = args.source.load(seed)?;
    let sol = solve(&inst)?;
    println!("lp_objective = {}", sol.objective);
    if let Some(path) = &args.lp_file {
        let text = match &inst {
            Instance::Bernoulli(b) => lp::build_bernoulli(b).to_lp_format(),
            Instance::General(g) => lp::build_general(g, !g.deterministic_rewards()).to_lp_format(),
        };
        write_file(path, &text)?;
    }
    if let Some(path) = &args.out {
        sol.write(path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_run(args: &RunArgs, seed: u64) -> CliResult {
    let inst = args.source.load(seed)?;
    let cfg = args.algo.config(seed);
    cfg.validate()?;
    let sim = diagnostics::simulate_detailed(&inst, args.alg, &cfg, args.trials, seed, args.jobs)?;
    let agg = &sim.aggregate;
    let ci = 1.96 * agg.welfare_se();
    println!("algorithm = {}", args.alg);
    println!("mean_welfare = {} +/- {ci}", agg.mean_welfare());

    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        let mut config = args.source.describe();
        config.push(("alg", args.alg.to_string()));
        config.push(("trials", args.trials.to_string()));
        config.extend(args.algo.describe());
        let head = header("run", seed, &config);
        let mut summary = head.clone();
        summary.push_str("algorithm,trials,mean_welfare,welfare_sd,welfare_se,ci95\n");
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{ci}",
            args.alg,
            agg.trials,
            agg.mean_welfare(),
            agg.welfare_sd(),
            agg.welfare_se()
        );
        write_file(&dir.join("summary.csv"), &summary)?;
        if let Some(plan) = &sim.plan {
            write_file(&dir.join("pairs.csv"), &(head + &aggregate_csv(plan, agg)))?;
        }
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs, seed: u64) -> CliResult {
    let inst = args.source.load(seed)?;
    let lp_value = solve(&inst)?.objective;
    let opt = oracles::opt_online_with(&inst, args.budget, false)?.value;
    println!("lp = {lp_value}");
    println!("opt_online = {opt}");
    let mut body = String::from("quantity,value,ci95\n");
    let _ = writeln!(body, "lp,{lp_value},0");
    let _ = writeln!(body, "opt_online,{opt},0");
    if let Some(trials) = args.offline_trials {
        if trials == 0 {
            return Err(CliError::usage("--offline-trials must be positive"));
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let est = oracles::opt_offline_estimate(&inst, trials, &mut rng)?;
        println!("opt_offline = {} +/- {}", est.mean, est.ci_half_width);
        let _ = writeln!(body, "opt_offline,{},{}", est.mean, est.ci_half_width);
    }
    if let Some(path) = &args.out {
        let mut config = args.source.describe();
        config.push(("budget", args.budget.to_string()));
        if let Some(t) = args.offline_trials {
            config.push(("offline_trials", t.to_string()));
        }
        write_file(path, &(header("oracle", seed, &config) + &body))?;
    }
    Ok(())
}

fn cmd_audit(args: &AuditArgs, seed: u64) -> CliResult {
    let inst = args.source.load(seed)?;
    let sol = match &args.solution {
        Some(path) => LpSolution::read(path)?,
        None => solve(&inst)?,
    };
    let plan = match &inst {
        Instance::Bernoulli(b) => Plan::for_bernoulli(b, &sol, args.kappa)?,
        Instance::General(g) => Plan::for_general(g, &sol, args.kappa)?,
    };
    let report = oracles::exact_report_for_plan(&plan)?;
    let audit = diagnostics::correlation_audit(&report);
    let min_c = match &inst {
        Instance::Bernoulli(b) => b.min_capacity(),
        Instance::General(g) => g.rounds.iter().flat_map(|r| &r.realizations).filter(|z| z.p > 0.0 && z.c > 0).map(|z| z.c).min(),
    };
    let kappa_ok = min_c.is_none_or(|c| diagnostics::check_kappa_inequality(args.kappa, c).holds);
    let law_error = report.max_law_error();
    let positive = audit.positively_correlated().count();

    let metrics: Vec<(&str, String)> = vec![
        ("lp", sol.objective.to_string()),
        ("expected_welfare", report.expected_welfare.to_string()),
        ("max_law_error", law_error.to_string()),
        ("capacity_respected", report.capacity_respected.to_string()),
        ("beta_capped", report.beta_capped.to_string()),
        ("kappa_inequality_holds", kappa_ok.to_string()),
        ("f_violations", audit.f_violations().to_string()),
        ("delta_violations", audit.delta_violations().to_string()),
        ("positively_correlated_pairs", positive.to_string()),
    ];
    for (k, v) in &metrics {
        println!("{k} = {v}");
    }

    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        let mut config = args.source.describe();
        if let Some(p) = &args.solution {
            config.push(("solution", p.display().to_string()));
        }
        config.push(("kappa", args.kappa.to_string()));
        let head = header("audit", seed, &config);
        let mut summary = head.clone() + "metric,value\n";
        for (k, v) in &metrics {
            let _ = writeln!(summary, "{k},{v}");
        }
        write_file(&dir.join("summary.csv"), &summary)?;
        write_file(&dir.join("pairs.csv"), &(head.clone() + &report.pairs_csv()))?;
        write_file(&dir.join("correlation.csv"), &(head + &audit.to_csv()))?;
    }

    let mut problems = Vec::new();
    if law_error > diagnostics::AUDIT_TOL {
        problems.push(format!("allocation law off by {law_error:e}"));
    }
    if !report.capacity_respected {
        problems.push("capacity exceeded on some path".to_string());
    }
    if audit.f_violations() > 0 {
        problems.push(format!("{} f-bound violations", audit.f_violations()));
    }
    if audit.delta_violations() > 0 {
        problems.push(format!("{} delta-bound violations", audit.delta_violations()));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(problems.join("; ")))
    }
}

fn cmd_ratio(args: &RatioArgs, seed: u64) -> CliResult {
    let inst = args.source.load(seed)?;
    let cfg = args.algo.config(seed);
    cfg.validate()?;
    let algs: Vec<Algorithm> = if args.alg.is_empty() {
        let bdm_ok = matches!(&inst, Instance::Bernoulli(b) if b.deterministic_rewards());
        let exact_ok = inst.n() <= oracles::EXACT_MAX_USERS && inst.num_rounds() <= oracles::EXACT_MAX_ROUNDS;
        Algorithm::ALL
            .into_iter()
            .filter(|a| match a {
                Algorithm::Bdm => bdm_ok,
                Algorithm::TwoproposalExact | Algorithm::TwoproposalGeneral => exact_ok,
                _ => true,
            })
            .collect()
    } else {
        args.alg.clone()
    };
    let report = diagnostics::ratio_report(&inst, &algs, &cfg, args.trials, seed, args.jobs)?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => {
            let mut config = args.source.describe();
            config.push(("alg", algs.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")));
            config.push(("trials", args.trials.to_string()));
            config.extend(args.algo.describe());
            write_file(path, &(header("ratio", seed, &config) + &csv))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_kappa_table(args: &KappaTableArgs, seed: u64) -> CliResult {
    let csv = diagnostics::kappa_table(args.max_c).to_csv();
    match &args.out {
        Some(path) => write_file(path, &(header("kappa-table", seed, &[("max_c", args.max_c.to_string())]) + &csv)),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let seed = cli.seed;
    eprintln!("seed = {seed}");
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, seed),
        Command::Lp(a) => cmd_lp(a, seed),
        Command::Run(a) => cmd_run(a, seed),
        Command::Oracle(a) => cmd_oracle(a, seed),
        Command::Audit(a) => cmd_audit(a, seed),
        Command::Ratio(a) => cmd_ratio(a, seed),
        Command::KappaTable(a) => cmd_kappa_table(a, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
