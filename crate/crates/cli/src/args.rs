use clap::{Args, Parser, Subcommand, ValueEnum};
use qsdlab::flow::Backend;
use qsdlab::qsd::WhichLimit;

#[derive(Debug, Parser)]
#[command(
    name = "qsdlab",
    version,
    about = "Flows, quasi-stationary distributions and Monte Carlo checks for explosive branching processes"
)]
pub struct Cli {
    /// Master seed for simulations and Monte Carlo suites.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output format (verify defaults to json, everything else to csv).
    #[arg(long, global = true, value_enum)]
    pub out: Option<Format>,

    /// Write the artifact here instead of stdout, plus a timestamped
    /// `<file>.manifest.json` next to it.
    #[arg(long, global = true)]
    pub output: Option<std::path::PathBuf>,

    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Relative tolerance of flow evaluations.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Explosive,
    Extinction,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Criticality, largest root, explosion and extinction criteria.
    Classify(ClassifyArgs),
    /// u(t, λ) on a grid.
    Flow(FlowArgs),
    /// The time change Φ(λ) (explosive or extinction form, as appropriate).
    Phi(PhiArgs),
    /// QSD Laplace transforms, or conditional transforms against a limit theorem.
    Qsd(QsdArgs),
    /// Discrete-state branching processes.
    Dsbp(DsbpArgs),
    /// Seeded path simulation.
    Simulate(SimulateArgs),
    /// Run named verification suites and emit a pass/fail report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ClassifyArgs {
    /// Mechanism file, or the name of a shipped fixture.
    #[arg(long)]
    pub mech: Option<String>,
    /// DSBP model file, or the name of a shipped fixture.
    #[arg(long)]
    pub dsbp: Option<String>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub mech: String,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub lambda: Vec<f64>,
    /// ode, phi_inversion or cross_check.
    #[arg(long, default_value = "phi_inversion")]
    pub backend: Backend,
}

#[derive(Debug, Args)]
pub struct PhiArgs {
    #[arg(long)]
    pub mech: String,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct QsdArgs {
    #[arg(long)]
    pub mech: String,
    /// Rate of decay of the QSD whose Laplace transform is tabulated.
    #[arg(long, allow_negative_numbers = true, required_unless_present = "limit", conflicts_with = "limit")]
    pub beta: Option<f64>,
    #[arg(long, value_enum, default_value = "explosive")]
    pub regime: RegimeArg,
    /// thm1i, thm1ii, thm3, prop4, yaglom or qprocess.
    #[arg(long)]
    pub limit: Option<WhichLimit>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "limit")]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub lambda: Vec<f64>,
    /// Initial state.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub x: f64,
    /// Extra survival horizon for the qprocess prelimit.
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DsbpArgs {
    #[command(subcommand)]
    pub action: DsbpAction,
}

#[derive(Debug, Args)]
pub struct DsbpModelArgs {
    /// Model file, or the name of a shipped fixture. Otherwise a Sibuya
    /// model is built from --c and --alpha.
    #[arg(long, conflicts_with = "alpha")]
    pub model: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub c: f64,
}

#[derive(Debug, Subcommand)]
pub enum DsbpAction {
    /// Probabilities μ({k}), k = 1..K, of a QSD.
    Qsd {
        #[command(flatten)]
        model: DsbpModelArgs,
        /// The QSD with rate of decay n β₀.
        #[arg(long, default_value_t = 1, conflicts_with = "beta")]
        n: u32,
        /// An arbitrary rate of decay; rejected unless it is a multiple of β₀.
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long = "K", default_value_t = qsdlab::discrete::DEFAULT_TRUNCATION)]
        k: usize,
    },
    /// F(t, r) = E_1[r^{Z_t}] on a grid; r = 1 means the left limit.
    Flow {
        #[command(flatten)]
        model: DsbpModelArgs,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        t: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        r: Vec<f64>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// CSBP mechanism file or fixture name.
    #[arg(long, required_unless_present = "dsbp", conflicts_with = "dsbp")]
    pub mech: Option<String>,
    /// DSBP model file or fixture name.
    #[arg(long)]
    pub dsbp: Option<String>,
    /// Initial state of a CSBP.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub x: f64,
    /// Initial population of a DSBP.
    #[arg(long, default_value_t = 1)]
    pub n0: u64,
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    /// Explosion is declared above this level.
    #[arg(long, default_value_t = 1e12)]
    pub threshold: f64,
    /// Jumps below this size are dropped for infinite-activity mechanisms.
    #[arg(long, default_value_t = 1e-4)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 50_000_000)]
    pub max_events: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// A suite name, or one of the groups all, deterministic, mc.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Same as --out.
    #[arg(long, value_enum)]
    pub report: Option<Format>,
}
