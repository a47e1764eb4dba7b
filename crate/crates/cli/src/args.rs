use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// CCM-based donor screening for synthetic control.
///
/// Every flag can also be set through an environment variable named
/// `CCMSCREEN_<FLAG>` (upper case, dashes as underscores) or through a flat
/// `key = value` file given with `--config`. Precedence: flag, then
/// environment, then config file, then the built-in default.
#[derive(Debug, Parser)]
#[command(name = "ccmscreen", version)]
pub struct Cli {
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "CCMSCREEN_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Flat `key = value` file with defaults for any flag.
    #[arg(long, global = true, env = "CCMSCREEN_CONFIG")]
    pub config: Option<PathBuf>,

    /// Seed for every random draw.
    #[arg(long, global = true, env = "CCMSCREEN_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-map the treated unit against one control.
    Ccm(CcmCmd),
    /// Fit synthetic control weights on the full donor pool.
    Scm(ScmCmd),
    /// Screen the donor pool with cross mapping, then fit synthetic control.
    Screen(ScreenCmd),
    /// Simulate the AR(1) system and compare cross-mapping directions.
    Simulate(SimulateCmd),
    /// Add artificial control units built from a template series.
    Attack(AttackCmd),
    /// Compare sampled closed-form scores with their folded-normal limit.
    Validate(ValidateCmd),
    /// Effect path for given weights.
    Effect(EffectCmd),
}

#[derive(Debug, Args)]
pub struct PanelArgs {
    /// Long-format `unit,time,value` CSV.
    #[arg(long, env = "CCMSCREEN_PANEL")]
    pub panel: PathBuf,

    /// Treated unit id.
    #[arg(long, env = "CCMSCREEN_TREATED")]
    pub treated: String,

    /// Time label of the last pre-intervention period.
    #[arg(long, env = "CCMSCREEN_T0")]
    pub t0: String,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for output files; created if missing.
    #[arg(long, env = "CCMSCREEN_OUT_DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CcmArgs {
    /// Embedding dimension.
    #[arg(long, env = "CCMSCREEN_DIM", default_value_t = 4)]
    pub dim: usize,

    /// Embedding delay.
    #[arg(long, env = "CCMSCREEN_DELAY", default_value_t = 1)]
    pub delay: usize,

    /// Comma-separated ascending library sizes; default is an 8-point grid.
    #[arg(long, env = "CCMSCREEN_LIBRARY_SIZES", value_delimiter = ',')]
    pub library_sizes: Option<Vec<usize>>,

    /// `holdout` or `leave_one_out`.
    #[arg(long, env = "CCMSCREEN_MODE", default_value = "holdout")]
    pub mode: String,

    /// Leave-one-out exclusion radius; default (dim-1)*delay.
    #[arg(long, env = "CCMSCREEN_THEILER")]
    pub theiler: Option<usize>,

    /// Z-score both series before embedding.
    #[arg(long, env = "CCMSCREEN_NORMALIZE", default_value_t = true, action = clap::ArgAction::Set)]
    pub normalize: bool,

    /// Relative slack for the convergence check.
    #[arg(long, env = "CCMSCREEN_CONVERGENCE_SLACK", default_value_t = 0.05)]
    pub convergence_slack: f64,
}

#[derive(Debug, Args)]
pub struct CcmCmd {
    #[command(flatten)]
    pub panel: PanelArgs,

    /// Control unit id.
    #[arg(long, env = "CCMSCREEN_CONTROL")]
    pub control: String,

    /// `pre` for the pre-intervention window, `all` for the whole grid.
    #[arg(long, env = "CCMSCREEN_WINDOW", default_value = "pre")]
    pub window: String,

    #[command(flatten)]
    pub ccm: CcmArgs,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ScmCmd {
    #[command(flatten)]
    pub panel: PanelArgs,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ScreenCmd {
    #[command(flatten)]
    pub panel: PanelArgs,

    #[command(flatten)]
    pub ccm: CcmArgs,

    /// `noise` or `circular_shift`.
    #[arg(long, env = "CCMSCREEN_NULL_METHOD", default_value = "noise")]
    pub null_method: String,

    /// Null noise sd as a multiple of each series' sd.
    #[arg(long, env = "CCMSCREEN_NOISE_SCALE", default_value_t = 1.0)]
    pub noise_scale: f64,

    /// Monte-Carlo null replicates per control.
    #[arg(long, env = "CCMSCREEN_REPLICATES", default_value_t = 200)]
    pub replicates: usize,

    /// Null quantile for the min-MAE threshold.
    #[arg(long, env = "CCMSCREEN_Q_MIN", default_value_t = 0.10)]
    pub q_min: f64,

    /// Null quantile for the gap threshold.
    #[arg(long, env = "CCMSCREEN_Q_GAP", default_value_t = 0.90)]
    pub q_gap: f64,

    /// `per_control` or `pooled` thresholds.
    #[arg(long, env = "CCMSCREEN_SCOPE", default_value = "per_control")]
    pub scope: String,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct Ar1Args {
    #[arg(long, env = "CCMSCREEN_ALPHA", default_value_t = 0.9, allow_negative_numbers = true)]
    pub alpha: f64,

    #[arg(long, env = "CCMSCREEN_BETA", default_value_t = 1.0)]
    pub beta: f64,

    #[arg(long, env = "CCMSCREEN_MU", default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,

    #[arg(long, env = "CCMSCREEN_SIGMA_X", default_value_t = 1.0)]
    pub sigma_x: f64,

    #[arg(long, env = "CCMSCREEN_SIGMA_Y", default_value_t = 1.0)]
    pub sigma_y: f64,

    /// Initial state X_0.
    #[arg(long, env = "CCMSCREEN_X0", default_value_t = 1.0, allow_negative_numbers = true)]
    pub x0: f64,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub ar1: Ar1Args,

    /// Series length T.
    #[arg(long, env = "CCMSCREEN_LENGTH", default_value_t = 300)]
    pub length: usize,

    /// Simulated systems in the direction study.
    #[arg(long, env = "CCMSCREEN_RUNS", default_value_t = 200)]
    pub runs: usize,

    #[command(flatten)]
    pub ccm: CcmArgs,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AttackCmd {
    #[command(flatten)]
    pub panel: PanelArgs,

    /// Long-format CSV holding the template series.
    #[arg(long, env = "CCMSCREEN_TEMPLATE")]
    pub template: PathBuf,

    /// Unit id of the template inside that file.
    #[arg(long, env = "CCMSCREEN_TEMPLATE_UNIT")]
    pub template_unit: String,

    /// First template index used.
    #[arg(long, env = "CCMSCREEN_WINDOW_START", default_value_t = 0)]
    pub window_start: usize,

    #[arg(long, env = "CCMSCREEN_SCALE_K", default_value_t = 6.0, allow_negative_numbers = true)]
    pub scale_k: f64,

    /// Subtracted everywhere.
    #[arg(long, env = "CCMSCREEN_SHIFT_A", default_value_t = 50.0, allow_negative_numbers = true)]
    pub shift_a: f64,

    /// Added up to and including the cut time.
    #[arg(long, env = "CCMSCREEN_SHIFT_B", default_value_t = 90.0, allow_negative_numbers = true)]
    pub shift_b: f64,

    /// Time label of the cut; default is --t0.
    #[arg(long, env = "CCMSCREEN_T_CUT")]
    pub t_cut: Option<String>,

    #[arg(long, env = "CCMSCREEN_N_UNITS", default_value_t = 5)]
    pub n_units: usize,

    /// Copy noise in template AR(1) residual sds, or `none` for exact copies.
    #[arg(long, env = "CCMSCREEN_NOISE_MULTIPLIER", default_value = "1.0")]
    pub noise_multiplier: String,

    #[arg(long, env = "CCMSCREEN_ID_PREFIX", default_value = "adv")]
    pub id_prefix: String,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ValidateCmd {
    #[command(flatten)]
    pub ar1: Ar1Args,

    /// Target time.
    #[arg(long, env = "CCMSCREEN_T", default_value_t = 500)]
    pub t: usize,

    /// Sampled noise paths.
    #[arg(long, env = "CCMSCREEN_N", default_value_t = 5000)]
    pub n: usize,

    /// `x` (X predicted from Y's manifold) or `y`.
    #[arg(long, env = "CCMSCREEN_DIRECTION", default_value = "x")]
    pub direction: String,

    #[arg(long, env = "CCMSCREEN_INDEX_FLOOR", default_value_t = 500)]
    pub index_floor: usize,

    #[arg(long, env = "CCMSCREEN_GAP_FLOOR", default_value_t = 200)]
    pub gap_floor: usize,

    #[arg(long, env = "CCMSCREEN_NEIGHBORS", default_value_t = 5)]
    pub neighbors: usize,

    /// Last admissible neighbor time.
    #[arg(long, env = "CCMSCREEN_HORIZON", default_value_t = 2000)]
    pub horizon: usize,

    /// KS distance below which the check passes.
    #[arg(long, env = "CCMSCREEN_TOLERANCE", default_value_t = 0.03)]
    pub tolerance: f64,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EffectCmd {
    #[command(flatten)]
    pub panel: PanelArgs,

    /// JSON weights: an `{id: w}` object, or any object with a `weights`
    /// field of that shape (such as scm.json or screen.json).
    #[arg(long, env = "CCMSCREEN_WEIGHTS")]
    pub weights: PathBuf,

    #[command(flatten)]
    pub out: OutArgs,
}
