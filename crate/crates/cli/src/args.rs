use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Vanishing twist near L4 of the planar circular restricted three-body
/// problem. Energies E are measured from the L4 level (E = 0 at L4) in
/// rotating-frame units where the primaries are a unit distance apart and
/// the frame rotates with unit angular velocity.
#[derive(Debug, Parser)]
#[command(name = "vtwist", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Normal-form locus, cheap.
    Nf,
    /// Bisection on the numerical rotation-profile maximum, slow.
    Numeric,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file with default values for any flag (keys are the long flag
    /// names with `-` replaced by `_`); flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing [default: .].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format [default: csv].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct MuArg {
    /// Mass ratio mu, in (0, mu_1 = 0.0385208965).
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct Orbits {
    /// Energy above L4, E > 0 (the normal form is trusted for E <= 0.12).
    #[arg(long = "E")]
    pub energy: Option<f64>,
    /// Seeds on the segment a0,pa0 -> a1,pa1 in section coordinates,
    /// `count` points including both ends (count = 1 uses a0,pa0 only).
    /// Default: 16 seeds on a ray of length 0.03 in +a from the
    /// short-period fixed point.
    #[arg(long = "seed-ray", value_name = "a0,pa0,a1,pa1,count")]
    pub seed_ray: Option<String>,
    /// Section crossings per seed, >= 1 (profiles need >= 1000).
    #[arg(long = "max-crossings")]
    pub max_crossings: Option<usize>,
    /// Energy-drift tolerance |K| of the integrator, > 0 [default: 1e-9].
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mass ratios mu_r where omega_s / omega_l = r, plus the
    /// critical mass ratio mu_c where the twist at L4 vanishes.
    ResonanceTable {
        #[command(flatten)]
        common: Common,
    },
    /// Poincare-section crossings (a, pa) for each seed.
    Section {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mu: MuArg,
        #[command(flatten)]
        orbits: Orbits,
    },
    /// Configuration-space trace (t, x, y) of the orbit through the first
    /// seed (default: the short-period fixed point) until it has crossed
    /// the section `--max-crossings` times in the return direction
    /// [default: 7].
    Orbit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mu: MuArg,
        #[command(flatten)]
        orbits: Orbits,
    },
    /// Action I and rotation number W of invariant curves along a seed ray
    /// out of the fixed point. Crossings default to 2000.
    Profile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mu: MuArg,
        #[command(flatten)]
        orbits: Orbits,
    },
    /// Rotation number W0 of the short-period fixed point on a (mu, E) grid.
    FixedPointContours {
        #[command(flatten)]
        common: Common,
        /// mu_min,mu_max,n_mu,E_min,E_max,n_E with 0 < mu < mu_1 and
        /// 0 < E <= 0.12 [default: 0.0075,0.0115,9,0.01,0.1,10].
        #[arg(long)]
        grid: Option<String>,
    },
    /// Reconnection (twistless) bifurcation of rotation number p/q.
    /// `--method nf` gives E(mu) over the mu grid; `--method numeric`
    /// bisects the numerical profile maximum at fixed `--E` inside the
    /// bracket mu_min,mu_max.
    Reconnect {
        #[command(flatten)]
        common: Common,
        /// Rotation number p/q in (1/4, 1/3) for meaningful results.
        #[arg(long)]
        rational: Option<String>,
        /// Locus method [default: nf].
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// nf: mu_min,mu_max,n_mu [default: 0.0088,0.0105,18];
        /// numeric: bracket mu_min,mu_max.
        #[arg(long)]
        grid: Option<String>,
        /// Energy for the numeric search, 0 < E <= 0.12.
        #[arg(long = "E")]
        energy: Option<f64>,
        /// Crossings per seed in the numeric search, >= 1000 [default: 2000].
        #[arg(long = "max-crossings")]
        max_crossings: Option<usize>,
        /// Stop bisecting when the mu bracket is narrower than this
        /// [default: 2e-5].
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Birkhoff normal form H(I_s, I_l) at one mass ratio.
    Nf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mu: MuArg,
        /// Truncation degree in phase-space variables, even, 4..=12
        /// [default: 8].
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Normal-form rotation number of the short-period orbit on a (mu, E)
    /// grid.
    NfContours {
        #[command(flatten)]
        common: Common,
        /// mu_min,mu_max,n_mu,E_min,E_max,n_E with 0 < mu < mu_1 and
        /// 0 <= E <= 0.12 [default: 0.0075,0.0115,81,0,0.1,51].
        #[arg(long)]
        grid: Option<String>,
    },
    /// Action-action chart: grid of H, W, C; energy lines,
    /// Farey rotation-number lines between 1/4 and 1/3, and the twistless
    /// curve C = 0.
    Chart {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mu: MuArg,
        /// Is_max,Il_max,n_Is,n_Il, actions > 0, counts >= 2
        /// [default: the cap H(Is, 0) <= 0.12 on both axes, 61x61].
        #[arg(long)]
        grid: Option<String>,
        /// Farey-tree depth for the W levels [default: 3].
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Checkpointed sweep over a (mu, E) grid; rerunning resumes from the
    /// checkpoint in the output directory.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// mu_min,mu_max,n_mu,E_min,E_max,n_E with 0 < mu < mu_1 and
        /// 0 < E <= 0.12.
        #[arg(long)]
        grid: Option<String>,
        /// Comma-separated subset of fixed_point_W, reconnection_2/7,
        /// reconnection_3/10, nf_chart [default: all].
        #[arg(long)]
        tasks: Option<String>,
        /// Worker threads, >= 1 [default: available cores].
        #[arg(long)]
        workers: Option<usize>,
    },
}
