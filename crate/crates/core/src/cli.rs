//! Command line front end.
//!
//! Structured results go to stdout as JSON, sweeps as CSV and plot data as
//! two-column text. Exit codes: 0 success, 1 verification failure, 2 usage or
//! input error, 3 quadrature failure. An optional `--config FILE` of
//! `key = value` lines supplies defaults for flags that are not given, and
//! `STRIPES_THREADS` caps the number of worker threads.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::corpus::{grid_corpus, random_pair, random_set};
use crate::energy1d::{chessboard_rhs, energy_at, f0, stripe_energy_inf};
use crate::energynd::{band_margin, f_tau, ftilde, LatticeWeights};
use crate::error::{Error, Result};
use crate::geometry::{stripes_count, GridSetND, PeriodicSet1D};
use crate::kernels::{cbar_constant, cq_constant, jc_closed_form, jc_constant, ModelParams};
use crate::reflection::{laplace_identity_residual, rp_margin, Density};
use crate::rng::SplitMix64;
use crate::search::{
    find_hstar, fit_scaling_slope, minimize_f0_free, minimize_f0_stripes, scaling_sweep, tau_grid, tau_sweep,
    write_sweep_csv,
};

#[derive(Debug, Parser)]
#[command(
    name = "stripes",
    version,
    about = "Stripe-formation energies: evaluation, inequality checks and optimization"
)]
pub struct Cli {
    /// File of `key = value` lines giving defaults for unset flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print q, beta, C_q, Cbar_q, J_c and h* as JSON.
    Params {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// One-dimensional energy of a periodic set read from JSON.
    Energy1d {
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Energy of a pixel grid read from JSON: F~ with --J, F_tau with --tau.
    #[command(group(ArgGroup::new("mode").required(true).args(["j", "tau"])))]
    Energynd {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long = "J")]
        j: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Optimal stripe width h* and energy e_inf(h*).
    Hstar {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
    },
    /// Minimize F0 on a period: over stripes, or from a random start with --free.
    Minimize {
        #[arg(long = "L")]
        l: f64,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        free: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of intervals of the random start.
        #[arg(long)]
        intervals: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Temperature sweep of stripe minimizers, written as CSV.
    SweepTau {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        per_decade: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "L")]
        l: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Record wall-clock times (output is then no longer reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Run a seeded inequality suite; exits 1 on any violation.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Two-column plot data.
    Plotdata {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Eta,
    Chessboard,
    Rp,
    Laplace,
    Nonneg,
    Splitting,
    Slicing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// h against e_inf(h).
    StripeEnergy,
    /// tau against minus the minimal stripe energy of F~.
    Scaling,
}

/// Failure categories mapped to exit codes.
enum Failure {
    Usage(String),
    Verification(String),
    Quadrature(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Quadrature { .. } => Failure::Quadrature(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

struct Defaults(HashMap<String, String>);

impl Defaults {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(p) = path {
            for (k, line) in fs::read_to_string(p)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Invalid(format!("{}:{}: expected key = value", p.display(), k + 1)))?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Defaults(map))
    }

    fn get<T: std::str::FromStr>(&self, given: Option<T>, key: &str, fallback: T) -> Result<T> {
        if let Some(v) = given {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(s) => s.parse().map_err(|_| Error::Invalid(format!("config value {key} = {s} does not parse"))),
            None => Ok(fallback),
        }
    }

    fn params(&self, d: Option<usize>, p: Option<f64>) -> Result<ModelParams> {
        ModelParams::new(self.get(d, "d", 2)?, self.get(p, "p", 5.0)?)
    }
}

/// Parses `argv`, runs the command and returns the exit code. Output goes to
/// `out`, diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let threads = std::env::var("STRIPES_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 2;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| execute(&cli, &mut buf));
    if let Err(e) = out.write_all(&buf).and_then(|_| out.flush()) {
        let _ = writeln!(err, "error: {e}");
        return 2;
    }
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Verification(m)) => {
            let _ = writeln!(err, "verification failed: {m}");
            1
        }
        Err(Failure::Quadrature(m)) => {
            let _ = writeln!(err, "error: {m}");
            3
        }
    }
}

fn print_json<T: Serialize>(out: &mut dyn Write, v: &T) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = Defaults::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Params { d, p, tau } => {
            let params = cfg.params(*d, *p)?.with_tau(cfg.get(*tau, "tau", 0.0)?)?;
            let jc = jc_constant(&params, 1e-13)?;
            let closed = jc_closed_form(&params);
            let hs = find_hstar(&params)?;
            print_json(
                out,
                &json!({
                    "d": params.d,
                    "p": params.p,
                    "tau": params.tau,
                    "q": params.q(),
                    "beta": params.beta(),
                    "floor": params.floor(),
                    "floor_length": params.floor_length(),
                    "C_q": cq_constant(&params),
                    "Cbar_q": cbar_constant(&params)?,
                    "J_c": closed,
                    "h_star": hs.h_star,
                    "e_star": hs.e_star,
                    "err_estimate": jc.error + (jc.value - closed).abs(),
                }),
            )
        }
        Command::Energy1d { set, tau, tol, d, p } => {
            let s: PeriodicSet1D = serde_json::from_value(read_json(set)?).map_err(Error::from)?;
            let params = cfg.params(*d, *p)?.with_tau(cfg.get(*tau, "tau", 0.0)?)?;
            print_json(out, &energy_at(&s, &params, cfg.get(*tol, "tol", 1e-10)?)?)
        }
        Command::Energynd { grid, j, tau, tol, p } => {
            let g = GridSetND::from_json(&read_json(grid)?)?;
            let params = cfg.params(Some(g.dim()), *p)?;
            let tol = cfg.get(*tol, "tol", 1e-7)?;
            let report = match (j, tau) {
                (Some(j), _) => ftilde(&g, &params.with_j(*j), tol)?,
                (None, Some(t)) => f_tau(&g, &params.with_tau(*t)?, tol)?,
                (None, None) => unreachable!("clap requires one of --J and --tau"),
            };
            print_json(out, &report)
        }
        Command::Hstar { d, p } => {
            let hs = find_hstar(&cfg.params(*d, *p)?)?;
            print_json(
                out,
                &json!({
                    "h_star": hs.h_star,
                    "e_star": hs.e_star,
                    "closed_form": hs.closed_form,
                    "err_estimate": (hs.h_star - hs.closed_form).abs(),
                }),
            )
        }
        Command::Minimize { l, d, p, free, seed, intervals, steps } => {
            let params = cfg.params(*d, *p)?;
            let best = minimize_f0_stripes(*l, &params)?;
            let stripes = json!({
                "N": best.n,
                "h": best.h,
                "energy": best.energy,
                "err_estimate": f0(&stripes_count(best.n, *l)?, &params, 1e-13)?.err_estimate,
            });
            if !*free {
                return print_json(out, &stripes);
            }
            let count = cfg.get(*intervals, "intervals", best.n)?;
            let mut g = SplitMix64::new(cfg.get(*seed, "seed", 0)?);
            let start = random_start(&mut g, *l, count)?;
            let r = minimize_f0_free(&start, &params, cfg.get(*steps, "steps", 2000)?)?;
            let err = f0(&r.set, &params, 1e-13)?.err_estimate;
            print_json(
                out,
                &json!({
                    "start": start,
                    "set": r.set,
                    "energy": r.energy,
                    "err_estimate": err,
                    "converged": r.converged,
                    "sweeps": r.sweeps,
                    "accepted_moves": r.history.len() - 1,
                    "stripes": stripes,
                }),
            )
        }
        Command::SweepTau { d, p, from, to, per_decade, out: path, l, tol, timing } => {
            let params = cfg.params(*d, *p)?;
            let taus = tau_grid(from.max(*to), from.min(*to), cfg.get(*per_decade, "per_decade", 8)?)?;
            let l = match cfg.get(*l, "L", f64::NAN)? {
                v if v.is_nan() => 20.0 * find_hstar(&params)?.h_star,
                v => v,
            };
            let recs = tau_sweep(l, &params, &taus, cfg.get(*tol, "tol", 1e-10)?, *timing)?;
            write_sweep_csv(&recs, fs::File::create(path)?)?;
            print_json(out, &json!({"records": recs.len(), "L": l, "out": path.display().to_string()}))
        }
        Command::Verify { suite, trials, seed } => {
            let trials = cfg.get(*trials, "trials", 100)?;
            let seed = cfg.get(*seed, "seed", 0)?;
            let summary = verify(*suite, trials, seed)?;
            print_json(out, &summary)?;
            if summary.failures > 0 {
                return Err(Failure::Verification(format!(
                    "{} of {} trials violate the {:?} margin",
                    summary.failures, summary.trials, suite
                )));
            }
            Ok(())
        }
        Command::Plotdata { kind, out: path, d, p, from, to, points } => {
            let params = cfg.params(*d, *p)?;
            let mut text = String::new();
            match kind {
                PlotKind::StripeEnergy => {
                    let hs = find_hstar(&params)?;
                    let a = cfg.get(*from, "from", 0.5 * hs.h_star)?;
                    let b = cfg.get(*to, "to", 6.0 * hs.h_star)?;
                    let n = cfg.get(*points, "points", 200)?.max(2);
                    text.push_str("# h e_inf\n");
                    for k in 0..n {
                        let h = a + (b - a) * k as f64 / (n - 1) as f64;
                        text.push_str(&format!("{h:.12e} {:.12e}\n", stripe_energy_inf(h, &params)?));
                    }
                }
                PlotKind::Scaling => {
                    let a = cfg.get(*from, "from", 1e-1)?;
                    let b = cfg.get(*to, "to", 1e-3)?;
                    let n = cfg.get(*points, "points", 8)?;
                    let pts = scaling_sweep(&params, &tau_grid(a.max(b), a.min(b), n)?, 1e-11)?;
                    text.push_str(&format!("# tau -E_min (fitted slope {:.6})\n", fit_scaling_slope(&pts)?));
                    for pt in &pts {
                        text.push_str(&format!("{:.12e} {:.12e}\n", pt.tau, -pt.energy));
                    }
                }
            }
            fs::write(path, text)?;
            Ok(())
        }
    }
}

/// `count` equal stripes on `[0, l)` with every endpoint moved by up to 30% of
/// the stripe width.
fn random_start(g: &mut SplitMix64, l: f64, count: usize) -> Result<PeriodicSet1D> {
    if count == 0 {
        return Err(Error::Invalid("the random start needs at least one interval".into()));
    }
    let w = l / (2.0 * count as f64);
    let pts: Vec<f64> = (0..2 * count).map(|k| (k as f64 + 0.5 + g.uniform_in(-0.3, 0.3)) * w).collect();
    PeriodicSet1D::new(l, pts.chunks(2).map(|c| (c[0], c[1])).collect())
}

/// Outcome of a verification suite.
#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub failures: usize,
    /// Smallest margin minus its allowance; negative means a violation.
    pub min_slack: f64,
    pub worst_trial: usize,
    /// Largest error estimate among the trials.
    pub err_estimate: f64,
}

/// One trial: `(margin, allowance)`; the trial fails when `margin < -allowance`.
type Trial = (f64, f64);

/// Runs `trials` seeded trials of a suite. Trial `i` draws from
/// `SplitMix64::stream(seed, i)`; grid suites use the first `trials` grids of
/// the 16x16, `L = 8` corpus under `seed`.
pub fn verify(suite: Suite, trials: usize, seed: u64) -> Result<VerifySummary> {
    let m25 = ModelParams::new(2, 5.0)?;
    let one_d = |f: &(dyn Fn(&mut SplitMix64) -> Result<Trial> + Sync)| -> Result<Vec<Trial>> {
        (0..trials).into_par_iter().map(|i| f(&mut SplitMix64::stream(seed, i as u64))).collect()
    };
    let results: Vec<Trial> = match suite {
        Suite::Eta => one_d(&|g| {
            let s = random_set(g);
            let z = g.uniform_in(-s.period(), s.period());
            Ok((band_margin(&s, z), 1e-12 * s.period()))
        })?,
        Suite::Chessboard => one_d(&|g| {
            let s = random_set(g);
            let r = f0(&s, &m25, 1e-12)?;
            Ok((r.total - chessboard_rhs(&s, &m25)?, r.err_estimate + 1e-9))
        })?,
        Suite::Rp => one_d(&|g| Ok((rp_margin(&random_pair(g)), 1e-9)))?,
        Suite::Laplace => one_d(&|g| {
            let s = random_set(g);
            Ok((-laplace_identity_residual(&s, &m25, Density::Exponential, 1e-7)?, 1e-5))
        })?,
        Suite::Nonneg => {
            let jc = jc_closed_form(&m25);
            let w = LatticeWeights::new(2, 16, 8.0, &m25.with_tau(1.0)?, 1e-7)?;
            grid_corpus(seed, trials, 2, 16, 8.0)
                .par_iter()
                .map(|g| {
                    let r = w.ftilde(g, jc)?;
                    Ok((r.total, r.err_estimate))
                })
                .collect::<Result<_>>()?
        }
        Suite::Splitting => {
            let w = LatticeWeights::new(2, 16, 8.0, &m25.with_tau(0.5)?, 1e-7)?;
            grid_corpus(seed, trials, 2, 16, 8.0)
                .par_iter()
                .map(|g| {
                    let s = w.splitting(g)?;
                    Ok((s.margin, s.err_estimate))
                })
                .collect::<Result<_>>()?
        }
        Suite::Slicing => {
            let w = LatticeWeights::new(2, 16, 8.0, &m25.with_tau(0.5)?, 1e-7)?;
            grid_corpus(seed, trials, 2, 16, 8.0)
                .iter()
                .map(|g| {
                    // worst of: perimeter identity, Fubini identity, directional bound
                    let mut worst: Trial = (f64::INFINITY, 0.0);
                    for c in w.axis_checks(g, 1e-9)? {
                        let cands = [
                            (-(c.sliced_perimeter - c.directional_perimeter).abs(), 1e-12 * c.directional_perimeter),
                            (-(c.g_slices - c.g_lattice).abs(), c.err_estimate),
                            (c.directional_margin, c.err_estimate),
                        ];
                        for t in cands {
                            if t.0 + t.1 < worst.0 + worst.1 {
                                worst = t;
                            }
                        }
                    }
                    Ok(worst)
                })
                .collect::<Result<_>>()?
        }
    };
    let mut summary =
        VerifySummary { suite, trials, seed, failures: 0, min_slack: f64::INFINITY, worst_trial: 0, err_estimate: 0.0 };
    for (i, &(margin, allowance)) in results.iter().enumerate() {
        let slack = margin + allowance;
        if slack < 0.0 {
            summary.failures += 1;
        }
        if slack < summary.min_slack {
            summary.min_slack = slack;
            summary.worst_trial = i;
        }
        summary.err_estimate = summary.err_estimate.max(allowance);
    }
    if results.is_empty() {
        summary.min_slack = 0.0;
    }
    Ok(summary)
}
