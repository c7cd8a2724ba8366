//! `fracext` — configuration-driven front end for the fractional-extension
//! toolkit: builds extensions and Carleman weights, runs the measurement
//! experiments, and emits deterministic CSV (plus optional PNG line plots).
//!
//! Exit codes: 0 all checks pass, 1 a declared check failed, 2 unknown
//! subcommand, 3 malformed input, 4 I/O failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fracext::carleman::{
    build_weight, carleman_ratio, check_weight, spherical_spectrum, AnnulusMode, WeightSpec,
};
use fracext::extension::{extend, system_residual, ExtensionGrid};
use fracext::grid::{FractionalOrder, PeriodicGrid, SpectralField};
use fracext::operator::{
    assemble_operator_with, heat_extension, heat_extension_alt, Discretization, MetricField,
};
use fracext::special::kernel_tail_mass;
use fracext::ucp::{
    antilocality_nullspace, blowup_rescale, caccioppoli_ratio, doubling_quotients,
    interpolation_ratio, masked_smallness, runge_approximate, trace_ratio, vanishing_order,
    MaskedSet, StripSamples,
};
use fracext::{io as fio, Error};

const EXIT_CHECK: i32 = 1;
const EXIT_UNKNOWN: i32 = 2;
const EXIT_MALFORMED: i32 = 3;
const EXIT_IO: i32 = 4;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let raw: Vec<String> = std::env::args().collect();
    let args = match expand_config(raw) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    0
                }
                ErrorKind::InvalidSubcommand | ErrorKind::UnknownArgument => {
                    let _ = e.print();
                    EXIT_UNKNOWN
                }
                _ => {
                    let _ = e.print();
                    EXIT_MALFORMED
                }
            };
        }
    };
    let started = Instant::now();
    let outcome = dispatch(&cli);
    match outcome {
        Ok(pass) => {
            println!("wall-time-s {:.3}", started.elapsed().as_secs_f64());
            if pass {
                println!("overall PASS");
                0
            } else {
                println!("overall FAIL");
                EXIT_CHECK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => EXIT_IO,
                Error::MalformedFile(_) => EXIT_MALFORMED,
                _ => EXIT_MALFORMED,
            }
        }
    }
}

/// Replace `--config FILE` by the file's `key = value` pairs (as `--key value`
/// flags), keeping explicitly given flags authoritative.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, i32> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    if pos + 1 >= args.len() {
        eprintln!("error: --config needs a file path");
        return Err(EXIT_MALFORMED);
    }
    let path = args.remove(pos + 1);
    args.remove(pos);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {path}: {e}");
            return Err(EXIT_IO);
        }
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            eprintln!("error: config line {} is not `key = value`", lineno + 1);
            return Err(EXIT_MALFORMED);
        };
        let flag = format!("--{}", key.trim());
        if !args.contains(&flag) {
            args.push(flag);
            args.push(value.trim().to_string());
        }
    }
    Ok(args)
}

#[derive(Parser)]
#[command(
    name = "fracext",
    version,
    about = "Fractional-Laplacian extension and unique-continuation experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Options shared by every experiment.
#[derive(Args)]
struct Common {
    /// CSV output path.
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    /// Optional PNG line plot of the CSV's first two numeric columns.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Seed for every random draw in the run.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the extension tower of band-limited data and write an EXT1 file.
    Extend {
        #[command(flatten)]
        common: Common,
        /// Fractional order γ (non-integer).
        #[arg(long)]
        gamma: f64,
        /// Boundary data as `k:amp,...` cosine modes.
        #[arg(long, default_value = "1:1")]
        modes: String,
        /// Tangential grid size.
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Extension heights: log-spaced on [ymin, ymax] with ny nodes.
        #[arg(long, default_value_t = 1e-5)]
        ymin: f64,
        #[arg(long, default_value_t = 4.0)]
        ymax: f64,
        #[arg(long, default_value_t = 64)]
        ny: usize,
        /// EXT1 output path.
        #[arg(long, default_value = "extension.ext")]
        ext_out: PathBuf,
        /// System residual tolerance for the pass/fail check.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Build a Carleman weight from an ℓ¹ driver sequence and audit it.
    Weight {
        #[command(flatten)]
        common: Common,
        /// Large parameter τ ≥ 2.
        #[arg(long)]
        tau: f64,
        /// Smoothing decay ν ∈ (0, 1).
        #[arg(long, default_value_t = 0.1)]
        nu: f64,
        /// ℓ¹ budget δ.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// File of whitespace-separated driver values (empty = zero driver).
        #[arg(long)]
        seq: Option<PathBuf>,
        /// Weight exponent b of the spherical operator used for the gap audit.
        #[arg(long, default_value_t = 0.0)]
        b: f64,
    },
    /// Carleman LHS/RHS ratio sweep over τ for manufactured annulus fields.
    CarlemanRatio {
        #[command(flatten)]
        common: Common,
        /// System depth m ∈ {0, 1}.
        #[arg(long, default_value_t = 0)]
        m: usize,
        /// Weight exponent b ∈ (-1, 1).
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        /// τ sweep.
        #[arg(long, default_value = "16,64,256")]
        taus: String,
        /// Manufactured draws per τ.
        #[arg(long, default_value_t = 10)]
        draws: usize,
        /// Pass threshold for the worst ratio.
        #[arg(long, default_value_t = 10.0)]
        bound: f64,
    },
    /// Fitted log-log tail-mass slope of the fractional Poisson kernel.
    KernelTail {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        /// Derivative order of the kernel (0, 1, or 2 for n = 1).
        #[arg(long, default_value_t = 0)]
        alpha: usize,
        /// Tail cutoff radius a.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// ε sweep.
        #[arg(long, default_value = "0.4,0.2,0.1,0.05,0.025,0.0125")]
        eps: String,
        /// Allowed deviation of the fitted slope from 2γ.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
    },
    /// Heat-quadrature extension of L^γ data; audits the two representations.
    HeatExtend {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        /// Extension height.
        #[arg(long)]
        y: f64,
        /// MET1 coefficient file (identity metric when omitted).
        #[arg(long)]
        metric: Option<PathBuf>,
        /// Agreement tolerance between the two integral representations.
        #[arg(long, default_value_t = 1e-6)]
        quad_tol: f64,
        /// Grid size when no metric file is given.
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Boundary data modes `k:amp,...`.
        #[arg(long, default_value = "1:1,3:0.3")]
        modes: String,
    },
    /// Doubling quotients of an extension tower over a radius sweep.
    Doubling {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value = "1:1,2:0.4")]
        modes: String,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
        radii: String,
        /// Quadrature rows per half ball.
        #[arg(long, default_value_t = 96)]
        quad: usize,
    },
    /// Measured vanishing order of boundary data near the origin.
    VanishOrder {
        #[command(flatten)]
        common: Common,
        /// FLD1 input file (alternative to --modes).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "1:1")]
        modes: String,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
        radii: String,
    },
    /// Blow-up rescaling; checks the normalization identity at each σ.
    Blowup {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value = "1:1")]
        modes: String,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value = "0.25,0.1,0.05")]
        sigmas: String,
        #[arg(long, default_value_t = 96)]
        quad: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Weighted trace-inequality ratio over a τ sweep for strip samples.
    TraceRatio {
        #[command(flatten)]
        common: Common,
        /// Weight exponent b ∈ (-1, 1).
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        /// Tangential modes `k:amp,...`, each damped by e^{-k·mu·y}.
        #[arg(long, default_value = "1:1")]
        modes: String,
        /// Vertical decay rate of each mode.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Strip height and rows.
        #[arg(long, default_value_t = 4.0)]
        height: f64,
        #[arg(long, default_value_t = 128)]
        rows: usize,
        /// τ sweep (log-spaced when given as `lo:hi:count`).
        #[arg(long, default_value = "1:1000:31")]
        taus: String,
        /// Pass threshold for the best (τ-minimized) ratio.
        #[arg(long, default_value_t = 100.0)]
        bound: f64,
    },
    /// Caccioppoli-inequality ratio for one level of an extension tower.
    Caccioppoli {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        level: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Highest tangential derivative order J ≤ 2⌊γ⌋.
        #[arg(long, default_value_t = 0)]
        jmax: usize,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value = "1:1,3:0.3")]
        modes: String,
        #[arg(long, default_value_t = 64)]
        quad: usize,
        #[arg(long, default_value_t = 100.0)]
        bound: f64,
    },
    /// Interpolation-inequality ratio for integer derivatives of order j ≤ ⌊γ⌋.
    InterpRatio {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value = "1:1,2:0.5,5:0.2")]
        modes: String,
        #[arg(long, default_value_t = 100.0)]
        bound: f64,
    },
    /// Measurable-set unique continuation: smallness profile on masked traces.
    Mucp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        /// Vanishing set: `cantor` (density one), `halfline`, or `full`.
        #[arg(long, default_value = "cantor")]
        set: String,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value = "0.4,0.2,0.1")]
        radii: String,
        #[arg(long, default_value_t = 96)]
        quad: usize,
    },
    /// Dimension of dependencies among window restrictions of I and L^γ.
    Antilocality {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Window size (contiguous indices starting at N/4).
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Discretization: `spectral` or `fd`.
        #[arg(long, default_value = "spectral")]
        disc: String,
        /// Expected dimension: `zero`, `positive`, or `none` (no check).
        #[arg(long, default_value = "zero")]
        expect: String,
    },
    /// Runge approximation of interior targets by exterior Poisson data.
    Runge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Exterior window sizes to sweep (split across both edge blocks).
        #[arg(long, default_value = "1,4,16")]
        w_sizes: String,
        /// Relative-error pass threshold at the largest window.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
    },
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

type AnyResult<T> = Result<T, Error>;

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64_list(text: &str, what: &str) -> AnyResult<Vec<f64>> {
    let vals: Result<Vec<f64>, _> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect();
    vals.map_err(|_| Error::invalid(format!("bad {what} list: {text:?}")))
}

fn parse_usize_list(text: &str, what: &str) -> AnyResult<Vec<usize>> {
    let vals: Result<Vec<usize>, _> = text
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect();
    vals.map_err(|_| Error::invalid(format!("bad {what} list: {text:?}")))
}

/// `k:amp,...` cosine mode list.
fn parse_modes(text: &str) -> AnyResult<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let (k, a) = item
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("bad mode {item:?}, expected k:amp")))?;
        let k: f64 = k
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad mode index {k:?}")))?;
        let a: f64 = a
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad mode amplitude {a:?}")))?;
        out.push((k, a));
    }
    if out.is_empty() {
        return Err(Error::invalid("empty mode list"));
    }
    Ok(out)
}

fn modes_field(grid: PeriodicGrid, modes: &[(f64, f64)]) -> AnyResult<SpectralField> {
    let modes = modes.to_vec();
    SpectralField::from_fn(grid, move |x| {
        modes.iter().map(|&(k, a)| a * (k * x[0]).cos()).sum()
    })
}

/// τ list: either `lo:hi:count` (log-spaced) or a comma list.
fn parse_taus(text: &str) -> AnyResult<Vec<f64>> {
    if let Some((lo, rest)) = text.split_once(':') {
        if let Some((hi, count)) = rest.split_once(':') {
            let lo: f64 = lo.parse().map_err(|_| Error::invalid("bad τ range"))?;
            let hi: f64 = hi.parse().map_err(|_| Error::invalid("bad τ range"))?;
            let count: usize = count.parse().map_err(|_| Error::invalid("bad τ range"))?;
            if !(lo > 0.0 && hi > lo && count >= 2) {
                return Err(Error::invalid("τ range needs 0 < lo < hi, count ≥ 2"));
            }
            return Ok((0..count)
                .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
                .collect());
        }
    }
    parse_f64_list(text, "τ")
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> AnyResult<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Minimal line plot of (x, y) rows. Any failure degrades to a warning; a
/// plot can never fail the run.
fn emit_plot(rows: &[(f64, f64)], path: &Path) {
    if rows.len() < 2 {
        eprintln!("warning: plot skipped, need at least 2 rows");
        return;
    }
    if rows.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        eprintln!("warning: plot skipped, non-finite rows");
        return;
    }
    const W: u32 = 640;
    const H: u32 = 480;
    const MARGIN: i64 = 48;
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in rows {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let mut img = image::RgbImage::from_pixel(W, H, image::Rgb([255, 255, 255]));
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let px = MARGIN as f64
            + (x - x0) / (x1 - x0) * (W as f64 - 2.0 * MARGIN as f64);
        let py = (H as f64 - MARGIN as f64)
            - (y - y0) / (y1 - y0) * (H as f64 - 2.0 * MARGIN as f64);
        (px.round() as i64, py.round() as i64)
    };
    let mut put = |x: i64, y: i64, c: [u8; 3]| {
        if (0..W as i64).contains(&x) && (0..H as i64).contains(&y) {
            img.put_pixel(x as u32, y as u32, image::Rgb(c));
        }
    };
    // axes
    for x in MARGIN..(W as i64 - MARGIN) {
        put(x, H as i64 - MARGIN, [0, 0, 0]);
    }
    for y in MARGIN..(H as i64 - MARGIN) {
        put(MARGIN, y, [0, 0, 0]);
    }
    // polyline
    let mut last: Option<(i64, i64)> = None;
    for &(x, y) in rows {
        let (px, py) = to_px(x, y);
        if let Some((lx, ly)) = last {
            let steps = (px - lx).abs().max((py - ly).abs()).max(1);
            for s in 0..=steps {
                let ix = lx + (px - lx) * s / steps;
                let iy = ly + (py - ly) * s / steps;
                put(ix, iy, [20, 60, 160]);
            }
        }
        last = Some((px, py));
    }
    if let Err(e) = img.save(path) {
        eprintln!("warning: plot not written ({e}), CSV only");
    }
}

fn check_line(name: &str, ok: bool) -> bool {
    println!("check {name}: {}", if ok { "PASS" } else { "FAIL" });
    ok
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn dispatch(cli: &Cli) -> AnyResult<bool> {
    match &cli.cmd {
        Cmd::Extend {
            common,
            gamma,
            modes,
            n,
            ymin,
            ymax,
            ny,
            ext_out,
            tol,
        } => run_extend(common, *gamma, modes, *n, *ymin, *ymax, *ny, ext_out, *tol),
        Cmd::Weight {
            common,
            tau,
            nu,
            delta,
            seq,
            b,
        } => run_weight(common, *tau, *nu, *delta, seq.as_deref(), *b),
        Cmd::CarlemanRatio {
            common,
            m,
            b,
            taus,
            draws,
            bound,
        } => run_carleman_ratio(common, *m, *b, taus, *draws, *bound),
        Cmd::KernelTail {
            common,
            gamma,
            alpha,
            a,
            eps,
            tol,
        } => run_kernel_tail(common, *gamma, *alpha, *a, eps, *tol),
        Cmd::HeatExtend {
            common,
            gamma,
            y,
            metric,
            quad_tol,
            n,
            modes,
        } => run_heat_extend(common, *gamma, *y, metric.as_deref(), *quad_tol, *n, modes),
        Cmd::Doubling {
            common,
            gamma,
            modes,
            n,
            radii,
            quad,
        } => run_doubling(common, *gamma, modes, *n, radii, *quad),
        Cmd::VanishOrder {
            common,
            input,
            modes,
            n,
            radii,
        } => run_vanish_order(common, input.as_deref(), modes, *n, radii),
        Cmd::Blowup {
            common,
            gamma,
            modes,
            n,
            sigmas,
            quad,
            tol,
        } => run_blowup(common, *gamma, modes, *n, sigmas, *quad, *tol),
        Cmd::TraceRatio {
            common,
            b,
            modes,
            mu,
            n,
            height,
            rows,
            taus,
            bound,
        } => run_trace_ratio(common, *b, modes, *mu, *n, *height, *rows, taus, *bound),
        Cmd::Caccioppoli {
            common,
            gamma,
            level,
            r,
            jmax,
            n,
            modes,
            quad,
            bound,
        } => run_caccioppoli(common, *gamma, *level, *r, *jmax, *n, modes, *quad, *bound),
        Cmd::InterpRatio {
            common,
            gamma,
            j,
            r,
            n,
            modes,
            bound,
        } => run_interp_ratio(common, *gamma, *j, *r, *n, modes, *bound),
        Cmd::Mucp {
            common,
            gamma,
            set,
            n,
            radii,
            quad,
        } => run_mucp(common, *gamma, set, *n, radii, *quad),
        Cmd::Antilocality {
            common,
            gamma,
            n,
            window,
            disc,
            expect,
        } => run_antilocality(common, *gamma, *n, *window, disc, expect),
        Cmd::Runge {
            common,
            gamma,
            n,
            w_sizes,
            tol,
        } => run_runge(common, *gamma, *n, w_sizes, *tol),
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn run_extend(
    common: &Common,
    gamma: f64,
    modes: &str,
    n: usize,
    ymin: f64,
    ymax: f64,
    ny: usize,
    ext_out: &Path,
    tol: f64,
) -> AnyResult<bool> {
    let order = FractionalOrder::new(gamma)?;
    let grid = PeriodicGrid::standard(1, n)?;
    let f = modes_field(grid.clone(), &parse_modes(modes)?)?;
    let eg = ExtensionGrid::log_spaced(grid, ymin, ymax, ny)?;
    let field = extend(&f, order, &eg)?;
    fio::write_extension(&field, ext_out)?;
    println!("extension written to {}", ext_out.display());

    let report = system_residual(&f, order)?;
    let mut rows = Vec::new();
    for (k, &v) in report.bulk.iter().enumerate() {
        rows.push(vec![format!("bulk_{k}"), fmt17(v)]);
    }
    for (k, &v) in report.dirichlet.iter().enumerate() {
        rows.push(vec![format!("dirichlet_{k}"), fmt17(v)]);
    }
    rows.push(vec!["neumann".into(), fmt17(report.neumann)]);
    rows.push(vec!["max_violation".into(), fmt17(report.max_violation)]);
    write_csv(&common.out, "residual,value", &rows)?;
    Ok(check_line(
        &format!("system residual ≤ {tol:e}"),
        report.max_violation <= tol,
    ))
}

fn run_weight(
    common: &Common,
    tau: f64,
    nu: f64,
    delta: f64,
    seq: Option<&Path>,
    b: f64,
) -> AnyResult<bool> {
    let c = match seq {
        None => Vec::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let vals: Result<Vec<f64>, _> =
                text.split_whitespace().map(|t| t.parse::<f64>()).collect();
            vals.map_err(|_| Error::MalformedFile("driver sequence".into()))?
        }
    };
    let mut spec = WeightSpec::new(c, tau);
    spec.nu = nu;
    spec.delta = delta;
    spec.ladder_offset = b / 2.0;
    let w = build_weight(&spec)?;
    let sp = spherical_spectrum(1, b, 16)?;
    let report = check_weight(&w, &sp);

    let rows: Vec<Vec<String>> = w
        .ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            vec![
                fmt17(t),
                fmt17(w.h[i]),
                fmt17(w.h1[i]),
                fmt17(w.h2[i]),
            ]
        })
        .collect();
    write_csv(&common.out, "t,h,h1,h2", &rows)?;
    if let Some(plot) = &common.plot {
        let pts: Vec<(f64, f64)> = w.ts.iter().zip(&w.h1).map(|(&t, &v)| (t, v)).collect();
        emit_plot(&pts, plot);
    }
    println!("constant C = {:.3}", report.c);
    let mut pass = check_line("slope window", report.slope_ok);
    pass &= check_line("gap ≥ 1/4", report.gap_ok);
    pass &= check_line("derivative growth", report.deriv_ok);
    pass &= check_line("C ≤ 10", report.c <= 10.0);
    Ok(pass)
}

fn run_carleman_ratio(
    common: &Common,
    m: usize,
    b: f64,
    taus: &str,
    draws: usize,
    bound: f64,
) -> AnyResult<bool> {
    let taus = parse_taus(taus)?;
    let sp = spherical_spectrum(1, b, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &tau in &taus {
        let mut spec = WeightSpec::new(vec![0.02, 0.01], tau);
        spec.ladder_offset = b / 2.0;
        let w = build_weight(&spec)?;
        for draw in 0..draws {
            let center = rng.gen_range(8.0..24.0);
            let half_width = rng.gen_range(1.0..3.0);
            let mode = rng.gen_range(1..4usize);
            let profile: Vec<f64> = w
                .ts
                .iter()
                .map(|&t| {
                    let u = (t - center) / half_width;
                    if u.abs() >= 1.0 {
                        0.0
                    } else {
                        (-1.0 / (1.0 - u * u)).exp()
                    }
                })
                .collect();
            let r = carleman_ratio(&[AnnulusMode { mode, profile }], m, &w, &sp)?;
            worst = worst.max(r);
            rows.push(vec![fmt17(tau), draw.to_string(), fmt17(r)]);
        }
    }
    write_csv(&common.out, "tau,draw,ratio", &rows)?;
    if let Some(plot) = &common.plot {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r[0].parse().unwrap(), r[2].parse().unwrap()))
            .collect();
        emit_plot(&pts, plot);
    }
    println!("worst ratio {worst:.6e}");
    Ok(check_line(
        &format!("ratio bounded by {bound}"),
        worst.is_finite() && worst <= bound,
    ))
}

fn run_kernel_tail(
    common: &Common,
    gamma: f64,
    alpha: usize,
    a: f64,
    eps: &str,
    tol: f64,
) -> AnyResult<bool> {
    let eps = parse_f64_list(eps, "ε")?;
    if eps.len() < 2 {
        return Err(Error::invalid("need at least two ε values for a slope"));
    }
    let mut rows = Vec::new();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &e in &eps {
        let mass = kernel_tail_mass(gamma, 1, alpha, a, e)?;
        rows.push(vec![fmt17(e), fmt17(mass)]);
        lx.push(e.ln());
        ly.push(mass.ln());
    }
    let nsl = lx.len() as f64;
    let (sx, sy): (f64, f64) = (lx.iter().sum(), ly.iter().sum());
    let sxx: f64 = lx.iter().map(|v| v * v).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| x * y).sum();
    let slope = (nsl * sxy - sx * sy) / (nsl * sxx - sx * sx);
    write_csv(&common.out, "eps,tail_mass", &rows)?;
    if let Some(plot) = &common.plot {
        let pts: Vec<(f64, f64)> = lx.iter().zip(&ly).map(|(&x, &y)| (x, y)).collect();
        emit_plot(&pts, plot);
    }
    println!("fitted slope {slope:.6} (target {})", 2.0 * gamma);
    Ok(check_line(
        &format!("slope = 2γ ± {tol}"),
        (slope - 2.0 * gamma).abs() <= tol,
    ))
}

fn run_heat_extend(
    common: &Common,
    gamma: f64,
    y: f64,
    metric: Option<&Path>,
    quad_tol: f64,
    n: usize,
    modes: &str,
) -> AnyResult<bool> {
    let order = FractionalOrder::new(gamma)?;
    let metric = match metric {
        Some(path) => fio::read_metric(path)?,
        None => MetricField::identity(PeriodicGrid::standard(1, n)?),
    };
    let op = assemble_operator_with(&metric, Discretization::SpectralGalerkin)?;
    let f = modes_field(metric.grid().clone(), &parse_modes(modes)?)?;
    let u = heat_extension(&op, order, f.values(), y)?;
    let u_alt = heat_extension_alt(&op, order, f.values(), y)?;
    let mut rows = Vec::new();
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..u.len() {
        diff = diff.max((u[i] - u_alt[i]).abs());
        scale = scale.max(u[i].abs());
        rows.push(vec![i.to_string(), fmt17(u[i]), fmt17(u_alt[i])]);
    }
    write_csv(&common.out, "index,u,u_alt", &rows)?;
    let rel = diff / scale.max(1e-300);
    println!("representation disagreement {rel:.3e}");
    Ok(check_line(
        &format!("representations agree ≤ {quad_tol:e}"),
        rel <= quad_tol,
    ))
}

fn run_doubling(
    common: &Common,
    gamma: f64,
    modes: &str,
    n: usize,
    radii: &str,
    quad: usize,
) -> AnyResult<bool> {
    let order = FractionalOrder::new(gamma)?;
    let radii = parse_f64_list(radii, "radius")?;
    let grid = PeriodicGrid::standard(1, n)?;
    let f = modes_field(grid.clone(), &parse_modes(modes)?)?;
    let field = extend(&f, order, &ExtensionGrid::default_for(grid))?;
    let report = doubling_quotients(&field, &radii, quad)?;
    let rows: Vec<Vec<String>> = report
        .radii
        .iter()
        .zip(&report.quotients)
        .map(|(&r, &q)| vec![fmt17(r), fmt17(q)])
        .collect();
    write_csv(&common.out, "r,doubling_quotient", &rows)?;
    if let Some(plot) = &common.plot {
        let pts: Vec<(f64, f64)> = report
            .radii
            .iter()
            .zip(&report.quotients)
            .map(|(&r, &q)| (r, q))
            .collect();
        emit_plot(&pts, plot);
    }
    let worst = report.quotients.iter().cloned().fold(0.0f64, f64::max);
    println!("worst quotient {worst:.6e}");
    Ok(check_line("doubling quotients finite", worst.is_finite()))
}

fn run_vanish_order(
    common: &Common,
    input: Option<&Path>,
    modes: &str,
    n: usize,
    radii: &str,
) -> AnyResult<bool> {
    let radii = parse_f64_list(radii, "radius")?;
    let f = match input {
        Some(path) => fio::read_field(path)?,
        None => modes_field(PeriodicGrid::standard(1, n)?, &parse_modes(modes)?)?,
    };
    let slope = vanishing_order(&f, &radii)?;
    let rows: Vec<Vec<String>> = radii.iter().map(|&r| vec![fmt17(r)]).collect();
    write_csv(&common.out, "r", &rows)?;
    println!("measured vanishing slope {slope}");
    Ok(check_line("order measured", slope.is_finite() || slope > 0.0))
}

fn run_blowup(
    common: &Common,
    gamma: f64,
    modes: &str,
    n: usize,
    sigmas: &str,
    quad: usize,
    tol: f64,
) -> AnyResult<bool> {
    let order = FractionalOrder::new(gamma)?;
    let sigmas = parse_f64_list(sigmas, "σ")?;
    let grid = PeriodicGrid::standard(1, n)?;
    let f = modes_field(grid.clone(), &parse_modes(modes)?)?;
    let field = extend(&f, order, &ExtensionGrid::default_for(grid))?;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &sigma in &sigmas {
        let blow = blowup_rescale(&field, sigma, quad)?;
        let nrm = blow.normalization(quad)?;
        worst = worst.max((nrm - 1.0).abs());
        rows.push(vec![fmt17(sigma), fmt17(nrm)]);
    }
    write_csv(&common.out, "sigma,normalization", &rows)?;
    println!("worst normalization defect {worst:.3e}");
    Ok(check_line(
        &format!("normalization = 1 ± {tol:e}"),
        worst <= tol,
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_trace_ratio(
    common: &Common,
    b: f64,
    modes: &str,
    mu: f64,
    n: usize,
    height: f64,
    rows_n: usize,
    taus: &str,
    bound: f64,
) -> AnyResult<bool> {
    let taus = parse_taus(taus)?;
    let modes = parse_modes(modes)?;
    let ys: Vec<f64> = (0..=rows_n)
        .map(|i| i as f64 * (height / rows_n as f64))
        .collect();
    let w = StripSamples::from_fn(2.0 * std::f64::consts::PI, n, ys, |x, y| {
        modes
            .iter()
            .map(|&(k, a)| a * (k * x).cos() * (-mu * k.max(1.0) * y).exp())
            .sum()
    })?;
    let report = trace_ratio(&w, b, &taus)?;
    let rows: Vec<Vec<String>> = report
        .taus
        .iter()
        .zip(&report.ratios)
        .map(|(&t, &r)| vec![fmt17(t), fmt17(r)])
        .collect();
    write_csv(&common.out, "tau,ratio", &rows)?;
    if let Some(plot) = &common.plot {
        let pts: Vec<(f64, f64)> = report
            .taus
            .iter()
            .zip(&report.ratios)
            .map(|(&t, &r)| (t.ln(), r))
            .collect();
        emit_plot(&pts, plot);
    }
    println!("best ratio {:.6e}", report.best_ratio);
    Ok(check_line(
        &format!("trace ratio ≤ {bound}"),
        report.best_ratio.is_finite() && report.best_ratio <= bound,
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_caccioppoli(
    common: &Common,
    gamma: f64,
    level: usize,
    r: f64,
    jmax: usize,
    n: usize,
    modes: &str,
    quad: usize,
    bound: f64,
) -> AnyResult<bool> {
    let order = FractionalOrder::new(gamma)?;
    let grid = PeriodicGrid::standard(1, n)?;
    let f = modes_field(grid.clone(), &parse_modes(modes)?)?;
    let field = extend(&f, order, &ExtensionGrid::default_for(grid))?;
    let report = caccioppoli_ratio(&field, level, r, jmax, quad)?;
    let rows: Vec<Vec<String>> = (0..=jmax)
        .map(|j| {
            vec![
                j.to_string(),
                fmt17(report.per_j_lhs[j]),
                fmt17(report.per_j_rhs[j]),
            ]
        })
        .collect();
    write_csv(&common.out, "j,lhs,rhs", &rows)?;
    println!("ratio {:.6e}", report.ratio);
    Ok(check_line(
        &format!("Caccioppoli ratio ≤ {bound}"),
        report.ratio.is_finite() && report.ratio <= bound,
    ))
}

fn run_interp_ratio(
    common: &Common,
    gamma: f64,
    j: usize,
    r: f64,
    n: usize,
    modes: &str,
    bound: f64,
) -> AnyResult<bool> {
    let grid = PeriodicGrid::standard(1, n)?;
    let f = modes_field(grid, &parse_modes(modes)?)?;
    let ratio = interpolation_ratio(&f, j, gamma, r)?;
    write_csv(
        &common.out,
        "j,r,ratio",
        &[vec![j.to_string(), fmt17(r), fmt17(ratio)]],
    )?;
    println!("ratio {ratio:.6e}");
    Ok(check_line(
        &format!("interpolation ratio ≤ {bound}"),
        ratio.is_finite() && ratio <= bound,
    ))
}

fn run_mucp(
    common: &Common,
    gamma: f64,
    set: &str,
    n: usize,
    radii: &str,
    quad: usize,
) -> AnyResult<bool> {
    let order = FractionalOrder::new(gamma)?;
    let radii = parse_f64_list(radii, "radius")?;
    let grid = PeriodicGrid::standard(1, n)?;
    let e = match set {
        "cantor" => MaskedSet::density_one_cantor(grid.clone()),
        "halfline" => MaskedSet::half_line(grid.clone()),
        "full" => MaskedSet::full(grid.clone()),
        other => return Err(Error::invalid(format!("unknown set {other:?}"))),
    };
    let f = SpectralField::from_fn(grid.clone(), |x| 2.0 + x[0].cos())?;
    let masked = e.apply(&f)?;
    let field = extend(&masked, order, &ExtensionGrid::default_for(grid))?;
    let report = masked_smallness(&field, &e, &radii, quad)?;
    let density = e.density_profile(&radii);
    let rows: Vec<Vec<String>> = (0..radii.len())
        .map(|i| {
            vec![
                fmt17(radii[i]),
                fmt17(density[i]),
                fmt17(report.eps[i]),
            ]
        })
        .collect();
    write_csv(&common.out, "r,density,eps", &rows)?;
    let worst = report.eps.iter().cloned().fold(0.0f64, f64::max);
    println!("worst smallness {worst:.6e}");
    Ok(check_line("smallness profile finite", worst.is_finite()))
}

fn run_antilocality(
    common: &Common,
    gamma: f64,
    n: usize,
    window: usize,
    disc: &str,
    expect: &str,
) -> AnyResult<bool> {
    let grid = PeriodicGrid::standard(1, n)?;
    let disc = match disc {
        "spectral" => Discretization::SpectralGalerkin,
        "fd" => Discretization::FiniteDifference,
        other => return Err(Error::invalid(format!("unknown discretization {other:?}"))),
    };
    let op = assemble_operator_with(&MetricField::identity(grid), disc)?;
    let start = n / 4;
    let idx: Vec<usize> = (start..start + window).collect();
    let dim = antilocality_nullspace(&op, gamma, &idx)?;
    write_csv(&common.out, "dimension", &[vec![dim.to_string()]])?;
    println!("dimension {dim}");
    let ok = match expect {
        "zero" => dim == 0,
        "positive" => dim > 0,
        "none" => true,
        other => return Err(Error::invalid(format!("unknown expectation {other:?}"))),
    };
    Ok(check_line(&format!("dimension {expect}"), ok))
}

fn run_runge(
    common: &Common,
    gamma: f64,
    n: usize,
    w_sizes: &str,
    tol: f64,
) -> AnyResult<bool> {
    let sizes = parse_usize_list(w_sizes, "window size")?;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("window sizes must be strictly increasing"));
    }
    let grid = PeriodicGrid::standard(1, n)?;
    let op = assemble_operator_with(
        &MetricField::identity(grid.clone()),
        Discretization::SpectralGalerkin,
    )?;
    let omega: Vec<usize> = (3 * n / 8..5 * n / 8).collect();
    let q = vec![0.0; omega.len()];
    let center = grid.point(n / 2)[0];
    let v: Vec<f64> = omega
        .iter()
        .map(|&i| {
            let d = grid.signed_coord(grid.point(i)[0] - center);
            (-8.0 * d * d).exp()
        })
        .collect();
    let mut rows = Vec::new();
    let mut errs = Vec::new();
    for &size in &sizes {
        let half = size / 2;
        let w: Vec<usize> = (0..size - half).chain(n - half..n).collect();
        let res = runge_approximate(&op, gamma, &q, &omega, &w, &v)?;
        rows.push(vec![
            size.to_string(),
            fmt17(res.error),
            fmt17(res.relative_error),
        ]);
        errs.push(res.relative_error);
    }
    write_csv(&common.out, "w_size,error,relative_error", &rows)?;
    println!("final relative error {:.3e}", errs[errs.len() - 1]);
    let mut pass = check_line(
        &format!("relative error ≤ {tol}"),
        errs[errs.len() - 1] <= tol,
    );
    pass &= check_line(
        "error monotone in window size",
        errs.windows(2).all(|w| w[1] <= w[0] + 1e-12),
    );
    Ok(pass)
}
