use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use fredholm_core::experiments::bounds::run_bounds;
use fredholm_core::experiments::config::{self, BoundsConfig, GrushinConfig, OracleConfig, ScanConfig, TailsConfig, WashoutConfig};
use fredholm_core::experiments::output::{self, Format};
use fredholm_core::experiments::plot::{Figure, Mark};
use fredholm_core::experiments::scan::{magic_scan, summarize_scan, washout_experiment};
use fredholm_core::experiments::stats::TailEstimate;
use fredholm_core::experiments::tails::{run_det_tail, run_hs_tail, run_singular_tail};
use fredholm_core::experiments::verify::{grushin_verification, oracle_check};
use fredholm_core::experiments::{with_pool, Threads};
use fredholm_core::Result;

const SHOWCASE_K: usize = 40;
const SHOWCASE_EIGS: usize = 600;

#[derive(Parser, Debug)]
#[command(name = "fredholm-lab", version, about = "Random perturbations of non-normal Fredholm operators")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration file (snake_case keys, unknown keys rejected).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, a positive integer or "auto". Falls back to THREADS.
    #[arg(long, global = true)]
    threads: Option<Threads>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Format of the per-measurement output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plot: bool,
    /// Use the full K=40 truncation (dimension 13122).
    #[arg(long, global = true)]
    showcase: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalue counts in a disk across a grid of 1/h.
    Scan,
    /// Smallest eigenvalues at a magic 1/h for several perturbation sizes.
    Washout,
    /// Grushin problem exactness, Schur and Neumann checks.
    GrushinVerify,
    /// Monte Carlo tail laws.
    Tails {
        #[arg(value_enum)]
        kind: TailKindArg,
    },
    /// Closed-form probability bounds with computed multiplier norms.
    Bounds,
    /// Matrix assembly against the FFT oracle.
    OracleCheck,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TailKindArg {
    Hs,
    Det,
    SmallestSingular,
}

impl Common {
    fn load<T: DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.config {
            Some(path) => config::load(path),
            None => Ok(T::default()),
        }
    }

    fn threads(&self, configured: Threads) -> Result<Threads> {
        match self.threads {
            Some(t) => Ok(t),
            None => Ok(config::threads_from_env()?.unwrap_or(configured)),
        }
    }

    fn path(&self, stem: &str, format: Format) -> PathBuf {
        self.out.join(format!("{stem}.{}", format.extension()))
    }

    fn write_json<T: Serialize>(&self, stem: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(stem, Format::Json);
        output::write_json(value, output::create(&path)?)?;
        Ok(path)
    }

    fn write_plot(&self, stem: &str, figure: &Figure) -> Result<Option<PathBuf>> {
        if !self.plot {
            return Ok(None);
        }
        let path = self.out.join(format!("{stem}.svg"));
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(&path, figure.to_svg())?;
        Ok(Some(path))
    }
}

fn report(paths: &[Option<PathBuf>]) {
    for p in paths.iter().flatten() {
        println!("wrote {}", p.display());
    }
}

fn warn_showcase(command: &str) {
    eprintln!("warning: --showcase has no effect on {command}");
}

fn run_scan(common: &Common) -> Result<()> {
    let mut cfg: ScanConfig = common.load()?;
    if let Some(seed) = common.seed {
        cfg.root_seed = seed;
    }
    if common.showcase {
        eprintln!("warning: showcase truncation K={SHOWCASE_K} (dimension 13122) takes hours per grid point");
        cfg.k = SHOWCASE_K;
    }
    cfg.threads = common.threads(cfg.threads)?;
    cfg.validate()?;
    let result = with_pool(cfg.threads, || magic_scan(&cfg))??;
    let failures = result.rows.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        eprintln!("warning: {failures} scan rows failed to decompose");
    }
    let rows_path = common.path("scan", common.format);
    match common.format {
        Format::Csv => output::write_scan_csv(&result.rows, output::create(&rows_path)?)?,
        Format::Json => output::write_json(&result.rows, output::create(&rows_path)?)?,
    }
    let summary = summarize_scan(&cfg, &result);
    for s in &summary {
        let at: Vec<String> = s.spikes.iter().map(|p| format!("{:.2}", p.inv_h)).collect();
        println!(
            "delta={:e}: spikes at [{}], magic_resolved={}, washed_out={}",
            s.delta,
            at.join(", "),
            s.magic_resolved,
            s.washed_out
        );
    }
    let summary_path = common.write_json(
        "scan_summary",
        &serde_json::json!({
            "config": cfg,
            "gaussian_draws": result.gaussian_draws,
            "failed_rows": failures,
            "deltas": summary,
        }),
    )?;
    let mut fig = Figure::new("Eigenvalues in the disk", "1/h", "mean count");
    for s in &summary {
        let pts = cfg.inv_h_grid.iter().copied().zip(s.mean_counts.iter().copied()).collect();
        fig = fig.add(&format!("delta = {:e}", s.delta), pts, Mark::Line);
    }
    let plot = common.write_plot("scan", &fig)?;
    report(&[Some(rows_path), Some(summary_path), plot]);
    Ok(())
}

fn run_washout(common: &Common) -> Result<()> {
    let mut cfg: WashoutConfig = common.load()?;
    if let Some(seed) = common.seed {
        cfg.root_seed = seed;
    }
    if common.showcase {
        eprintln!("warning: showcase truncation K={SHOWCASE_K} (dimension 13122) needs tens of GB and hours per δ");
        cfg.k = SHOWCASE_K;
        cfg.n_eigs = SHOWCASE_EIGS;
    }
    cfg.threads = common.threads(cfg.threads)?;
    let table = with_pool(cfg.threads, || washout_experiment(&cfg))??;
    let rows_path = common.path("washout", common.format);
    match common.format {
        Format::Csv => output::write_washout_csv(&table, output::create(&rows_path)?)?,
        Format::Json => output::write_json(&table, output::create(&rows_path)?)?,
    }
    println!(
        "1/h = {} (requested {}), sigma_min at probe = {:e}, central radius = {:e}",
        table.inv_h, table.inv_h_requested, table.probe_sigma_min, table.central_radius
    );
    for row in &table.rows {
        println!("delta={:e}: central count {}", row.delta, row.central_count);
    }
    let counts: Vec<(f64, usize)> = table.rows.iter().map(|r| (r.delta, r.central_count)).collect();
    let summary_path = common.write_json(
        "washout_summary",
        &serde_json::json!({
            "config": cfg,
            "inv_h": table.inv_h,
            "probe_sigma_min": table.probe_sigma_min,
            "central_radius": table.central_radius,
            "dim": table.dim,
            "central_counts": counts,
        }),
    )?;
    let mut fig = Figure::new("Smallest eigenvalues", "Re", "Im");
    for row in &table.rows {
        let pts = row.eigenvalues.iter().map(|l| (l.re, l.im)).collect();
        fig = fig.add(&format!("delta = {:e}", row.delta), pts, Mark::Dots);
    }
    let plot = common.write_plot("washout", &fig)?;
    report(&[Some(rows_path), Some(summary_path), plot]);
    Ok(())
}

fn run_grushin(common: &Common) -> Result<()> {
    let mut cfg: GrushinConfig = common.load()?;
    if let Some(seed) = common.seed {
        cfg.root_seed = seed;
    }
    if common.showcase {
        warn_showcase("grushin-verify");
    }
    cfg.threads = common.threads(cfg.threads)?;
    let rep = with_pool(cfg.threads, || grushin_verification(&cfg))??;
    println!("exact at 1e-10: {}", rep.exact(1e-10));
    println!("schur consistent: {}/{}", rep.schur.consistent, rep.schur.draws);
    println!("neumann remainder slope: {:.4}", rep.neumann.slope);
    let rows_path = common.path("grushin_checks", common.format);
    let checks: Vec<_> = rep.random.iter().chain(&rep.tbg).collect();
    match common.format {
        Format::Json => output::write_json(&checks, output::create(&rows_path)?)?,
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(output::create(&rows_path)?);
            w.write_record([
                "label",
                "dim",
                "n_small",
                "alpha",
                "right_residual",
                "left_residual",
                "norm_table_holds",
            ])?;
            for c in &checks {
                w.write_record([
                    c.label.clone(),
                    c.dim.to_string(),
                    c.n_small.to_string(),
                    output::format_real(c.alpha),
                    output::format_real(c.right_residual),
                    output::format_real(c.left_residual),
                    c.norm_table_holds.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    let summary_path = common.write_json("grushin_summary", &serde_json::json!({ "config": cfg, "report": rep }))?;
    let fig = Figure::new("Neumann remainder", "log10 delta", "log10 gap").add(
        "remainder",
        rep.neumann
            .deltas
            .iter()
            .zip(&rep.neumann.gaps)
            .map(|(d, g)| (d.log10(), g.log10()))
            .collect(),
        Mark::Line,
    );
    let plot = common.write_plot("neumann", &fig)?;
    report(&[Some(rows_path), Some(summary_path), plot]);
    Ok(())
}

fn write_tail(common: &Common, stem: &str, est: &TailEstimate) -> Result<PathBuf> {
    let path = common.path(stem, common.format);
    match common.format {
        Format::Csv => output::write_tail_csv(est, output::create(&path)?)?,
        Format::Json => output::write_json(est, output::create(&path)?)?,
    }
    Ok(path)
}

fn tail_figure(title: &str, est: &TailEstimate) -> Figure {
    let pts = est
        .thresholds
        .iter()
        .zip(&est.empirical_probability)
        .filter(|(t, p)| **t > 0.0 && **p > 0.0)
        .map(|(t, p)| (t.log10(), p.log10()))
        .collect();
    Figure::new(title, "log10 threshold", "log10 probability").add("empirical", pts, Mark::Line)
}

fn run_tails(common: &Common, kind: TailKindArg) -> Result<()> {
    let mut cfg: TailsConfig = common.load()?;
    if let Some(seed) = common.seed {
        cfg.root_seed = seed;
    }
    if common.showcase {
        warn_showcase("tails");
    }
    cfg.threads = common.threads(cfg.threads)?;
    let (stem, est, summary, title) = match kind {
        TailKindArg::Hs => {
            let rep = with_pool(cfg.threads, || run_hs_tail(&cfg.hs, cfg.c0, cfg.root_seed))??;
            println!(
                "mean {:.3}, near slope {:.4}, far slope {:.4}, at least linear: {}",
                rep.mean, rep.decay.near_slope, rep.decay.far_slope, rep.decay.at_least_linear
            );
            let summary = serde_json::json!({ "c0": cfg.c0, "config": cfg.hs, "report": rep });
            ("hs_tail", rep.estimate, summary, "Survival of the squared HS norm")
        }
        TailKindArg::Det => {
            let rep = with_pool(cfg.threads, || run_det_tail(&cfg.det, cfg.root_seed))??;
            match &rep.ratio {
                Some(r) => println!("ratio growth over two decades {:.4}, bounded: {}", r.growth, r.bounded),
                None => println!("too few hits for the ratio check"),
            }
            let summary = serde_json::json!({ "c1": cfg.c1, "c2": cfg.c2, "config": cfg.det, "report": rep });
            ("det_tail", rep.estimate, summary, "Distribution of |det| near zero")
        }
        TailKindArg::SmallestSingular => {
            let rep = with_pool(cfg.threads, || run_singular_tail(&cfg.smallest_singular, cfg.c2, cfg.root_seed))??;
            println!(
                "N = {}, unperturbed t1 = {:e}, smallest-decade slope {:?}",
                rep.n_small, rep.unperturbed_t1, rep.smallest_decade_slope
            );
            let summary = serde_json::json!({ "c2": cfg.c2, "config": cfg.smallest_singular, "report": rep });
            ("smallest_singular_tail", rep.estimate, summary, "Smallest singular value near zero")
        }
    };
    let rows_path = write_tail(common, stem, &est)?;
    let summary_path = common.write_json(&format!("{stem}_summary"), &summary)?;
    let plot = common.write_plot(stem, &tail_figure(title, &est))?;
    report(&[Some(rows_path), Some(summary_path), plot]);
    Ok(())
}

fn run_bounds_command(common: &Common) -> Result<()> {
    let cfg: BoundsConfig = common.load()?;
    if common.showcase {
        warn_showcase("bounds");
    }
    let rep = run_bounds(&cfg)?;
    println!(
        "norm slopes: trace {:.4}, hs^2 {:.4}; exponent slope {:.4} (target {})",
        rep.norm_scaling.trace_slope,
        rep.norm_scaling.hs_squared_slope,
        rep.exponent_scaling.slope,
        -2.0 * rep.exponent_scaling.kappa
    );
    let rows_path = common.path("bounds", common.format);
    match common.format {
        Format::Json => output::write_json(&rep.points, output::create(&rows_path)?)?,
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(output::create(&rows_path)?);
            w.write_record(["h", "delta", "alpha", "exponent", "bound", "delta_threshold", "scaled_bound"])?;
            for (h, e, scaled) in &rep.points {
                w.write_record(
                    [h, &e.delta, &e.alpha, &e.exponent, &e.bound, &e.delta_threshold, scaled].map(|x| output::format_real(*x)),
                )?;
            }
            w.flush()?;
        }
    }
    let summary_path = common.write_json("bounds_summary", &serde_json::json!({ "config": cfg, "report": rep }))?;
    let ex = &rep.exponent_scaling;
    let fig = Figure::new("Bound exponent with delta = h^kappa", "log10 h", "log10(-exponent)").add(
        "exponent",
        ex.h.iter().zip(&ex.exponent).map(|(h, e)| (h.log10(), (-e).log10())).collect(),
        Mark::Line,
    );
    let plot = common.write_plot("bounds", &fig)?;
    report(&[Some(rows_path), Some(summary_path), plot]);
    Ok(())
}

fn run_oracle(common: &Common) -> Result<()> {
    let mut cfg: OracleConfig = common.load()?;
    if let Some(seed) = common.seed {
        cfg.root_seed = seed;
    }
    if common.showcase {
        warn_showcase("oracle-check");
    }
    let rep = oracle_check(&cfg)?;
    for (k, err) in &rep.chiral {
        println!("K = {k}: max relative error {err:e}");
    }
    println!("Seeley K = {}: eigenvalue drift {:e}", rep.seeley_k, rep.seeley_drift);
    let summary_path = common.write_json("oracle_check", &serde_json::json!({ "config": cfg, "report": rep }))?;
    report(&[Some(summary_path)]);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Scan => run_scan(common),
        Command::Washout => run_washout(common),
        Command::GrushinVerify => run_grushin(common),
        Command::Tails { kind } => run_tails(common, kind),
        Command::Bounds => run_bounds_command(common),
        Command::OracleCheck => run_oracle(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
