use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rrr_pack::analysis::{
    coordinate_modulation, detect_binary_code, pair_correlation, restricted_sphere_volume, validate_packing,
    CodeDetection, DEFAULT_G2_BIN_FRACTION, DEFAULT_G2_RESAMPLES, DEFAULT_MODULATION_BINS, DEFAULT_ROUND_TOL,
};
use rrr_pack::harness::{double_ball_study, estimate_difficulty, run_campaign, trial_seed, CampaignSpec, DifficultySpec};
use rrr_pack::io::{read_packing, write_packing, write_series, write_summary, CampaignSummary, Reproducibility, RunConfig, TrialSummary};
use rrr_pack::model::{ball_bound, density_target_instance, double_ball_instance, UNIT_RADIUS};
use rrr_pack::{PackingInstance, RrrParams};

#[derive(Parser, Debug)]
#[command(name = "rrr-pack", version, about = "Pack unit-diameter spheres in the n-torus with RRR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more packing trials.
    Pack(PackArgs),
    /// Estimate the m-monotone difficulty N(n, m).
    Difficulty(DifficultyArgs),
    /// Iteration counts at twice Ball's density over a range of dimensions.
    Doubleball(DoubleBallArgs),
    /// Validate and analyze a packing file.
    Analyze(AnalyzeArgs),
    /// Restricted tangency fractions, Ball's bound and double-Ball instances.
    Geometry(GeometryArgs),
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// RRR step size.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Metric relaxation rate.
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    /// Stopping error.
    #[arg(long = "eps", default_value_t = 1e-4)]
    eps_stop: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: u64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads, 0 for all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl SolverArgs {
    fn params(&self, monotonicity: u32) -> RrrParams {
        RrrParams {
            beta: self.beta,
            gamma: self.gamma,
            eps_stop: self.eps_stop,
            max_iter: self.max_iter,
            monotonicity,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct PackArgs {
    #[arg(short = 'n', long = "dim")]
    dim: usize,
    /// Number of spheres.
    #[arg(short = 'N', long = "count", conflicts_with = "density_ratio", required_unless_present = "density_ratio")]
    count: Option<usize>,
    /// Pack at this multiple of Ball's density instead of a fixed count.
    #[arg(long)]
    density_ratio: Option<f64>,
    /// Torus width (fixed-count mode only).
    #[arg(short = 'w', long, default_value_t = 1.0, conflicts_with = "density_ratio")]
    width: f64,
    /// Monotonicity window, 0 to disable.
    #[arg(short = 'm', long, default_value_t = 0)]
    monotonicity: u32,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Directory for packing, series and summary files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct DifficultyArgs {
    #[arg(short = 'n', long = "dim")]
    dim: usize,
    #[arg(short = 'm', long, default_value_t = 100)]
    monotonicity: u32,
    #[arg(short = 'w', long, default_value_t = 1.0)]
    width: f64,
    /// Trials per candidate.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Grid spacing of the refinement.
    #[arg(long)]
    step: Option<usize>,
    #[arg(long, default_value_t = 1 << 16)]
    max_count: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct DoubleBallArgs {
    /// First and last dimension.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [6, 14])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Packing file.
    path: PathBuf,
    /// Validation tolerance on the contact distance.
    #[arg(long, default_value_t = 2e-4)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_ROUND_TOL)]
    round_tol: f64,
    #[arg(long, default_value_t = DEFAULT_MODULATION_BINS)]
    bins: usize,
    /// g2 bin width as a fraction of the torus width.
    #[arg(long, default_value_t = DEFAULT_G2_BIN_FRACTION)]
    g2_bin: f64,
    #[arg(long, default_value_t = DEFAULT_G2_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the g2 and modulation tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the reports as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("table").required(true).multiple(true)))]
struct GeometryArgs {
    /// Restricted tangency fraction f_n for n in [LO, HI].
    #[arg(long = "fn", num_args = 2, value_names = ["LO", "HI"], group = "table")]
    fraction: Option<Vec<usize>>,
    /// Ball's bound for n in [LO, HI].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], group = "table")]
    ball: Option<Vec<usize>>,
    /// Double-Ball sphere counts and widths for n in [LO, HI].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], group = "table")]
    double_ball: Option<Vec<usize>>,
}

fn range(bounds: &[usize]) -> Result<std::ops::RangeInclusive<usize>> {
    match bounds {
        [lo, hi] if lo <= hi => Ok(*lo..=*hi),
        _ => bail!("expected LO <= HI, got {bounds:?}"),
    }
}

fn pack(args: &PackArgs) -> Result<()> {
    let params = args.solver.params(args.monotonicity);
    let instance = match (args.count, args.density_ratio) {
        (Some(count), None) => PackingInstance::new(args.dim, count, args.width)?,
        (None, Some(ratio)) => density_target_instance(args.dim, ratio)?,
        _ => unreachable!("clap enforces exactly one of --count and --density-ratio"),
    };
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let spec = CampaignSpec {
        threads: args.solver.threads,
        keep_series: args.out.is_some(),
        ..CampaignSpec::new(instance, params, args.trials, args.solver.seed)
    };
    let result = run_campaign(&spec)?;
    let report = instance.report();
    println!(
        "n={} N={} w={:.6} density={:.6e} ratio_to_ball={:.4}",
        instance.dim, instance.count, instance.width, report.density, report.ratio
    );
    let mut trials = Vec::with_capacity(result.outcomes.len());
    for (t, o) in result.outcomes.iter().enumerate() {
        let min_distance = match &o.packing {
            Some(p) => validate_packing(p, UNIT_RADIUS, 0.0)?.min_distance,
            None => None,
        };
        let (mut packing_file, mut series_file) = (None, None);
        if let Some(dir) = &args.out {
            if let Some(p) = &o.packing {
                let name = format!("packing_{t}.txt");
                write_packing(&dir.join(&name), p)?;
                packing_file = Some(name);
            }
            let name = format!("series_{t}.txt");
            write_series(&dir.join(&name), &o.error_series)?;
            series_file = Some(name);
        }
        println!(
            "trial {t}: {:?} after {} iterations, eps={:.3e}{}",
            o.status,
            o.iterations,
            o.final_eps,
            min_distance.map_or(String::new(), |d| format!(", d_min={d:.9}"))
        );
        trials.push(TrialSummary {
            index: t,
            seed: trial_seed(args.solver.seed, t as u64),
            status: o.status,
            iterations: o.iterations,
            final_eps: o.final_eps,
            repair_shift: o.repair_shift,
            min_distance,
            packing_file,
            series_file,
        });
    }
    println!("solved {}/{}", result.estimate.successes, result.estimate.trials);
    if let Some(s) = &result.stats {
        println!("mean iterations {:.1}, normalized spread {:.3}", s.mean, s.normalized_spread);
    }
    if let Some(dir) = &args.out {
        let config = RunConfig {
            subcommand: "pack".into(),
            dim: args.dim,
            count: args.count,
            density_ratio: args.density_ratio,
            width: instance.width,
            params,
            trials: args.trials,
            output_dir: Some(dir.display().to_string()),
            threads: args.solver.threads,
        };
        let summary = CampaignSummary::new(config, instance, trials, Reproducibility::new(args.solver.seed, args.solver.threads, true));
        write_summary(&dir.join("summary.json"), &summary)?;
    }
    Ok(())
}

fn difficulty(args: &DifficultyArgs) -> Result<()> {
    let spec = DifficultySpec {
        width: args.width,
        threads: args.solver.threads,
        step: args.step,
        max_count: args.max_count,
        ..DifficultySpec::new(args.dim, args.solver.params(args.monotonicity), args.trials, args.solver.seed)
    };
    let r = estimate_difficulty(&spec)?;
    println!("# N S T p sigma mean_iterations");
    for c in &r.candidates {
        let e = &c.estimate;
        let mean = c.stats.map_or("-".to_string(), |s| format!("{:.1}", s.mean));
        println!("{} {} {} {:.3} {:.3} {mean}", e.count, e.successes, e.trials, e.p, e.sigma);
    }
    let bound = if r.lower_bound_only { " (lower bound)" } else { "" };
    println!(
        "N({}, {}) = {} ± {}{bound}",
        r.dim, r.monotonicity, r.central, r.uncertainty
    );
    if r.fluctuation_flag {
        println!("note: an all-success candidate lies above an all-failure candidate");
    }
    Ok(())
}

fn doubleball(args: &DoubleBallArgs) -> Result<()> {
    let dims = range(&args.dims)?;
    let study = double_ball_study(dims, &args.solver.params(0), args.trials, args.solver.seed, args.solver.threads)?;
    println!("# n N w solved mean_iterations normalized_spread ratio_to_previous");
    for (k, row) in study.rows.iter().enumerate() {
        let (mean, spread) = row
            .stats
            .map_or(("-".into(), "-".into()), |s| (format!("{:.1}", s.mean), format!("{:.3}", s.normalized_spread)));
        let ratio = k
            .checked_sub(1)
            .and_then(|j| study.ratios[j])
            .map_or("-".into(), |x| format!("{x:.3}"));
        println!(
            "{} {} {:.6} {}/{} {mean} {spread} {ratio}",
            row.instance.dim, row.instance.count, row.instance.width, row.estimate.successes, row.estimate.trials
        );
    }
    Ok(())
}

fn write_table(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let packing = read_packing(&args.path)?;
    let validation = validate_packing(&packing, UNIT_RADIUS, args.tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let g2 = pair_correlation(&packing, args.g2_bin * packing.width, args.resamples, &mut rng)?;
    let unit = packing.width == 1.0;
    let code = if unit { Some(detect_binary_code(&packing, args.round_tol)?) } else { None };
    let modulation = if unit && packing.count() > 0 {
        Some(coordinate_modulation(std::slice::from_ref(&packing), args.bins)?)
    } else {
        None
    };
    if args.json {
        let report = serde_json::json!({
            "density": packing.density(),
            "validation": validation,
            "code": code,
            "modulation_amplitude": modulation.as_ref().map(|m| m.amplitude),
            "g2": g2,
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("n={} N={} w={} density={:.6e}", packing.dim, packing.count(), packing.width, packing.density());
        match validation.min_distance {
            Some(d) => println!("d_min={d:.12} valid={} effective_density={:.6e}", validation.valid, validation.effective_density),
            None => println!("fewer than two centers: trivially valid"),
        }
        match &code {
            Some(CodeDetection::Code { words, min_hamming }) => println!(
                "binary code: {} words, min Hamming distance {}",
                words.len(),
                min_hamming.map_or("inf".to_string(), |d| d.to_string())
            ),
            Some(CodeDetection::NotACode) => println!("binary code: none"),
            None => println!("binary code: not checked (w != 1)"),
        }
        if let Some(m) = &modulation {
            println!("modulation amplitude {:.4}", m.amplitude);
        }
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let rows = g2.bin_edges.windows(2).enumerate().map(|(b, e)| {
            let ratio = g2.ratio[b].map_or("nan".into(), |r| format!("{r:.6}"));
            format!("{:.6} {:.6} {} {:.3} {ratio}", e[0], e[1], g2.packing_counts[b], g2.reference_counts[b])
        });
        write_table(&dir.join("g2.txt"), "# r_lo r_hi packing reference ratio", rows)?;
        if let Some(m) = &modulation {
            let rows = m.bin_edges.windows(2).zip(&m.histogram).map(|(e, c)| format!("{:.4} {:.4} {c}", e[0], e[1]));
            write_table(&dir.join("modulation.txt"), "# x_lo x_hi count", rows)?;
        }
    }
    if !validation.valid {
        bail!("packing is not valid at tolerance {}", args.tol);
    }
    Ok(())
}

fn geometry(args: &GeometryArgs) -> Result<()> {
    if let Some(b) = &args.fraction {
        println!("# n f_n");
        for n in range(b)? {
            println!("{n} {:.12}", restricted_sphere_volume(n)?.fraction);
        }
    }
    if let Some(b) = &args.ball {
        println!("# n ball_bound");
        for n in range(b)? {
            println!("{n} {:.12e}", ball_bound(n)?);
        }
    }
    if let Some(b) = &args.double_ball {
        println!("# n N w");
        for n in range(b)? {
            let i = double_ball_instance(n)?;
            println!("{n} {} {:.12}", i.count, i.width);
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pack(a) => pack(a),
        Command::Difficulty(a) => difficulty(a),
        Command::Doubleball(a) => doubleball(a),
        Command::Analyze(a) => analyze(a),
        Command::Geometry(a) => geometry(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
