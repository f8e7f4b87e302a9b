//! `ctxseg`: knowledge-driven segmentation of grayscale images.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctxseg_core::{
    defuzzify, generate_phantom, ingest_label_map, load_kb, pixel_accuracy, read_pgm,
    segment_with_labels, slic_oversegment, write_pgm, write_phantom, DefuzzMode, ImageError,
    KbError, KnowledgeBase, Layout, MatchPolicy, MembershipMerge, PartitionMatrix, PhantomSpec,
    SegmentError, SegmentationResult, SegmenterParams,
};

#[derive(Parser, Debug)]
#[command(
    name = "ctxseg",
    version,
    about = "Knowledge-driven region segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment an 8-bit PGM image against a knowledge base.
    Segment(SegmentArgs),
    /// Write a synthetic image, its ground truth and a matching knowledge base.
    Phantom(PhantomArgs),
    /// Segment an image and score both defuzzification modes against a truth map.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Input image (binary PGM, 8-bit).
    #[arg(long)]
    image: PathBuf,
    /// Knowledge base file.
    #[arg(long)]
    kb: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Tiers that receive a class label: hcd-only or hcd-and-mcd.
    #[arg(long, default_value = "hcd-and-mcd")]
    mode: DefuzzMode,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    image: PathBuf,
    /// Ground-truth class map (8-bit PGM of class ids).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args, Debug)]
struct Tuning {
    /// Precomputed over-segmentation (16-bit PGM of region ids) instead of SLIC.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Approximate number of SLIC superpixels.
    #[arg(long, default_value_t = 400)]
    n_target: usize,
    /// SLIC compactness weight.
    #[arg(long, default_value_t = 0.1)]
    compactness: f64,
    /// Intensity similarity threshold on the [0, 1] scale.
    #[arg(long, default_value_t = 0.1)]
    theta_sim: f64,
    /// Membership distance below which same-class neighbors merge.
    #[arg(long, default_value_t = 0.1)]
    tau_merge: f64,
    /// Largest membership change regarded as stable.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_inner: usize,
    #[arg(long, default_value_t = 20)]
    max_outer: usize,
    /// Configuration matching: exact or subset.
    #[arg(long, default_value = "subset")]
    matching: MatchPolicy,
    /// Membership of merged regions: unweighted or area.
    #[arg(long, default_value = "unweighted")]
    merge_weighting: MembershipMerge,
    /// Worker threads for propagation sweeps (0 picks automatically).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl Tuning {
    fn params(&self, mode: DefuzzMode) -> SegmenterParams {
        let mut p = SegmenterParams {
            merge_distance_threshold: self.tau_merge,
            max_outer_iterations: self.max_outer,
            defuzz_mode: mode,
            merge_weighting: self.merge_weighting,
            ..SegmenterParams::default()
        };
        p.update.similarity_threshold = self.theta_sim;
        p.update.convergence_eps = self.eps;
        p.update.max_inner_iterations = self.max_inner;
        p.update.match_policy = self.matching;
        p.slic.n_target = self.n_target;
        p.slic.compactness = self.compactness;
        p
    }
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// mammo4, nested or stripesN.
    #[arg(long, default_value = "mammo4")]
    layout: Layout,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Gaussian noise standard deviation in gray levels.
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
}

/// A failure with its process exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Kb(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Kb(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Kb(m) => f.write_str(m),
        }
    }
}

fn io_failure(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn image_failure(path: &Path, e: ImageError) -> Failure {
    match e {
        ImageError::InvalidParameter(m) => Failure::Usage(m),
        other => io_failure(path, other),
    }
}

fn segment_failure(e: SegmentError) -> Failure {
    match e {
        SegmentError::InvalidParameter(m) => Failure::Usage(m),
        SegmentError::Image(ImageError::InvalidParameter(m)) => Failure::Usage(m),
        other => Failure::Io(other.to_string()),
    }
}

fn read_kb(path: &Path) -> Result<KnowledgeBase, Failure> {
    load_kb(path).map_err(|e| match e {
        KbError::Io(e) => io_failure(path, e),
        other => Failure::Kb(format!("{}: {other}", path.display())),
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn run_pipeline(
    image: &Path,
    kb: &Path,
    tuning: &Tuning,
    mode: DefuzzMode,
) -> Result<SegmentationResult, Failure> {
    let kb = read_kb(kb)?;
    let img = read_pgm(image).map_err(|e| image_failure(image, e))?;
    let params = tuning.params(mode);
    params.validate().map_err(segment_failure)?;
    let labels = match &tuning.labels {
        Some(path) => ingest_label_map(path).map_err(|e| image_failure(path, e))?,
        None => slic_oversegment(&img, params.slic.n_target, params.slic.compactness)
            .map_err(|e| image_failure(image, e))?,
    };
    segment_with_labels(&img, &labels, &kb, &params).map_err(segment_failure)
}

fn cmd_segment(args: &SegmentArgs) -> Result<(), Failure> {
    let result = run_pipeline(&args.image, &args.kb, &args.tuning, args.mode)?;
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let class_path = out.join("class.pgm");
    write_pgm(&result.label_map, &class_path).map_err(|e| io_failure(&class_path, e))?;
    let tier_path = out.join("tier.pgm");
    write_pgm(&result.tier_map, &tier_path).map_err(|e| io_failure(&tier_path, e))?;
    write_file(&out.join("iterations.csv"), result.iteration_log_csv())?;
    write_file(&out.join("merges.csv"), result.final_graph.merge_log_csv())?;
    let pm = PartitionMatrix::from_graph(&result.final_graph);
    write_file(&out.join("partition.csv"), pm.to_csv())?;

    let (hcd, mcd, lcd) = pm.tier_counts();
    println!("initial regions: {}", result.initial_regions);
    println!("final regions:   {}", result.final_graph.num_live());
    println!("tiers (HCD/MCD/LCD): {hcd}/{mcd}/{lcd}");
    println!("sweeps: {}", result.iteration_log.len());
    println!("converged: {}", result.converged);
    println!("mode: {}", result.mode.name());
    for w in &result.warnings {
        println!("warning: {w:?}");
    }
    Ok(())
}

fn cmd_phantom(args: &PhantomArgs) -> Result<(), Failure> {
    let spec = PhantomSpec::new(args.layout, args.width, args.height, args.noise, args.seed);
    let phantom = generate_phantom(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    write_phantom(&phantom, &args.out).map_err(|e| io_failure(&args.out, e))?;
    println!(
        "wrote image.pgm, truth.pgm and phantom.kb to {}",
        args.out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let truth = read_pgm(&args.truth).map_err(|e| image_failure(&args.truth, e))?;
    let result = run_pipeline(&args.image, &args.kb, &args.tuning, DefuzzMode::HcdAndMcd)?;
    println!("mode,accuracy,labeled_accuracy");
    for mode in [DefuzzMode::HcdOnly, DefuzzMode::HcdAndMcd] {
        let pred = defuzzify(&result.final_graph, mode).expect("graph built from an image");
        let strict =
            pixel_accuracy(&pred, &truth, false).map_err(|e| io_failure(&args.truth, e))?;
        let labeled = pixel_accuracy(&pred, &truth, true).expect("dimensions already checked");
        println!("{},{strict:.6},{labeled:.6}", mode.name());
    }
    Ok(())
}

fn init_logging() {
    let level = match std::env::var("CTXSEG_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new().filter_level(level).init();
}

fn configure_threads(tuning: &Tuning) -> Result<(), Failure> {
    if tuning.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(tuning.threads)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging();
    let outcome = match &cli.command {
        Command::Segment(a) => configure_threads(&a.tuning).and_then(|()| cmd_segment(a)),
        Command::Phantom(a) => cmd_phantom(a),
        Command::Evaluate(a) => configure_threads(&a.tuning).and_then(|()| cmd_evaluate(a)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
