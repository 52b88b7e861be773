use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wreathe::eval::{
    batch_evaluate, item_stem, make_dataset, write_dataset, DatasetConfig, EvalResult, ScaledShape,
};
use wreathe::inference::{most_visited, run_chains, ChainResult, InitState, PosteriorSample};
use wreathe::io::{
    read_config, read_png, read_shape_file, write_png, write_samples, write_shape_file, IoError,
    RunConfig, RunManifest, SampleRecord, ShapeFile,
};
use wreathe::likelihood::binarize;
use wreathe::priors::BlurParams;
use wreathe::renderer::render;
use wreathe::wreath_process::{sample_hyper, sample_noise};

#[derive(Parser)]
#[command(
    name = "wreathe",
    version,
    about = "Stochastic wreath process shapes: render, sample and infer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// key = value configuration file
    #[arg(long, env = "WREATHE_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a .wreath shape file to PNG
    Render {
        shape: PathBuf,
        out: PathBuf,
        /// Draw noise scales and perturbations from the prior
        #[arg(long)]
        noisy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pixels per model unit; defaults to the file's lambda, then the config
        #[arg(long)]
        lambda: Option<f64>,
        /// Square canvas size in pixels
        #[arg(long)]
        size: Option<usize>,
        /// Blur as HALF_WIDTH,SIGMA in pixels
        #[arg(long, value_parser = parse_blur)]
        blur: Option<BlurParams>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Draw shapes from the prior and write exact renders
    Sample {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Generate a dataset of prior samples with noisy renders
    Dataset {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Infer a shape from a PNG with reversible-jump MCMC
    Infer {
        input: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value_t = 1)]
        chains: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest number of levels a shape may have
        #[arg(long)]
        restrict_levels: Option<usize>,
        /// Fix the scale instead of inferring it
        #[arg(long)]
        lambda: Option<f64>,
        /// Record the wall-clock time in the manifest
        #[arg(long)]
        record_time: bool,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Score inferred shapes against a dataset
    Eval {
        dataset_dir: PathBuf,
        inferred_dir: PathBuf,
        /// Report path; defaults to eval_report.txt in the inferred directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_blur(s: &str) -> Result<BlurParams, String> {
    let (w, sigma) = s
        .split_once(',')
        .ok_or_else(|| "expected HALF_WIDTH,SIGMA".to_string())?;
    let w_b = w
        .trim()
        .parse()
        .map_err(|_| format!("bad half width {w:?}"))?;
    let sigma_b: f64 = sigma
        .trim()
        .parse()
        .map_err(|_| format!("bad sigma {sigma:?}"))?;
    if sigma_b.is_nan() || sigma_b <= 0.0 {
        return Err("sigma must be positive".into());
    }
    Ok(BlurParams { w_b, sigma_b })
}

/// Failure with its exit code: 2 for bad input or usage, 1 otherwise.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn runtime(m: impl ToString) -> Self {
        Failure {
            code: 1,
            message: m.to_string(),
        }
    }

    fn usage(m: impl ToString) -> Self {
        Failure {
            code: 2,
            message: m.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Missing { .. } | IoError::MalformedImage { .. } | IoError::Parse { .. } => {
                Failure::usage(e)
            }
            _ => Failure::runtime(e),
        }
    }
}

type Outcome = Result<(), Failure>;

fn load_config(arg: &ConfigArg) -> Result<RunConfig, Failure> {
    match &arg.config {
        Some(p) => Ok(read_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn ensure_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::runtime(format!("{}: cannot create directory: {e}", dir.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_render(
    shape: &Path,
    out: &Path,
    noisy: bool,
    seed: u64,
    lambda: Option<f64>,
    size: Option<usize>,
    blur: Option<BlurParams>,
    cfg: RunConfig,
) -> Outcome {
    let file = read_shape_file(shape)?;
    let mut rc = cfg.model.render.clone();
    if let Some(n) = size {
        rc.width = n;
        rc.height = n;
    }
    rc.unit_scale = lambda.or(file.lambda()).unwrap_or(rc.unit_scale);
    let noise = if noisy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = sample_hyper(&file.shape, &cfg.model.noise, &mut rng);
        Some(sample_noise(&file.shape, &h, &cfg.model.noise, &mut rng).map_err(Failure::usage)?)
    } else {
        None
    };
    let img = render(
        &file.shape,
        noise.as_ref(),
        blur.unwrap_or(BlurParams::NONE),
        &rc,
    )
    .map_err(Failure::usage)?;
    write_png(&img, out)?;
    Ok(())
}

fn cmd_dataset(
    out_dir: &Path,
    n: usize,
    seed: u64,
    cfg: RunConfig,
    noisy: bool,
    name: &str,
) -> Outcome {
    let dcfg = DatasetConfig {
        prior: cfg.model.prior.clone(),
        noise: cfg.model.noise.clone(),
        render: cfg.model.render.clone(),
        noisy,
        require_margin: cfg.require_margin,
        ..DatasetConfig::default()
    };
    let items = make_dataset(n, &dcfg, seed).map_err(Failure::usage)?;
    ensure_dir(out_dir)?;
    let mut manifest = RunManifest::new(name, &cfg);
    write_dataset(out_dir, &items, &mut manifest)?;
    println!("wrote {} items to {}", items.len(), out_dir.display());
    Ok(())
}

fn state_file(s: &PosteriorSample) -> ShapeFile {
    ShapeFile::new(s.shape.clone())
        .with("iteration", s.iteration)
        .with("lambda", format!("{:?}", s.lambda))
        .with("blur_w", s.blur.w_b)
        .with("blur_sigma", format!("{:?}", s.blur.sigma_b))
        .with("log_post", format!("{:?}", s.log_post))
        .with("log_lik", format!("{:?}", s.log_lik))
}

/// Writes `stem.wreath` and `stem.png`; the image includes the state's
/// noise when it was kept.
fn write_state(s: &PosteriorSample, stem: &Path, cfg: &RunConfig, size: (usize, usize)) -> Outcome {
    write_shape_file(&state_file(s), &stem.with_extension("wreath"))?;
    let rc = wreathe::renderer::RenderConfig {
        width: size.0,
        height: size.1,
        unit_scale: s.lambda,
        ..cfg.model.render.clone()
    };
    let img = render(&s.shape, s.noise.as_ref(), s.blur, &rc).map_err(Failure::runtime)?;
    write_png(&img, &stem.with_extension("png"))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_infer(
    input: &Path,
    out_dir: &Path,
    iterations: Option<usize>,
    chains: usize,
    seed: u64,
    restrict_levels: Option<usize>,
    lambda: Option<f64>,
    record_time: bool,
    mut cfg: RunConfig,
) -> Outcome {
    if chains == 0 {
        return Err(Failure::usage("--chains must be at least 1"));
    }
    if let Some(n) = iterations {
        cfg.chain.iterations = n;
    }
    if let Some(n) = restrict_levels {
        cfg.model.prior.max_levels = n;
    }
    if let Some(l) = lambda {
        cfg.chain.freeze_lambda = true;
        cfg.chain.init = InitState {
            lambda: Some(l),
            ..InitState::default()
        };
    }
    cfg.chain.seed = seed;
    let raster = read_png(input)?;
    let obs = binarize(&raster, cfg.threshold);
    let results = run_chains(&obs, &cfg.model, &cfg.chain, chains);
    let results: Vec<ChainResult> = results
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(Failure::usage)?;
    ensure_dir(out_dir)?;
    let mut manifest = RunManifest::new("infer", &cfg);
    manifest.input = Some(input.display().to_string());
    let size = (obs.width(), obs.height());
    for (k, r) in results.iter().enumerate() {
        let stem = format!("chain_{k}");
        let records: Vec<SampleRecord> = r.samples.iter().map(SampleRecord::from).collect();
        write_samples(&records, &out_dir.join(format!("{stem}.samples")))?;
        write_state(&r.map, &out_dir.join(format!("{stem}_map")), &cfg, size)?;
        write_state(&r.ml, &out_dir.join(format!("{stem}_ml")), &cfg, size)?;
        manifest.seeds.push(seed.wrapping_add(k as u64));
        for suffix in [
            ".samples",
            "_map.wreath",
            "_map.png",
            "_ml.wreath",
            "_ml.png",
        ] {
            manifest.outputs.push(format!("{stem}{suffix}"));
        }
    }
    let tables: Vec<_> = results.iter().map(|r| r.visits.clone()).collect();
    let best = most_visited(&tables);
    write_state(best, &out_dir.join("map"), &cfg, size)?;
    manifest.outputs.push("map.wreath".into());
    manifest.outputs.push("map.png".into());
    if record_time {
        manifest.wall_clock = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }
    manifest.write(&out_dir.join("manifest.txt"))?;
    println!("{}", best.shape);
    Ok(())
}

/// Finds the inferred shape for dataset item `stem`.
fn inferred_path(dir: &Path, stem: &str) -> Option<PathBuf> {
    [
        dir.join(format!("{stem}.wreath")),
        dir.join(stem).join("map.wreath"),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

fn cmd_eval(dataset_dir: &Path, inferred_dir: &Path, out: Option<PathBuf>) -> Outcome {
    let mut pairs = Vec::new();
    let mut stems = Vec::new();
    let default_scale = wreathe::renderer::RenderConfig::default().unit_scale;
    loop {
        let stem = item_stem(stems.len());
        let truth_path = dataset_dir.join(format!("{stem}.wreath"));
        if !truth_path.is_file() {
            break;
        }
        let truth = read_shape_file(&truth_path)?;
        let inferred = inferred_path(inferred_dir, &stem).ok_or_else(|| {
            Failure::runtime(format!(
                "{}: no inferred shape for {stem}",
                inferred_dir.display()
            ))
        })?;
        let inferred = read_shape_file(&inferred)?;
        let scaled = |f: &ShapeFile| ScaledShape {
            shape: f.shape.clone(),
            lambda: f.lambda().unwrap_or(default_scale),
        };
        pairs.push((scaled(&inferred), scaled(&truth)));
        stems.push(stem);
    }
    if pairs.is_empty() {
        return Err(Failure::runtime(format!(
            "{}: no dataset items found",
            dataset_dir.display()
        )));
    }
    let extra = inferred_path(inferred_dir, &item_stem(stems.len()));
    if extra.is_some() {
        return Err(Failure::runtime(
            "inferred directory has more items than the dataset",
        ));
    }
    let first = read_png(&dataset_dir.join(format!("{}.png", stems[0])))?;
    let rc = wreathe::renderer::RenderConfig {
        width: first.width(),
        height: first.height(),
        ..wreathe::renderer::RenderConfig::default()
    };
    let (results, summary) = batch_evaluate(&pairs, &rc).map_err(Failure::runtime)?;
    let mut report = String::new();
    for (stem, r) in stems.iter().zip(&results) {
        report.push_str(&item_line(stem, r));
    }
    report.push_str(&summary.to_string());
    print!("{report}");
    let out = out.unwrap_or_else(|| inferred_dir.join("eval_report.txt"));
    fs::write(&out, report)
        .map_err(|e| Failure::runtime(format!("{}: cannot write: {e}", out.display())))?;
    Ok(())
}

fn item_line(stem: &str, r: &EvalResult) -> String {
    format!(
        "{stem}\tfull={}\tup_to_occupancy={}\trender_iou={:.6}\n",
        r.full_recoverability, r.up_to_occupancy, r.render_iou
    )
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Render {
            shape,
            out,
            noisy,
            seed,
            lambda,
            size,
            blur,
            config,
        } => cmd_render(
            &shape,
            &out,
            noisy,
            seed,
            lambda,
            size,
            blur,
            load_config(&config)?,
        ),
        Command::Sample {
            out_dir,
            n,
            seed,
            config,
        } => cmd_dataset(&out_dir, n, seed, load_config(&config)?, false, "sample"),
        Command::Dataset {
            out_dir,
            n,
            seed,
            config,
        } => {
            let cfg = load_config(&config)?;
            let noisy = cfg.noisy;
            cmd_dataset(&out_dir, n, seed, cfg, noisy, "dataset")
        }
        Command::Infer {
            input,
            out_dir,
            iterations,
            chains,
            seed,
            restrict_levels,
            lambda,
            record_time,
            config,
        } => cmd_infer(
            &input,
            &out_dir,
            iterations,
            chains,
            seed,
            restrict_levels,
            lambda,
            record_time,
            load_config(&config)?,
        ),
        Command::Eval {
            dataset_dir,
            inferred_dir,
            out,
        } => cmd_eval(&dataset_dir, &inferred_dir, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
