//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::dictlearn::{learn_dictionary, LearnConfig, DEFAULT_Q};
use crate::error::{Error, Result};
use crate::eval::{angular_error, random_lights, render_sphere, ErrorSummary, NoiseKind, NoiseSpec};
use crate::field::{NormalField, PixelMask};
use crate::io::export::{cost_trace_csv, height_obj, summary_csv, summary_row, write_text};
use crate::io::{load_dataset, load_normal_map, save_dataset, save_error_png, save_normal_map, save_normal_png, save_scalar_map, Dataset};
use crate::patch::PatchGrid;
use crate::solvers::{solve, Method, Problem, SolverConfig};
use crate::surface::{gradients_from_normals, integrate};

#[derive(Debug, Parser)]
#[command(name = "robust-ps", version, about = "Dictionary-regularized photometric stereo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a Lambertian sphere dataset with ground truth and mask.
    RenderSynth(RenderArgs),
    /// Copy a dataset with Poisson or salt-and-pepper noise added.
    AddNoise(NoiseArgs),
    /// Estimate normals for a dataset.
    Solve(SolveArgs),
    /// Angular error of an estimated normal map against ground truth.
    Eval(EvalArgs),
    /// Integrate a normal map into a height map.
    Integrate(IntegrateArgs),
    /// Solve over a grid of lambda, mu and p and tabulate the errors.
    Sweep(SweepArgs),
    /// Learn dictionaries on ground-truth normal patches over a range of mu.
    DictStudy(DictStudyArgs),
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 20)]
    pub lights: usize,
    /// Lights are drawn uniformly within this angle of the view axis.
    #[arg(long, default_value_t = 45.0)]
    pub max_polar_deg: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseChoice {
    Poisson,
    SaltPepper,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub kind: NoiseChoice,
    /// Target SNR in dB (Poisson).
    #[arg(long, required_if_eq("kind", "poisson"))]
    pub snr: Option<f64>,
    /// Fraction of corrupted entries (salt-and-pepper).
    #[arg(long, required_if_eq("kind", "salt-pepper"))]
    pub fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set lambda=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<SolverConfig> {
        let mut cfg = match &self.config {
            Some(p) => SolverConfig::parse(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => SolverConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Append-free CSV summary destination.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// PNG error map destination.
    #[arg(long)]
    pub error_png: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[arg(long)]
    pub normals: PathBuf,
    /// Height map (PFM).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional OBJ mesh.
    #[arg(long)]
    pub obj: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub method: Method,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub mus: Vec<f64>,
    /// Segment counts; defaults to the config's `p`.
    #[arg(long, value_delimiter = ',')]
    pub ps: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct DictStudyArgs {
    /// Dataset with `normal_gt.pfm`; a rendered sphere is used when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.02,0.05,0.1,0.2")]
    pub mus: Vec<f64>,
    #[arg(long, default_value_t = 192)]
    pub atoms: usize,
    #[arg(long, default_value_t = 10)]
    pub passes: usize,
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Files written by a command; removed again unless the command succeeds.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn add(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let p = path.into();
        self.written.push(p.clone());
        p
    }

    fn commit(mut self) {
        self.done = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.done {
            for p in &self.written {
                if p.is_dir() {
                    let _ = fs::remove_dir_all(p);
                } else {
                    let _ = fs::remove_file(p);
                }
            }
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Dataset outputs go to a new or empty directory, so a failed write can
/// remove the whole directory.
fn claim_dataset_dir(dir: &Path, out: &mut Outputs) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            return Err(Error::InvalidArgument(format!("{} exists and is not empty", dir.display())));
        }
    }
    out.add(dir);
    Ok(())
}

fn params_text(method: Method, cfg: &SolverConfig) -> String {
    match method {
        Method::Ls => "-".into(),
        Method::Pls => format!("p={};gamma={}", cfg.p, cfg.gamma),
        Method::Dlnv => format!("lambda={};mu={}", cfg.lambda, cfg.mu),
        Method::Pdlnv => format!("lambda={};mu={};p={};gamma={}", cfg.lambda, cfg.mu, cfg.p, cfg.gamma),
    }
}

fn evaluate(est: &NormalField, ds: &Dataset) -> Option<Result<ErrorSummary>> {
    ds.ground_truth.as_ref().map(|gt| angular_error(est, gt, ds.mask.as_ref()))
}

fn run_render(a: &RenderArgs) -> Result<()> {
    let lights = random_lights(a.lights, a.max_polar_deg, a.seed);
    let scene = render_sphere(a.size, &lights, None)?;
    let mut out = Outputs::default();
    claim_dataset_dir(&a.out, &mut out)?;
    save_dataset(&a.out, &scene.images, &lights, Some(&scene.mask), Some(&scene.normals.normalized()))?;
    out.commit();
    Ok(())
}

fn run_noise(a: &NoiseArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let kind = match a.kind {
        NoiseChoice::Poisson => NoiseKind::Poisson {
            target_snr_db: a.snr.expect("required by clap"),
        },
        NoiseChoice::SaltPepper => NoiseKind::SaltPepper {
            fraction: a.fraction.expect("required by clap"),
        },
    };
    let noisy = NoiseSpec { kind, seed: a.seed }.apply(&ds.images)?;
    let mut out = Outputs::default();
    claim_dataset_dir(&a.out, &mut out)?;
    save_dataset(&a.out, &noisy, &ds.lights, ds.mask.as_ref(), ds.ground_truth.as_ref())?;
    out.commit();
    Ok(())
}

fn run_solve(a: &SolveArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let ds = load_dataset(&a.dataset)?;
    let problem = Problem::with_config(ds.images.clone(), ds.lights.clone(), &cfg)?;
    let report = solve(a.method, &problem, &cfg)?;
    let normals = report.normals.normalized();

    let mut out = Outputs::default();
    if !a.out.exists() {
        out.add(&a.out);
    }
    create_dir(&a.out)?;
    save_normal_map(&normals, &out.add(a.out.join("normals.pfm")))?;
    save_normal_png(&normals, &out.add(a.out.join("normals.png")))?;
    write_text(
        &out.add(a.out.join("cost_trace.csv")),
        &cost_trace_csv(&report.cost_trace, &report.sparsity_trace),
    )?;
    if let Some(summary) = evaluate(&normals, &ds) {
        let s = summary?;
        let (rows, cols) = (s.rows, s.cols);
        save_scalar_map(&s.per_pixel, rows, cols, &out.add(a.out.join("errors.pfm")))?;
        save_error_png(&s.per_pixel, rows, cols, &out.add(a.out.join("errors.png")))?;
        let row = summary_row(&ds.name, a.method.name(), &params_text(a.method, &cfg), &s);
        write_text(&out.add(a.out.join("summary.csv")), &summary_csv([&row]))?;
        println!("{}: mean {:.4} deg, median {:.4} deg", a.method, s.mean_deg, s.median_deg);
    }
    out.commit();
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let est = load_normal_map(&a.est)?;
    let gt = load_normal_map(&a.gt)?;
    let mask: Option<PixelMask> = a.mask.as_deref().map(crate::io::png::read_mask).transpose()?;
    let s = angular_error(&est, &gt, mask.as_ref())?;
    let mut out = Outputs::default();
    if let Some(p) = &a.csv {
        let name = a.est.display().to_string();
        write_text(&out.add(p), &summary_csv([&summary_row(&name, "eval", "-", &s)]))?;
    }
    if let Some(p) = &a.error_png {
        save_error_png(&s.per_pixel, s.rows, s.cols, &out.add(p))?;
    }
    println!(
        "mean {:.6} deg, median {:.6} deg, evaluated {}, excluded {}",
        s.mean_deg, s.median_deg, s.evaluated, s.excluded
    );
    out.commit();
    Ok(())
}

fn run_integrate(a: &IntegrateArgs) -> Result<()> {
    let normals = load_normal_map(&a.normals)?;
    let h = integrate(&gradients_from_normals(&normals));
    let mut out = Outputs::default();
    save_scalar_map(h.heights(), h.rows(), h.cols(), &out.add(&a.out))?;
    if let Some(p) = &a.obj {
        write_text(&out.add(p), &height_obj(&h))?;
    }
    out.commit();
    Ok(())
}

fn run_sweep(a: &SweepArgs) -> Result<()> {
    let base = a.config.load()?;
    let ds = load_dataset(&a.dataset)?;
    if ds.ground_truth.is_none() {
        return Err(Error::InvalidArgument(format!(
            "{} has no ground-truth normals to sweep against",
            a.dataset.display()
        )));
    }
    let ps = if a.ps.is_empty() { vec![base.p] } else { a.ps.clone() };
    let mut grid = Vec::new();
    for &p in &ps {
        for &lambda in &a.lambdas {
            for &mu in &a.mus {
                let mut cfg = base.clone();
                cfg.lambda = lambda;
                cfg.mu = mu;
                cfg.p = p;
                cfg.validate()?;
                grid.push(cfg);
            }
        }
    }
    let problem = Problem::with_config(ds.images.clone(), ds.lights.clone(), &base)?;
    // Each grid point owns its solver state; rows keep grid order.
    let rows: Vec<String> = grid
        .par_iter()
        .map(|cfg| -> Result<String> {
            let report = solve(a.method, &problem, cfg)?;
            let s = evaluate(&report.normals, &ds).expect("checked above")?;
            Ok(summary_row(&ds.name, a.method.name(), &params_text(a.method, cfg), &s))
        })
        .collect::<Result<_>>()?;
    let mut out = Outputs::default();
    write_text(&out.add(&a.out), &summary_csv(&rows))?;
    out.commit();
    Ok(())
}

fn run_dict_study(a: &DictStudyArgs) -> Result<()> {
    let normals = match &a.dataset {
        Some(dir) => load_dataset(dir)?
            .ground_truth
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no ground-truth normals", dir.display())))?,
        None => {
            let lights = random_lights(3, 30.0, a.seed);
            render_sphere(a.size, &lights, None)?.normals
        }
    };
    let grid = PatchGrid::square(normals.rows(), normals.cols(), a.window, a.stride)?;
    let patches = grid.extract(&normals)?;
    let rows: Vec<String> = a
        .mus
        .par_iter()
        .map(|&mu| -> Result<String> {
            let cfg = LearnConfig {
                mu,
                atoms: a.atoms,
                passes: a.passes,
                seed: a.seed,
                q: DEFAULT_Q,
            };
            let r = learn_dictionary(&patches, grid.window(), &cfg)?;
            Ok(format!(
                "{mu},{:.6},{:.6e},{:.6e}",
                r.codes.nonzero_fraction(),
                r.nsre.last().expect("at least one pass"),
                r.objective.last().expect("at least one pass")
            ))
        })
        .collect::<Result<_>>()?;
    let mut text = String::from("mu,nonzero_fraction,nsre,objective\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    let mut out = Outputs::default();
    write_text(&out.add(&a.out), &text)?;
    out.commit();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::RenderSynth(a) => run_render(a),
        Command::AddNoise(a) => run_noise(a),
        Command::Solve(a) => run_solve(a),
        Command::Eval(a) => run_eval(a),
        Command::Integrate(a) => run_integrate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::DictStudy(a) => run_dict_study(a),
    }
}

/// Parse `args`, run, and report errors on stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Display already includes the underlying cause.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
