//! The `dpm` command line: synth, field, dataset, train, segment, eval and
//! render.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error, 3 rollout did not
//! converge.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use crate::agent::{init_state, rollout, AgentError, Policy, Trajectory};
use crate::config::{ConfigError, Manifest, ManifestPair, RunConfig};
use crate::field::{build_dynamic, FieldBundle, FieldError};
use crate::geometry::{Contour, ContourError};
use crate::metrics::{evaluate_case, MetricsError, Report};
use crate::model::{init_model, load_checkpoint, save_checkpoint, train_with, ModelError};
use crate::patches::{build_dataset, Dataset, PatchError};
use crate::pgm::{self, PgmError};
use crate::svg::{render_svg, SvgError};
use crate::synth::{gen_dataset, ShapeSpec, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dpm", version, about = "Limit-cycle contour segmentation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run configuration shared by the pipeline stages.
#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set model.epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic image/mask pairs and a manifest.
    Synth {
        /// Shape spec JSON; defaults are used for missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the vector field of a mask.
    Field {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample training patches from the pairs of a manifest.
    Dataset {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy model on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out the agent from a seed point and write the converged contour.
    Segment {
        #[arg(long)]
        image: PathBuf,
        /// Trained checkpoint. Not needed with --oracle-field.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        seed_x: f64,
        #[arg(long)]
        seed_y: f64,
        /// Drive the agent with this field instead of a model.
        #[arg(long)]
        oracle_field: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        traj: Option<PathBuf>,
    },
    /// Score predicted contours against label masks.
    Eval {
        /// Contour CSV. Repeat together with --truth for several cases.
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, required = true)]
        truth: Vec<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a field, a trajectory and/or a contour as SVG.
    Render {
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        contour: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Svg(#[from] SvgError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Agent(AgentError::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
            _ => EXIT_DOMAIN,
        }
    }
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::File {
        path: path.to_owned(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(file_err(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(path).map_err(file_err(path))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(file_err(path))
}

/// Sets `a.b.c` in a JSON object, creating intermediate objects.
fn set_key(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {key}: {part} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut value = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(file_err(path))?;
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.clone(),
                source,
            })?
        }
        None => Value::Object(Default::default()),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        set_key(&mut value, k, v)?;
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|source| ConfigError::Parse {
        path: args.config.clone().unwrap_or_else(|| PathBuf::from("<flags>")),
        source,
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_synth(spec: Option<&Path>, n: usize, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec: ShapeSpec = match spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(file_err(path))?;
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.to_owned(),
                source,
            })?
        }
        None => ShapeSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let pairs = gen_dataset(n, &spec)?;
    fs::create_dir_all(out).map_err(file_err(out))?;
    let mut entries = Vec::with_capacity(n);
    for p in &pairs {
        let image = PathBuf::from(format!("image_{:04}.pgm", p.index));
        let mask = PathBuf::from(format!("mask_{:04}.pgm", p.index));
        pgm::write_image(&out.join(&image), &p.image)?;
        pgm::write_mask(&out.join(&mask), &p.mask)?;
        entries.push(ManifestPair {
            image,
            mask,
            index: p.index,
            test: p.is_test(),
        });
    }
    let manifest = Manifest { pairs: entries, spec };
    let path = out.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(file_err(&path))?;
    Ok(())
}

fn cmd_field(mask: &Path, out: &Path) -> Result<(), CliError> {
    let fb = build_dynamic(&pgm::read_mask(mask)?)?;
    let mut w = create(out)?;
    fb.write_to(&mut w)?;
    finish(w, out)
}

fn cmd_dataset(manifest: &Path, cfg: &ConfigArgs, split: Split, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(cfg)?;
    let m = Manifest::load(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for p in &m.pairs {
        let keep = match split {
            Split::Train => !p.test,
            Split::Test => p.test,
            Split::All => true,
        };
        if keep {
            let img = pgm::read_image(&dir.join(&p.image), cfg.spacing_mm)?;
            let mask = pgm::read_mask(&dir.join(&p.mask))?;
            pairs.push((img, mask));
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Usage("the selected split of the manifest is empty".into()));
    }
    let ds = build_dataset(&pairs, &cfg.dataset_config())?;
    eprintln!("{} samples from {} images", ds.len(), pairs.len());
    let mut w = create(out)?;
    ds.write_to(&mut w)?;
    finish(w, out)
}

fn cmd_train(dataset: &Path, cfg: &ConfigArgs, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(cfg)?;
    let ds = Dataset::read_from(open(dataset)?)?;
    let mut arch = cfg.architecture();
    if cfg.model.arch.is_none() && ds.patch_size != cfg.patch_size {
        arch = crate::model::Architecture::default_for(ds.patch_size);
    }
    let mut model = init_model::<f32>(&arch, cfg.seeds.init)?;
    train_with(&mut model, &ds, &cfg.train_config(), |epoch, loss| {
        eprintln!("epoch {:>3}  loss {loss:.6}", epoch + 1);
    })?;
    save_checkpoint(&model, out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_segment(
    image: &Path,
    model: Option<&Path>,
    seed: [f64; 2],
    oracle_field: Option<&Path>,
    cfg: &ConfigArgs,
    out: &Path,
    traj: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = load_config(cfg)?;
    let img = pgm::read_image(image, cfg.spacing_mm)?;
    let field;
    let net;
    let policy = match (oracle_field, model) {
        (Some(path), _) => {
            field = FieldBundle::read_from(open(path)?)?;
            Policy::Oracle(&field)
        }
        (None, Some(path)) => {
            net = load_checkpoint(path)?;
            cfg.patch_size = net.arch().input_size;
            Policy::Learned(&net)
        }
        (None, None) => return Err(CliError::Usage("segment needs --model or --oracle-field".into())),
    };
    let rc = cfg.rollout_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.rollout);
    let init = init_state(&img, seed, None, rc.step.patch_size, &mut rng)?;
    let write_traj = |t: &Trajectory| -> Result<(), CliError> {
        if let Some(path) = traj {
            let mut w = create(path)?;
            t.write_csv(&mut w).map_err(file_err(path))?;
            finish(w, path)?;
        }
        Ok(())
    };
    match rollout(&policy, &img, init, &rc) {
        Ok(r) => {
            write_traj(&r.trajectory)?;
            let mut w = create(out)?;
            r.contour.write_csv(&mut w)?;
            finish(w, out)?;
            eprintln!(
                "converged after {} steps, {} crossings",
                r.trajectory.states.len() - 1,
                r.crossings.len()
            );
            Ok(())
        }
        Err(AgentError::NonConvergence { max_steps, trajectory }) => {
            write_traj(&trajectory)?;
            Err(AgentError::NonConvergence { max_steps, trajectory }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn read_contour(path: &Path) -> Result<Contour, CliError> {
    Ok(Contour::read_csv(open(path)?)?)
}

fn cmd_eval(pred: &[PathBuf], truth: &[PathBuf], spacing: f64, out: &Path) -> Result<(), CliError> {
    if pred.len() != truth.len() {
        return Err(CliError::Usage(format!(
            "{} --pred files but {} --truth files",
            pred.len(),
            truth.len()
        )));
    }
    let mut cases = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(truth) {
        let contour = read_contour(p)?;
        let mask = pgm::read_mask(t)?;
        cases.push(evaluate_case(&contour, &mask, spacing)?);
    }
    let report = Report::new(cases)?;
    let a = &report.aggregate;
    if let (Some(d), Some(apd)) = (a.dice, a.apd_mm) {
        eprintln!(
            "dice {}  apd {} mm  good {:.1}%",
            d.format(2),
            apd.format(2),
            a.good_rate_pct
        );
    }
    fs::write(out, report.to_json()).map_err(file_err(out))?;
    Ok(())
}

fn cmd_render(field: Option<&Path>, traj: Option<&Path>, contour: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let field = field.map(|p| Ok::<_, CliError>(FieldBundle::read_from(open(p)?)?)).transpose()?;
    let traj = traj
        .map(|p| Trajectory::read_csv(open(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))))
        .transpose()?;
    let contour = contour.map(read_contour).transpose()?;
    let svg = render_svg(field.as_ref(), traj.as_ref(), contour.as_ref())?;
    fs::write(out, svg).map_err(file_err(out))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { spec, n, out, seed } => cmd_synth(spec.as_deref(), n, &out, seed),
        Command::Field { mask, out } => cmd_field(&mask, &out),
        Command::Dataset {
            manifest,
            cfg,
            split,
            out,
        } => cmd_dataset(&manifest, &cfg, split, &out),
        Command::Train { dataset, cfg, out } => cmd_train(&dataset, &cfg, &out),
        Command::Segment {
            image,
            model,
            seed_x,
            seed_y,
            oracle_field,
            cfg,
            out,
            traj,
        } => cmd_segment(
            &image,
            model.as_deref(),
            [seed_x, seed_y],
            oracle_field.as_deref(),
            &cfg,
            &out,
            traj.as_deref(),
        ),
        Command::Eval {
            pred,
            truth,
            spacing,
            out,
        } => cmd_eval(&pred, &truth, spacing, &out),
        Command::Render {
            field,
            traj,
            contour,
            out,
        } => cmd_render(field.as_deref(), traj.as_deref(), contour.as_deref(), &out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_key_builds_nested_objects() {
        let mut v = serde_json::json!({"model": {"epochs": 4}});
        set_key(&mut v, "model.batch", serde_json::json!(8)).unwrap();
        set_key(&mut v, "rollout.k", serde_json::json!(3)).unwrap();
        assert_eq!(v, serde_json::json!({"model": {"epochs": 4, "batch": 8}, "rollout": {"k": 3}}));
        assert!(set_key(&mut v, "model.epochs.x", serde_json::json!(1)).is_err());
    }

    #[test]
    fn overrides_apply_over_defaults() {
        let args = ConfigArgs {
            config: None,
            overrides: vec!["model.epochs=3".into(), "h=1.5".into()],
        };
        let cfg = load_config(&args).unwrap();
        assert_eq!((cfg.model.epochs, cfg.h), (3, 1.5));
        let bad = ConfigArgs {
            config: None,
            overrides: vec!["model.epoch=3".into()],
        };
        assert!(matches!(load_config(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["dpm", "field", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["dpm"]), EXIT_USAGE);
        assert_eq!(run(["dpm", "--help"]), EXIT_OK);
    }
}
