//! `jigsaw`: generate scenes, train the composition head, evaluate it against
//! the add and subtract baselines, and report the learned occlusion order.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use jigsaw_core::chart::relation_chart;
use jigsaw_core::io::{channel_pgm, loss_csv, mask_pgm, read_json, to_json, Manifest, WeightsJson};
use jigsaw_core::jigsaw::{make_sample, predict_amodal};
use jigsaw_core::pipeline::{compare_methods, comparison_table, generate_splits, relation_findings, train_head, RunConfig};
use jigsaw_core::relation::{prior_agreement, RelationFinding, DEFAULT_MARGIN};
use jigsaw_core::Scene;

#[derive(Parser)]
#[command(name = "jigsaw", version, about = "Amodal segmentation by composing visible and occluded masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the train and validation scenes and write their manifests.
    Gen(Common),
    /// Fit the composition head on the training manifest.
    Train(TrainArgs),
    /// Score the head and both baselines on the validation manifest.
    Eval(EvalArgs),
    /// Read the occlusion order out of trained weights.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the scene, noise and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Probability at which a pixel counts as foreground.
    #[arg(long)]
    threshold: Option<f64>,
    /// Occlusion rate above which an instance counts as occluded.
    #[arg(long = "occlusion-filter")]
    occlusion_filter: Option<f64>,
    /// Also write PGM images of masks and branch outputs.
    #[arg(long = "dump-masks")]
    dump_masks: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Training manifest; defaults to `train_manifest.json` in the output directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Validation manifest; defaults to `val_manifest.json` in the output directory.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Weights file; defaults to `weights.json` in the output directory.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Weights file; defaults to `weights.json` in the output directory.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Target category id (repeatable); every category when omitted.
    #[arg(long)]
    category: Vec<usize>,
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    dump_masks: bool,
}

impl Common {
    fn load(&self) -> Result<Run> {
        let text = fs::read_to_string(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        let mut cfg = RunConfig::from_json(&text).with_context(|| format!("invalid config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.override_seed(seed);
        }
        if let Some(t) = self.threshold {
            cfg.eval.threshold = t;
        }
        if let Some(f) = self.occlusion_filter {
            cfg.eval.occlusion_filter = f;
        }
        cfg.validate().context("invalid options")?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
        Ok(Run { cfg, out, dump_masks: self.dump_masks })
    }
}

/// Files are staged in memory so that nothing is written unless every
/// input has been read and checked.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.0.push((path, bytes.into()));
    }

    fn write(self) -> Result<()> {
        for (path, bytes) in self.0 {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn load_scenes(path: &Path, cfg: &RunConfig) -> Result<Vec<Scene>> {
    let manifest: Manifest = read_json(path)?;
    if manifest.prior() != cfg.prior {
        bail!("{}: categories or depth noise differ from the config's prior", path.display());
    }
    if manifest.config.width != cfg.scene.width || manifest.config.height != cfg.scene.height {
        bail!("{}: canvas size differs from the config's scene size", path.display());
    }
    Ok(manifest.scenes()?)
}

fn load_weights(path: &Path, cfg: &RunConfig) -> Result<jigsaw_core::CompositionWeights> {
    let file: WeightsJson = read_json(path)?;
    let w = file.weights()?;
    if w.n() != cfg.n() {
        bail!("{}: weights have {} categories, config has {}", path.display(), w.n(), cfg.n());
    }
    Ok(w)
}

fn dump_scene_masks(outputs: &mut Outputs, dir: &Path, split: &str, scenes: &[Scene]) {
    for scene in scenes {
        for (k, rec) in scene.instances.iter().enumerate() {
            let stem = format!("{split}_{}_{k}", scene.index);
            outputs.add(dir.join(format!("{stem}_amodal.pgm")), mask_pgm(rec.amodal()));
            outputs.add(dir.join(format!("{stem}_visible.pgm")), mask_pgm(rec.visible()));
            outputs.add(dir.join(format!("{stem}_occluded.pgm")), mask_pgm(rec.occluded()));
        }
    }
}

fn gen(args: &Common) -> Result<()> {
    let run = args.load()?;
    let (train, val) = generate_splits(&run.cfg)?;
    let mut outputs = Outputs::default();
    for (name, scenes) in [("train", &train), ("val", &val)] {
        let manifest = Manifest::from_scenes(&run.cfg.prior, &run.cfg.scene, scenes);
        outputs.add(run.out.join(format!("{name}_manifest.json")), to_json(&manifest)?);
        if run.dump_masks {
            dump_scene_masks(&mut outputs, &run.out.join("masks"), name, scenes);
        }
    }
    outputs.write()?;
    println!("wrote {} train and {} val scenes to {}", train.len(), val.len(), run.out.display());
    Ok(())
}

fn category_names(cfg: &RunConfig) -> Vec<String> {
    cfg.prior.categories.iter().map(|c| c.name.clone()).collect()
}

fn train(args: &TrainArgs) -> Result<()> {
    let run = args.common.load()?;
    let manifest = args.manifest.clone().unwrap_or_else(|| run.out.join("train_manifest.json"));
    let scenes = load_scenes(&manifest, &run.cfg)?;
    let outcome = train_head(&run.cfg, &scenes)?;
    let mut outputs = Outputs::default();
    outputs.add(run.out.join("weights.json"), to_json(&WeightsJson::new(&outcome.weights, category_names(&run.cfg)))?);
    outputs.add(run.out.join("loss.csv"), loss_csv(&outcome.losses));
    outputs.write()?;
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    println!("trained {} iterations, final loss {last:.6}", outcome.losses.len());
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let run = args.common.load()?;
    let manifest = args.manifest.clone().unwrap_or_else(|| run.out.join("val_manifest.json"));
    let weights = args.weights.clone().unwrap_or_else(|| run.out.join("weights.json"));
    let scenes = load_scenes(&manifest, &run.cfg)?;
    let w = load_weights(&weights, &run.cfg)?;
    let comparison = compare_methods(&w, &run.cfg, &scenes)?;
    let mut outputs = Outputs::default();
    outputs.add(run.out.join("eval_report.json"), to_json(&comparison)?);
    if run.dump_masks {
        let dir = run.out.join("masks");
        for scene in &scenes {
            for k in 0..scene.instances.len() {
                let s = make_sample(scene, k, &run.cfg.noise, run.cfg.n())?;
                let stem = format!("val_{}_{k}", scene.index);
                let pred = predict_amodal(&w, &s.vm, &s.om, s.category, run.cfg.eval.threshold)?;
                outputs.add(dir.join(format!("{stem}_pred_amodal.pgm")), mask_pgm(&pred));
                outputs.add(dir.join(format!("{stem}_vm.pgm")), channel_pgm(&s.vm, s.category));
                outputs.add(dir.join(format!("{stem}_om.pgm")), channel_pgm(&s.om, s.category));
            }
        }
    }
    outputs.write()?;
    print!("{}", comparison_table(&comparison, run.cfg.eval.occlusion_filter));
    Ok(())
}

#[derive(Serialize)]
struct FindingsFile {
    epsilon: f64,
    margin: f64,
    prior_agreement: f64,
    findings: Vec<RelationFinding>,
}

fn report(args: &ReportArgs) -> Result<()> {
    let run = args.common.load()?;
    let weights = args.weights.clone().unwrap_or_else(|| run.out.join("weights.json"));
    let w = load_weights(&weights, &run.cfg)?;
    let eps = run.cfg.eval.epsilon;
    let findings = relation_findings(&w, &args.category, eps)?;
    let agreement = prior_agreement(&findings, &run.cfg.prior, DEFAULT_MARGIN)?;
    let names = category_names(&run.cfg);
    let mut outputs = Outputs::default();
    let file = FindingsFile { epsilon: eps, margin: DEFAULT_MARGIN, prior_agreement: agreement, findings };
    outputs.add(run.out.join("findings.json"), to_json(&file)?);
    let targets: Vec<usize> = if args.category.is_empty() { (0..run.cfg.n()).collect() } else { args.category.clone() };
    for &t in &targets {
        let own: Vec<RelationFinding> = file.findings.iter().filter(|f| f.target == t).cloned().collect();
        let title = format!("Composition weights into {}", names[t]);
        outputs.add(run.out.join(format!("relation_{t}.svg")), relation_chart(&title, &own, &names));
    }
    outputs.write()?;
    for f in &file.findings {
        println!(
            "{:>10} <- {:<10} VW {:+.3}  OW {:+.3}  {:?}",
            names[f.target], names[f.other], f.vw, f.ow, f.direction
        );
    }
    println!("agreement with prior (margin {DEFAULT_MARGIN}): {agreement:.3}");
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Gen(args) => gen(&args),
        Command::Train(args) => train(&args),
        Command::Eval(args) => eval(&args),
        Command::Report(args) => report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
