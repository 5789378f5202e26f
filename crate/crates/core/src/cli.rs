//! Command-line front end. Exit codes: 0 success, 1 invalid input or a
//! failed check, 2 file-system failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::aggregate::{mode_report, tp_fp_split, CanonicalGrid, ExplainedObject, SetSummary};
use crate::config::{DetectorSource, RunConfig};
use crate::detection::{AttributeMask, ClassLabel, Detection};
use crate::detector::{load_dump, Detector, DumpDetector, FeatureDump, ReferenceDetector};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_scene, ObjectScores};
use crate::explain::SceneExplainer;
use crate::geometry::{canonicalize, point_in_box};
use crate::io::{load_scene, load_scene_dir, save_scene, write_saliency, SaliencyFormat};
use crate::metrics::{to_jsonl, MetricRecord};
use crate::scene::{synthetic_dataset, synthetic_scene, SceneRecord};
use crate::selftest::{gradient_suite, iou_suite, nmf_suite};

#[derive(Debug, Parser)]
#[command(name = "ffam", version, about = "Saliency maps for voxel-based 3D detectors")]
pub struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Saliency map of one detection, written as CSV or PLY.
    Explain(ExplainArgs),
    /// Deletion, insertion, VEA, PG and enPG for every well-detected object, as JSONL.
    Eval {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean metrics over the concept-count, upsampling and block grids.
    Sweep {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Canonical-frame average saliency per class and attribute mask.
    Aggregate {
        /// Comma-separated masks such as `all,xyz,lwh`; defaults to `eval.mask`.
        #[arg(long, value_delimiter = ',')]
        masks: Vec<String>,
    },
    /// True-positive versus false-positive mode report.
    Modes,
    /// Gradient, NMF and IoU consistency suites.
    Selftest(SelftestArgs),
    /// Writes the configured scenes as KITTI scans with JSON labels.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Captures reference-detector feature dumps for the configured scenes.
    Dump {
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the effective configuration and its hash.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// KITTI scan; labels are read from a sibling `.json` if present.
    #[arg(long, conflicts_with = "synthetic")]
    pub scene: Option<PathBuf>,
    /// Seed of a synthetic scene instead of a scan.
    #[arg(long)]
    pub synthetic: Option<u64>,
    /// Feature dump to replay instead of the configured detector.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Index into the detector's output.
    #[arg(long)]
    pub detection: usize,
    /// Attribute mask, e.g. `all`, `xyz`, `s`; defaults to `eval.mask`.
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// `csv` or `ply`; taken from the output extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 2)]
    pub grad_scenes: u64,
    #[arg(long, default_value_t = 20)]
    pub nmf_cases: u64,
    #[arg(long, default_value_t = 100)]
    pub iou_pairs: usize,
    #[arg(long, default_value_t = 50_000)]
    pub iou_samples: usize,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        2
    } else {
        1
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Explain(args) => explain(&cfg, args),
        Command::Eval { out } => eval(&cfg, out.as_deref()),
        Command::Sweep { out } => sweep(&cfg, out.as_deref()),
        Command::Aggregate { masks } => aggregate(&cfg, masks),
        Command::Modes => modes(&cfg),
        Command::Selftest(args) => selftest(&cfg, args),
        Command::Generate { out } => generate(&cfg, out),
        Command::Dump { out } => dump(&cfg, out),
        Command::ShowConfig => {
            print!("{}", cfg.to_text());
            println!("# hash {}", cfg.hash());
            Ok(())
        }
    })
}

/// The configured scenes, sorted by id.
pub fn load_scenes(cfg: &RunConfig) -> Result<Vec<SceneRecord>> {
    let mut scenes = match &cfg.scenes_dir {
        Some(dir) => load_scene_dir(dir)?,
        None => synthetic_dataset(cfg.scene_seed, cfg.scene_count, &cfg.scene_config()),
    };
    scenes.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    Ok(scenes)
}

enum SceneDetector<'a> {
    Reference(&'a ReferenceDetector),
    Dump(DumpDetector),
}

impl SceneDetector<'_> {
    fn get(&self) -> &dyn Detector {
        match self {
            SceneDetector::Reference(d) => *d,
            SceneDetector::Dump(d) => d,
        }
    }
}

struct Detectors {
    reference: ReferenceDetector,
    dumps: Option<PathBuf>,
}

impl Detectors {
    fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            reference: ReferenceDetector::new(cfg.reference.clone())?,
            dumps: match &cfg.detector {
                DetectorSource::Reference => None,
                DetectorSource::Dumps(dir) => Some(dir.clone()),
            },
        })
    }

    fn for_scene(&self, scene_id: &str) -> Result<SceneDetector<'_>> {
        Ok(match &self.dumps {
            None => SceneDetector::Reference(&self.reference),
            Some(dir) => SceneDetector::Dump(load_dump(&dir.join(format!("{scene_id}.ffdp")))?),
        })
    }
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn detection_json(d: &Detection) -> Value {
    json!({
        "center": d.center,
        "size": d.size,
        "yaw": d.yaw,
        "score": d.score,
        "class": d.class.name(),
    })
}

fn explain(cfg: &RunConfig, args: &ExplainArgs) -> Result<()> {
    let scene = match (&args.scene, args.synthetic) {
        (Some(path), _) => {
            let labels = path.with_extension("json");
            load_scene(path, labels.exists().then_some(labels.as_path()))?
        }
        (None, Some(seed)) => synthetic_scene(seed, &cfg.scene_config()),
        (None, None) => {
            return Err(Error::InvalidConfig("explain needs --scene or --synthetic".into()))
        }
    };
    let format = match &args.format {
        Some(f) => f.parse()?,
        None => SaliencyFormat::from_path(&args.out).ok_or_else(|| {
            Error::InvalidConfig("cannot infer the output format; pass --format".into())
        })?,
    };
    let mask: AttributeMask = match &args.mask {
        Some(m) => m.parse()?,
        None => cfg.mask,
    };
    let detectors = Detectors::new(cfg)?;
    let holder = match &args.dump {
        Some(path) => SceneDetector::Dump(load_dump(path)?),
        None => detectors.for_scene(&scene.scene_id)?,
    };
    let det = holder.get();
    let predictions = det.detect(&scene.cloud)?;
    let target = *predictions.get(args.detection).ok_or_else(|| {
        Error::DetectionNotFound(format!(
            "id {} (the detector returned {} detections)",
            args.detection,
            predictions.len()
        ))
    })?;
    let explainer = SceneExplainer::new(det, &scene.cloud, &cfg.pipeline)?;
    let saliency = explainer.explain(&target, mask)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_saliency(&scene.cloud, &saliency, format, &args.out)?;
    let meta = json!({
        "config_hash": cfg.hash(),
        "scene_id": scene.scene_id,
        "detection_id": args.detection,
        "detection": detection_json(&target),
        "mask": mask.to_string(),
        "format": format.to_string(),
        "points": scene.cloud.len(),
    });
    let meta_path = PathBuf::from(format!("{}.json", args.out.display()));
    write_output(&meta_path, &serde_json::to_string_pretty(&meta).expect("plain values"))?;
    println!(
        "{} {} detection {} ({}): {} points -> {}",
        scene.scene_id,
        cfg.pipeline.ablation,
        args.detection,
        target.class,
        scene.cloud.len(),
        args.out.display()
    );
    Ok(())
}

/// Scores of every well-detected object, scenes in parallel, ordered by scene id.
pub fn evaluate_all(cfg: &RunConfig, scenes: &[SceneRecord]) -> Result<Vec<ObjectScores>> {
    let detectors = Detectors::new(cfg)?;
    let opts = cfg.eval_options();
    let per_scene: Vec<Result<Vec<ObjectScores>>> = scenes
        .par_iter()
        .map(|s| {
            let holder = detectors.for_scene(&s.scene_id)?;
            evaluate_scene(holder.get(), s, &cfg.pipeline, &opts)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_scene {
        all.extend(r?);
    }
    all.sort_by(|a, b| (&a.scene_id, a.detection_id).cmp(&(&b.scene_id, b.detection_id)));
    Ok(all)
}

/// Mean of each metric over `scores`; `None` where no object has a value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricMeans {
    pub objects: usize,
    pub deletion: Option<f64>,
    pub insertion: Option<f64>,
    pub vea: Option<f64>,
    pub pg: Option<f64>,
    pub enpg: Option<f64>,
}

pub fn metric_means(scores: &[ObjectScores]) -> MetricMeans {
    let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    MetricMeans {
        objects: scores.len(),
        deletion: mean(scores.iter().filter_map(|s| s.deletion_auc).collect()),
        insertion: mean(scores.iter().filter_map(|s| s.insertion_auc).collect()),
        vea: mean(scores.iter().map(|s| s.vea).collect()),
        pg: mean(scores.iter().map(|s| f64::from(u8::from(s.pointing_game))).collect()),
        enpg: mean(scores.iter().map(|s| s.energy_pg).collect()),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.4}"))
}

fn eval(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let scenes = load_scenes(cfg)?;
    let scores = evaluate_all(cfg, &scenes)?;
    let hash = cfg.hash();
    let records: Vec<MetricRecord> = scores.iter().flat_map(|s| s.records(&hash)).collect();
    let path = out.map_or_else(|| cfg.output_dir.join("metrics.jsonl"), Path::to_path_buf);
    write_output(&path, &to_jsonl(&records))?;
    let m = metric_means(&scores);
    println!(
        "{} scenes, {} well-detected objects: deletion {} insertion {} vea {} pg {} enpg {}",
        scenes.len(),
        m.objects,
        cell(m.deletion),
        cell(m.insertion),
        cell(m.vea),
        cell(m.pg),
        cell(m.enpg)
    );
    println!("wrote {}", path.display());
    Ok(())
}

/// One row of the sweep table: which knob, its value, and the configuration to run.
pub fn sweep_settings(base: &RunConfig) -> Vec<(&'static str, String, RunConfig)> {
    let mut rows = Vec::new();
    for r in [8, 16, 32, 64, 128] {
        let mut c = base.clone();
        c.pipeline.nmf.rank = r;
        rows.push(("rank", r.to_string(), c));
    }
    for (range, k) in [(0, 1), (1, 4), (2, 16), (3, 64)] {
        let mut c = base.clone();
        c.pipeline.upsample.range_threshold = range;
        c.pipeline.upsample.k = k;
        rows.push(("range_k", format!("({range},{k})"), c));
    }
    for block in 1..=4 {
        let mut c = base.clone();
        c.pipeline.block_index = block;
        rows.push(("block", block.to_string(), c));
    }
    rows
}

fn sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let scenes = load_scenes(cfg)?;
    let mut text = format!("# config_hash {}\n", cfg.hash());
    text.push_str("group\tsetting\tobjects\tdeletion\tinsertion\tvea\tpg\tenpg\n");
    for (group, setting, c) in sweep_settings(cfg) {
        let m = metric_means(&evaluate_all(&c, &scenes)?);
        let row = format!(
            "{group}\t{setting}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            m.objects,
            cell(m.deletion),
            cell(m.insertion),
            cell(m.vea),
            cell(m.pg),
            cell(m.enpg)
        );
        print!("{row}");
        text.push_str(&row);
    }
    let path = out.map_or_else(|| cfg.output_dir.join("sweep.tsv"), Path::to_path_buf);
    write_output(&path, &text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Explains the chosen predictions of one scene under each mask.
fn explain_predictions(
    det: &dyn Detector,
    scene: &SceneRecord,
    cfg: &RunConfig,
    masks: &[AttributeMask],
    tp_only: bool,
) -> Result<Vec<(AttributeMask, ExplainedObject)>> {
    let predictions = det.detect(&scene.cloud)?;
    let (tp, fp) = tp_fp_split(&predictions, &scene.ground_truth, &cfg.thresholds);
    let chosen: Vec<(usize, bool)> = tp
        .iter()
        .map(|&i| (i, true))
        .chain(fp.iter().filter(|_| !tp_only).map(|&i| (i, false)))
        .collect();
    if chosen.is_empty() {
        return Ok(Vec::new());
    }
    let explainer = SceneExplainer::new(det, &scene.cloud, &cfg.pipeline)?;
    let mut out = Vec::new();
    for (i, true_positive) in chosen {
        let d = predictions[i];
        let bbox = d.bbox();
        let in_box_points = scene.cloud.iter().filter(|p| point_in_box(p.xyz(), &bbox)).count();
        for &mask in masks {
            let s = explainer.explain(&d, mask)?;
            out.push((
                mask,
                ExplainedObject {
                    class: d.class,
                    bbox,
                    true_positive,
                    in_box_points,
                    samples: canonicalize(&scene.cloud.points, &s.scores, &bbox)?,
                },
            ));
        }
    }
    Ok(out)
}

fn explain_scenes(
    cfg: &RunConfig,
    masks: &[AttributeMask],
    tp_only: bool,
) -> Result<Vec<(AttributeMask, ExplainedObject)>> {
    let scenes = load_scenes(cfg)?;
    let detectors = Detectors::new(cfg)?;
    let per_scene: Vec<Result<Vec<_>>> = scenes
        .par_iter()
        .map(|s| {
            let holder = detectors.for_scene(&s.scene_id)?;
            explain_predictions(holder.get(), s, cfg, masks, tp_only)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_scene {
        all.extend(r?);
    }
    Ok(all)
}

fn save_grid(dir: &Path, stem: &str, grid: &CanonicalGrid) -> Result<Value> {
    let map = grid.finalize();
    fs::write(dir.join(format!("{stem}.grid")), map.to_bytes())?;
    fs::write(dir.join(format!("{stem}.csv")), map.to_csv())?;
    Ok(json!({
        "file": format!("{stem}.grid"),
        "points": grid.total_ingested() - grid.discarded(),
        "discarded": grid.discarded(),
    }))
}

fn aggregate(cfg: &RunConfig, masks: &[String]) -> Result<()> {
    let masks: Vec<AttributeMask> = if masks.is_empty() {
        vec![cfg.mask]
    } else {
        masks.iter().map(|m| m.parse()).collect::<Result<_>>()?
    };
    let resolution = cfg.aggregate_resolution as u32;
    let mut grids: BTreeMap<(ClassLabel, AttributeMask), (usize, CanonicalGrid)> = BTreeMap::new();
    for (mask, obj) in explain_scenes(cfg, &masks, true)? {
        let entry = match grids.entry((obj.class, mask)) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert((0, CanonicalGrid::new(resolution)?)),
        };
        entry.0 += 1;
        entry.1.accumulate(&obj.samples);
    }
    let dir = cfg.output_dir.join("aggregate");
    fs::create_dir_all(&dir)?;
    let mut maps = Vec::new();
    for ((class, mask), (objects, grid)) in &grids {
        let stem = format!("{}_{}", class.name().to_ascii_lowercase(), mask);
        let mut entry = save_grid(&dir, &stem, grid)?;
        entry["class"] = json!(class.name());
        entry["mask"] = json!(mask.to_string());
        entry["objects"] = json!(objects);
        println!("{stem}: {objects} objects");
        maps.push(entry);
    }
    let manifest = json!({
        "config_hash": cfg.hash(),
        "resolution": resolution,
        "maps": maps,
    });
    write_output(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest).expect("plain values"))?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn summary_json(s: &SetSummary) -> Value {
    let named = |m: &BTreeMap<ClassLabel, f64>| {
        m.iter()
            .map(|(k, v)| (k.name().to_string(), json!(v)))
            .collect::<serde_json::Map<_, _>>()
    };
    json!({
        "objects": s.objects,
        "class_ratios": named(&s.class_ratios),
        "mean_points": s.mean_points,
        "mean_points_by_class": named(&s.mean_points_by_class),
    })
}

fn modes(cfg: &RunConfig) -> Result<()> {
    let objects: Vec<ExplainedObject> = explain_scenes(cfg, &[cfg.mask], false)?
        .into_iter()
        .map(|(_, o)| o)
        .collect();
    let report = mode_report(&objects, cfg.aggregate_resolution as u32)?;
    let dir = cfg.output_dir.join("modes");
    fs::create_dir_all(&dir)?;
    let mut maps = Vec::new();
    for (set, summary) in [("tp", &report.true_positives), ("fp", &report.false_positives)] {
        for (class, grid) in &summary.maps {
            let stem = format!("{set}_{}", class.name().to_ascii_lowercase());
            let mut entry = save_grid(&dir, &stem, grid)?;
            entry["set"] = json!(set);
            entry["class"] = json!(class.name());
            maps.push(entry);
        }
    }
    let doc = json!({
        "config_hash": cfg.hash(),
        "mask": cfg.mask.to_string(),
        "true_positives": summary_json(&report.true_positives),
        "false_positives": summary_json(&report.false_positives),
        "density_ratio": report.density_ratio(),
        "maps": maps,
    });
    write_output(&dir.join("report.json"), &serde_json::to_string_pretty(&doc).expect("plain values"))?;
    println!(
        "true positives {}, false positives {}, density ratio {}",
        report.true_positives.objects,
        report.false_positives.objects,
        cell(report.density_ratio())
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn selftest(cfg: &RunConfig, args: &SelftestArgs) -> Result<()> {
    let seeds: Vec<u64> = (0..args.grad_scenes).collect();
    let reports = [
        gradient_suite(&cfg.reference, &seeds)?,
        nmf_suite(args.nmf_cases)?,
        iou_suite(args.iou_pairs, args.iou_samples, 0, 0.02),
    ];
    for r in &reports {
        println!("{r}");
    }
    match reports.iter().filter(|r| !r.passed()).count() {
        0 => Ok(()),
        n => Err(Error::SelfTestFailed(n)),
    }
}

fn generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let scenes = load_scenes(cfg)?;
    for s in &scenes {
        save_scene(out, s)?;
    }
    println!("wrote {} scenes to {}", scenes.len(), out.display());
    Ok(())
}

fn dump(cfg: &RunConfig, out: &Path) -> Result<()> {
    let scenes = load_scenes(cfg)?;
    let det = ReferenceDetector::new(cfg.reference.clone())?;
    fs::create_dir_all(out)?;
    for s in &scenes {
        let d = FeatureDump::capture(&det, &s.cloud, cfg.pipeline.block_index, &[cfg.mask])?;
        d.save(&out.join(format!("{}.ffdp", s.scene_id)))?;
    }
    println!("wrote {} dumps to {}", scenes.len(), out.display());
    Ok(())
}
