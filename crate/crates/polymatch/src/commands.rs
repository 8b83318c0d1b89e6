//! Subcommands of the `upm2` tool.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use polymatch_core::geometry::Homography3x3;
use polymatch_core::groundtruth::{gt_from_depth, gt_match_by_similarity, GtMatrix};
use polymatch_core::local_match::{Channel, MatchPair, MatchResult};
use polymatch_core::metrics::{acr_correct, matching_precision, precision_recall_f1, sas, MetricsReport};
use polymatch_core::synth::{generate_scene, SceneSpec, Transform};
use polymatch_core::Polygon;

use crate::config::{parse_pairs, parse_value, PipelineConfig};
use crate::error::CliError;
use crate::formats::*;
use crate::pipeline::{detect_polygons, run_pipeline};
use crate::viz::{render_png, render_svg};

#[derive(Debug, Parser)]
#[command(name = "upm2", version, about = "Training-free stereo polygon matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (directory for `synth`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vectorize an instance-label PNG into polygons.
    Detect(DetectArgs),
    /// Match polygons between two views.
    Match(MatchArgs),
    /// Score a match file against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic stereo scene.
    Synth(SynthArgs),
    /// Render a side-by-side overlay as SVG and PNG.
    Viz(VizArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub masks: PathBuf,
    /// Image the masks belong to; dimensions must agree.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[arg(long)]
    pub polygons_left: PathBuf,
    #[arg(long)]
    pub polygons_right: PathBuf,
    #[arg(long)]
    pub keypoints: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long)]
    pub polygons_left: PathBuf,
    #[arg(long)]
    pub polygons_right: PathBuf,
    /// Depth ground truth: camera file plus both depth rasters.
    #[arg(long, requires_all = ["depth_left", "depth_right"], conflicts_with = "homography")]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub depth_left: Option<PathBuf>,
    #[arg(long)]
    pub depth_right: Option<PathBuf>,
    /// Similarity ground truth under a known left-to-right homography.
    #[arg(long)]
    pub homography: Option<PathBuf>,
    /// Timing statistics of the match run; defaults to the match file's sibling.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {}

#[derive(Debug, Clone, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[arg(long)]
    pub polygons_left: PathBuf,
    #[arg(long)]
    pub polygons_right: PathBuf,
    #[arg(long)]
    pub matches: PathBuf,
}

fn required_out(common: &Common) -> Result<&Path, CliError> {
    common.out.as_deref().ok_or_else(|| CliError::Precondition("--out is required".into()))
}

pub fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::from_text(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg = cfg.with_seed(s);
    }
    Ok(cfg)
}

/// `matches.jsonl` -> `matches.stats.jsonl`.
pub fn stats_path(matches: &Path) -> PathBuf {
    matches.with_extension("stats.jsonl")
}

pub fn cmd_detect(args: &DetectArgs, common: &Common) -> Result<usize, CliError> {
    let cfg = load_config(common)?;
    let out = required_out(common)?;
    let labels = read_labels(&args.masks)?;
    if let Some(img) = &args.image {
        let g = read_gray(img)?;
        if (g.width(), g.height()) != (labels.width(), labels.height()) {
            return Err(CliError::Schema(format!(
                "mask is {}x{} but image is {}x{}",
                labels.width(),
                labels.height(),
                g.width(),
                g.height()
            )));
        }
    }
    let polys = detect_polygons(&labels, &cfg)?;
    write_polygons(out, &polys)?;
    log::info!("{} polygons -> {}", polys.len(), out.display());
    Ok(polys.len())
}

pub fn cmd_match(args: &MatchArgs, common: &Common) -> Result<MatchResult, CliError> {
    let cfg = load_config(common)?;
    let out = required_out(common)?;
    let left = read_gray(&args.left)?;
    let right = read_gray(&args.right)?;
    let src = read_polygons(&args.polygons_left)?;
    let tgt = read_polygons(&args.polygons_right)?;
    let kps = load_keypoint_matches(
        &args.keypoints,
        Some((left.width(), left.height())),
        Some((right.width(), right.height())),
    )?;
    let res = run_pipeline(&left, &right, &src, &tgt, &kps, &cfg)?;
    write_matches(out, &res.result)?;
    let stats = StatsRecord::new(res.result.pairs.len(), res.annotated.len(), res.visited, &res.timings);
    write_atomic(&stats_path(out), &to_jsonl(&[stats]))?;
    log::info!("{} matches -> {} ({:.3} s)", res.result.pairs.len(), out.display(), res.timings.total);
    Ok(res.result)
}

/// Resolves match records against the polygon lists.
pub fn resolve_matches(recs: &[MatchRecord], src: &[Polygon], tgt: &[Polygon]) -> Result<MatchResult, CliError> {
    let index = |ps: &[Polygon]| ps.iter().enumerate().map(|(k, p)| (p.id.clone(), k)).collect::<HashMap<_, _>>();
    let (si, ti) = (index(src), index(tgt));
    let mut pairs = Vec::with_capacity(recs.len());
    for (k, r) in recs.iter().enumerate() {
        let (Some(&s), Some(&t)) = (si.get(&r.src_id), ti.get(&r.tgt_id)) else {
            return Err(CliError::Schema(format!(
                "match {k} references unknown polygon ({:?}, {:?})",
                r.src_id, r.tgt_id
            )));
        };
        pairs.push(MatchPair {
            src: s,
            tgt: t,
            src_id: r.src_id.clone(),
            tgt_id: r.tgt_id.clone(),
            zeta: r.zeta,
            chi: r.chi,
            channel: parse_channel(&r.channel).unwrap_or(Channel::Reference),
        });
    }
    let mut used_s = vec![false; src.len()];
    let mut used_t = vec![false; tgt.len()];
    pairs.iter().for_each(|p| (used_s[p.src], used_t[p.tgt]) = (true, true));
    Ok(MatchResult {
        pairs,
        unmatched_sources: (0..src.len()).filter(|&i| !used_s[i]).collect(),
        unmatched_targets: (0..tgt.len()).filter(|&j| !used_t[j]).collect(),
    })
}

fn canvas(polys: &[Polygon]) -> (usize, usize) {
    polys.iter().fold((1, 1), |(w, h), p| {
        let b = p.bbox();
        (w.max(b.max.x.ceil() as usize + 1), h.max(b.max.y.ceil() as usize + 1))
    })
}

/// Metrics of `pred` against `gt`. ACR counts correctly matched source area
/// over the area of sources that have a partner; MP compares the unions of
/// matched regions with the unions of ground-truth regions per view.
pub fn evaluate(
    pred: &MatchResult,
    gt: &GtMatrix,
    src: &[Polygon],
    tgt: &[Polygon],
    cfg: &PipelineConfig,
) -> Result<MetricsReport, CliError> {
    let (precision, recall, f1) = precision_recall_f1(pred, gt)?;
    let gt_pairs = gt.pairs();
    let acr_value = if gt_pairs.is_empty() { 0.0 } else { acr_correct(pred, gt, src)? };
    let pick = |ps: &[Polygon], idx: &mut dyn Iterator<Item = usize>| -> Vec<Polygon> {
        let mut ks: Vec<usize> = idx.collect();
        ks.sort_unstable();
        ks.dedup();
        ks.into_iter().map(|k| ps[k].clone()).collect()
    };
    let pred_l = pick(src, &mut pred.pairs.iter().map(|p| p.src));
    let pred_r = pick(tgt, &mut pred.pairs.iter().map(|p| p.tgt));
    let gt_l = pick(src, &mut gt_pairs.iter().map(|p| p.0));
    let gt_r = pick(tgt, &mut gt_pairs.iter().map(|p| p.1));
    let mp = matching_precision(&pred_l, &gt_l, &pred_r, &gt_r, canvas(src), canvas(tgt));
    Ok(MetricsReport {
        acr: acr_value,
        sas: sas(acr_value, cfg.z),
        mp,
        precision,
        recall,
        f1,
        num_matches: pred.pairs.len(),
        elapsed: 0.0,
    })
}

pub fn cmd_eval(args: &EvalArgs, common: &Common) -> Result<MetricsReport, CliError> {
    let cfg = load_config(common)?;
    let out = required_out(common)?;
    let src = read_polygons(&args.polygons_left)?;
    let tgt = read_polygons(&args.polygons_right)?;
    let pred = resolve_matches(&read_matches(&args.matches)?, &src, &tgt)?;
    let gt = match (&args.camera, &args.depth_left, &args.depth_right, &args.homography) {
        (Some(cam), Some(dl), Some(dr), None) => {
            gt_from_depth(&src, &tgt, &read_camera(cam)?, &read_depth(dl)?, &read_depth(dr)?, cfg.lambda_px)
        }
        (None, None, None, Some(h)) => gt_match_by_similarity(&src, &tgt, &read_homography(h)?, &cfg.gt),
        _ => {
            return Err(CliError::Precondition(
                "ground truth needs --camera with --depth-left/--depth-right, or --homography".into(),
            ))
        }
    };
    let mut report = evaluate(&pred, &gt, &src, &tgt, &cfg)?;
    let stats = args.stats.clone().unwrap_or_else(|| stats_path(&args.matches));
    if args.stats.is_some() || stats.exists() {
        report.elapsed = read_stats(&stats)?.total;
    }
    write_atomic(out, &to_jsonl(&[ReportRecord::from(&report)]))?;
    Ok(report)
}

/// Scene spec from `key = value` text over [`SceneSpec::default`].
pub fn parse_scene_spec(text: &str) -> Result<SceneSpec, CliError> {
    let mut s = SceneSpec::default();
    let (mut focal, mut baseline) = match s.transform {
        Transform::Rig { focal, baseline } => (focal, baseline),
        Transform::Homography(_) => (1000.0, 0.04),
    };
    let mut homography: Option<Homography3x3> = None;
    for (k, v) in parse_pairs(text)? {
        let key = k.as_str();
        let f = |v: &str| parse_value::<f64>(key, v);
        let u = |v: &str| parse_value::<usize>(key, v);
        match key {
            "seed" => s.seed = parse_value(key, &v)?,
            "width" => s.width = u(&v)?,
            "height" => s.height = u(&v)?,
            "polygons_min" => s.polygons.0 = u(&v)?,
            "polygons_max" => s.polygons.1 = u(&v)?,
            "radius_min" => s.radius.0 = f(&v)?,
            "radius_max" => s.radius.1 = f(&v)?,
            "focal" => focal = f(&v)?,
            "baseline" => baseline = f(&v)?,
            "depth_main" => s.depth_main = f(&v)?,
            "depth_background" => s.depth_background = f(&v)?,
            "depth_near" => s.depth_near = f(&v)?,
            "discontinuity" => s.discontinuity = f(&v)?,
            "twins" => s.twins = u(&v)?,
            "keypoints_per_polygon" => s.keypoints_per_polygon = u(&v)?,
            "background_keypoints" => s.background_keypoints = u(&v)?,
            "outlier_fraction" => s.outlier_fraction = f(&v)?,
            "gap" => s.gap = u(&v)?,
            "homography" => {
                let vals: Vec<f64> = v.split(',').map(|x| f(x.trim())).collect::<Result<_, _>>()?;
                let m: [f64; 9] = vals
                    .try_into()
                    .map_err(|_| CliError::Schema("homography: expected 9 comma-separated values".into()))?;
                homography = Some(
                    Homography3x3::new(nalgebra::Matrix3::from_row_slice(&m))
                        .map_err(|e| CliError::Schema(format!("homography: {e}")))?,
                );
            }
            _ => return Err(CliError::Schema(format!("unknown scene key {key:?}"))),
        }
    }
    s.transform = match homography {
        Some(h) => Transform::Homography(h),
        None => Transform::Rig { focal, baseline },
    };
    Ok(s)
}

/// File names of a scene directory.
pub mod scene_files {
    pub const LEFT: &str = "left.png";
    pub const RIGHT: &str = "right.png";
    pub const LABELS_LEFT: &str = "labels_l.png";
    pub const LABELS_RIGHT: &str = "labels_r.png";
    pub const DEPTH_LEFT: &str = "depth_l.dpt";
    pub const DEPTH_RIGHT: &str = "depth_r.dpt";
    pub const CAMERA: &str = "camera.jsonl";
    pub const HOMOGRAPHY: &str = "homography.jsonl";
    pub const KEYPOINTS: &str = "keypoints.jsonl";
    pub const TRUTH: &str = "truth.jsonl";
    pub const TRUTH_MATCHES: &str = "truth_matches.jsonl";
    pub const POLYGONS_LEFT: &str = "polygons_l.jsonl";
    pub const POLYGONS_RIGHT: &str = "polygons_r.jsonl";
}

/// True pairs as a match set over the vectorized polygons, via labels.
pub fn truth_as_matches(truth: &[(u32, u32)], src: &[Polygon], tgt: &[Polygon]) -> MatchResult {
    let by_label = |ps: &[Polygon]| ps.iter().enumerate().map(|(k, p)| (p.label, k)).collect::<HashMap<_, _>>();
    let (sl, tl) = (by_label(src), by_label(tgt));
    let pairs: Vec<MatchPair> = truth
        .iter()
        .filter_map(|(l, r)| Some((*sl.get(l)?, *tl.get(r)?)))
        .map(|(s, t)| MatchPair {
            src: s,
            tgt: t,
            src_id: src[s].id.clone(),
            tgt_id: tgt[t].id.clone(),
            zeta: 0.0,
            chi: 0,
            channel: Channel::Reference,
        })
        .collect();
    let mut used_s = vec![false; src.len()];
    let mut used_t = vec![false; tgt.len()];
    pairs.iter().for_each(|p| (used_s[p.src], used_t[p.tgt]) = (true, true));
    MatchResult {
        pairs,
        unmatched_sources: (0..src.len()).filter(|&i| !used_s[i]).collect(),
        unmatched_targets: (0..tgt.len()).filter(|&j| !used_t[j]).collect(),
    }
}

pub fn cmd_synth(_args: &SynthArgs, common: &Common) -> Result<PathBuf, CliError> {
    let out = required_out(common)?.to_path_buf();
    let mut spec = match &common.config {
        Some(p) => parse_scene_spec(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => SceneSpec::default(),
    };
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| CliError::Schema(format!("scene spec: {e}")))?;
    let b = generate_scene(&spec)?;
    let cfg = PipelineConfig::default();
    let src = detect_polygons(&b.labels_l, &cfg)?;
    let tgt = detect_polygons(&b.labels_r, &cfg)?;
    use scene_files::*;
    write_gray(&out.join(LEFT), &b.left)?;
    write_gray(&out.join(RIGHT), &b.right)?;
    write_labels(&out.join(LABELS_LEFT), &b.labels_l)?;
    write_labels(&out.join(LABELS_RIGHT), &b.labels_r)?;
    write_depth(&out.join(DEPTH_LEFT), &b.depth_l)?;
    write_depth(&out.join(DEPTH_RIGHT), &b.depth_r)?;
    write_camera(&out.join(CAMERA), &b.rig)?;
    if let Some(h) = &b.homography {
        write_homography(&out.join(HOMOGRAPHY), h)?;
    }
    write_keypoints(&out.join(KEYPOINTS), &b.keypoints)?;
    write_truth(&out.join(TRUTH), &b.truth)?;
    write_polygons(&out.join(POLYGONS_LEFT), &src)?;
    write_polygons(&out.join(POLYGONS_RIGHT), &tgt)?;
    write_matches(&out.join(TRUTH_MATCHES), &truth_as_matches(&b.truth, &src, &tgt))?;
    log::info!("scene with {} polygons -> {}", b.polygons.len(), out.display());
    Ok(out)
}

pub fn cmd_viz(args: &VizArgs, common: &Common) -> Result<PathBuf, CliError> {
    let out = required_out(common)?;
    let seed = common.seed.unwrap_or(0);
    let left = read_gray(&args.left)?;
    let right = read_gray(&args.right)?;
    let src = read_polygons(&args.polygons_left)?;
    let tgt = read_polygons(&args.polygons_right)?;
    let res = resolve_matches(&read_matches(&args.matches)?, &src, &tgt)?;
    let pairs: Vec<(usize, usize)> = res.pairs.iter().map(|p| (p.src, p.tgt)).collect();
    write_atomic(out, render_svg(&left, &right, &src, &tgt, &pairs, seed).as_bytes())?;
    let (w, h, rgb) = render_png(&left, &right, &src, &tgt, &pairs, seed);
    write_rgb(&out.with_extension("png"), w, h, rgb)?;
    Ok(out.to_path_buf())
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let started = Instant::now();
    let res = match &cli.command {
        Command::Detect(a) => cmd_detect(a, &cli.common).map(drop),
        Command::Match(a) => cmd_match(a, &cli.common).map(drop),
        Command::Eval(a) => cmd_eval(a, &cli.common).map(drop),
        Command::Synth(a) => cmd_synth(a, &cli.common).map(drop),
        Command::Viz(a) => cmd_viz(a, &cli.common).map(drop),
    };
    match res {
        Ok(()) => {
            log::debug!("done in {:.3} s", started.elapsed().as_secs_f64());
            0
        }
        Err(e) => {
            eprintln!("upm2: {e}");
            e.exit_code()
        }
    }
}
