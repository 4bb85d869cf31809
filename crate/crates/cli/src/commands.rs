use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use dg_core::correction::{channel_mean, REFERENCE_SIZE};
use dg_core::detector::{evaluate_map, mean_average_precision, train as train_detector, EvalOptions, NoiseSchedule};
use dg_core::harness::{generate_dataset, run as run_trace, RunConfig};
use dg_core::io::{
    csv, export_cam_image, export_mask_image, export_side_by_side, load_samples, load_weights, save_samples,
    save_weights, Config,
};
use dg_core::{CamStack, DetectorWeights, GenerationTrace, ScenarioSpec, TrainingSample, ToyDenoiser};

use crate::table::{by_image, read_boxes};
use crate::{EvalArgs, ExportArgs, GenDatasetArgs, RunArgs, TrainArgs};

fn denoiser(cfg: &Config) -> ToyDenoiser {
    let mut d = ToyDenoiser::default();
    d.schedule = NoiseSchedule::new(cfg.max_t);
    d
}

fn load_dataset(dir: &Path) -> anyhow::Result<Vec<TrainingSample>> {
    let samples = load_samples(dir).with_context(|| format!("reading samples from {}", dir.display()))?;
    if samples.is_empty() {
        bail!("no samples in {}", dir.display());
    }
    Ok(samples)
}

pub fn gen_dataset(mut cfg: Config, args: GenDatasetArgs) -> anyhow::Result<()> {
    if let Some(c) = args.count {
        cfg.samples_per_level = c;
    }
    if let Some(l) = args.levels {
        cfg.noise_levels = l;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args.out.unwrap_or_else(|| cfg.dataset_dir.clone());
    cfg.validate()?;
    let levels = generate_dataset(&denoiser(&cfg), cfg.samples_per_level, &cfg.noise_levels, cfg.seed)?;
    let samples: Vec<TrainingSample> = levels.into_iter().flatten().collect();
    let paths = save_samples(&out, &samples)?;
    println!("wrote {} samples to {}", paths.len(), out.display());
    Ok(())
}

pub fn train(mut cfg: Config, args: TrainArgs) -> anyhow::Result<()> {
    if let Some(s) = args.steps {
        cfg.train_steps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let data = args.data.unwrap_or_else(|| cfg.dataset_dir.clone());
    let samples = load_dataset(&data)?;
    let init = DetectorWeights::init(cfg.arch()?, cfg.seed);
    let outcome = train_detector(&cfg.train_config(), &samples, init)?;

    let out = args.out.unwrap_or_else(|| cfg.weights.clone());
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_weights(&out, &outcome.weights)?;
    let rows: Vec<Vec<String>> = outcome
        .losses
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), format!("{l:.6}")])
        .collect();
    let loss_path = args.loss_csv.unwrap_or_else(|| out.with_extension("loss.csv"));
    std::fs::write(&loss_path, csv(&["step", "loss"], &rows))?;
    match outcome.losses.last() {
        Some(l) => println!("trained {} steps on {} samples, final loss {l:.6}", outcome.losses.len(), samples.len()),
        None => println!("zero steps requested; wrote initial weights"),
    }
    Ok(())
}

pub fn eval(cfg: Config, args: EvalArgs) -> anyhow::Result<()> {
    if let (Some(det), Some(truth)) = (&args.detections, &args.truth) {
        let det = read_boxes(det, true)?;
        let truth = read_boxes(truth, false)?;
        let images = det.iter().chain(&truth).map(|(i, _)| i + 1).max().unwrap_or(0);
        let map = mean_average_precision(&by_image(det, images), &by_image(truth, images))?;
        println!("map,{map:.6}");
        return Ok(());
    }
    let weights_path = args.weights.unwrap_or_else(|| cfg.weights.clone());
    let weights = load_weights(&weights_path).with_context(|| format!("loading weights {}", weights_path.display()))?;
    let samples = load_dataset(&args.data.unwrap_or_else(|| cfg.dataset_dir.clone()))?;
    let mut levels: BTreeMap<usize, Vec<TrainingSample>> = BTreeMap::new();
    for s in samples {
        levels.entry(s.t).or_default().push(s);
    }
    let opts = EvalOptions {
        nms_iou: cfg.nms_iou,
        ..EvalOptions::default()
    };
    println!("t,samples,map");
    for (t, set) in &levels {
        println!("{t},{},{:.6}", set.len(), evaluate_map(&weights, set, opts)?);
    }
    Ok(())
}

/// Core-noun plane of each object in the reference maps of `stack`.
fn object_planes(stack: &CamStack, spec: &ScenarioSpec) -> Vec<(usize, Vec<f32>)> {
    let reference = stack.reference();
    spec.objects
        .iter()
        .map(|o| (o.object_id, channel_mean(&reference, &o.core_channels())))
        .collect()
}

fn dump_images(dir: &Path, spec: &ScenarioSpec, baseline: &GenerationTrace, guided: Option<&GenerationTrace>) -> anyhow::Result<()> {
    let s = REFERENCE_SIZE;
    let stem = format!("seed{:04}", spec.seed);
    let base_stack = baseline.final_stack.as_ref().context("trace without final maps")?;
    let base = object_planes(base_stack, spec);
    for (id, plane) in &base {
        export_cam_image(plane, s, s, &dir.join(format!("{stem}_baseline_obj{id}.pgm")))?;
    }
    let Some(guided) = guided else { return Ok(()) };
    let dg = object_planes(guided.final_stack.as_ref().context("trace without final maps")?, spec);
    for ((id, b), (_, g)) in base.iter().zip(&dg) {
        export_cam_image(g, s, s, &dir.join(format!("{stem}_dg_obj{id}.pgm")))?;
        export_side_by_side(&[b, g], s, s, &dir.join(format!("{stem}_compare_obj{id}.ppm")))?;
    }
    if let Some(seg) = guided.final_segmentation() {
        for (id, mask) in &seg.masks {
            export_mask_image(&mask.pixels, s, s, &dir.join(format!("{stem}_mask_obj{id}.pgm")))?;
        }
    }
    Ok(())
}

pub fn run(mut cfg: Config, args: RunArgs) -> anyhow::Result<()> {
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if let Some(c) = args.cache_stride {
        cfg.cache_stride = c as usize;
    }
    if let Some(l) = args.leak {
        cfg.leak = l;
    }
    cfg.validate()?;
    let run_cfg: RunConfig = cfg.run_config()?;
    let detector = if args.no_dg {
        None
    } else {
        let path = args.weights.clone().unwrap_or_else(|| cfg.weights.clone());
        Some(load_weights(&path).with_context(|| format!("loading weights {}", path.display()))?)
    };

    let out = args.out.unwrap_or_else(|| cfg.out_dir.clone());
    let traces = out.join("traces");
    let images = out.join("images");
    std::fs::create_dir_all(&traces)?;
    if !args.no_images {
        std::fs::create_dir_all(&images)?;
    }

    let den = denoiser(&cfg);
    let mut rows = Vec::new();
    let mut wins = 0usize;
    let mut summary = String::new();
    for seed in cfg.seed..cfg.seed + cfg.runs as u64 {
        let spec = ScenarioSpec::two_object(seed, cfg.leak);
        let baseline = run_trace(&den, &spec, &run_cfg, None, false)?;
        std::fs::write(traces.join(format!("seed{seed:04}_baseline.jsonl")), baseline.to_json_lines())?;
        rows.push(vec![
            seed.to_string(),
            "baseline".into(),
            format!("{:.6}", baseline.final_mixing()),
            "0".into(),
        ]);
        let guided = match &detector {
            Some(w) => {
                let g = run_trace(&den, &spec, &run_cfg, Some(w), true)?;
                std::fs::write(traces.join(format!("seed{seed:04}_dg.jsonl")), g.to_json_lines())?;
                rows.push(vec![
                    seed.to_string(),
                    "dg".into(),
                    format!("{:.6}", g.final_mixing()),
                    g.corrected_steps().count().to_string(),
                ]);
                if g.final_mixing() < baseline.final_mixing() {
                    wins += 1;
                }
                Some(g)
            }
            None => None,
        };
        if !args.no_images {
            dump_images(&images, &spec, &baseline, guided.as_ref())?;
        }
        writeln!(summary, "seed {seed}: {prompt:?}", prompt = spec.prompt)?;
    }
    std::fs::write(out.join("metrics.csv"), csv(&["seed", "mode", "mixing", "corrected_steps"], &rows))?;
    print!("{summary}");
    if detector.is_some() {
        println!("guidance lowered mixing in {wins} of {} runs", cfg.runs);
    }
    Ok(())
}

pub fn export(mut cfg: Config, args: ExportArgs) -> anyhow::Result<()> {
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(l) = args.leak {
        cfg.leak = l;
    }
    cfg.validate()?;
    if args.t > cfg.max_t {
        bail!("t = {} exceeds T = {}", args.t, cfg.max_t);
    }
    let out = args.out.unwrap_or_else(|| cfg.out_dir.join("export"));
    std::fs::create_dir_all(&out)?;
    let spec = ScenarioSpec::two_object(cfg.seed, cfg.leak);
    let stack = denoiser(&cfg).simulate_cams(&spec, args.t)?;
    let reference = stack.reference();
    let s = REFERENCE_SIZE;
    for c in 0..stack.tokens() {
        let plane = channel_mean(&reference, &[c]);
        export_cam_image(&plane, s, s, &out.join(format!("t{:04}_ch{c:02}.pgm", args.t)))?;
    }
    for (id, mask) in &spec.truth_segmentation().masks {
        export_mask_image(&mask.pixels, s, s, &out.join(format!("truth_obj{id}.pgm")))?;
    }
    println!("{:?}: {} channels written to {}", spec.prompt, stack.tokens(), out.display());
    Ok(())
}
