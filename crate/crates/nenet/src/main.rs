//! Thin command-line front end over the library: data generation, detector
//! simulation, training, evaluation, prediction and SVG rendering.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use clap::{Args, Parser, Subcommand};
use nenet::assembly::{assemble_words, evaluate, EvalConfig, WordPrediction};
use nenet::error::Error;
use nenet::graph::{build_knn_graph, GraphConfig};
use nenet::models::{LinkModel, ModelKind};
use nenet::render::render_scene_svg;
use nenet::scene::{
    generate_scenes, load_detections, load_scenes, save_detections, save_scenes, simulate_all,
    DetectorNoise, GeneratorConfig,
};
use nenet::trainer::{train, LrSchedule, TrainConfig};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nenet",
    about = "Link detected scene-text character boxes into words with graph neural networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scene annotations (scenes.jsonl)
    Gen(GenArgs),
    /// Simulate a character detector over scenes (detections.jsonl)
    Simulate(SimulateArgs),
    /// Train a link predictor and write a checkpoint
    Train(TrainArgs),
    /// Evaluate a checkpoint at edge and word level
    Eval(EvalArgs),
    /// Predict word groupings (hulls and rectangles) as JSON
    Predict(PredictArgs),
    /// Render one scene with predictions as SVG
    Render(RenderArgs),
}

#[derive(Args, Serialize)]
struct GenArgs {
    /// Number of scenes
    #[arg(long, default_value_t = 100)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output scenes.jsonl path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    width: u32,
    #[arg(long, default_value_t = 512)]
    height: u32,
    #[arg(long, default_value_t = 3)]
    min_words: usize,
    #[arg(long, default_value_t = 7)]
    max_words: usize,
    #[arg(long, default_value_t = 2)]
    min_chars: usize,
    #[arg(long, default_value_t = 8)]
    max_chars: usize,
    #[arg(long, default_value_t = 23.0)]
    char_height_mean: f64,
    #[arg(long, default_value_t = 4.0)]
    char_height_std: f64,
    #[arg(long, default_value_t = 1.0)]
    min_gap: f64,
    #[arg(long, default_value_t = 5.0)]
    max_gap: f64,
    /// Word rotation range lower bound (radians)
    #[arg(long, default_value_t = -0.45, allow_hyphen_values = true)]
    min_rotation: f64,
    #[arg(long, default_value_t = 0.45)]
    max_rotation: f64,
    /// Probability of a curved baseline
    #[arg(long, default_value_t = 0.3)]
    curved_prob: f64,
    /// Curvature magnitude range (radians per pixel of arc length)
    #[arg(long, default_value_t = 0.002)]
    min_curvature: f64,
    #[arg(long, default_value_t = 0.008)]
    max_curvature: f64,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Input scenes.jsonl
    #[arg(long)]
    scenes: PathBuf,
    /// Output detections.jsonl
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-corner Gaussian jitter sigma in pixels
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
    /// Character drop probability
    #[arg(long, default_value_t = 0.02)]
    drop: f64,
    /// Spurious box probability per ground-truth character
    #[arg(long, default_value_t = 0.02)]
    spurious: f64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Model: nenet, nenet_static_edge, vanilla_gcn or dynamic_gcn
    #[arg(long)]
    model: String,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Output checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Optional training report JSON path
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Scenes per optimizer step
    #[arg(long, default_value_t = 12)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.8)]
    lr_decay: f64,
    #[arg(long, default_value_t = 10)]
    lr_period: usize,
    /// Hard negatives kept per positive
    #[arg(long, default_value_t = 3)]
    ohnm_ratio: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spatial k-NN degree
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Hidden width of the internal MLPs
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Explicit held-out scenes (otherwise the tail tenth is held out)
    #[arg(long, requires = "eval_detections")]
    eval_scenes: Option<PathBuf>,
    #[arg(long, requires = "eval_scenes")]
    eval_detections: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    edge_threshold: f64,
    /// Rectangle IoU for a correct word
    #[arg(long, default_value_t = 0.5)]
    word_iou: f64,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Scenes file (read for image dimensions and ids)
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Output words JSON path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Serialize)]
struct RenderArgs {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Checkpoint for link predictions (ground truth only when omitted)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Which scene of the file to render
    #[arg(long, default_value_t = 0)]
    scene_index: usize,
    /// Output SVG path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    word_iou: f64,
}

fn echo_config<T: Serialize>(name: &str, args: &T) {
    let json = serde_json::to_string(args).expect("args serialize");
    println!("config {name} {json}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful exits, anything else is usage.
            let _ = err.print();
            return match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(args) => {
            echo_config("gen", &args);
            let cfg = GeneratorConfig {
                scene_count: args.scenes,
                image_width: args.width,
                image_height: args.height,
                words_per_scene: (args.min_words, args.max_words),
                chars_per_word: (args.min_chars, args.max_chars),
                char_height_mean: args.char_height_mean,
                char_height_std: args.char_height_std,
                gap_range: (args.min_gap, args.max_gap),
                rotation_range: (args.min_rotation, args.max_rotation),
                curved_prob: args.curved_prob,
                curvature_range: (args.min_curvature, args.max_curvature),
                seed: args.seed,
            };
            let scenes = generate_scenes(&cfg)?;
            save_scenes(&args.out, &scenes)?;
            let chars: usize = scenes.iter().map(|s| s.char_count()).sum();
            println!(
                "wrote {} scenes ({} characters) to {}",
                scenes.len(),
                chars,
                args.out.display()
            );
            Ok(())
        }
        Command::Simulate(args) => {
            echo_config("simulate", &args);
            let scenes = load_scenes(&args.scenes)?;
            let noise = DetectorNoise {
                jitter_sigma: args.jitter,
                drop_prob: args.drop,
                spurious_rate: args.spurious,
                seed: args.seed,
            };
            let dets = simulate_all(&scenes, &noise);
            save_detections(&args.out, &dets)?;
            let boxes: usize = dets.iter().map(|d| d.boxes.len()).sum();
            println!(
                "wrote {} detection sets ({boxes} boxes) to {}",
                dets.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Train(args) => {
            echo_config("train", &args);
            let model: ModelKind = args.model.parse()?;
            let cfg = TrainConfig {
                model,
                epochs: args.epochs,
                batch_size: args.batch,
                schedule: LrSchedule {
                    base_lr: args.lr,
                    decay: args.lr_decay,
                    period: args.lr_period,
                },
                ohnm_ratio: args.ohnm_ratio,
                seed: args.seed,
                k: args.k,
                hidden: args.hidden,
                scenes: args.scenes.clone(),
                detections: args.detections.clone(),
                eval_scenes: args.eval_scenes.clone(),
                eval_detections: args.eval_detections.clone(),
                checkpoint_out: Some(args.out.clone()),
                report_out: args.report.clone(),
            };
            let (_, report) = train(&cfg)?;
            println!(
                "trained {model} for {} epochs, held-out edge F {:.4}, checkpoint {}",
                report.epochs.len(),
                report.final_edge_f1(),
                args.out.display()
            );
            Ok(())
        }
        Command::Eval(args) => {
            echo_config("eval", &args);
            let model = LinkModel::load(&args.checkpoint)?;
            let scenes = load_scenes(&args.scenes)?;
            let detections = load_detections(&args.detections)?;
            let cfg = EvalConfig {
                k: model.k(),
                edge_threshold: args.edge_threshold,
                word_iou: args.word_iou,
                ..EvalConfig::default()
            };
            let predictions = predict_all(&model, &scenes, &detections)?;
            let report = evaluate(&scenes, &detections, &predictions, &cfg)?;
            println!(
                "edge P {:.4} R {:.4} F {:.4} | word P {:.4} R {:.4} F {:.4} | coverage {:.4}",
                report.edge_precision,
                report.edge_recall,
                report.edge_f1,
                report.word_precision,
                report.word_recall,
                report.word_f1,
                report.mean_label_coverage
            );
            match &args.out {
                Some(path) => std::fs::write(path, report.to_json())
                    .map_err(|e| Error::io(path.display().to_string(), e))?,
                None => println!("{}", report.to_json()),
            }
            Ok(())
        }
        Command::Predict(args) => {
            echo_config("predict", &args);
            let model = LinkModel::load(&args.checkpoint)?;
            let scenes = load_scenes(&args.scenes)?;
            let detections = load_detections(&args.detections)?;
            check_alignment(&scenes, &detections)?;
            let cfg = GraphConfig { k: model.k() };
            let mut out: Vec<SceneWords> = Vec::with_capacity(scenes.len());
            for (scene, det) in scenes.iter().zip(&detections) {
                let graph = build_knn_graph(det, &cfg, scene.image_width, scene.image_height);
                let pred = model.predict(&graph);
                let words = assemble_words(det, &pred, &graph.edges, args.threshold);
                out.push(SceneWords {
                    scene_id: scene.scene_id.clone(),
                    words,
                });
            }
            let json = serde_json::to_string_pretty(&out).expect("words serialize");
            std::fs::write(&args.out, json)
                .map_err(|e| Error::io(args.out.display().to_string(), e))?;
            println!(
                "wrote word predictions for {} scenes to {}",
                out.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Render(args) => {
            echo_config("render", &args);
            let scenes = load_scenes(&args.scenes)?;
            let detections = load_detections(&args.detections)?;
            check_alignment(&scenes, &detections)?;
            let scene = scenes.get(args.scene_index).ok_or_else(|| {
                Error::Config(format!(
                    "scene index {} out of range ({} scenes)",
                    args.scene_index,
                    scenes.len()
                ))
            })?;
            let det = &detections[args.scene_index];
            let svg = match &args.checkpoint {
                Some(path) => {
                    let model = LinkModel::load(path)?;
                    let graph = build_knn_graph(
                        det,
                        &GraphConfig { k: model.k() },
                        scene.image_width,
                        scene.image_height,
                    );
                    let pred = model.predict(&graph);
                    render_scene_svg(
                        scene,
                        det,
                        Some((&pred, &graph.edges)),
                        args.threshold,
                        args.word_iou,
                    )
                }
                None => render_scene_svg(scene, det, None, args.threshold, args.word_iou),
            };
            std::fs::write(&args.out, svg)
                .map_err(|e| Error::io(args.out.display().to_string(), e))?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SceneWords {
    scene_id: String,
    words: Vec<WordPrediction>,
}

fn check_alignment(
    scenes: &[nenet::scene::SceneAnnotation],
    detections: &[nenet::scene::DetectionSet],
) -> Result<(), Error> {
    if scenes.len() != detections.len() {
        return Err(Error::Config(format!(
            "{} scenes but {} detection sets",
            scenes.len(),
            detections.len()
        )));
    }
    for (s, d) in scenes.iter().zip(detections) {
        if s.scene_id != d.scene_id {
            return Err(Error::SceneIdMismatch {
                scene: s.scene_id.clone(),
                detections: d.scene_id.clone(),
            });
        }
    }
    Ok(())
}

fn predict_all(
    model: &LinkModel,
    scenes: &[nenet::scene::SceneAnnotation],
    detections: &[nenet::scene::DetectionSet],
) -> Result<Vec<nenet::models::EdgePrediction>, Error> {
    check_alignment(scenes, detections)?;
    let cfg = GraphConfig { k: model.k() };
    Ok(scenes
        .iter()
        .zip(detections)
        .map(|(scene, det)| {
            let graph = build_knn_graph(det, &cfg, scene.image_width, scene.image_height);
            model.predict(&graph)
        })
        .collect())
}
