use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use msfusion::arch::{rpn_forward, Frame, Proposal};
use msfusion::complementarity::{match_pair, oracle_bound, partition, ComplementarityReport, FP_PAIR_IOU};
use msfusion::eval::{
    filter_reasonable, log_avg_miss_rate, mr_fppi_curve, recall_ious, recall_vs_iou, recall_vs_k, EvalImage, GroundTruth, LAMR_POINTS,
    LAMR_RANGE, RECALL_KS,
};
use msfusion::io::{
    format_mr_curve, format_xy, load_annotations, load_dataset, load_detections, load_model, save_detections, save_model, synth_dataset,
    write_atomic, AnnotationFile, Condition, Dataset, DetectionSet, SynthParams, TEST_FILE, TRAIN_FILE,
};
use msfusion::pipeline::{detect, score_fuse, train, ScoreFusionWeights, DEFAULT_NMS, DEFAULT_SCORE_THRESH, DEFAULT_TOP_K};
use msfusion::{build_detector, DetectorConfig, FusionStage, TrainSchedule};

/// Multispectral pedestrian detection toolkit.
#[derive(Debug, Parser)]
#[command(name = "msfusion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic color/thermal dataset.
    Synth(SynthArgs),
    /// Train a detector for one fusion stage.
    Train(TrainArgs),
    /// Run a trained detector over a split.
    Detect(DetectArgs),
    /// Fuse the scores of a color and a thermal detector.
    ScoreFuse(ScoreFuseArgs),
    /// Log-average miss rate of a detection file.
    Eval(EvalArgs),
    /// Complementarity table of two detection files.
    Compare(CompareArgs),
    /// Proposal recall of a detector's region proposal network.
    Proposals(ProposalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

impl Split {
    fn file(self) -> &'static str {
        match self {
            Split::Train => TRAIN_FILE,
            Split::Test => TEST_FILE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum CondArg {
    All,
    Day,
    Night,
}

impl CondArg {
    fn accepts(self, c: Condition) -> bool {
        match self {
            CondArg::All => true,
            CondArg::Day => c == Condition::Day,
            CondArg::Night => c == Condition::Night,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Total number of image pairs; one sixth form the test split.
    #[arg(long, default_value_t = 600)]
    images: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (reads its training split).
    #[arg(long)]
    data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// none-color, none-thermal, early, halfway or late.
    #[arg(long)]
    fusion: FusionStage,
    #[arg(long, default_value_t = 4)]
    epochs1: usize,
    #[arg(long, default_value_t = 0.001)]
    lr1: f64,
    #[arg(long, default_value_t = 2)]
    epochs2: usize,
    #[arg(long, default_value_t = 0.0001)]
    lr2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DetectOpts {
    #[arg(long, default_value_t = DEFAULT_SCORE_THRESH)]
    score_thresh: f64,
    #[arg(long, default_value_t = DEFAULT_NMS)]
    nms: f64,
    /// Proposals passed to the detection head.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    topk: usize,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Detection CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: DetectOpts,
}

#[derive(Debug, Args)]
struct ScoreFuseArgs {
    #[arg(long)]
    data: PathBuf,
    /// Give twice: the none-color model, then the none-thermal model.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: DetectOpts,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Detection CSV to evaluate.
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, value_enum, default_value_t = CondArg::All)]
    condition: CondArg,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Write the miss-rate/FPPI curve as CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    /// Give twice: detector A, then detector B.
    #[arg(long, required = true)]
    detections: Vec<PathBuf>,
    /// Only detections scoring strictly above this take part.
    #[arg(long, default_value_t = DEFAULT_SCORE_THRESH)]
    score_thresh: f64,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// `all` reports all, day and night rows.
    #[arg(long, value_enum, default_value_t = CondArg::All)]
    condition: CondArg,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProposalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Proposals kept per image; also the budget of the recall-vs-IoU curve.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    topk: usize,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, value_enum, default_value_t = CondArg::All)]
    condition: CondArg,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    #[arg(long)]
    recall_vs_k: Option<PathBuf>,
    #[arg(long)]
    recall_vs_iou: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(msfusion::Error),
}

impl From<msfusion::Error> for Failure {
    fn from(e: msfusion::Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<(), Failure>;

fn print_config(command: &str, entries: &[(&str, String)]) {
    println!("{command}:");
    for (k, v) in entries {
        println!("  {k} = {v}");
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn threshold(name: &str, v: f64) -> CmdResult {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must lie in [0, 1], got {v}")))
    }
}

fn run_synth(a: SynthArgs) -> CmdResult {
    let p = SynthParams { n_images: a.images, seed: a.seed, ..SynthParams::default() };
    print_config(
        "synth",
        &[
            ("out", show(&a.out)),
            ("images", p.n_images.to_string()),
            ("train", p.n_train().to_string()),
            ("test", p.n_test().to_string()),
            ("size", format!("{}x{} (w x h)", p.image_w, p.image_h)),
            ("visibility mix", format!("{}/{}/{}", p.p_both, p.p_color_only, p.p_thermal_only)),
            ("min_height", p.min_height.to_string()),
            ("seed", p.seed.to_string()),
        ],
    );
    synth_dataset(&p, &a.out)?;
    Ok(())
}

fn run_train(a: TrainArgs) -> CmdResult {
    if a.fusion == FusionStage::Score {
        return Err(Failure::Usage("score fusion combines two trained models; train none-color and none-thermal, then run score-fuse".into()));
    }
    let schedule = TrainSchedule { epochs_phase1: a.epochs1, lr_phase1: a.lr1, epochs_phase2: a.epochs2, lr_phase2: a.lr2, seed: a.seed, ..TrainSchedule::default() };
    let config = DetectorConfig { seed: a.seed, ..DetectorConfig::default() };
    print_config(
        "train",
        &[
            ("data", show(&a.data.join(TRAIN_FILE))),
            ("out", show(&a.out)),
            ("fusion", a.fusion.to_string()),
            ("schedule", format!("{} epochs at {}, {} epochs at {}", a.epochs1, a.lr1, a.epochs2, a.lr2)),
            ("momentum", schedule.momentum.to_string()),
            ("seed", a.seed.to_string()),
        ],
    );
    let data: Dataset<f32> = load_dataset(&a.data.join(TRAIN_FILE))?;
    let model = build_detector::<f32>(&config, a.fusion)?;
    println!("  parameters = {}", model.param_count());
    let outcome = train(model, &data.samples, &schedule)?;
    for l in &outcome.log {
        println!(
            "epoch {} lr {} loss {:.4} (rpn cls {:.4} reg {:.4}, head cls {:.4} reg {:.4})",
            l.epoch + 1,
            l.lr,
            l.loss,
            l.rpn_cls,
            l.rpn_reg,
            l.head_cls,
            l.head_reg
        );
    }
    save_model(&a.out, &outcome.model)?;
    Ok(())
}

fn detect_opts_config(o: &DetectOpts) -> Vec<(&'static str, String)> {
    vec![
        ("score_thresh", o.score_thresh.to_string()),
        ("nms", o.nms.to_string()),
        ("topk", o.topk.to_string()),
        ("split", format!("{:?}", o.split).to_lowercase()),
    ]
}

fn check_detect_opts(o: &DetectOpts) -> CmdResult {
    threshold("score-thresh", o.score_thresh)?;
    threshold("nms", o.nms)?;
    if o.topk == 0 {
        return Err(Failure::Usage("--topk must be positive".into()));
    }
    Ok(())
}

fn run_detect(a: DetectArgs) -> CmdResult {
    check_detect_opts(&a.opts)?;
    let mut cfg = vec![("data", show(&a.data)), ("model", show(&a.model)), ("out", show(&a.out))];
    cfg.extend(detect_opts_config(&a.opts));
    print_config("detect", &cfg);
    let model = load_model::<f32>(&a.model)?;
    let data: Dataset<f32> = load_dataset(&a.data.join(a.opts.split.file()))?;
    let mut set = DetectionSet::new(model.stage);
    for s in &data.samples {
        let frame = Frame::new(&s.pair.color, &s.pair.thermal)?;
        set.images.insert(s.pair.image_id.clone(), detect(&model, &frame, a.opts.score_thresh, a.opts.nms, a.opts.topk)?);
    }
    println!("{} detections on {} images", set.len(), data.samples.len());
    save_detections(&a.out, &set)?;
    Ok(())
}

fn run_score_fuse(a: ScoreFuseArgs) -> CmdResult {
    check_detect_opts(&a.opts)?;
    let [color_path, thermal_path] = a.model.as_slice() else {
        return Err(Failure::Usage(format!("score-fuse needs exactly two --model flags (color, then thermal), got {}", a.model.len())));
    };
    let weights = ScoreFusionWeights::default();
    let mut cfg = vec![
        ("data", show(&a.data)),
        ("color model", show(color_path)),
        ("thermal model", show(thermal_path)),
        ("weights", format!("{}/{}", weights.color, weights.thermal)),
        ("out", show(&a.out)),
    ];
    cfg.extend(detect_opts_config(&a.opts));
    print_config("score-fuse", &cfg);
    let mc = load_model::<f32>(color_path)?;
    let mt = load_model::<f32>(thermal_path)?;
    let data: Dataset<f32> = load_dataset(&a.data.join(a.opts.split.file()))?;
    let mut set = DetectionSet::new(FusionStage::Score);
    for s in &data.samples {
        let frame = Frame::new(&s.pair.color, &s.pair.thermal)?;
        let dets = score_fuse(&mc, &mt, &frame, weights, a.opts.score_thresh, a.opts.nms, a.opts.topk)?;
        set.images.insert(s.pair.image_id.clone(), dets);
    }
    println!("{} detections on {} images", set.len(), data.samples.len());
    save_detections(&a.out, &set)?;
    Ok(())
}

/// Annotations of the chosen split, and a check that `set` only names images in it.
fn annotations_for(data: &Path, split: Split, sets: &[&DetectionSet<f32>]) -> Result<AnnotationFile<f32>, Failure> {
    let ann = load_annotations::<f32>(&data.join(split.file()))?;
    for set in sets {
        if let Some(id) = set.images.keys().find(|id| !ann.records.iter().any(|r| &&r.image_id == id)) {
            return Err(Failure::Run(msfusion::Error::Data(format!("detections name image `{id}`, which is not in the {split:?} split"))));
        }
    }
    Ok(ann)
}

fn run_eval(a: EvalArgs) -> CmdResult {
    threshold("iou", a.iou)?;
    let dets = load_detections::<f32>(&a.detections)?;
    let ann = annotations_for(&a.data, a.split, &[&dets])?;
    print_config(
        "eval",
        &[
            ("data", show(&a.data)),
            ("detections", show(&a.detections)),
            ("source", dets.source.to_string()),
            ("iou", a.iou.to_string()),
            ("condition", format!("{:?}", a.condition).to_lowercase()),
            ("min_height", ann.min_height.to_string()),
            ("fppi range", format!("[{}, {}]", LAMR_RANGE.0, LAMR_RANGE.1)),
        ],
    );
    let images: Vec<EvalImage<f32>> = ann
        .records
        .iter()
        .filter(|r| a.condition.accepts(r.condition))
        .map(|r| EvalImage::reasonable(dets.get(&r.image_id).to_vec(), &r.gts(), ann.min_height))
        .collect();
    let curve = mr_fppi_curve(&images, a.iou)?;
    let mr = log_avg_miss_rate(&curve, LAMR_RANGE, LAMR_POINTS);
    println!("images {} reasonable gts {}", curve.n_images, curve.n_gts);
    println!("MR={mr:.4}");
    if let Some(p) = &a.curve {
        write_atomic(p, format_mr_curve(&curve, mr).as_bytes())?;
    }
    Ok(())
}

fn run_compare(a: CompareArgs) -> CmdResult {
    threshold("iou", a.iou)?;
    threshold("score-thresh", a.score_thresh)?;
    let [pa, pb] = a.detections.as_slice() else {
        return Err(Failure::Usage(format!("compare needs exactly two --detections flags, got {}", a.detections.len())));
    };
    let (da, db) = (load_detections::<f32>(pa)?, load_detections::<f32>(pb)?);
    let ann = annotations_for(&a.data, a.split, &[&da, &db])?;
    print_config(
        "compare",
        &[
            ("data", show(&a.data)),
            ("A", format!("{} ({})", show(pa), da.source)),
            ("B", format!("{} ({})", show(pb), db.source)),
            ("score_thresh", a.score_thresh.to_string()),
            ("iou", a.iou.to_string()),
            ("fp pairing iou", FP_PAIR_IOU.to_string()),
            ("min_height", ann.min_height.to_string()),
        ],
    );
    let rows = if a.condition == CondArg::All { vec![CondArg::All, CondArg::Day, CondArg::Night] } else { vec![a.condition] };
    let mut report = ComplementarityReport::default();
    for cond in rows {
        let mut matches = Vec::new();
        for r in ann.records.iter().filter(|r| cond.accepts(r.condition)) {
            matches.push(match_pair(da.get(&r.image_id), db.get(&r.image_id), &r.gts(), ann.min_height, a.score_thresh, a.iou)?);
        }
        report.rows.push((format!("{cond:?}").to_lowercase(), partition(&matches, FP_PAIR_IOU)?));
    }
    print!("{}", report.to_text());
    for (label, t) in &report.rows {
        match oracle_bound(t) {
            Ok(b) => println!(
                "{label}: detection rate A {:.4} B {:.4} union {:.4}; false alarms A {} B {} shared {} (per image {}, per gt {:.4})",
                b.rate_a,
                b.rate_b,
                b.union_detection_rate,
                b.fp_before_a.count,
                b.fp_before_b.count,
                b.shared_fp_count,
                b.fp_after.per_image.map_or_else(|| "n/a".into(), |v| format!("{v:.4}")),
                b.fp_after.per_gt
            ),
            Err(e) => println!("{label}: {e}"),
        }
    }
    if let Some(p) = &a.out {
        write_atomic(p, report.to_csv().as_bytes())?;
    }
    Ok(())
}

fn run_proposals(a: ProposalArgs) -> CmdResult {
    threshold("iou", a.iou)?;
    if a.topk == 0 {
        return Err(Failure::Usage("--topk must be positive".into()));
    }
    print_config(
        "proposals",
        &[
            ("data", show(&a.data)),
            ("model", show(&a.model)),
            ("topk", a.topk.to_string()),
            ("iou", a.iou.to_string()),
            ("condition", format!("{:?}", a.condition).to_lowercase()),
        ],
    );
    let model = load_model::<f32>(&a.model)?;
    let data: Dataset<f32> = load_dataset(&a.data.join(a.split.file()))?;
    let mut props: Vec<Vec<Proposal<f32>>> = Vec::new();
    let mut kept: Vec<Vec<GroundTruth<f32>>> = Vec::new();
    for s in data.samples.iter().filter(|s| a.condition.accepts(s.pair.condition)) {
        let frame = Frame::new(&s.pair.color, &s.pair.thermal)?;
        props.push(rpn_forward(&model, &frame, a.topk)?);
        kept.push(filter_reasonable(&s.gts, data.min_height).0);
    }
    let ks: Vec<usize> = RECALL_KS.iter().copied().filter(|&k| k <= a.topk).collect();
    let vs_k = recall_vs_k(&props, &kept, &ks, a.iou)?;
    for (k, r) in &vs_k {
        println!("recall@{k} = {r:.4}");
    }
    let vs_iou = recall_vs_iou(&props, &kept, a.topk, &recall_ious())?;
    if let Some(p) = &a.recall_vs_k {
        write_atomic(p, format_xy("k", "recall", &vs_k).as_bytes())?;
    }
    if let Some(p) = &a.recall_vs_iou {
        write_atomic(p, format_xy("iou", "recall", &vs_iou).as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Detect(a) => run_detect(a),
        Command::ScoreFuse(a) => run_score_fuse(a),
        Command::Eval(a) => run_eval(a),
        Command::Compare(a) => run_compare(a),
        Command::Proposals(a) => run_proposals(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
