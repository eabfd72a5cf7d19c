//! `vlp`: sweeps, captures, feature extraction, training, evaluation,
//! LED-ID coding and full study reports.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use vlp_core::codec::{decode_frame, dm_encode, LedDatabase, LedId};
use vlp_core::geometry::{Attitude, Pose, Vec3};
use vlp_core::harness::{
    evaluate, generate_capture_set, generate_sweep, read_features_csv, run_experiment, write_features_csv,
    write_outputs, Dataset, ExperimentConfig, Study, StudyOutput,
};
use vlp_core::learn::{fit_position_model, ModelKind, PositionModel, Source};
use vlp_core::render::{base_brightness, rasterize_panel, render_striped, CaptureNoise, Frame, Waveform};
use vlp_core::vision::{extract_corners, features};

#[derive(Parser)]
#[command(name = "vlp", version, about = "Single-LED visible light positioning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Study config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Clean attitude sweep with FoV filtering, written as a features CSV.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Heights in metres; defaults to `sweep.heights_m`.
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the first `--max-frames` retained frames as PGM here.
        #[arg(long)]
        frames_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        max_frames: usize,
    },
    /// Noisy rolling-shutter captures through the vision pipeline.
    Capture {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
        /// Render without corner jitter or pixel noise.
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders one striped frame of the panel as PGM.
    Render {
        #[command(flatten)]
        config: ConfigArg,
        /// `x,y,z,roll,pitch,yaw` (metres, degrees).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        pose: Vec<f64>,
        /// LED id (decimal or 0x hex); omit for an unmodulated panel.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        phase_us: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corner features of a PGM frame, in canonical order, as JSON.
    Extract {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        frame: PathBuf,
    },
    /// Fits a position model to a features CSV.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Gbt)]
        kind: KindArg,
        /// Defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluates a model on a features CSV and writes the report files.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "eval")]
        label: String,
    },
    /// LED-ID waveform coding.
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
    /// Runs a full study and writes report.json, CDF/grid CSVs and SVG maps.
    Report {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides the config's study.
        #[arg(long, value_enum)]
        study: Option<StudyArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum CodecOp {
    /// Writes the differential Manchester waveform of an id as JSON.
    Encode {
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = vlp_core::codec::DEFAULT_BIT_RATE_HZ)]
        bit_rate_hz: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finds the panel in a PGM frame, decodes its id and looks it up.
    Decode {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        frame: PathBuf,
        /// CSV `id,x,y,z`.
        #[arg(long)]
        db: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Forest,
    Gbt,
    SingleTree,
    Mlp,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Forest => ModelKind::Forest,
            KindArg::Gbt => ModelKind::Gbt,
            KindArg::SingleTree => ModelKind::SingleTree,
            KindArg::Mlp => ModelKind::Mlp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    ModelSelection,
    SimVsCapture,
    HeightGeneralization,
}

impl From<StudyArg> for Study {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::ModelSelection => Study::ModelSelection,
            StudyArg::SimVsCapture => Study::SimVsCapture,
            StudyArg::HeightGeneralization => Study::HeightGeneralization,
        }
    }
}

fn parse_id(s: &str) -> Result<LedId> {
    LedId::parse(s).map_err(|e| anyhow::anyhow!("bad LED id {s:?}: {e}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_frame(path: &Path) -> Result<Frame> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Frame::read_pgm(BufReader::new(f))?)
}

fn read_dataset(path: &Path, source: Source) -> Result<Dataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_features_csv(BufReader::new(f), source)?)
}

fn print_summary(out: &StudyOutput) {
    for r in &out.reports {
        println!(
            "{:40} n={:5} mean={:8.3} cm  p90={:8.3} cm  max={:8.3} cm",
            r.label, r.n_test, r.mean_3d_error_cm, r.p90_error_cm, r.max_error_cm
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, heights, out, frames_dir, max_frames } => {
            let cfg = config.load()?;
            let spec = cfg.sweep_spec(heights.as_deref().unwrap_or(&cfg.sweep.heights_m));
            let panel = cfg.panel.build()?;
            let ds = generate_sweep(&spec, &cfg.camera, &panel)?;
            write_features_csv(&ds, create(&out)?)?;
            if let Some(dir) = frames_dir {
                std::fs::create_dir_all(&dir)?;
                for (k, r) in ds.rows.iter().take(max_frames).enumerate() {
                    let b = base_brightness(&r.pose, &panel, &cfg.camera);
                    let frame = rasterize_panel(&cfg.camera, &r.pose, &panel, b)?;
                    frame.write_pgm(create(&dir.join(format!("frame_{k:05}.pgm")))?)?;
                }
            }
            for h in &spec.heights_m {
                eprintln!("height {h} m: {} poses retained", ds.count_at(*h));
            }
        }
        Command::Capture { config, heights, clean, out } => {
            let cfg = config.load()?;
            let mut spec = cfg.capture_spec(heights.as_deref().unwrap_or(&cfg.capture.heights_m), cfg.seed);
            if clean {
                spec.noise = CaptureNoise::NONE;
            }
            let (ds, stats) = generate_capture_set(&spec, &cfg.camera, &cfg.panel.build()?)?;
            write_features_csv(&ds, create(&out)?)?;
            eprintln!("{stats:?}");
        }
        Command::Render { config, pose, id, phase_us, out } => {
            let cfg = config.load()?;
            if pose.len() != 6 {
                bail!("--pose needs 6 values x,y,z,roll,pitch,yaw, got {}", pose.len());
            }
            let pose = Pose::new(Vec3::new(pose[0], pose[1], pose[2]), Attitude::new(pose[3], pose[4], pose[5]));
            let wave = match id {
                Some(s) => dm_encode(parse_id(&s)?, cfg.capture.bit_rate_hz),
                None => Waveform::constant_on(),
            };
            let (frame, _) = render_striped(&cfg.camera, &pose, &cfg.panel.build()?, &wave, phase_us)?;
            frame.write_pgm(create(&out)?)?;
        }
        Command::Extract { config, frame } => {
            let cfg = config.load()?;
            let ex = extract_corners(&read_frame(&frame)?, &cfg.vision)?;
            println!("{}", serde_json::to_string(&features(&ex.corners))?);
        }
        Command::Train { config, data, kind, seed, out } => {
            let cfg = config.load()?;
            let kind = ModelKind::from(kind);
            let ds = read_dataset(&data, Source::CleanSim)?;
            let model = fit_position_model(&ds.to_training_set()?, &cfg.model_spec(kind), seed.unwrap_or(cfg.seed))?;
            model.save(&out)?;
            eprintln!("trained {kind} on {} rows", ds.len());
        }
        Command::Eval { model, data, out_dir, label } => {
            let model = PositionModel::load(&model)?;
            let ds = read_dataset(&data, Source::NoisySim)?;
            let mut report = evaluate(&model, &ds)?;
            report.label = label;
            let out = StudyOutput { study: Study::ModelSelection, seed: model.seed, datasets: Vec::new(), reports: vec![report] };
            write_outputs(&out, &out_dir)?;
            print_summary(&out);
        }
        Command::Codec { op: CodecOp::Encode { id, bit_rate_hz, out } } => {
            if !(bit_rate_hz > 0.0) {
                bail!("--bit-rate-hz must be positive");
            }
            let wave = dm_encode(parse_id(&id)?, bit_rate_hz);
            serde_json::to_writer_pretty(create(&out)?, &wave)?;
        }
        Command::Codec { op: CodecOp::Decode { config, frame, db } } => {
            let cfg = config.load()?;
            let frame = read_frame(&frame)?;
            let db = LedDatabase::from_csv(BufReader::new(File::open(&db)?))?;
            let quad = extract_corners(&frame, &cfg.vision)?.corners;
            let rec = decode_frame(&frame, &quad, cfg.capture.bit_rate_hz, &db)?;
            println!("{}", serde_json::to_string(rec)?);
        }
        Command::Report { config, study, seed, out_dir } => {
            let mut cfg = config.load()?;
            if let Some(s) = study {
                cfg.study = s.into();
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = run_experiment(&cfg)?;
            write_outputs(&out, &out_dir)?;
            print_summary(&out);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_pose_with_negative_values() {
        let cli = Cli::try_parse_from(["vlp", "render", "--pose", "0.1,-0.2,1.3,0,0,-5", "--out", "f.pgm"]).unwrap();
        let Command::Render { pose, .. } = cli.command else { panic!() };
        assert_eq!(pose, vec![0.1, -0.2, 1.3, 0.0, 0.0, -5.0]);
    }
}
