//! `hcft` command-line front end: `track`, `eval` and `viz`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hcft::config::TrackerConfig;
use hcft::eval::{self, Sequence};
use hcft::BoundingBox;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(name = "hcft", version, about = "Hierarchical correlation filter tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the first annotated box through a sequence directory.
    Track {
        /// Sequence directory (frames in `img/` or the directory itself, plus groundtruth_rect.txt).
        seq: PathBuf,
        /// Result file, one `x,y,w,h` line per frame.
        #[arg(short, long)]
        out: PathBuf,
        /// `key = value` config file; unspecified keys keep their defaults.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Deep feature archive (defaults to features.hcf in the sequence directory).
        #[arg(short, long, conflicts_with = "handcrafted")]
        features: Option<PathBuf>,
        /// Use the built-in handcrafted channels even if an archive exists.
        #[arg(long)]
        handcrafted: bool,
        /// Per-frame `frame,confidence,seconds` log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a result file against ground truth.
    Eval {
        /// Result file (`x,y,w,h` per line).
        result: PathBuf,
        /// Ground-truth file (`x,y,w,h` per line).
        truth: PathBuf,
        /// Write metrics.csv, precision.csv and success.csv here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render the first three principal components of a feature layer.
    Viz {
        /// Sequence directory.
        seq: PathBuf,
        /// 1-based frame number.
        #[arg(long, default_value_t = 1)]
        frame: usize,
        /// Layer id, e.g. `conv5` or `handcrafted`.
        #[arg(long)]
        layer: String,
        #[arg(short, long, conflicts_with = "handcrafted")]
        features: Option<PathBuf>,
        #[arg(long)]
        handcrafted: bool,
        /// Output image (format from the extension).
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn boxes(path: &Path) -> hcft::Result<Vec<BoundingBox>> {
    Ok(eval::read_boxes(path)?
        .into_iter()
        .map(|[x, y, w, h]| BoundingBox::from_top_left(x, y, w, h))
        .collect())
}

fn run(cmd: Command) -> hcft::Result<()> {
    match cmd {
        Command::Track {
            seq,
            out,
            config,
            features,
            handcrafted,
            log,
        } => {
            let cfg = match config {
                Some(p) => TrackerConfig::load(p)?,
                None => TrackerConfig::default(),
            };
            let seq = Sequence::load(&seq)?;
            let src = eval::source_for(&seq, features.as_deref(), handcrafted)?;
            let res = eval::run_track(&seq, &cfg, &src)?;
            eval::write_boxes(&out, &res.top_left())?;
            if let Some(log) = log {
                let mut text = String::from("frame,confidence,seconds\n");
                for (i, (c, s)) in res.confidence.iter().zip(&res.seconds).enumerate() {
                    text.push_str(&format!("{},{c},{s:.6}\n", i + 1));
                }
                std::fs::write(log, text)?;
            }
            let total: f64 = res.seconds.iter().sum();
            eprintln!(
                "{}: {} frames in {total:.2} s ({:.1} fps)",
                seq.name,
                res.boxes.len(),
                res.boxes.len() as f64 / total.max(1e-9)
            );
        }
        Command::Eval { result, truth, out_dir } => {
            let (res, gt) = (boxes(&result)?, boxes(&truth)?);
            let metrics = eval::evaluate(&res, &gt)?;
            print!("{}", metrics.to_csv());
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("metrics.csv"), metrics.to_csv())?;
                std::fs::write(dir.join("precision.csv"), eval::curve_csv(&eval::precision_curve(&res, &gt)?))?;
                std::fs::write(dir.join("success.csv"), eval::curve_csv(&eval::success_curve(&res, &gt)?))?;
            }
        }
        Command::Viz {
            seq,
            frame,
            layer,
            features,
            handcrafted,
            out,
        } => {
            let seq = Sequence::load(&seq)?;
            if frame == 0 || frame > seq.len() {
                return Err(hcft::Error::Data {
                    path: seq.frames[0].parent().unwrap_or(Path::new(".")).to_path_buf(),
                    msg: format!("frame {frame} not in 1..={}", seq.len()),
                });
            }
            let src = eval::source_for(&seq, features.as_deref(), handcrafted)?;
            let img = seq.frame(frame - 1)?;
            let viz = eval::viz_features(frame as u32, &img, &src, &layer)?;
            eval::save_image(&viz, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
