use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ppmu::coding::{self, CompressedBlob};
use ppmu::ppm::{PpmConfig, PpmModel};
use ppmu::predict::{run_prediction, Induced};
use ppmu::sources::{Source, Zoo};
use ppmu::{selftest, Alphabet, Rational, Seed};
use ppmu_cli::experiment::{parse_spec, rows_to_csv, rows_to_json, run_experiments};
use ppmu_cli::format::{round9, sig9};
use ppmu_cli::{symbols, CliError, Result};

#[derive(Parser)]
#[command(name = "ppmu", version, about = "PPM measures, universal prediction and coding experiments")]
struct Cli {
    /// Seed for sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Source zoo file (TOML); defaults to the built-in zoo.
    #[arg(long, global = true)]
    zoo: Option<PathBuf>,
    /// Output path; stdout when omitted (required by compress).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of tabular output.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Capped,
}

#[derive(Args)]
struct ModelArgs {
    /// Alphabet size.
    #[arg(long, default_value_t = 2)]
    alphabet: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Capped)]
    mode: ModeArg,
    /// Maximum order in capped mode.
    #[arg(long, default_value_t = 8)]
    order: usize,
    /// Additive smoothing, decimal or p/q.
    #[arg(long, default_value = "1")]
    alpha: String,
}

impl ModelArgs {
    fn config(&self, n: usize) -> Result<PpmConfig> {
        let alphabet = Alphabet::new(self.alphabet)?;
        let alpha: Rational = self.alpha.parse()?;
        let config = match self.mode {
            ModeArg::Full => PpmConfig::full(alphabet).with_full_limit(n.max(1)),
            ModeArg::Capped => PpmConfig::capped(alphabet, self.order),
        }
        .with_smoothing(alpha);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a zoo source.
    Simulate {
        #[arg(long)]
        source: String,
        #[arg(short, long)]
        n: usize,
        /// Write one byte per symbol instead of one symbol per line.
        #[arg(long)]
        raw: bool,
    },
    /// Compress a symbol file into a PPMU blob.
    Compress {
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Input holds one byte per symbol.
        #[arg(long)]
        raw: bool,
    },
    /// Decompress a PPMU blob back to a symbol file.
    Decompress {
        input: PathBuf,
        #[arg(long)]
        raw: bool,
    },
    /// Run the PPM-induced predictor over a symbol file.
    Predict {
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        raw: bool,
        /// Comma-separated checkpoints; defaults to powers of ten and the length.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<usize>>,
    },
    /// Run an experiment spec file.
    Experiment { spec: PathBuf },
    /// Run the acceptance criteria.
    Selftest {
        /// Comma-separated criterion ids (1-10); all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn load_zoo(path: Option<&Path>) -> Result<Zoo> {
    match path {
        Some(p) => Ok(Zoo::from_toml_str(&read_text(p)?)?),
        None => Ok(Zoo::canonical()),
    }
}

fn load_symbols(path: &Path, alphabet: Alphabet, raw: bool) -> Result<ppmu::SymbolSeq> {
    if raw {
        symbols::from_raw(&read(path)?, alphabet)
    } else {
        symbols::from_lines(&read_text(path)?, alphabet)
    }
}

fn write_symbols(out: Option<&Path>, x: &ppmu::SymbolSeq, raw: bool) -> Result<()> {
    let bytes = if raw { symbols::to_raw(x)? } else { symbols::to_lines(x).into_bytes() };
    emit(out, &bytes)
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Simulate { source, n, raw } => {
            let zoo = load_zoo(cli.zoo.as_deref())?;
            let x = zoo.get(&source)?.sample(n, Seed(cli.seed));
            write_symbols(out, &x, raw)
        }
        Command::Compress { input, model, raw } => {
            let out = out.ok_or_else(|| CliError::Spec("compress needs --out".into()))?;
            let x = load_symbols(&input, Alphabet::new(model.alphabet)?, raw)?;
            let blob = coding::encode(&x, &model.config(x.len())?)?;
            emit(Some(out), &blob.to_bytes())?;
            let rate = if x.is_empty() { 0.0 } else { blob.payload_bits() as f64 / x.len() as f64 };
            println!("n={} payload_bits={} rate={}", x.len(), blob.payload_bits(), sig9(rate));
            Ok(())
        }
        Command::Decompress { input, raw } => {
            let blob = CompressedBlob::from_bytes(&read(&input)?)?;
            let x = coding::decode(&blob)?;
            write_symbols(out, &x, raw)
        }
        Command::Predict { input, model, raw, checkpoints } => {
            let x = load_symbols(&input, Alphabet::new(model.alphabet)?, raw)?;
            let checkpoints = checkpoints.unwrap_or_else(|| {
                let mut c: Vec<usize> = (2..).map(|e| 10usize.pow(e)).take_while(|&c| c < x.len()).collect();
                c.push(x.len());
                c
            });
            let mut predictor = Induced::new(PpmModel::new(model.config(x.len())?)?);
            let trace = run_prediction(&mut predictor, &x, &checkpoints)?;
            let text = match cli.format {
                OutFormat::Csv => {
                    let mut s = String::from("n,errors,rate\n");
                    for p in &trace.checkpoints {
                        s.push_str(&format!("{},{},{}\n", p.n, p.errors, sig9(p.rate)));
                    }
                    s
                }
                OutFormat::Json => {
                    let rows: Vec<_> = trace
                        .checkpoints
                        .iter()
                        .map(|p| serde_json::json!({"n": p.n, "errors": p.errors, "rate": round9(p.rate)}))
                        .collect();
                    serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"
                }
            };
            emit(out, text.as_bytes())
        }
        Command::Experiment { spec } => {
            let zoo = load_zoo(cli.zoo.as_deref())?;
            let specs = parse_spec(&read_text(&spec)?, &zoo)?;
            let rows = run_experiments(&specs, &zoo)?;
            let text = match cli.format {
                OutFormat::Csv => rows_to_csv(&rows)?,
                OutFormat::Json => rows_to_json(&rows),
            };
            emit(out, text.as_bytes())
        }
        Command::Selftest { only } => {
            let ids = only.unwrap_or_else(|| (1..=10).collect());
            if let Some(bad) = ids.iter().find(|&&i| !(1..=10).contains(&i)) {
                return Err(CliError::Spec(format!("unknown criterion {bad} (expected 1-10)")));
            }
            let verdicts = selftest::run(&ids);
            let mut report = String::new();
            for v in &verdicts {
                report.push_str(&selftest::format_verdict(v));
                report.push('\n');
            }
            emit(out, report.as_bytes())?;
            match verdicts.iter().filter(|v| !v.pass).count() {
                0 => Ok(()),
                failed => Err(CliError::Selftest(failed)),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ppmu: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
