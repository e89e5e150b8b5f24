use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tablekit::commands::{self, Failure, LabelOptions, SgclCheckOptions};
use tablekit::core::ingest::SourceKind;
use tablekit::core::sgcl::{SgclConfig, SgclParams, ToyInstance};
use tablekit::core::taskgen::{StructureFormat, TaskKind};
use tablekit::{fixture, jsonl, report, synth, Error};

/// Table recognition data pipeline: convert, clean, augment, label, evaluate.
///
/// Record-parallel commands use TABLEKIT_WORKERS threads (default: one per
/// core). Outputs are sorted by record id and do not depend on the worker
/// count. Exit status: 0 on success, 1 on a hard error or a failed check,
/// 2 on a usage error.
#[derive(Parser)]
#[command(name = "tablekit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert foreign records to unified annotations (JSON lines).
    ///
    /// Records that cannot be read are reported and skipped; records that
    /// read fine but break annotation invariants are written for `clean`.
    Convert {
        #[arg(long, value_parser = parse_kind, help = "pubtabnet | grid | spotting")]
        source_kind: SourceKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop records that break the cleaning rules and collapse redundant grids.
    ///
    /// The report has one CSV row `id,rule,detail` per dropped or collapsed
    /// record and no header; a clean corpus yields an empty report.
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Sample sub-tables; sample k of table T is named `T#augk`.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        per_table: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate one prompt/target sample per annotation.
    Genlabels {
        #[arg(long, value_parser = parse_task, help = "cell_detect | span_cell_detect | row_col_detect | structure_parse | html_parse | spot_ordered | spot_boxquery")]
        task: TaskKind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Coordinate bins per axis.
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(2..))]
        bins: u32,
        /// Spotting targets without line boxes.
        #[arg(long)]
        no_coords: bool,
        /// Cell detection without span cells.
        #[arg(long)]
        exclude_spans: bool,
        /// Output format of structure_parse.
        #[arg(long, value_enum, default_value_t = Format::Html)]
        format: Format,
    },
    /// Score predictions against ground truth by TEDS, TEDS-S and AP50.
    ///
    /// Each input line is a record {"id", "html", "boxes", "scores"}, a unified
    /// annotation (HTML from the grid codec, boxes from its cells) or an HTML
    /// task sample. The report is CSV `id,teds,teds_s,teds_delta,parse_flags`
    /// followed by a `# samples=.. teds=.. teds_s=.. teds_delta=.. ap50=..` line.
    Eval {
        /// Headline metric printed on stdout.
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the SGCL invariant and gradient suite on a fixture directory.
    ///
    /// The directory holds params.txt and toy_*.json. A gradient check passes
    /// when its worst relative error is strictly below the tolerance.
    SgclCheck {
        #[arg(long, value_parser = parse_fixture_dir)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Random parameter draws in addition to the stored parameters.
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write synthetic source corpora, their expected annotations and a
    /// corrupted corpus with its manifest.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        /// Tables per source kind.
        #[arg(long, default_value_t = 30)]
        tables: usize,
        /// Records in the corrupted corpus.
        #[arg(long, default_value_t = 55)]
        corrupted: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write an SGCL fixture directory with random parameters and toy instances.
    SynthSgcl {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        instances: usize,
        #[arg(long, default_value_t = 6)]
        cells: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Teds,
    Ap50,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Html,
    Markdown,
}

fn parse_kind(s: &str) -> Result<SourceKind, String> {
    SourceKind::from_name(s).ok_or_else(|| {
        let names: Vec<_> = SourceKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown source kind {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    TaskKind::from_name(s).ok_or_else(|| {
        let names: Vec<_> = TaskKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown task {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_fixture_dir(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if fixture::is_fixture_dir(&p) {
        Ok(p)
    } else {
        Err(format!("{s} must be a directory with {} and toy_*.json files", fixture::PARAMS_FILE))
    }
}

fn report_failures(what: &str, failures: &[Failure]) -> ExitCode {
    for f in failures {
        eprintln!("{what} {}: {}", f.id, f.reason);
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} record(s) failed", failures.len());
        ExitCode::FAILURE
    }
}

fn run(cmd: Cmd) -> Result<ExitCode, Error> {
    match cmd {
        Cmd::Convert { source_kind, input, out } => {
            let s = commands::convert(source_kind, &input, &out)?;
            eprintln!("converted {} record(s); {} fail validation and are left for clean", s.written, s.invalid);
            Ok(report_failures("cannot convert", &s.failures))
        }
        Cmd::Clean { input, out, report } => {
            let s = commands::clean(&input, &out, &report)?;
            eprintln!("kept {} (collapsed {}), dropped {}", s.kept, s.collapsed, s.dropped);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Augment { input, out, per_table, seed } => {
            let n = commands::augment(&input, &out, per_table, seed)?;
            eprintln!("wrote {n} sub-table(s)");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Genlabels { task, input, out, bins, no_coords, exclude_spans, format } => {
            let structure = match format {
                Format::Html => StructureFormat::Html,
                Format::Markdown => StructureFormat::Markdown,
            };
            let opts = LabelOptions { bins, coords: !no_coords, exclude_spans, structure };
            let s = commands::genlabels(task, &input, &out, &opts)?;
            eprintln!("wrote {} {} sample(s)", s.written, task.name());
            Ok(report_failures("cannot label", &s.failures))
        }
        Cmd::Eval { metric, pred, gt, report } => {
            let r = commands::eval(&pred, &gt, report.as_deref())?;
            match metric {
                Metric::Teds => println!(
                    "teds={:.6} teds_s={:.6} teds_delta={:.6}",
                    r.mean.teds, r.mean.teds_s, r.mean.teds_delta
                ),
                Metric::Ap50 => println!("ap50={:.6}", r.ap50),
            }
            eprintln!("{}", report::summary_line(&r));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::SgclCheck { fixtures, tolerance, points, seed } => {
            let opts = SgclCheckOptions { tolerance, points, seed, ..SgclCheckOptions::default() };
            let rows = commands::sgcl_check(&fixtures, &opts)?;
            let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
            for r in &rows {
                let verdict = if r.passed { "PASS" } else { "FAIL" };
                println!("{:<width$}  {verdict}  {}", r.name, r.detail);
            }
            let failed = rows.iter().filter(|r| !r.passed).count();
            println!("{} of {} checks passed at tolerance {tolerance}", rows.len() - failed, rows.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::SynthCorpus { out, tables, corrupted, seed } => {
            std::fs::create_dir_all(&out).map_err(|e| Error::Other(format!("{}: {e}", out.display())))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for kind in SourceKind::ALL {
                let pairs = synth::source_corpus(&mut rng, kind, tables, &format!("{}-", kind.name()), (2, 10));
                let (records, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
                jsonl::write_sources(&out.join(format!("{}.jsonl", kind.name())), &records)?;
                jsonl::write(&out.join(format!("expected_{}.jsonl", kind.name())), &truth)?;
            }
            let (records, manifest) = synth::corrupted_corpus(&mut rng, corrupted, "corrupt-");
            jsonl::write(&out.join("corrupted.jsonl"), &records)?;
            let path = out.join("manifest.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Other(e.to_string()))?;
            let io = |e: csv::Error| Error::Other(e.to_string());
            w.write_record(["id", "corruption", "expected"]).map_err(io)?;
            for m in &manifest {
                w.write_record([m.id.as_str(), m.corruption.name(), &m.corruption.expected().to_string()]).map_err(io)?;
            }
            w.flush().map_err(|e| Error::Other(e.to_string()))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::SynthSgcl { out, instances, cells, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = SgclConfig::toy();
            let sg = |e: tablekit::core::sgcl::SgclError| Error::Other(e.to_string());
            let params = SgclParams::random(cfg, &mut rng).map_err(sg)?;
            let insts = (0..instances)
                .map(|_| ToyInstance::random(cfg, cells, &mut rng))
                .collect::<Result<Vec<_>, _>>()
                .map_err(sg)?;
            fixture::save(&out, &params, &insts)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(Error::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
