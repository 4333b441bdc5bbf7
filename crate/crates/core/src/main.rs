use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use regionlab::heuristics::{combo_config, HeuristicCombo};
use regionlab::ir::{parse_program, Program};
use regionlab::pipeline::check::check_corpus;
use regionlab::pipeline::{compare, compile, generate_program, CompilationResult, PipelineError, Shape};
use regionlab::profiler::{interpret, DEFAULT_FUEL};
use regionlab::region::RegionParams;

#[derive(Parser)]
#[command(name = "regionlab", version, about = "Region-based compilation laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
    Csv,
}

#[derive(clap::Args)]
struct Tuning {
    /// Desirability ratio for region growth.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Largest number of blocks in one region.
    #[arg(long, default_value_t = 200)]
    max_blocks: usize,
    /// Override a heuristic knob, e.g. `--set growth_limit=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile one program and report its metrics.
    Compile {
        file: PathBuf,
        #[arg(long, short = 'H')]
        heuristic: String,
        #[arg(long, default_value = "")]
        input: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        emit_regions: Option<PathBuf>,
        #[arg(long)]
        emit_trace: Option<PathBuf>,
        /// Write the compiled program here.
        #[arg(long)]
        emit_program: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Run a program and print its block profile as JSON.
    Profile {
        file: PathBuf,
        #[arg(long, default_value = "")]
        input: String,
        #[arg(long, default_value_t = DEFAULT_FUEL)]
        fuel: u64,
    },
    /// Compile under several combinations and print the metrics side by side.
    Compare {
        file: PathBuf,
        #[arg(long, default_value = "H0,H1,H4")]
        heuristics: String,
        #[arg(long, default_value = "")]
        input: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Print a generated program.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        procs: usize,
        #[arg(long, default_value_t = 12)]
        max_blocks: usize,
        #[arg(long, default_value_t = 0.3)]
        call_density: f64,
        #[arg(long, default_value_t = 0.3)]
        loop_prob: f64,
        #[arg(long)]
        recursive: bool,
    },
    /// Check every combination on a generated corpus.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        batch: u64,
        #[arg(long, default_value_t = 4)]
        procs: usize,
        #[arg(long)]
        recursive: bool,
        #[arg(long, default_value = "H0,H1,H2,H3,H4,H5,H6")]
        heuristics: String,
    },
}

/// Failure with its exit status: 1 for problems in the user's input,
/// 2 for internal errors.
struct Failure(u8, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Invalid(_) | PipelineError::Params(_) | PipelineError::Interp(_) => 1,
            _ => 2,
        };
        Failure(code, e.to_string())
    }
}

fn user<E: std::fmt::Display>(e: E) -> Failure {
    Failure(1, e.to_string())
}

fn load(path: &PathBuf) -> Result<Program, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(1, format!("{}: {e}", path.display())))?;
    parse_program(&text).map_err(|e| Failure(1, format!("{}: {e}", path.display())))
}

fn parse_input(s: &str) -> Result<Vec<i64>, Failure> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Failure(1, format!("bad input value `{t}`"))))
        .collect()
}

fn combos(list: &str, tuning: Option<&Tuning>) -> Result<Vec<HeuristicCombo>, Failure> {
    list.split(',')
        .map(|n| {
            let mut c = combo_config(n.trim()).map_err(user)?;
            for kv in tuning.map(|t| t.set.as_slice()).unwrap_or_default() {
                let (k, v) = kv.split_once('=').ok_or_else(|| Failure(1, format!("expected KEY=VALUE, got `{kv}`")))?;
                c.set(k.trim(), v.trim()).map_err(user)?;
            }
            Ok(c)
        })
        .collect()
}

fn params(t: &Tuning) -> RegionParams {
    RegionParams {
        desirability_ratio: t.ratio,
        max_region_blocks: t.max_blocks,
    }
}

fn write(path: &PathBuf, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure(2, format!("{}: {e}", path.display())))
}

fn single_report(r: &CompilationResult, format: Format) -> String {
    match format {
        Format::Json => {
            let mut v = serde_json::to_value(&r.report).expect("report serializes");
            v["compile_ms"] = serde_json::json!(r.compile_ms);
            serde_json::to_string_pretty(&v).expect("json") + "\n"
        }
        Format::Table | Format::Csv => {
            let t = compare(std::slice::from_ref(r)).expect("one result");
            match format {
                Format::Csv => t.to_csv(),
                _ => t.to_table(),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Compile {
            file,
            heuristic,
            input,
            format,
            emit_regions,
            emit_trace,
            emit_program,
            tuning,
        } => {
            let p = load(&file)?;
            let combo = combos(&heuristic, Some(&tuning))?.remove(0);
            let r = compile(&p, &parse_input(&input)?, &combo, &params(&tuning))?;
            if let Some(path) = emit_regions {
                let j = r.regions.to_json(&r.program_out);
                write(&path, &serde_json::to_string_pretty(&j).expect("json"))?;
            }
            if let Some(path) = emit_trace {
                let j = r.trace.as_ref().map(|t| t.to_json()).unwrap_or(serde_json::Value::Null);
                write(&path, &serde_json::to_string_pretty(&j).expect("json"))?;
            }
            if let Some(path) = emit_program {
                write(&path, &r.program_out.to_string())?;
            }
            print!("{}", single_report(&r, format));
        }
        Cmd::Profile { file, input, fuel } => {
            let p = load(&file)?;
            let prof = interpret(&p, &parse_input(&input)?, fuel).map_err(user)?;
            println!("{}", prof.to_json());
        }
        Cmd::Compare {
            file,
            heuristics,
            input,
            format,
            tuning,
        } => {
            let p = load(&file)?;
            let input = parse_input(&input)?;
            let mut results = Vec::new();
            for c in combos(&heuristics, Some(&tuning))? {
                results.push(compile(&p, &input, &c, &params(&tuning))?);
            }
            let t = compare(&results).map_err(|e| Failure(2, e.to_string()))?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&t.to_json()).expect("json")),
                Format::Table => print!("{}", t.to_table()),
                Format::Csv => print!("{}", t.to_csv()),
            }
        }
        Cmd::Gen {
            seed,
            procs,
            max_blocks,
            call_density,
            loop_prob,
            recursive,
        } => {
            let shape = Shape {
                procs,
                max_blocks,
                call_density,
                loop_prob,
                recursive,
            };
            print!("{}", generate_program(seed, &shape));
        }
        Cmd::Check {
            seed,
            batch,
            procs,
            recursive,
            heuristics,
        } => {
            let shape = Shape {
                procs,
                recursive,
                ..Shape::default()
            };
            let cs = combos(&heuristics, None)?;
            let r = check_corpus(seed, batch, &shape, &cs, &RegionParams::default());
            for (s, vs) in &r.failures {
                for v in vs {
                    println!("seed {s}: {}", serde_json::to_string(v).expect("json"));
                }
            }
            println!("{} programs, {} violations", r.programs, r.violation_count());
            if r.violation_count() > 0 {
                return Err(Failure(1, "property violations found".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
