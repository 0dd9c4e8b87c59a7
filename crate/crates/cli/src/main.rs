use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use spalt::gen::{generate, GenSpec};
use spalt::model_io::write_model;
use spalt::tensor::read_tns;
use spalt::timing::TimingSummary;
use spalt::{allocate_csfs, cp_als, init_factors, sort_tensor, stats, CpAlsConfig, CsfPolicy, Error, FactorMatrix, MttkrpEngine, Routine, SparseTensor};

const TASKS_ENV: &str = "SPALT_TASKS";

#[derive(Parser)]
#[command(name = "spalt", version, about = "Parallel sparse tensor CP-ALS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run CP-ALS and report per-routine timings and the final fit.
    Cpd(CpdArgs),
    /// Print dimensions, nonzero count, density and file size.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Write a synthetic tensor in .tns format.
    Gen(GenArgs),
    /// Time a routine across several task counts and emit CSV.
    BenchScaling(BenchArgs),
}

#[derive(Parser)]
struct CpdArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 35)]
    rank: usize,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Stop when the fit changes by less than this; 0 runs every iteration.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// Defaults to $SPALT_TASKS, then to the number of available cores.
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Policy::Two)]
    csf: Policy,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    write_model: Option<PathBuf>,
}

#[derive(Parser)]
struct GenArgs {
    /// Comma-separated dimensions, e.g. 100,80,60.
    #[arg(long, value_parser = parse_dims)]
    dims: [usize; 3],
    #[arg(long)]
    nnz: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// Sample values from a random Kruskal model of this rank.
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Parser)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    tasks_list: Vec<usize>,
    #[arg(long, value_enum, default_value_t = BenchRoutine::All)]
    routine: BenchRoutine,
    /// Factor rank used for the MTTKRP benchmark.
    #[arg(long, default_value_t = 35)]
    rank: usize,
    /// Repetitions per task count; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    One,
    Two,
    All,
}

impl From<Policy> for CsfPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::One => CsfPolicy::One,
            Policy::Two => CsfPolicy::Two,
            Policy::All => CsfPolicy::All,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchRoutine {
    Mttkrp,
    Sort,
    All,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<usize>| format!("expected 3 dimensions, got {}", v.len()))
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SingularGram | Error::EmptyTensor => 3,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 2, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn load(path: &Path) -> Result<SparseTensor, Failure> {
    read_tns(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn task_count(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(t) = flag {
        return if t == 0 { Err(usage("--tasks must be at least 1")) } else { Ok(t) };
    }
    if let Ok(v) = std::env::var(TASKS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(usage(format!("{TASKS_ENV}={v:?} is not a positive integer"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_cpd(args: CpdArgs) -> Result<(), Failure> {
    let tasks = task_count(args.tasks)?;
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let cfg = CpAlsConfig {
        rank: args.rank,
        max_iters: args.iters,
        tolerance: args.tol,
        seed: args.seed,
        tasks,
        csf_policy: args.csf.into(),
        ..Default::default()
    };
    cfg.validate()?;
    let tensor = load(&args.input)?;
    let name = dataset_name(&args.input);

    let mut csv = match &args.csv {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            writeln!(w, "dataset,tasks,trial,routine,seconds")?;
            Some(w)
        }
        None => None,
    };

    let mut runs = Vec::with_capacity(args.trials);
    let mut last = None;
    for trial in 0..args.trials {
        let run = cp_als(&tensor, &cfg)?;
        if let Some(w) = csv.as_mut() {
            for (r, s) in run.timings.iter() {
                writeln!(w, "{name},{tasks},{trial},{},{s:.9}", r.key())?;
            }
        }
        runs.push(run.timings);
        last = Some(run);
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }
    let run = last.expect("at least one trial");

    let [i, j, k] = tensor.dims;
    let mut out = io::stdout().lock();
    writeln!(out, "dataset {name}: {i}x{j}x{k}, {} nonzeros", tensor.nnz())?;
    writeln!(
        out,
        "rank {} iterations {} tasks {tasks} csf {:?} trials {}",
        cfg.rank,
        run.iterations(),
        cfg.csf_policy,
        args.trials
    )?;
    write!(out, "{}", TimingSummary::from_runs(&runs).table())?;
    writeln!(out, "fit {:.10}", run.model.fit)?;

    if let Some(p) = &args.write_model {
        write_model(&run.model, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn cmd_stats(input: &Path) -> Result<(), Failure> {
    let size = std::fs::metadata(input).map_err(|e| usage(format!("{}: {e}", input.display())))?.len();
    let tensor = load(input)?;
    let s = stats(&tensor);
    let [i, j, k] = s.dims;
    println!("dims {i}x{j}x{k}");
    println!("nnz {}", s.nnz);
    println!("density {:.3e}", s.density);
    println!("bytes {size}");
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let g = generate(&GenSpec {
        dims: args.dims,
        nnz: args.nnz,
        seed: args.seed,
        rank: args.rank,
    })
    .map_err(|e| usage(e.to_string()))?;
    spalt::write_tns(&g.tensor, BufWriter::new(File::create(&args.output)?))?;
    Ok(())
}

fn best_of(reps: usize, mut f: impl FnMut() -> Result<f64, Failure>) -> Result<f64, Failure> {
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        best = best.min(f()?);
    }
    Ok(best)
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    if args.tasks_list.is_empty() || args.tasks_list.contains(&0) {
        return Err(usage("--tasks-list needs positive task counts"));
    }
    if args.rank == 0 {
        return Err(usage("--rank must be at least 1"));
    }
    let tensor = load(&args.input)?;
    let mut out = io::stdout().lock();
    writeln!(out, "routine,tasks,seconds,speedup_vs_1")?;

    let mut emit = |routine: &str, time: &dyn Fn(usize) -> Result<f64, Failure>| -> Result<(), Failure> {
        let base = time(1)?;
        for &t in &args.tasks_list {
            let secs = if t == 1 { base } else { time(t)? };
            let speedup = if t == 1 { 1.0 } else { base / secs };
            writeln!(out, "{routine},{t},{secs:.9},{speedup:.4}")?;
        }
        Ok(())
    };

    if args.routine != BenchRoutine::Mttkrp {
        emit("sort", &|tasks| {
            best_of(args.reps, || {
                let mut copy = tensor.clone();
                let start = Instant::now();
                sort_tensor(&mut copy, [0, 1, 2], tasks)?;
                Ok(start.elapsed().as_secs_f64())
            })
        })?;
    }
    if args.routine != BenchRoutine::Sort {
        let alloc = allocate_csfs(&tensor, CsfPolicy::Two, *args.tasks_list.iter().max().unwrap())?;
        let factors = init_factors(tensor.dims, args.rank, 0);
        emit(Routine::Mttkrp.key(), &|tasks| {
            let mut engine = MttkrpEngine::new(&alloc, tasks);
            let mut outs = tensor.dims.map(|d| FactorMatrix::zeros(d, args.rank));
            best_of(args.reps, || {
                let start = Instant::now();
                for (mode, o) in outs.iter_mut().enumerate() {
                    engine.compute(mode, &factors, o)?;
                }
                Ok(start.elapsed().as_secs_f64())
            })
        })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cpd(a) => cmd_cpd(a),
        Command::Stats { input } => cmd_stats(&input),
        Command::Gen(a) => cmd_gen(a),
        Command::BenchScaling(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
