//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sweepdt::extsort::SiteRecord;
use sweepdt::oracle::{
    generate_box, jittered_lattice, spherical_shell, to_records, uniform_cube, write_sites_from, SyntheticBoxSpec,
};
use sweepdt::pipeline::{
    bench_deltax, read_stats, resample, run_pipeline, verify_random, InputFormat, PipelineError, RunConfig, Stage,
    StatsWriter,
};
use sweepdt::sweep::OffliningMode;
use sweepdt::voronoi::OutputFormat;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "sweepdt", version, about = "Out-of-core plane-sweep Delaunay tessellation and Voronoi volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tessellate a site file and write edges, volumes, timeline and report.
    Run(RunArgs),
    /// Write a synthetic site file.
    Generate {
        #[command(subcommand)]
        workload: Workload,
    },
    /// Cross-check the pipeline against the brute-force oracles.
    Verify(VerifyArgs),
    /// Peak online geometry for homogeneous slabs of growing length.
    BenchDeltax(BenchArgs),
    /// Downsample a stats timeline to CSV for plotting.
    StatsPlot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Site file (`id,x,y,z` rows or 28-byte binary records).
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "binary")]
    input_format: InputFormat,
    #[arg(long, default_value = "binary")]
    output_format: OutputFormat,
    /// Sort memory budget, e.g. `256MiB` or a byte count.
    #[arg(long, default_value = "256MiB", value_parser = parse_bytes)]
    budget: u64,
    #[arg(long, default_value_t = 0.04)]
    trim: f64,
    /// Grid cells per axis; derived from the site count by default.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 1024)]
    cadence: usize,
    #[arg(long, default_value = "improved")]
    offlining: OffliningMode,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Sweep along raw x instead of the first principal axis.
    #[arg(long)]
    no_pca: bool,
    #[arg(long, default_value_t = 1000)]
    stats_interval: u64,
    /// Write edges and volumes sorted by id.
    #[arg(long)]
    sort_output: bool,
    /// Also write offlined tetrahedra to `tetrahedra.bin`.
    #[arg(long)]
    spill_tetrahedra: bool,
    /// Keep offlined tetrahedra linked and fail if a later site conflicts.
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    scratch: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Workload {
    /// Uniform box `[0,dx]×[0,dy]×[0,dz]` at the given density.
    Box {
        #[arg(long, default_value_t = 1.0)]
        dx: f64,
        #[arg(long, default_value_t = 1.0)]
        dy: f64,
        #[arg(long, default_value_t = 1.0)]
        dz: f64,
        #[arg(long)]
        density: f64,
        #[command(flatten)]
        out: GenOut,
    },
    /// Uniform in the unit cube.
    Uniform {
        #[arg(short, long)]
        n: usize,
        #[command(flatten)]
        out: GenOut,
    },
    /// Thin spherical shell.
    Shell {
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.01)]
        thickness: f64,
        #[command(flatten)]
        out: GenOut,
    },
    /// Cubic lattice with per-coordinate jitter.
    Lattice {
        #[arg(short, long)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long, default_value_t = 1e-6)]
        jitter: f64,
        #[command(flatten)]
        out: GenOut,
    },
}

#[derive(Args)]
struct GenOut {
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "binary")]
    format: OutputFormat,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(short, long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Keep the run files here instead of a temporary directory.
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    dx: Vec<f64>,
    #[arg(long, default_value_t = 1e5)]
    density: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "improved")]
    offlining: OffliningMode,
}

#[derive(Args)]
struct PlotArgs {
    /// `stats.csv` written by `run`.
    input: PathBuf,
    #[arg(long, default_value_t = 200)]
    bins: usize,
    /// Write here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Byte counts with an optional K/M/G suffix (powers of 1024).
fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: u64 = num.parse().map_err(|_| format!("bad byte count '{s}'"))?;
    let shift = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 0,
        "k" | "kb" | "kib" => 10,
        "m" | "mb" | "mib" => 20,
        "g" | "gb" | "gib" => 30,
        _ => return Err(format!("bad byte unit in '{s}'")),
    };
    n.checked_mul(1 << shift).ok_or_else(|| format!("byte count '{s}' overflows"))
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Config(_) => EXIT_CONFIG,
            PipelineError::Io { .. } => EXIT_IO,
            PipelineError::Data { stage, .. } if *stage != Stage::Output => EXIT_IO,
            _ => 1,
        };
        Failure { code, error: e.into() }
    }
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_IO,
        error: e.into(),
    }
}

fn config_failure(msg: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: anyhow::anyhow!(msg),
    }
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig {
        input: a.input,
        input_format: a.input_format,
        output_dir: a.output,
        output_format: a.output_format,
        budget: a.budget,
        trim_fraction: a.trim,
        grid_resolution: a.grid,
        eviction_cadence: a.cadence,
        offlining: a.offlining,
        workers: a.workers,
        pca: !a.no_pca,
        stats_interval: a.stats_interval,
        sort_output: a.sort_output,
        spill_tetrahedra: a.spill_tetrahedra,
        audit: a.audit,
        scratch_dir: a.scratch,
    };
    let r = run_pipeline(&cfg)?;
    println!(
        "read {} trimmed {} duplicated {} inserted {}",
        r.sites_read, r.sites_trimmed, r.sites_duplicated, r.sites_inserted
    );
    println!(
        "edges {} bounded cells {} unbounded cells {}",
        r.edges_emitted, r.bounded_cells, r.unbounded_cells
    );
    println!(
        "tetrahedra created {} evicted {} peak online {}",
        r.tetrahedra_created, r.tetrahedra_evicted, r.peak_online_tetrahedra
    );
    println!("{:.2} s", r.seconds.total);
    Ok(())
}

fn write_generated(out: &GenOut, sites: impl Iterator<Item = SiteRecord>) -> Result<u64, Failure> {
    match out.format {
        OutputFormat::Binary => write_sites_from(&out.output, sites).map_err(io_failure),
        OutputFormat::Csv => write_csv_sites(&out.output, sites)
            .with_context(|| format!("writing {}", out.output.display()))
            .map_err(io_failure),
    }
}

fn write_csv_sites(path: &Path, sites: impl Iterator<Item = SiteRecord>) -> anyhow::Result<u64> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id,x,y,z")?;
    let mut n = 0;
    for s in sites {
        writeln!(w, "{},{:?},{:?},{:?}", s.id, s.x, s.y, s.z)?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

fn generate(w: Workload) -> Result<(), Failure> {
    let n = match w {
        Workload::Box { dx, dy, dz, density, out } => {
            let spec = SyntheticBoxSpec {
                extents: [dx, dy, dz],
                density,
                seed: out.seed,
            };
            if !spec.is_valid() {
                return Err(config_failure("box extents and density must be positive and finite".into()));
            }
            if spec.count() > u32::MAX as u64 {
                return Err(config_failure(format!("{} sites exceed the 32-bit id range", spec.count())));
            }
            write_generated(&out, generate_box(&spec))?
        }
        Workload::Uniform { n, out } => write_generated(&out, to_records(&uniform_cube(n, out.seed)).into_iter())?,
        Workload::Shell {
            n,
            radius,
            thickness,
            out,
        } => {
            if !(radius > 0.0) || !(0.0..=1.0).contains(&thickness) {
                return Err(config_failure("need radius > 0 and thickness in [0, 1]".into()));
            }
            let pts = spherical_shell(n, radius, thickness, out.seed);
            write_generated(&out, to_records(&pts).into_iter())?
        }
        Workload::Lattice { k, spacing, jitter, out } => {
            let pts = jittered_lattice(k, spacing, jitter, out.seed);
            write_generated(&out, to_records(&pts).into_iter())?
        }
    };
    println!("{n} sites");
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let tmp;
    let dir = match a.work_dir {
        Some(d) => d,
        None => {
            tmp = tempfile::Builder::new().prefix("sweepdt-verify").tempdir().map_err(io_failure)?;
            tmp.path().to_path_buf()
        }
    };
    let report = verify_random(a.n, a.seed, &dir)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            error: anyhow::anyhow!("verification failed"),
        })
    }
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    if a.dx.iter().any(|d| !(*d > 0.0)) || !(a.density > 0.0) {
        return Err(config_failure("dx values and density must be positive".into()));
    }
    let rows = bench_deltax(&a.dx, a.density, a.seed, a.offlining).map_err(|e| Failure {
        code: 1,
        error: e.into(),
    })?;
    println!("dx,sites,offlining,peak_online_tetrahedra,tetrahedra_created,real_tetrahedra,peak_resident_bytes,seconds");
    for r in rows {
        println!(
            "{},{},{},{},{},{},{},{:.3}",
            r.dx,
            r.sites,
            r.offlining,
            r.peak_online_tetrahedra,
            r.tetrahedra_created,
            r.real_tetrahedra,
            r.peak_resident_bytes,
            r.seconds
        );
    }
    Ok(())
}

fn stats_plot(a: PlotArgs) -> Result<(), Failure> {
    let samples = read_stats(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .map_err(io_failure)?;
    let rows = resample(&samples, a.bins);
    let out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_failure)?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = StatsWriter::new(out).map_err(io_failure)?;
    for r in &rows {
        w.push(r).map_err(io_failure)?;
    }
    w.finish().and_then(|mut o| o.flush()).map_err(io_failure)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Generate { workload } => generate(workload),
        Command::Verify(a) => verify(a),
        Command::BenchDeltax(a) => bench(a),
        Command::StatsPlot(a) => stats_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
