use std::fs;
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scaledown_core::config::RunConfig;
use scaledown_core::covergen::{self, ExtractOptions, Extractor};
use scaledown_core::kernel::KernelError;
use scaledown_core::transport::{bridge_pump, mailbox, run_remote_host, BridgeClient, BridgeStats};
use scaledown_core::vps::{Vps, VpsConfig};
use scaledown_core::{
    aggregate, assemble, slowdown, InputScript, Kernel, LockstepVerdict, Mutant, ProgramImage, RunOutcome,
    RunPredicate, RunSummary, COVERPOINTS,
};

#[derive(Parser)]
#[command(name = "scaledown", version, about = "Clock-gated co-emulation driver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a source file into an image.
    Asm {
        source: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run to halt and print the run summary.
    Run(RunArgs),
    /// Run with sampling and write stall_stack.csv, per_pc.csv, slowdown.json.
    Profile {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        interval: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run in lockstep against the golden model.
    Verify(RunArgs),
    /// Run with mux-toggle coverage and dump the bitmap.
    Coverage(RunArgs),
    /// Extract coverpoints from SystemVerilog sources.
    Covergen {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        include_static: bool,
        /// One point per case arm in addition to the select.
        #[arg(long)]
        case_arms: bool,
    },
    /// DUT side of a split run: accept one host connection.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        /// Port, or address:port.
        #[arg(long)]
        listen: String,
    },
    /// Host side of a split run.
    Host {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        connect: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Assembly (`.s`) or image file. Overrides `program` in the config.
    program: Option<PathBuf>,
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    catchup: bool,
    #[arg(long)]
    lockstep: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fifo_depth: Option<u32>,
    #[arg(long)]
    watchdog: Option<u64>,
    /// Entry point, hex with 0x prefix or decimal.
    #[arg(long, value_parser = parse_u32)]
    entry: Option<u32>,
    #[arg(long)]
    stdin: Option<String>,
    #[arg(long, conflicts_with = "stdin")]
    stdin_file: Option<PathBuf>,
    /// Inject a microarchitectural bug (kebab-case name).
    #[arg(long)]
    mutant: Option<String>,
    #[arg(long)]
    ticks_per_sample: Option<u32>,
    /// Write the DUT console output here instead of stderr.
    #[arg(long)]
    console: Option<PathBuf>,
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u32::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|e| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Divergence,
    Parse(anyhow::Error),
    Watchdog(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Divergence => 2,
            Failure::Parse(_) => 3,
            Failure::Watchdog(_) => 4,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.into())
    }
}

type Res<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) | Failure::Parse(e) | Failure::Watchdog(e) => eprintln!("error: {e:#}"),
                Failure::Divergence => {}
            }
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cmd: Cmd) -> Res<()> {
    match cmd {
        Cmd::Asm { source, out } => asm(&source, out.as_deref()),
        Cmd::Run(a) => run(&a),
        Cmd::Profile { run, interval, out } => profile(&run, interval, &out),
        Cmd::Verify(a) => verify(&a),
        Cmd::Coverage(a) => coverage(&a),
        Cmd::Covergen { files, format, include_static, case_arms } => {
            covergen_cmd(&files, format, include_static, case_arms)
        }
        Cmd::Serve { run, listen } => serve(&run, &listen),
        Cmd::Host { run, connect } => host(&run, &connect),
    }
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Config)
}

fn print_json<T: Serialize>(v: &T) -> Res<()> {
    let s = serde_json::to_string_pretty(v).map_err(anyhow::Error::from)?;
    println!("{s}");
    Ok(())
}

fn asm(source: &Path, out: Option<&Path>) -> Res<()> {
    let text = read(source)?;
    let img = assemble(&text).map_err(|e| Failure::Parse(anyhow::anyhow!("{}: {e}", source.display())))?;
    match out {
        Some(p) => fs::write(p, img.to_text())?,
        None => print!("{}", img.to_text()),
    }
    Ok(())
}

struct Prepared {
    image: ProgramImage,
    input: InputScript,
    config: RunConfig,
    console: Option<PathBuf>,
}

fn load_image(path: &Path) -> Res<ProgramImage> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "s" || e == "S" || e == "asm") {
        assemble(&text).map_err(|e| Failure::Parse(anyhow::anyhow!("{}: {e}", path.display())))
    } else {
        ProgramImage::parse(&text).map_err(|e| Failure::Parse(anyhow::anyhow!("{}: {e}", path.display())))
    }
}

fn prepare(a: &RunArgs) -> Res<Prepared> {
    let mut config = RunConfig::default();
    let mut base = PathBuf::from(".");
    if let Some(path) = &a.config {
        let text = read(path)?;
        config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(dir) = path.parent() {
            base = dir.to_path_buf();
        }
    }
    if a.catchup {
        config.catchup_enabled = true;
    }
    if a.lockstep {
        config.lockstep = true;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.fifo_depth {
        config.fifo_depth = v;
    }
    if let Some(v) = a.watchdog {
        config.watchdog_cycles = v;
    }
    if let Some(v) = a.entry {
        config.entry = Some(v);
    }
    if let Some(v) = a.ticks_per_sample {
        config.host.ticks_per_sample = v;
    }
    if let Some(s) = &a.stdin {
        config.stdin = Some(s.clone());
    }
    if let Some(p) = &a.stdin_file {
        config.stdin = Some(read(p)?);
    }
    if let Some(m) = &a.mutant {
        let m: Mutant = serde_json::from_value(serde_json::Value::String(m.clone()))
            .map_err(|_| anyhow::anyhow!("unknown mutant `{m}`"))?;
        config.pipeline.mutant = Some(m);
    }
    let program = match (&a.program, &config.program) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => base.join(p),
        (None, None) => return Err(Failure::Config(anyhow::anyhow!("no program given"))),
    };
    config.validate().map_err(anyhow::Error::from)?;
    let mut image = load_image(&program)?;
    if let Some(e) = config.entry {
        image.entry = e;
    }
    let input = config.input_script();
    Ok(Prepared { image, input, config, console: a.console.clone() })
}

impl Prepared {
    fn kernel(&self) -> Res<Kernel> {
        Kernel::new(&self.image, &self.input, self.config.kernel_config()).map_err(kernel_failure)
    }

    fn emit_console(&self, bytes: &[u8]) -> Res<()> {
        match &self.console {
            Some(p) => fs::write(p, bytes)?,
            None => {
                let mut e = io::stderr().lock();
                e.write_all(bytes)?;
                e.flush()?;
            }
        }
        Ok(())
    }
}

fn kernel_failure(e: KernelError) -> Failure {
    match e {
        KernelError::Watchdog { .. } | KernelError::Deadlock { .. } => Failure::Watchdog(e.into()),
        _ => Failure::Config(e.into()),
    }
}

#[derive(Serialize)]
struct RunReport {
    #[serde(flatten)]
    summary: RunSummary,
    outcome: RunOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<LockstepVerdict>,
}

/// Runs to halt and converts abnormal endings into failures.
fn execute(p: &Prepared, k: &mut Kernel) -> Res<RunReport> {
    let outcome = k.run_until(RunPredicate::Halted).map_err(kernel_failure)?;
    p.emit_console(k.output())?;
    let verdict = k.verdict();
    Ok(RunReport { summary: k.summary(), outcome, verdict })
}

fn check_outcome(r: &RunReport) -> Res<()> {
    match &r.outcome {
        RunOutcome::Diverged => Err(Failure::Divergence),
        RunOutcome::DutFault { error } => Err(Failure::Config(anyhow::anyhow!("DUT fault: {error}"))),
        _ => Ok(()),
    }
}

fn run(a: &RunArgs) -> Res<()> {
    let p = prepare(a)?;
    let mut k = p.kernel()?;
    let r = execute(&p, &mut k)?;
    print_json(&r)?;
    check_outcome(&r)
}

fn profile(a: &RunArgs, interval: Option<u64>, out: &Path) -> Res<()> {
    let mut p = prepare(a)?;
    let interval = interval.or(p.config.sample_interval).unwrap_or(1);
    p.config.sample_interval = Some(interval);
    p.config.validate().map_err(anyhow::Error::from)?;
    let mut k = p.kernel()?;
    let r = execute(&p, &mut k)?;
    let prof = aggregate(k.samples(), interval);
    fs::create_dir_all(out)?;
    fs::write(out.join("stall_stack.csv"), prof.stack.to_csv())?;
    fs::write(out.join("per_pc.csv"), prof.per_pc_csv())?;
    let sd = serde_json::to_string_pretty(&slowdown(&r.summary, interval)).map_err(anyhow::Error::from)?;
    fs::write(out.join("slowdown.json"), sd + "\n")?;
    print_json(&r)?;
    check_outcome(&r)
}

fn verify(a: &RunArgs) -> Res<()> {
    let mut p = prepare(a)?;
    p.config.lockstep = true;
    let mut k = p.kernel()?;
    let r = execute(&p, &mut k)?;
    print_json(&r.verdict)?;
    match (&r.outcome, &r.verdict) {
        (RunOutcome::Diverged, _) | (_, Some(LockstepVerdict::Diverged(_))) => Err(Failure::Divergence),
        _ => check_outcome(&r),
    }
}

#[derive(Serialize)]
struct CoverageReport {
    covered: u32,
    total: usize,
    bitmap: String,
    points: Vec<CoveredPoint>,
}

#[derive(Serialize)]
struct CoveredPoint {
    id: usize,
    name: &'static str,
    covered: bool,
}

fn coverage(a: &RunArgs) -> Res<()> {
    let mut p = prepare(a)?;
    p.config.coverage = true;
    let mut k = p.kernel()?;
    let r = execute(&p, &mut k)?;
    check_outcome(&r)?;
    let bits = k.pipeline().coverage_bits();
    let points = COVERPOINTS
        .iter()
        .enumerate()
        .map(|(id, &name)| CoveredPoint { id, name, covered: bits >> id & 1 == 1 })
        .collect();
    print_json(&CoverageReport {
        covered: bits.count_ones(),
        total: COVERPOINTS.len(),
        bitmap: format!("{:0width$b}", bits, width = COVERPOINTS.len()),
        points,
    })
}

fn covergen_cmd(files: &[PathBuf], format: Format, include_static: bool, case_arms: bool) -> Res<()> {
    let mut ex = Extractor::new(ExtractOptions { case_arms });
    let mut failed = false;
    for f in files {
        let src = read(f)?;
        match covergen::parse(&src) {
            Ok(ast) => ex.file(&f.display().to_string(), &ast),
            Err(errs) => {
                failed = true;
                for e in errs {
                    eprintln!("{}:{e}", f.display());
                }
            }
        }
    }
    if failed {
        return Err(Failure::Parse(anyhow::anyhow!("syntax errors in input")));
    }
    let points = covergen::emitted(&ex.finish(), include_static);
    match format {
        Format::Json => println!("{}", covergen::emit_json(&points)),
        Format::Text => print!("{}", covergen::emit_text(&points)),
    }
    Ok(())
}

fn endpoint(s: &str) -> String {
    if s.parse::<u16>().is_ok() {
        format!("127.0.0.1:{s}")
    } else {
        s.to_string()
    }
}

/// The DUT side may still be starting up.
fn connect_retry(addr: &str) -> io::Result<TcpStream> {
    let mut tries = 0;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if tries < 50 && e.kind() == io::ErrorKind::ConnectionRefused => {
                tries += 1;
                std::thread::sleep(std::time::Duration::from_millis(100));
            }
            Err(e) => return Err(e),
        }
    }
}

fn serve(a: &RunArgs, listen: &str) -> Res<()> {
    let p = prepare(a)?;
    let listener = TcpListener::bind(endpoint(listen))?;
    eprintln!("listening on {}", listener.local_addr()?);
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let (tx, mb) = mailbox();
    let stats = Arc::new(BridgeStats::default());
    let pump_stats = stats.clone();
    let pump = std::thread::spawn(move || bridge_pump(reader, stream, tx, pump_stats));
    let mut k = Kernel::new_bridged(&p.image, &p.input, p.config.kernel_config(), mb).map_err(kernel_failure)?;
    let outcome = k.run_until(RunPredicate::Halted).map_err(kernel_failure)?;
    let r = RunReport { summary: k.summary(), outcome, verdict: None };
    // Dropping the kernel closes the mailbox and lets the pump finish.
    drop(k);
    let _ = pump.join();
    print_json(&r)?;
    check_outcome(&r)
}

fn host(a: &RunArgs, connect: &str) -> Res<()> {
    let p = prepare(a)?;
    let c = p.config.kernel_config();
    let mut vps = Vps::new(
        VpsConfig {
            dram: c.dram,
            seed: c.cost.seed,
            data_delay_max: c.cost.data_delay_max,
            lockstep: c.lockstep,
            record_commits: false,
        },
        &p.image,
        &p.input,
    )
    .map_err(anyhow::Error::from)?;
    let stream = connect_retry(&endpoint(connect))?;
    stream.set_nodelay(true)?;
    let mut link = BridgeClient::new(stream);
    run_remote_host(&mut vps, &mut link).context("bridge")?;
    p.emit_console(&vps.output)?;
    if let Some(ls) = vps.lockstep_mut() {
        let v = ls.finish();
        print_json(&v)?;
        if matches!(v, LockstepVerdict::Diverged(_)) {
            return Err(Failure::Divergence);
        }
    }
    Ok(())
}
