use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tcp_forward::bench::{self, CodecBenchConfig, Scenario, PRESETS};
use tcp_forward::datagram::{self, Role, RunnerConfig};
use tcp_forward::exec::Execution;
use tcp_forward::netsim::{CpuModel, Metrics, Protocol};
use tcp_forward::transport::TransportConfig;

#[derive(Parser)]
#[command(
    name = "tcpfwd",
    version,
    about = "Fountain-coded transport: simulation sweeps, codec benchmarks and UDP transfers"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario sweep in the simulator and write one CSV row per run.
    Sweep(SweepArgs),
    /// Compare LT peeling with RLNC elimination per generation size.
    CodecBench(CodecArgs),
    /// Send a file to a receiver over UDP.
    Send(SendArgs),
    /// Receive a stream over UDP.
    Recv(RecvArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    preset: Option<String>,
    /// Base seed; repetitions use `seed, seed+1, ...`.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Run points one after another.
    #[arg(long)]
    sequential: bool,
    /// Print the built-in scenario names and exit.
    #[arg(long)]
    list_presets: bool,
}

#[derive(Args)]
struct CodecArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8, 16, 32, 64, 128])]
    sizes: Vec<usize>,
    /// Symbols sent up front per segment.
    #[arg(long, default_value_t = 1.25)]
    overhead: f64,
    #[arg(long, default_value_t = 100)]
    repetitions: usize,
    #[arg(long, default_value_t = 1200)]
    symbol_len: usize,
    /// `pc`, `embedded`, `unlimited` or an ops/second rate.
    #[arg(long, default_value = "pc", value_parser = parse_cpu)]
    cpu: CpuModel,
    #[arg(long, default_value_t = 1000)]
    interval_us: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct LinkArgs {
    /// Local address to bind.
    #[arg(long, default_value = "0.0.0.0:0")]
    local: SocketAddr,
    /// Probability of dropping each inbound datagram.
    #[arg(long, default_value_t = 0.0)]
    impair_loss: f64,
    /// Delay added to each inbound datagram, in milliseconds.
    #[arg(long, default_value_t = 0)]
    impair_delay_ms: u64,
    /// Give up after this many seconds without hearing from the peer.
    #[arg(long, default_value_t = 10.0)]
    deadline_s: f64,
    #[arg(long, default_value = "tcp-forward")]
    protocol: Protocol,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coding window in segments.
    #[arg(long)]
    coding_window: Option<usize>,
    /// Write a one-row metrics CSV here.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct SendArgs {
    #[arg(long)]
    remote: SocketAddr,
    /// File to send; standard input when absent.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[command(flatten)]
    link: LinkArgs,
}

#[derive(Args)]
struct RecvArgs {
    /// Only accept datagrams from this peer.
    #[arg(long)]
    remote: Option<SocketAddr>,
    /// Destination file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    link: LinkArgs,
}

fn parse_cpu(s: &str) -> Result<CpuModel, String> {
    match s {
        "pc" => Ok(CpuModel::Pc),
        "embedded" => Ok(CpuModel::Embedded),
        "unlimited" => Ok(CpuModel::Unlimited),
        other => match other.parse::<f64>() {
            Ok(r) if r > 0.0 && r.is_finite() => Ok(CpuModel::Custom(r)),
            _ => Err(format!("expected pc, embedded, unlimited or a positive rate, got `{other}`")),
        },
    }
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sweep(a: SweepArgs) -> Result<()> {
    if a.list_presets {
        for (name, _) in PRESETS {
            println!("{name}");
        }
        return Ok(());
    }
    let mut scenario = match (&a.scenario, &a.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_toml(&text)?
        }
        (None, Some(name)) => Scenario::preset(name)?,
        _ => bail!("give either --scenario or --preset"),
    };
    if let Some(seed) = a.seed {
        scenario.reseed(seed);
    }
    log::info!(
        "scenario {}: {} runs",
        scenario.name,
        scenario.sweep.values.len() * scenario.protocols.len() * scenario.repetitions
    );
    let mut out = sink(a.output.as_ref())?;
    bench::cmd_sweep(&scenario, exec(a.sequential), &mut out)?;
    out.flush()?;
    Ok(())
}

fn codec_bench(a: CodecArgs) -> Result<()> {
    if a.sizes.contains(&0) {
        bail!("generation sizes must be at least 1");
    }
    let cfg = CodecBenchConfig {
        sizes: a.sizes,
        overhead: a.overhead,
        repetitions: a.repetitions,
        symbol_len: a.symbol_len,
        cpu: a.cpu,
        arrival_interval_us: a.interval_us,
        seed: a.seed,
        ..Default::default()
    };
    let mut out = sink(a.output.as_ref())?;
    bench::cmd_codec_bench(&cfg, exec(a.sequential), &mut out)?;
    out.flush()?;
    Ok(())
}

fn runner_config(link: &LinkArgs, remote: Option<SocketAddr>) -> Result<RunnerConfig> {
    if !(link.deadline_s > 0.0 && link.deadline_s.is_finite()) {
        bail!("--deadline-s must be positive");
    }
    let mut transport = TransportConfig { seed: link.seed, ..Default::default() };
    if let Some(n) = link.coding_window {
        transport.coding_window = n;
    }
    Ok(RunnerConfig {
        local: link.local,
        remote,
        impair_loss: link.impair_loss,
        impair_delay: Duration::from_millis(link.impair_delay_ms),
        deadline: Duration::from_secs_f64(link.deadline_s),
        seed: link.seed,
        protocol: link.protocol,
        transport,
        ..Default::default()
    })
}

fn write_metrics(path: Option<&PathBuf>, m: &Metrics) -> Result<()> {
    if let Some(p) = path {
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        bench::write_csv(std::slice::from_ref(m), f)?;
    }
    Ok(())
}

fn send(a: SendArgs) -> Result<()> {
    let cfg = runner_config(&a.link, Some(a.remote))?;
    let mut src: Box<dyn Read> = match &a.input {
        Some(p) => Box::new(File::open(p).with_context(|| format!("opening {}", p.display()))?),
        None => Box::new(io::stdin().lock()),
    };
    let rep = datagram::serve(cfg, Role::Sender(&mut *src))?;
    log::info!("sent {} bytes in {} us", rep.bytes, rep.metrics.duration_us);
    write_metrics(a.link.metrics.as_ref(), &rep.metrics)
}

fn recv(a: RecvArgs) -> Result<()> {
    let cfg = runner_config(&a.link, a.remote)?;
    let mut out = sink(a.output.as_ref())?;
    let rep = datagram::serve(cfg, Role::Receiver(&mut *out))?;
    out.flush()?;
    log::info!("received {} bytes from {:?}", rep.bytes, rep.peer);
    write_metrics(a.link.metrics.as_ref(), &rep.metrics)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Sweep(a) => sweep(a),
        Cmd::CodecBench(a) => codec_bench(a),
        Cmd::Send(a) => send(a),
        Cmd::Recv(a) => recv(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
