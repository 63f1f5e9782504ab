//! Command-line front end: analytical cost reports, pass-level simulation,
//! functional verification against the direct-convolution reference, and
//! parameter sweeps.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use convsim::costmodel::{network_cost, ArchConfig, MbBase};
use convsim::netmodel::{
    apply_channel_pruning, build_resnet50, build_vgg16, resnet50_sparse_spec, NetworkModel,
};
use convsim::oracle::{conv_direct, random_layer_gen, GenBounds};
use convsim::report::RunReport;
use convsim::simulator::{simulate_layer, simulate_network};

#[derive(Parser)]
#[command(
    name = "convsim",
    version,
    about = "Cost model and simulator for a cascaded-CU CNN accelerator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the analytical per-layer cost report for a network.
    Cost(RunArgs),
    /// Simulate every layer pass-by-pass and print the measured report.
    Simulate(SimArgs),
    /// Check simulator outputs bit-exactly against direct convolution on
    /// randomized layers.
    Verify(VerifyArgs),
    /// Re-evaluate a network's totals across a range of one architecture
    /// parameter.
    Sweep(SweepArgs),
    /// Emit a network descriptor as JSON.
    Network(NetArgs),
}

#[derive(Args)]
struct ArchArgs {
    /// Number of regular convolution units.
    #[arg(long, default_value_t = 64)]
    u: usize,
    /// PEs per regular convolution unit.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// PEs in the last convolution unit.
    #[arg(long, default_value_t = 4)]
    last_cu_pes: usize,
    /// Words per output SRAM.
    #[arg(long, default_value_t = 224)]
    sram_words: usize,
    /// DRAM words deliverable per cycle.
    #[arg(long, default_value_t = 7)]
    read_buses: usize,
    /// Clock frequency in MHz.
    #[arg(long, default_value_t = 200.0)]
    clock_mhz: f64,
    /// Data word width in bits.
    #[arg(long, default_value_t = 16)]
    word_bits: u32,
    /// Accumulator width in bits.
    #[arg(long, default_value_t = 24)]
    acc_bits: u32,
    /// Byte base for the MB columns.
    #[arg(long, value_enum, default_value_t = MbArg::Decimal)]
    mb_base: MbArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MbArg {
    /// 10^6 bytes.
    Decimal,
    /// 2^20 bytes.
    Binary,
}

impl ArchArgs {
    fn build(&self) -> ArchConfig {
        ArchConfig {
            u: self.u,
            n: self.n,
            last_cu_pes: self.last_cu_pes,
            sram_words: self.sram_words,
            read_buses: self.read_buses,
            word_bits: self.word_bits,
            acc_bits: self.acc_bits,
            clock_hz: self.clock_mhz * 1e6,
            mb_base: match self.mb_base {
                MbArg::Decimal => MbBase::Decimal,
                MbArg::Binary => MbBase::Binary,
            },
        }
    }
}

#[derive(Args)]
struct NetSelect {
    /// Built-in network: resnet50, resnet50-sparse or vgg16.
    #[arg(long, conflicts_with = "network")]
    builtin: Option<String>,
    /// Path to a network descriptor JSON file.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Apply the built-in 50% channel-pruning spec (resnet50 only).
    #[arg(long)]
    pruned: bool,
    /// Include projection-shortcut 1x1 layers (resnet50 only).
    #[arg(long)]
    with_shortcuts: bool,
}

impl NetSelect {
    fn load(&self) -> convsim::Result<NetworkModel> {
        let mut net = match (&self.builtin, &self.network) {
            (Some(name), None) => match name.as_str() {
                "resnet50" => build_resnet50(self.with_shortcuts),
                "resnet50-sparse" => {
                    apply_channel_pruning(&build_resnet50(false), &resnet50_sparse_spec())?
                }
                "vgg16" => build_vgg16(),
                other => {
                    return Err(convsim::Error::InvalidPruneSpec(format!(
                        "unknown builtin network `{other}` (expected resnet50, resnet50-sparse or vgg16)"
                    )))
                }
            },
            (None, Some(path)) => NetworkModel::from_json(&fs::read_to_string(path)?)?,
            _ => {
                return Err(convsim::Error::InvalidPruneSpec(
                    "specify exactly one of --builtin or --network".into(),
                ))
            }
        };
        if self.pruned {
            if self.with_shortcuts || net.name != "resnet50" {
                return Err(convsim::Error::InvalidPruneSpec(
                    "--pruned applies only to --builtin resnet50 without shortcuts".into(),
                ));
            }
            net = apply_channel_pruning(&net, &resnet50_sparse_spec())?;
        }
        Ok(net)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    net: NetSelect,
    #[command(flatten)]
    arch: ArchArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write a per-pass trace CSV to this path.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    arch: ArchArgs,
    /// Number of randomized layers to check.
    #[arg(long, default_value_t = 25)]
    cases: u64,
    /// First seed of the run.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    net: NetSelect,
    #[command(flatten)]
    arch: ArchArgs,
    /// Architecture parameter to vary: u, read-buses, sram-words or clock-mhz.
    #[arg(long)]
    param: String,
    /// Comma-separated values for the swept parameter.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Args)]
struct NetArgs {
    #[command(flatten)]
    net: NetSelect,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn emit(text: &str, output: &Option<PathBuf>) -> convsim::Result<()> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_cost(args: &RunArgs) -> convsim::Result<()> {
    let net = args.net.load()?;
    let arch = args.arch.build();
    let cost = network_cost(&net, &arch)?;
    let report = RunReport::from_cost(&net.name, &arch, &cost);
    let text = match args.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json()? + "\n",
    };
    emit(&text, &args.output)
}

fn run_simulate(args: &SimArgs) -> convsim::Result<()> {
    let net = args.run.net.load()?;
    let arch = args.run.arch.build();
    if let Some(trace_path) = &args.trace {
        let mut csv = String::from(
            "layer,group,partition,channel,piece_row,piece_col_offset,input_row,cycles\n",
        );
        for layer in &net.layers {
            let outcome = simulate_layer(layer, &arch, None, true)?;
            for r in &outcome.trace {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    layer.name,
                    r.group,
                    r.partition,
                    r.channel,
                    r.piece_row,
                    r.piece_col_offset,
                    r.input_row,
                    r.cycles
                ));
            }
        }
        fs::write(trace_path, csv)?;
    }
    let (layers, _) = simulate_network(&net, &arch)?;
    let report = RunReport::from_sim(&net.name, &arch, &layers);
    let text = match args.run.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json()? + "\n",
    };
    emit(&text, &args.run.output)
}

fn run_verify(args: &VerifyArgs) -> convsim::Result<u64> {
    let arch = args.arch.build();
    let bounds = GenBounds::default();
    let mut failures = 0;
    for seed in args.seed_base..args.seed_base + args.cases {
        let (layer, input, filters) = random_layer_gen(seed, &bounds);
        let sim = simulate_layer(&layer, &arch, Some((&input, &filters)), false)?;
        let oracle = conv_direct(&layer, &input, &filters)?;
        let exact = sim.output.as_ref().unwrap().values() == oracle.output.values();
        let macs_ok = sim.counters.active_mac_cycles == oracle.non_pad_macs;
        let status = if exact && macs_ok { "ok" } else { "MISMATCH" };
        println!(
            "{status} seed={seed} mode={} il={} ic={} fl={} k={} s={} z={} overflows={}",
            sim.mode,
            layer.il,
            layer.ic,
            layer.fl,
            layer.k,
            layer.s,
            layer.z,
            sim.counters.acc_overflows
        );
        if !(exact && macs_ok) {
            failures += 1;
        }
    }
    println!(
        "verified {} randomized layers, {} failure(s)",
        args.cases, failures
    );
    Ok(failures)
}

fn run_sweep(args: &SweepArgs) -> convsim::Result<()> {
    let net = args.net.load()?;
    println!("param,value,cycles,latency_ms,dram_mb,puf_eq5");
    for &value in &args.values {
        let mut arch = args.arch.build();
        match args.param.as_str() {
            "u" => arch.u = value as usize,
            "read-buses" => arch.read_buses = value as usize,
            "sram-words" => arch.sram_words = value as usize,
            "clock-mhz" => arch.clock_hz = value * 1e6,
            other => {
                return Err(convsim::Error::InvalidArch(format!(
                    "unknown sweep parameter `{other}`"
                )))
            }
        }
        let cost = network_cost(&net, &arch)?;
        let t = &cost.totals;
        let puf = convsim::costmodel::puf(t.macs, arch.total_pes(), t.cycles);
        println!(
            "{},{},{},{:.6},{:.6},{:.6}",
            args.param,
            value,
            t.cycles,
            t.latency_s * 1e3,
            t.dram_mb,
            puf
        );
    }
    Ok(())
}

fn run_network(args: &NetArgs) -> convsim::Result<()> {
    let net = args.net.load()?;
    emit(&(net.to_json()? + "\n"), &args.output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Cost(args) => run_cost(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Verify(args) => match run_verify(args) {
            Ok(0) => Ok(()),
            Ok(n) => {
                eprintln!("error: {n} verification failure(s)");
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
        Command::Sweep(args) => run_sweep(args),
        Command::Network(args) => run_network(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
