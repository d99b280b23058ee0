use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use decoupler::circuit::{build_schedule, DynamicCircuit};
use decoupler::dd::{contiguous_registers, BaselineKind, DdMode, PadMode, StrategySet};
use decoupler::device::DeviceModel;
use decoupler::exec;
use decoupler::gadd::{one_norm_similarity, run_training, GaddConfig, TrainingPrep};
use decoupler::qft::{self, compute_snr};
use decoupler::rb::{run_rb, write_survival_csv, RbExperimentSpec, RbKind, RbRoles};

#[derive(Parser)]
#[command(name = "decoupler", version, about = "Learn and benchmark dynamical decoupling for dynamic circuits")]
struct Cli {
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "DECOUPLER_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn DD strategies for every motif of a circuit.
    Train(TrainArgs),
    /// Run MCM-RB or DC-RB under one or more DD modes and fit the decays.
    Bench(BenchArgs),
    /// QFT+M process fidelity, GHZ SNR, or the peak-population check.
    Qft(QftArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    device: PathBuf,
    /// Time intervals x registers, e.g. `1x6`.
    #[arg(long, default_value = "1x1")]
    partitions: String,
    /// GA settings as JSON; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Prep::QftDagger)]
    prep: Prep,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Continue from `checkpoint.json` in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prep {
    None,
    QftDagger,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    kind: RbKind,
    #[arg(long)]
    device: PathBuf,
    /// `none`, `xpxm`, `mdd`, `ffdd` or `gadd:<strategies.json>`; comma separated.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    dd: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    measured: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    unitary: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    #[arg(long)]
    randomizations: Option<usize>,
    #[arg(long)]
    shots: Option<u64>,
    /// Bootstrap resamples for the EPL error bar.
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    /// GA settings the strategy files must match (L and k).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct QftArgs {
    #[arg(long, value_enum)]
    mode: QftMode,
    /// Problem sizes; `ghz-snr` and `verify-theorem` use the first.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    n: Vec<usize>,
    #[arg(long)]
    device: Option<PathBuf>,
    /// Use a noiseless chain instead of `--device`.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, value_delimiter = ',', default_value = "none")]
    dd: Vec<String>,
    /// Also run every learned mode with this strategy assignment.
    #[arg(long, value_enum)]
    counterfactual: Option<Counterfactual>,
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QftMode {
    Fidelity,
    GhzSnr,
    VerifyTheorem,
}

#[derive(Clone, Copy, ValueEnum)]
enum Counterfactual {
    Unaware,
    Scrambled,
}

/// Exit 2 for bad input, 1 for anything that failed while running.
enum Failure {
    Input(String),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = Result<Option<serde_json::Value>, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let started = SystemTime::now();
    let clock = Instant::now();
    let (name, seed, out) = match &cli.command {
        Command::Train(a) => ("train", a.seed, a.out.clone()),
        Command::Bench(a) => ("bench", a.seed, a.out.clone()),
        Command::Qft(a) => ("qft", a.seed, a.out.clone()),
    };
    let result = exec::with_threads(cli.threads, || match &cli.command {
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Qft(a) => qft_cmd(a),
    });
    let extra = match result {
        Ok(extra) => extra,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let manifest = json!({
        "command": name,
        "args": argv,
        "seed": seed,
        "out": out,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": cli.threads,
        "started_unix": unix(started),
        "finished_unix": unix(SystemTime::now()),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "timing": extra,
    });
    if let Err(e) = write(&out.join("manifest.json"), &pretty(&manifest)) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn unix(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Input(format!("no such file: {}", path.display())))
    }
}

fn load_device(path: &Path) -> Result<DeviceModel, Failure> {
    require(path)?;
    DeviceModel::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<GaddConfig, Failure> {
    let Some(path) = path else { return Ok(GaddConfig::default()) };
    require(path)?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let cfg: GaddConfig = serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

/// Parses a `--dd` value; strategy files must hold `k` sequences of `l` pulses.
fn parse_dd(text: &str, k: usize, l: usize) -> Result<DdMode, Failure> {
    if let Some(path) = text.strip_prefix("gadd:") {
        require(Path::new(path))?;
        let set = StrategySet::load(path).map_err(|e| Failure::Input(format!("{path}: {e:#}")))?;
        for m in &set.motifs {
            m.strategy.check_shape(k, l).map_err(|e| Failure::Input(format!("{path}: motif {:?}: {e}", m.motif)))?;
        }
        return Ok(DdMode::learned(set));
    }
    text.parse::<BaselineKind>().map(DdMode::Baseline).map_err(|e| Failure::Input(format!("--dd {text}: {e}")))
}

fn parse_partitions(text: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Input(format!("--partitions {text}: expected AxB with positive A and B"));
    let (a, b) = text.split_once(['x', 'X', '×']).ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

fn train(a: &TrainArgs) -> Outcome {
    require(&a.circuit)?;
    let device = load_device(&a.device)?;
    let circuit = DynamicCircuit::load(&a.circuit).map_err(|e| Failure::Input(format!("{}: {e}", a.circuit.display())))?;
    let (intervals, n_registers) = parse_partitions(&a.partitions)?;
    let cfg = GaddConfig { seed: a.seed, ..load_config(a.config.as_deref())? };
    if circuit.n_qubits != device.n_qubits {
        return Err(Failure::Input(format!(
            "circuit has {} qubits but the device has {}",
            circuit.n_qubits, device.n_qubits
        )));
    }
    let sched = build_schedule(&circuit, &device.timing).map_err(|e| anyhow!(e))?;
    let registers = contiguous_registers(&circuit.active_qubits(), n_registers);
    let prep = match a.prep {
        Prep::None => TrainingPrep::None,
        Prep::QftDagger => TrainingPrep::QftDagger,
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let checkpoint = a.out.join("checkpoint.json");
    if !a.resume && checkpoint.exists() {
        fs::remove_file(&checkpoint).with_context(|| format!("removing {}", checkpoint.display()))?;
    }
    let outcome = run_training(&sched, &device, &cfg, intervals, &registers, prep, Some(&checkpoint))
        .map_err(|e| anyhow!(e))?;
    fs::remove_file(&checkpoint).with_context(|| format!("removing {}", checkpoint.display()))?;
    let rec = &outcome.record;
    write(&a.out.join("strategies.json"), &(outcome.strategies.to_json() + "\n"))?;
    let motifs: Vec<_> = outcome
        .strategies
        .motifs
        .iter()
        .zip(&rec.utility_history)
        .map(|(m, h)| json!({ "motif": m.motif, "register": m.register, "utility": m.utility, "history": h }))
        .collect();
    write(&a.out.join("utilities.json"), &pretty(&json!({ "groups": rec.groups, "motifs": motifs })))?;
    Ok(Some(json!({
        "M": rec.m,
        "p": rec.p,
        "N_it": rec.n_it,
        "T_iteration_seconds": rec.t_iteration,
        "total_seconds": rec.total_seconds,
        "predicted_seconds": rec.predicted_seconds(),
    })))
}

fn bench(a: &BenchArgs) -> Outcome {
    let device = load_device(&a.device)?;
    let cfg = load_config(a.config.as_deref())?;
    let modes = a.dd.iter().map(|d| parse_dd(d, cfg.k, cfg.l)).collect::<Result<Vec<_>, _>>()?;
    let roles = RbRoles { measured: a.measured.clone(), unitary: a.unitary.clone() };
    let mut spec = RbExperimentSpec::defaults(a.kind, roles);
    if let Some(l) = &a.lengths {
        spec.lengths = l.clone();
    }
    if let Some(r) = a.randomizations {
        spec.n_randomizations = r;
    }
    if let Some(s) = a.shots {
        spec.shots = s;
    }
    spec.validate(&device).map_err(|e| Failure::Input(e.to_string()))?;
    let mut results = Vec::new();
    let mut fits = Vec::new();
    for mode in &modes {
        let res = run_rb(&spec, &device, mode, a.seed).map_err(|e| anyhow!(e))?;
        fits.extend(res.fit_reports(a.bootstrap, spec.n_randomizations, a.seed));
        results.push(res);
    }
    let mut csv = Vec::new();
    write_survival_csv(&results, &mut csv).map_err(|e| anyhow!(e))?;
    write(&a.out.join("survival.csv"), &String::from_utf8(csv).expect("csv is utf-8"))?;
    write(&a.out.join("fits.json"), &pretty(&json!({ "spec": spec, "fits": fits })))?;
    Ok(None)
}

fn qft_cmd(a: &QftArgs) -> Outcome {
    let n_max = *a.n.iter().max().ok_or_else(|| Failure::Input("--n needs at least one value".into()))?;
    if a.n.contains(&0) {
        return Err(Failure::Input("--n values must be positive".into()));
    }
    if a.mode == QftMode::VerifyTheorem {
        return verify_theorem(a.n[0], &a.out);
    }
    let device = match (&a.device, a.noiseless) {
        (_, true) => DeviceModel::chain(n_max.max(2)),
        (Some(p), false) => load_device(p)?,
        (None, false) => return Err(Failure::Input("give --device or --noiseless".into())),
    };
    let cfg = GaddConfig::default();
    let mut modes = a.dd.iter().map(|d| parse_dd(d, cfg.k, cfg.l)).collect::<Result<Vec<_>, _>>()?;
    if let Some(cf) = a.counterfactual {
        let extra: Vec<DdMode> = modes
            .iter()
            .filter_map(|m| match m {
                DdMode::Learned { set, .. } => Some(DdMode::Learned {
                    set: set.clone(),
                    mode: match cf {
                        Counterfactual::Unaware => PadMode::Unaware(set.best_motif()),
                        Counterfactual::Scrambled => PadMode::Scrambled(a.seed),
                    },
                }),
                DdMode::Baseline(_) => None,
            })
            .collect();
        modes.extend(extra);
    }
    match a.mode {
        QftMode::Fidelity => fidelity(a, &device, &modes),
        QftMode::GhzSnr => ghz_snr(a, &device, &modes),
        QftMode::VerifyTheorem => unreachable!(),
    }
}

fn fidelity(a: &QftArgs, device: &DeviceModel, modes: &[DdMode]) -> Outcome {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "dd_mode", "f_proc", "stderr", "floor"]).map_err(|e| anyhow!(e))?;
    let mut reports = Vec::new();
    for &n in &a.n {
        if n > device.n_qubits {
            return Err(Failure::Input(format!("n = {n} exceeds the device's {} qubits", device.n_qubits)));
        }
        for mode in modes {
            let r = qft::compute_proc_fidelity(n, a.samples, mode, device, a.shots, a.seed).map_err(|e| anyhow!(e))?;
            w.write_record([
                n.to_string(),
                mode.label(),
                format!("{:.6}", r.f_proc),
                format!("{:.6}", r.stderr),
                format!("{:.6e}", 0.5f64.powi(n as i32)),
            ])
            .map_err(|e| anyhow!(e))?;
            reports.push(json!({ "dd_mode": mode.label(), "report": r }));
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow!(e.to_string()))?;
    write(&a.out.join("fidelity.csv"), &String::from_utf8(bytes).expect("csv is utf-8"))?;
    write(&a.out.join("fidelity.json"), &pretty(&reports))?;
    Ok(None)
}

fn ghz_snr(a: &QftArgs, device: &DeviceModel, modes: &[DdMode]) -> Outcome {
    let n = a.n[0];
    if n > device.n_qubits || n > 16 {
        return Err(Failure::Input(format!("ghz-snr needs 1 <= n <= min(16, device qubits); got {n}")));
    }
    let ideal = qft::ghz_populations_ideal(n).map_err(|e| anyhow!(e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dd_mode", "m", "peak", "p_peak", "p_mirror", "noise", "snr", "zero_variance"])
        .map_err(|e| anyhow!(e))?;
    let mut rows = |label: &str, pops: &[Vec<f64>]| -> anyhow::Result<()> {
        for (m, p) in pops.iter().enumerate() {
            let e = compute_snr(p, n, m);
            w.write_record([
                label.to_string(),
                m.to_string(),
                (1usize << (n - 1 - m)).to_string(),
                format!("{:.6}", e.p_peak),
                format!("{:.6}", e.p_mirror),
                format!("{:.6}", e.noise),
                e.snr.map(|s| format!("{s:.4}")).unwrap_or_default(),
                e.snr.is_none().to_string(),
            ])?;
        }
        Ok(())
    };
    rows("ideal", &ideal)?;
    let mut distributions = serde_json::Map::new();
    let mut similarity = serde_json::Map::new();
    for mode in modes {
        let pops = qft::ghz_populations(n, mode, device, a.shots, a.seed).map_err(|e| anyhow!(e))?;
        rows(&mode.label(), &pops)?;
        let per_m: Vec<f64> = pops.iter().zip(&ideal).map(|(p, q)| one_norm_similarity(&as_dist(q), &as_dist(p))).collect();
        let mean = per_m.iter().sum::<f64>() / per_m.len() as f64;
        similarity.insert(mode.label(), json!({ "per_m": per_m, "mean": mean }));
        distributions.insert(mode.label(), json!(pops));
    }
    distributions.insert("ideal".into(), json!(ideal));
    let bytes = w.into_inner().map_err(|e| anyhow!(e.to_string()))?;
    write(&a.out.join("snr.csv"), &String::from_utf8(bytes).expect("csv is utf-8"))?;
    write(&a.out.join("distributions.json"), &pretty(&distributions))?;
    write(&a.out.join("similarity.json"), &pretty(&similarity))?;
    Ok(None)
}

fn as_dist(p: &[f64]) -> decoupler::sim::ExactDistribution {
    p.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(s, &v)| (s.to_string(), v)).collect()
}

fn verify_theorem(n: usize, out: &Path) -> Outcome {
    if !(2..=14).contains(&n) {
        return Err(Failure::Input(format!("verify-theorem needs 2 <= n <= 14; got {n}")));
    }
    let floor = 2.0 / std::f64::consts::PI.powi(2);
    let ideal = qft::ghz_populations_ideal(n).map_err(|e| anyhow!(e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["m", "measured", "closed_form", "margin", "abs_error"]).map_err(|e| anyhow!(e))?;
    let mut bad = Vec::new();
    for (m, pops) in ideal.iter().enumerate() {
        let measured = pops[1usize << (n - 1 - m)];
        let closed = qft::peak_amplitude_closed_form(m as u32);
        let err = (measured - closed).abs();
        if err > 1e-10 || measured <= floor {
            bad.push(m);
        }
        w.write_record([
            m.to_string(),
            format!("{measured:.12}"),
            format!("{closed:.12}"),
            format!("{:.12}", measured - floor),
            format!("{err:.3e}"),
        ])
        .map_err(|e| anyhow!(e))?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!(e.to_string()))?;
    write(&out.join("theorem.csv"), &String::from_utf8(bytes).expect("csv is utf-8"))?;
    if !bad.is_empty() {
        return Err(Failure::Run(anyhow!("peak population disagrees with the closed form for m in {bad:?}")));
    }
    Ok(None)
}
