//! `dsel`: simulate, train, evaluate, correlate, and count operations for
//! doubly-selective OFDM channel estimators.
//!
//! Every option can come from a `--config key=value` file; explicit flags
//! win. All randomness flows from `--seed`, and repeated invocations with
//! the same configuration produce byte-identical outputs.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dsel_core::channel::{CorrelationAccumulator, PowerDelayProfile};
use dsel_core::harness::complexity::{count_ops, ComplexityParams};
use dsel_core::harness::config::{parse_kv, ChannelProfile, EstimatorKind, ScenarioConfig, SweepConfig};
use dsel_core::harness::csvio;
use dsel_core::harness::dataset::{frame_channel, Corpus};
use dsel_core::harness::training::{train_estimator, TrainBudget, DESK_SCALE, PAPER_SCALE};
use dsel_core::harness::{run_ber_sweep, ModelStore};
use dsel_core::ofdm::{FrameLayout, PilotAllocation};
use dsel_core::rnn::{ensemble_average, load_model, save_model, TrainStatus};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "dsel", version, about = "Doubly-selective OFDM channel estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate training/testing corpus descriptors.
    Simulate(SimulateArgs),
    /// Train a network-backed estimator, or average existing models.
    Train(TrainArgs),
    /// Monte Carlo BER/NMSE/throughput sweep.
    Evaluate(EvaluateArgs),
    /// Frame correlation profile of the fading channel.
    Correlate(CorrelateArgs),
    /// Closed-form operation counts.
    Complexity(ComplexityArgs),
}

/// Options shared by every subcommand; unset values fall back to the config
/// file, then to built-in defaults.
#[derive(Args, Clone)]
struct Common {
    /// Plain-text key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Channel profile: vtv-uc | vtv-sdww | awgn | path to a profile table.
    #[arg(long)]
    profile: Option<String>,
    /// Maximum Doppler shift in Hz.
    #[arg(long)]
    fd: Option<f64>,
    /// Modulation order: 4 | 16 | 64.
    #[arg(long = "mod")]
    modulation: Option<usize>,
    /// Data symbols per frame.
    #[arg(long)]
    i: Option<usize>,
    /// Inserted full-pilot symbols (block-pilot mode).
    #[arg(long)]
    q: Option<usize>,
    /// Mobility preset: low | high | very-high (profile, fd, and q at once).
    #[arg(long)]
    preset: Option<String>,
    /// Time-averaging weight of the SBS recursion.
    #[arg(long)]
    alpha: Option<f64>,
}

/// Option resolution: explicit flag, then config-file key, then default.
struct Resolver {
    kv: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&PathBuf>) -> Result<Self> {
        let kv = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                parse_kv(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Resolver { kv })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.kv.get(key) {
            Some(raw) => raw.parse::<T>().map_err(|e| anyhow!("config {key}={raw:?}: {e}")),
            None => Ok(default),
        }
    }

    fn get_opt_string(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.kv.get(key).cloned())
    }
}

struct ResolvedCommon {
    seed: u64,
    out: PathBuf,
    scenario: ScenarioConfig,
    modulation: usize,
    n_data_symbols: usize,
    alpha: f64,
    manifest: Vec<(String, String)>,
}

fn resolve_common(c: &Common) -> Result<ResolvedCommon> {
    let r = Resolver::new(c.config.as_ref())?;
    let preset = r.get_opt_string(c.preset.clone(), "preset");
    let mut scenario = match &preset {
        Some(p) => ScenarioConfig::preset(p)?,
        None => ScenarioConfig::very_high_mobility(),
    };
    if let Some(name) = r.get_opt_string(c.profile.clone(), "profile") {
        scenario.profile = match name.parse::<ChannelProfile>() {
            Ok(p) => p,
            Err(_) => {
                let path = Path::new(&name);
                if path.exists() {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading profile table {name}"))?;
                    ChannelProfile::Custom(PowerDelayProfile::parse(&text)?)
                } else {
                    bail!("unknown channel profile {name:?} (not a preset, not a file)");
                }
            }
        };
    }
    scenario.fd = r.get(c.fd, "fd", scenario.fd)?;
    scenario.q = r.get(c.q, "q", scenario.q)?;
    let seed = r.get(c.seed, "seed", 1u64)?;
    let out = c
        .out
        .clone()
        .or_else(|| r.kv.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let modulation = r.get(c.modulation, "mod", 4usize)?;
    if ![4, 16, 64].contains(&modulation) {
        bail!("modulation order must be 4, 16, or 64 (got {modulation})");
    }
    let n_data_symbols = r.get(c.i, "i", 100usize)?;
    let alpha = r.get(c.alpha, "alpha", 2.0f64)?;
    let manifest = vec![
        ("seed".into(), seed.to_string()),
        ("profile".into(), scenario.profile.name()),
        ("fd".into(), csvio::fmt_f64(scenario.fd)),
        ("symbol_duration".into(), csvio::fmt_f64(scenario.symbol_duration)),
        ("sample_period_ns".into(), csvio::fmt_f64(scenario.sample_period_ns)),
        ("n_sinusoids".into(), scenario.n_sinusoids.to_string()),
        ("q".into(), scenario.q.to_string()),
        ("mod".into(), modulation.to_string()),
        ("i".into(), n_data_symbols.to_string()),
        ("alpha".into(), csvio::fmt_f64(alpha)),
    ];
    Ok(ResolvedCommon { seed, out, scenario, modulation, n_data_symbols, alpha, manifest })
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Pilot allocation: sbs | fbf.
    #[arg(long, default_value = "sbs")]
    mode: String,
    /// Training frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Testing frames.
    #[arg(long)]
    test_frames: Option<usize>,
    /// SNR of the generated corpora in dB.
    #[arg(long)]
    snr: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Estimator to train: srnn-dpa-ta | gru-dpa-ta | lstm-dpa-ta |
    /// als-bisrnn | als-bigru | als-bilstm.
    #[arg(long)]
    estimator: Option<String>,
    /// Training frames (sequences).
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Training SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Use the reference training scale (16000 sequences, 500 epochs).
    #[arg(long)]
    paper_scale: bool,
    /// Average existing model files (comma separated) instead of training.
    #[arg(long)]
    average: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated estimator list.
    #[arg(long)]
    estimator: Option<String>,
    /// SNR grid: "0,5,10" or "0..40:5".
    #[arg(long)]
    snr: Option<String>,
    /// Frames per SNR point.
    #[arg(long)]
    frames: Option<usize>,
    /// Directory holding `<estimator>.rnn` model files (defaults to --out).
    #[arg(long)]
    model_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    common: Common,
    /// Channel realizations to average.
    #[arg(long)]
    frames: Option<usize>,
    /// Emit the unnormalized cross-correlation instead.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct ComplexityArgs {
    #[command(flatten)]
    common: Common,
    /// Estimator to count; omit with --all for every network estimator.
    #[arg(long)]
    estimator: Option<String>,
    /// Count every network-backed estimator.
    #[arg(long)]
    all: bool,
    /// Reproduce the published per-unit numbers (exclude readout and the
    /// FBF ALS stage).
    #[arg(long)]
    paper_mode: bool,
    /// Frame-step width factor I' = I + Q of the FBF accounting.
    #[arg(long)]
    i_prime: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Correlate(a) => cmd_correlate(a),
        Cmd::Complexity(a) => cmd_complexity(a),
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_ref())?;
    let mut rc = resolve_common(&a.common)?;
    let mode = match a.mode.as_str() {
        "sbs" => PilotAllocation::SbsComb,
        "fbf" => PilotAllocation::FbfBlock,
        other => bail!("mode must be sbs or fbf, got {other:?}"),
    };
    let n_train = r.get(a.frames, "frames", 2000usize)?;
    let n_test = r.get(a.test_frames, "test_frames", 200usize)?;
    let snr = r.get(a.snr, "snr", 40.0f64)?;
    ensure_out(&rc.out)?;
    let train = Corpus {
        scenario: rc.scenario.clone(),
        mode,
        modulation: rc.modulation,
        n_data_symbols: rc.n_data_symbols,
        snr_db: snr,
        n_frames: n_train,
        master_seed: rc.seed,
    };
    let test = Corpus {
        n_frames: n_test,
        master_seed: rc.seed.wrapping_add(0x7e57),
        ..train.clone()
    };
    train.save(&rc.out.join("train.corpus"))?;
    test.save(&rc.out.join("test.corpus"))?;
    rc.manifest.push(("command".into(), "simulate".into()));
    rc.manifest.push(("mode".into(), a.mode.clone()));
    rc.manifest.push(("frames".into(), n_train.to_string()));
    rc.manifest.push(("test_frames".into(), n_test.to_string()));
    rc.manifest.push(("snr".into(), csvio::fmt_f64(snr)));
    csvio::write_manifest(&rc.out.join("manifest.txt"), &rc.manifest)?;
    println!("wrote {} and {}", rc.out.join("train.corpus").display(), rc.out.join("test.corpus").display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_ref())?;
    let mut rc = resolve_common(&a.common)?;
    ensure_out(&rc.out)?;
    let est_name = r
        .get_opt_string(a.estimator.clone(), "estimator")
        .ok_or_else(|| anyhow!("--estimator is required"))?;
    let est: EstimatorKind = est_name.parse()?;

    if let Some(list) = &a.average {
        let models: Vec<_> = list
            .split(',')
            .map(|p| load_model(Path::new(p.trim())).with_context(|| format!("loading {p}")))
            .collect::<Result<_>>()?;
        let avg = ensemble_average(&models)?;
        let path = rc.out.join(format!("{est}.rnn"));
        save_model(&avg, &path)?;
        println!("averaged {} models into {}", models.len(), path.display());
        return Ok(());
    }

    let default_budget = if a.paper_scale { PAPER_SCALE } else { DESK_SCALE };
    let budget = TrainBudget {
        n_train: r.get(a.frames, "frames", default_budget.n_train)?,
        epochs: r.get(a.epochs, "epochs", default_budget.epochs)?,
        batch_size: r.get(a.batch, "batch", default_budget.batch_size)?,
    };
    let train_snr = r.get(a.snr, "train_snr", 40.0f64)?;
    let report = train_estimator(
        est,
        &rc.scenario,
        rc.modulation,
        rc.n_data_symbols,
        budget,
        train_snr,
        rc.seed,
    )?;
    let path = rc.out.join(format!("{est}.rnn"));
    save_model(&report.model, &path)?;
    let mut loss_csv = String::from("# schema: loss-v1\nepoch,loss\n");
    for (e, l) in report.loss_history.iter().enumerate() {
        loss_csv.push_str(&format!("{},{}\n", e, csvio::fmt_f64(*l)));
    }
    std::fs::write(rc.out.join(format!("{est}-loss.csv")), loss_csv)?;
    rc.manifest.push(("command".into(), "train".into()));
    rc.manifest.push(("estimator".into(), est.to_string()));
    rc.manifest.push(("frames".into(), budget.n_train.to_string()));
    rc.manifest.push(("epochs".into(), budget.epochs.to_string()));
    rc.manifest.push(("batch".into(), budget.batch_size.to_string()));
    rc.manifest.push(("train_snr".into(), csvio::fmt_f64(train_snr)));
    csvio::write_manifest(&rc.out.join("manifest.txt"), &rc.manifest)?;
    match report.status {
        TrainStatus::Completed => {
            let last = report.loss_history.last().copied().unwrap_or(f64::NAN);
            println!("trained {est}: final loss {last:.6e} -> {}", path.display());
            Ok(())
        }
        TrainStatus::Diverged { epoch } => {
            bail!("training diverged at epoch {epoch}; last good checkpoint written to {}", path.display())
        }
    }
}

fn parse_snr_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if let Some((range, step)) = spec.split_once(':') {
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| anyhow!("range form is lo..hi:step, got {spec:?}"))?;
        let lo: f64 = lo.trim().parse()?;
        let hi: f64 = hi.trim().parse()?;
        let step: f64 = step.trim().parse()?;
        if step <= 0.0 || hi < lo {
            bail!("bad SNR range {spec:?}");
        }
        let mut v = Vec::new();
        let mut x = lo;
        while x <= hi + 1e-9 {
            v.push(x);
            x += step;
        }
        Ok(v)
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("snr {s:?}: {e}")))
            .collect()
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_ref())?;
    let mut rc = resolve_common(&a.common)?;
    ensure_out(&rc.out)?;
    let est_list = r
        .get_opt_string(a.estimator.clone(), "estimator")
        .unwrap_or_else(|| "genie,dpa".to_string());
    let estimators: Vec<EstimatorKind> =
        est_list.split(',').map(|s| s.trim().parse::<EstimatorKind>()).collect::<Result<_, _>>()?;
    let snr_spec = r.get_opt_string(a.snr.clone(), "snr").unwrap_or_else(|| "0..40:5".into());
    let snr_db = parse_snr_grid(&snr_spec)?;
    let n_frames = r.get(a.frames, "frames", 200usize)?;
    let model_dir = a
        .model_dir
        .clone()
        .or_else(|| r.kv.get("model_dir").map(PathBuf::from))
        .unwrap_or_else(|| rc.out.clone());
    let store = ModelStore::load_dir(&model_dir, &estimators)?;
    let cfg = SweepConfig {
        snr_db,
        n_frames,
        scenario: rc.scenario.clone(),
        modulation: rc.modulation,
        n_data_symbols: rc.n_data_symbols,
        estimators: estimators.clone(),
        seed: rc.seed,
        alpha: rc.alpha,
    };
    let rows = run_ber_sweep(&cfg, &store)?;
    csvio::write_results_csv(&rc.out.join("results.csv"), &rows)?;
    rc.manifest.push(("command".into(), "evaluate".into()));
    rc.manifest.push(("estimator".into(), est_list.clone()));
    rc.manifest.push(("snr".into(), snr_spec.clone()));
    rc.manifest.push(("frames".into(), n_frames.to_string()));
    rc.manifest.push(("model_dir".into(), model_dir.display().to_string()));
    csvio::write_manifest(&rc.out.join("manifest.txt"), &rc.manifest)?;
    for row in &rows {
        println!(
            "{} @ {} dB: ber {:.3e}, nmse {:.3e}, throughput {:.4}",
            row.estimator, row.snr_db, row.ber, row.nmse, row.throughput
        );
    }
    println!("wrote {}", rc.out.join("results.csv").display());
    Ok(())
}

fn cmd_correlate(a: CorrelateArgs) -> Result<()> {
    let r = Resolver::new(a.common.config.as_ref())?;
    let mut rc = resolve_common(&a.common)?;
    ensure_out(&rc.out)?;
    let n_real = r.get(a.frames, "frames", 5000usize)?;
    let layout = FrameLayout::sbs_80211p(rc.n_data_symbols);
    let mut acc = CorrelationAccumulator::new(rc.n_data_symbols);
    for idx in 0..n_real {
        // correlation looks at the data-symbol span only: no preamble columns
        let mut scenario = rc.scenario.clone();
        scenario.q = 0;
        let layout_i = FrameLayout {
            n_preambles: 0,
            n_data_symbols: rc.n_data_symbols,
            ..layout.clone()
        };
        let ch = frame_channel(&scenario, &layout_i, rc.seed, idx);
        acc.add(&ch.h);
    }
    let profile = acc.finish(!a.no_normalize, rc.scenario.fd)?;
    csvio::write_psi_csv(&rc.out.join("psi.csv"), &profile)?;
    rc.manifest.push(("command".into(), "correlate".into()));
    rc.manifest.push(("frames".into(), n_real.to_string()));
    rc.manifest.push(("normalize".into(), (!a.no_normalize).to_string()));
    csvio::write_manifest(&rc.out.join("manifest.txt"), &rc.manifest)?;
    println!(
        "psi[{}] = {:.4} over {} realizations -> {}",
        rc.n_data_symbols,
        profile.last(),
        n_real,
        rc.out.join("psi.csv").display()
    );
    Ok(())
}

fn cmd_complexity(a: ComplexityArgs) -> Result<()> {
    let rc = resolve_common(&a.common)?;
    let network_estimators = [
        EstimatorKind::SrnnDpaTa,
        EstimatorKind::GruDpaTa,
        EstimatorKind::LstmDpaTa,
        EstimatorKind::AlsBiSrnn,
        EstimatorKind::AlsBiGru,
        EstimatorKind::AlsBiLstm,
    ];
    let selected: Vec<EstimatorKind> = if a.all {
        network_estimators.to_vec()
    } else {
        let name = a
            .estimator
            .as_deref()
            .ok_or_else(|| anyhow!("--estimator or --all is required"))?;
        vec![name.parse()?]
    };
    let mut entries = Vec::new();
    for est in &selected {
        let mut params = ComplexityParams::defaults_for(*est, a.paper_mode);
        if let Some(ip) = a.i_prime {
            params.i_prime = ip;
        }
        let oc = count_ops(*est, &params)?;
        if selected.len() == 1 {
            println!("{}/{}", oc.mults, oc.adds);
        } else {
            println!("{est}: {}/{}", oc.mults, oc.adds);
        }
        entries.push((*est, a.paper_mode, oc));
    }
    ensure_out(&rc.out)?;
    csvio::write_opcounts_csv(&rc.out.join("opcounts.csv"), &entries)?;
    Ok(())
}
