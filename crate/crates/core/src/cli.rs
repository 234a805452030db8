//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a plain `key=value` file whose
//! entries stand in for flags of the same name (`train_size=2400` acts like
//! `--train-size 2400`). Flags given on the command line win over the file.
//! Keys prefixed with `surrogate.` override surrogate constants instead.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numeric failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::eval::closed_loop::{self, ClosedLoopOptions, Envelope};
use crate::eval::experiment::{self, ExperimentConfig, ExperimentReport, ModelSpec};
use crate::eval::metrics;
use crate::nn::{self, gradcheck, io as model_io, DecayMode, HyperParams, LossKind, Network, Preset, ProjectionMode};
use crate::seed::{self, Purpose};
use crate::surrogate::{self, CircuitParams, GenerateOptions, SurrogateConstants};

#[derive(Debug, Parser)]
#[command(name = "xfmr", version, about = "Direct synthesis of 1:1 transformer geometry")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a surrogate dataset of (circuit, geometry) pairs.
    GenData(GenDataArgs),
    /// Train one network and save it.
    Train(TrainArgs),
    /// Evaluate a saved network on the held-out test split.
    Eval(EvalArgs),
    /// Run the repeated model comparison protocol.
    Sweep(SweepArgs),
    /// Predict geometry for target circuit parameters and verify it.
    Synthesize(SynthesizeArgs),
    /// Run gradient and metric self-checks.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Relative Gaussian noise applied to circuit parameters.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
}

#[derive(Debug, Args, Clone)]
pub struct TrainingFlags {
    /// Hidden layer width.
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// decoupled | coupled
    #[arg(long, default_value = "decoupled")]
    pub decay_mode: String,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// learned | fixed
    #[arg(long, default_value = "learned")]
    pub projection: String,
    /// Log the full training loss every this many epochs.
    #[arg(long, default_value_t = 1)]
    pub log_every: usize,
    /// Drop the feed length from the targets.
    #[arg(long)]
    pub no_feed_length: bool,
    #[arg(long, default_value_t = 1200)]
    pub test_size: usize,
}

impl TrainingFlags {
    fn hyper(&self, seed: u64) -> Result<HyperParams> {
        let h = HyperParams {
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            decay_mode: self.decay_mode.parse::<DecayMode>()?,
            batch_size: self.batch,
            epochs: self.epochs,
            seed,
            log_every: self.log_every,
        };
        h.validate()?;
        Ok(h)
    }

    fn projection(&self) -> Result<ProjectionMode> {
        self.projection.parse()
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// FN1..FN7, N5, N6 or N7.
    #[arg(long, default_value = "N7")]
    pub arch: String,
    /// smse | sdmse
    #[arg(long, default_value = "sdmse")]
    pub loss: String,
    #[arg(long, default_value_t = 2400)]
    pub train_size: usize,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; defaults to the model path with `.log.csv` appended.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Seed used when the model was trained; selects the same test split.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1200)]
    pub test_size: usize,
    /// Training loss, recorded in the report.
    #[arg(long, default_value = "sdmse")]
    pub loss: String,
    /// Training size, recorded in the report.
    #[arg(long, default_value_t = 0)]
    pub train_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated list of LR, GB, FN2..FN7, N5, N6, N7.
    #[arg(long, default_value = "LR,GB,FN2,FN3,FN4,FN5,FN6,FN7,N5,N6,N7")]
    pub models: String,
    #[arg(long, default_value = "smse,sdmse")]
    pub losses: String,
    #[arg(long, default_value = "600,1200,2400,4800")]
    pub sizes: String,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 200)]
    pub gb_rounds: usize,
    #[arg(long, default_value_t = 3)]
    pub gb_depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub gb_shrinkage: f64,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of targets with header lp_pH,ls_pH,k,srf_GHz,qp,qs.
    #[arg(long, conflicts_with_all = ["lp", "ls", "k", "srf", "qp", "qs"])]
    pub targets: Option<PathBuf>,
    #[arg(long, requires_all = ["ls", "k", "srf", "qp", "qs"])]
    pub lp: Option<f64>,
    #[arg(long)]
    pub ls: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub srf: Option<f64>,
    #[arg(long)]
    pub qp: Option<f64>,
    #[arg(long)]
    pub qs: Option<f64>,
    /// Dataset whose input range defines the envelope for warnings.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feed length used when the model does not predict it.
    #[arg(long)]
    pub feed_length: Option<f64>,
    /// Accepted for uniformity; synthesis is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random architectures to gradient-check.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Io { .. }
        | Error::Csv(_)
        | Error::CorruptModel(_)
        | Error::VersionMismatch { .. }
        | Error::InvalidDataset(_) => 2,
        Error::Divergence { .. }
        | Error::Singular(_)
        | Error::Domain(_)
        | Error::ZeroTarget { .. }
        | Error::DegenerateFeature(_)
        | Error::DegenerateTarget(_)
        | Error::Shape(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidCircuit(_) => 3,
        _ => 1,
    }
}

fn kind(code: i32) -> &'static str {
    match code {
        1 => "usage",
        2 => "io",
        _ => "numeric",
    }
}

/// One-line diagnostic for standard error.
pub fn diagnostic(code: i32, message: &str) -> String {
    let flat = message.replace(['\n', '\r'], " ");
    format!("error kind={} code={} msg={:?}", kind(code), code, flat.trim())
}

/// Parsed `key=value` configuration.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    pub flags: Vec<(String, String)>,
    pub surrogate: Vec<(String, f64)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(name) = k.strip_prefix("surrogate.") {
                let value: f64 = v
                    .parse()
                    .map_err(|_| Error::Parse(format!("config line {}: bad number {v:?}", n + 1)))?;
                cfg.surrogate.push((name.to_string(), value));
            } else {
                cfg.flags.push((k.replace('_', "-"), v.to_string()));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn as_args(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, v) in &self.flags {
            match v.as_str() {
                "true" => out.push(format!("--{k}")),
                "false" => {}
                _ => {
                    out.push(format!("--{k}"));
                    out.push(v.clone());
                }
            }
        }
        out
    }

    pub fn constants(&self) -> Result<SurrogateConstants> {
        let mut c = SurrogateConstants::default();
        for (k, v) in &self.surrogate {
            c.set(k, *v)?;
        }
        Ok(c)
    }
}

fn find_config(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices config-file flags in right after the subcommand so that explicit
/// flags, which come later, override them.
fn expand_argv(argv: &[String]) -> Result<(Vec<String>, ConfigFile)> {
    let Some(path) = find_config(argv) else {
        return Ok((argv.to_vec(), ConfigFile::default()));
    };
    let cfg = ConfigFile::load(&path)?;
    if argv.len() < 2 {
        return Ok((argv.to_vec(), cfg));
    }
    let mut out = argv[..2].to_vec();
    out.extend(cfg.as_args());
    out.extend_from_slice(&argv[2..]);
    Ok((out, cfg))
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status.
pub fn dispatch(argv: &[String]) -> i32 {
    let (argv, cfg) = match expand_argv(argv) {
        Ok(v) => v,
        Err(e) => {
            let code = match e {
                Error::Io { .. } => 2,
                _ => 1,
            };
            eprintln!("{}", diagnostic(code, &e.to_string()));
            return code;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", diagnostic(1, first));
            return 1;
        }
    };
    match run(cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}", diagnostic(code, &e.to_string()));
            code
        }
    }
}

fn set_threads(common: &Common) {
    if let Some(n) = common.threads {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

pub fn run(cmd: Command, cfg: &ConfigFile) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a, cfg),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Synthesize(a) => synthesize(a, cfg),
        Command::Check(a) => check(a),
    }
}

fn gen_data(a: GenDataArgs, cfg: &ConfigFile) -> Result<()> {
    set_threads(&a.common);
    let opts = GenerateOptions {
        constants: cfg.constants()?,
        noise_sigma: a.noise_sigma,
        ..Default::default()
    };
    let pairs = surrogate::generate_pairs(a.n, a.seed, &opts)?;
    let ds = Dataset::from_pairs(&pairs)?;
    ds.save_csv(&a.out)?;
    println!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(())
}

fn load_targets(ds: Dataset, no_feed_length: bool) -> Result<Dataset> {
    if no_feed_length && ds.has_feed_length() {
        ds.exclude_feed_length()
    } else {
        Ok(ds)
    }
}

/// Split seed shared by `train` and `eval` so both see the same test rows.
pub fn run_split_seed(seed: u64) -> u64 {
    seed::derive(seed, Purpose::Split, 0)
}

fn train(a: TrainArgs) -> Result<()> {
    set_threads(&a.common);
    let ds = load_targets(Dataset::load_csv(&a.data)?, a.training.no_feed_length)?;
    let (test, train) = data::split(&ds, a.training.test_size, a.train_size, run_split_seed(a.seed))?;
    let preset: Preset = a.arch.parse()?;
    let arch = preset
        .build(data::INPUT_DIM, ds.target_dim(), a.training.width)?
        .with_projection(a.training.projection()?);
    let loss: LossKind = a.loss.parse()?;
    let h = a.training.hyper(seed::derive(a.seed, Purpose::Repeat, 0))?;
    let (net, log) = Network::fit(&arch, &train, &h, loss)?;
    model_io::save_network(&a.out, &net)?;
    let log_path = a.log.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    fs::write(&log_path, log.to_csv()).map_err(|e| Error::io(&log_path, e))?;
    println!(
        "{preset} width {} ({} parameters, {} trainable), {} steps",
        a.training.width,
        arch.parameter_count(),
        arch.trainable_parameter_count(),
        log.steps
    );
    if let Some(last) = log.records.last() {
        println!("final training {loss}: {:.6}", last.loss);
    }
    if test.len() >= 2 {
        let ev = experiment::evaluate(&net, &test)?;
        println!("test SMSE {:.6}  R² {:.4}", ev.smse, ev.r2);
    }
    println!("model written to {}", a.out.display());
    Ok(())
}

fn preset_name(arch: &nn::Architecture) -> String {
    let candidates = [Preset::N5, Preset::N6, Preset::N7]
        .into_iter()
        .chain((1..=7).map(Preset::Fn));
    for p in candidates {
        if p.hidden_layers() == arch.hidden.len() && p.shortcuts() == arch.shortcuts {
            return p.to_string();
        }
    }
    "custom".into()
}

fn eval(a: EvalArgs) -> Result<()> {
    set_threads(&a.common);
    let net = model_io::load_network(&a.model)?;
    let ds = Dataset::load_csv(&a.data)?;
    let ds = load_targets(ds, net.model.arch.output_dim == 5)?;
    let (test, _) = data::split(&ds, a.test_size, 0, run_split_seed(a.seed))?;
    let ev = experiment::evaluate(&net, &test)?;
    let report = ExperimentReport {
        model: preset_name(&net.model.arch),
        loss: a.loss.parse()?,
        feed_length: ds.has_feed_length(),
        training_size: a.train_size,
        repeats: 1,
        smse_mean: ev.smse,
        smse_std: 0.0,
        r2_mean: ev.r2,
        r2_std: 0.0,
        per_param_smse: ev.per_param,
        wall_seconds: 0.0,
    };
    write_reports(&a.out, std::slice::from_ref(&report))?;
    print!("{}", experiment::format_table(std::slice::from_ref(&report)));
    Ok(())
}

fn write_reports(path: &Path, reports: &[ExperimentReport]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    experiment::write_reports_csv(&mut w, reports).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| f(p.trim())).collect()
}

fn sweep(a: SweepArgs) -> Result<()> {
    set_threads(&a.common);
    let ds = load_targets(Dataset::load_csv(&a.data)?, a.training.no_feed_length)?;
    let projection = a.training.projection()?;
    let gb = crate::baselines::GbtConfig {
        rounds: a.gb_rounds,
        max_depth: a.gb_depth,
        shrinkage: a.gb_shrinkage,
    };
    let models = parse_list(&a.models, |m| {
        ModelSpec::parse(m, a.training.width, projection).map(|spec| match spec {
            ModelSpec::Gbt(_) => ModelSpec::Gbt(gb),
            other => other,
        })
    })?;
    let cfg = ExperimentConfig {
        models,
        losses: parse_list(&a.losses, |l| l.parse())?,
        training_sizes: parse_list(&a.sizes, |s| {
            s.parse().map_err(|_| Error::Parse(format!("bad training size {s:?}")))
        })?,
        test_size: a.training.test_size,
        repeats: a.repeats,
        master_seed: a.seed,
        hyper: a.training.hyper(a.seed)?,
    };
    let reports = experiment::run_comparison(&ds, &cfg)?;
    write_reports(&a.out, &reports)?;
    print!("{}", experiment::format_table(&reports));
    Ok(())
}

fn read_targets(path: &Path) -> Result<Vec<CircuitParams>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidDataset(format!("{other:?}")),
    })?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let cols: Vec<usize> = data::INPUT_COLUMNS
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::InvalidDataset(format!("targets file lacks column {c}")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut a = [0.0; 6];
        for (j, &c) in cols.iter().enumerate() {
            let field = rec.get(c).unwrap_or("");
            a[j] = field.trim().parse().map_err(|_| {
                Error::InvalidDataset(format!("targets row {}: bad number {field:?}", line + 1))
            })?;
        }
        out.push(CircuitParams::from_array(a));
    }
    Ok(out)
}

fn synthesize(a: SynthesizeArgs, cfg: &ConfigFile) -> Result<()> {
    set_threads(&a.common);
    let net = model_io::load_network(&a.model)?;
    let targets = match (&a.targets, a.lp) {
        (Some(path), _) => read_targets(path)?,
        (None, Some(lp)) => vec![CircuitParams {
            lp,
            ls: a.ls.unwrap_or_default(),
            k: a.k.unwrap_or_default(),
            srf: a.srf.unwrap_or_default(),
            qp: a.qp.unwrap_or_default(),
            qs: a.qs.unwrap_or_default(),
        }],
        (None, None) => {
            return Err(Error::Parse(
                "give --targets FILE or all of --lp --ls --k --srf --qp --qs".into(),
            ))
        }
    };
    let envelope = match &a.data {
        Some(p) => Some(Envelope::of(&Dataset::load_csv(p)?)),
        None => None,
    };
    let mut opts = ClosedLoopOptions {
        constants: cfg.constants()?,
        ..Default::default()
    };
    if let Some(f) = a.feed_length {
        opts.feed_length = f;
    }
    let results = closed_loop::closed_loop_validate(&net, &targets, envelope.as_ref(), &opts)?;
    for (i, r) in results.iter().enumerate() {
        let g = r.predicted;
        println!(
            "[{i}] geometry: w_oa={:.2} w_ob={:.2} r0={:.2} r1={:.2} x_gnd={:.2} l_f={:.2} um{}",
            g.w_oa,
            g.w_ob,
            g.r0,
            g.r1,
            g.x_gnd,
            g.l_f,
            if r.clamped { " (clamped)" } else { "" }
        );
        let fmt = |c: &CircuitParams| {
            format!(
                "Lp={:.2}pH Ls={:.2}pH k={:.3} SRF={:.2}GHz Qp={:.2} Qs={:.2}",
                c.lp, c.ls, c.k, c.srf, c.qp, c.qs
            )
        };
        println!("    target:      {}", fmt(&r.target));
        println!("    synthesized: {}", fmt(&r.resynthesized));
        let max_err = r.rel_error.iter().cloned().fold(0.0, f64::max);
        println!("    max relative error {:.2}%", 100.0 * max_err);
        for w in &r.warnings {
            eprintln!("warning: target {i}: {w}");
        }
    }
    if let Some(out) = &a.out {
        let f = fs::File::create(out).map_err(|e| Error::io(out, e))?;
        closed_loop::write_results_csv(BufWriter::new(f), &results)?;
    }
    Ok(())
}

/// Metric checks against direct evaluation on fixed inputs.
fn metric_self_test() -> Result<()> {
    use ndarray::array;
    let y = array![[2.0, 4.0]];
    let y_hat = array![[1.0, 5.0]];
    let s = metrics::smse(y_hat.view(), y.view())?;
    let d = metrics::sdmse(y_hat.view(), y.view())?;
    if s != 0.15625 || d != 0.375 {
        return Err(Error::Singular(format!("metric check failed: smse {s}, sdmse {d}")));
    }
    let y = array![[1.0], [2.0], [3.0]];
    let y_hat = array![[1.0], [2.0], [4.0]];
    let r2 = metrics::r2_score(y_hat.view(), y.view())?;
    if r2 != 0.5 {
        return Err(Error::Singular(format!("metric check failed: r2 {r2}")));
    }
    Ok(())
}

fn check(a: CheckArgs) -> Result<()> {
    set_threads(&a.common);
    let worst = gradcheck::self_test(a.count, a.seed)?;
    println!(
        "gradient check: {} architectures, {} parameters ({} skipped at kinks), worst relative error {:.3e}",
        a.count, worst.params, worst.skipped, worst.max_rel_error
    );
    if !(worst.max_rel_error < 1e-5) {
        return Err(Error::Divergence {
            epoch: 0,
            step: 0,
            loss: worst.max_rel_error,
        }
        .tagged("gradient check failed"));
    }
    metric_self_test()?;
    println!("metric checks passed");
    Ok(())
}
