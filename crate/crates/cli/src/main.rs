use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lipdp::accountant::{calibrate_sigma, RdpLedger};
use lipdp::bias::{expected_gradient, find_clipped_fixed_point, vector_field, write_field_csv, BiasScenario};
use lipdp::experiment::{run_experiment, ExperimentConfig};
use lipdp::optim::{clip_weights, AveragingMode, ClipMode, StepRule, Variant};
use lipdp::rng::streams;
use lipdp::sensitivity::{layer_sensitivity, loss_bound};
use lipdp::{Error, Result, RngState};

#[derive(Parser)]
#[command(name = "lipdp", version, about = "Differentially private training with weight clipping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one experiment; writes results, ledger, diagnostics and the resolved config.
    Train(TrainArgs),
    /// Expected clipped gradients and their fixed point for a linear regression with discrete errors.
    BiasLab(BiasArgs),
    /// Privacy spend of the Poisson-subsampled Gaussian mechanism.
    Accountant(AccountantArgs),
    /// Per-layer input, loss-gradient and sensitivity bounds of a freshly initialized, clipped model.
    SensitivityReport(ReportArgs),
}

/// Overrides for fields of the experiment config.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// lip | classic | fix
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    noise_multiplier: Option<f64>,
    #[arg(long)]
    expected_batch_size: Option<usize>,
    #[arg(long)]
    clip_threshold: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// fixed | adam
    #[arg(long)]
    step_rule: Option<String>,
    /// expected_batch | realized_batch
    #[arg(long)]
    averaging: Option<String>,
    #[arg(long)]
    l2_weight: Option<f64>,
    #[arg(long)]
    track_clip_error: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BiasArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    b: f64,
    /// Error atom `value:probability`; repeatable. Defaults to 9:0.1 and -1:0.9.
    #[arg(long = "error", allow_hyphen_values = true)]
    errors: Vec<String>,
    /// Per-sample clip threshold; `inf` disables clipping.
    #[arg(long, default_value = "1")]
    clip: f64,
    /// Write the expected gradient field on a grid to this CSV file.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long, default_value_t = 21)]
    grid: usize,
    /// Half-width of the grid box around (a, b).
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
}

#[derive(Args)]
struct AccountantArgs {
    /// Sampling rate s/n.
    #[arg(long)]
    q: f64,
    /// Noise multiplier; omit with --target-epsilon to calibrate it.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    target_epsilon: Option<f64>,
}

fn parse_atom(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("error atom '{s}' is not value:probability"));
    let (v, p) = s.split_once(':').ok_or_else(bad)?;
    Ok((v.trim().parse().map_err(|_| bad())?, p.trim().parse().map_err(|_| bad())?))
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.variant {
        cfg.variant = v;
    }
    if let Some(v) = o.delta {
        cfg.delta = Some(v);
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    let t = &mut cfg.train;
    if let Some(v) = o.epochs {
        t.epochs = v;
    }
    if let Some(v) = o.noise_multiplier {
        t.noise_multiplier = v;
    }
    if let Some(v) = o.expected_batch_size {
        t.expected_batch_size = v;
    }
    if let Some(v) = o.clip_threshold {
        t.clip_threshold = v;
    }
    if let Some(v) = o.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = o.l2_weight {
        t.l2_weight = v;
    }
    if o.track_clip_error {
        t.track_clip_error = true;
    }
    match o.step_rule.as_deref() {
        None => {}
        Some("fixed") => t.step_rule = StepRule::Fixed,
        Some("adam") => t.step_rule = StepRule::adam(),
        Some(s) => return Err(Error::Config(format!("unknown step rule '{s}' (fixed|adam)"))),
    }
    match o.averaging.as_deref() {
        None => {}
        Some("expected_batch") => t.averaging = AveragingMode::ExpectedBatch,
        Some("realized_batch") => t.averaging = AveragingMode::RealizedBatch,
        Some(s) => {
            return Err(Error::Config(format!(
                "unknown averaging '{s}' (expected_batch|realized_batch)"
            )))
        }
    }
    Ok(())
}

fn load_config(path: &PathBuf, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    apply(&mut cfg, o)?;
    Ok(cfg)
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let out = run_experiment(&cfg)?;
    let r = &out.row;
    println!(
        "variant={} seed={} epsilon={} delta={} accuracy={} runtime_s={:.3} final_weight_norms={}",
        r.variant, r.seed, r.epsilon, r.delta, r.accuracy, r.runtime_s, r.final_weight_norms
    );
    println!("outputs={}", cfg.output_dir.display());
    Ok(())
}

fn report_cmd(args: &ReportArgs) -> Result<()> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let data = cfg.dataset.load()?;
    let model = cfg.model.build(data.dim())?;
    let rng = RngState::new(cfg.seed);
    let init = model.init_params(&mut rng.stream(streams::INIT));
    let mode = match cfg.variant {
        Variant::Fix => ClipMode::Exactly,
        _ => ClipMode::AtMost,
    };
    let clip = clip_weights(&model, init, cfg.train.clip_threshold, mode)?;
    let l_loss = loss_bound(&model, &clip.u_theta, data.x1())?;
    let report = layer_sensitivity(&model, &clip.params, &clip.u_theta, data.x1(), l_loss)?;
    print!("{}", report.to_text());
    println!("loss_bound={l_loss:e}");
    Ok(())
}

fn bias_cmd(args: &BiasArgs) -> Result<()> {
    let errors = if args.errors.is_empty() {
        BiasScenario::skewed().errors
    } else {
        args.errors.iter().map(|s| parse_atom(s)).collect::<Result<Vec<_>>>()?
    };
    let scenario = BiasScenario {
        a: args.a,
        b: args.b,
        errors,
        clip: args.clip,
    };
    scenario.validate()?;
    let g = expected_gradient(&scenario, (scenario.a, scenario.b), true)?;
    println!("clipped_gradient_at_truth={:.9},{:.9}", g.0, g.1);
    println!("clipped_gradient_norm_at_truth={:.9}", (g.0 * g.0 + g.1 * g.1).sqrt());
    let p = find_clipped_fixed_point(&scenario)?;
    println!("fixed_point={:.9},{:.9}", p.theta.0, p.theta.1);
    println!("offset={:.9},{:.9}", p.theta.0 - scenario.a, p.theta.1 - scenario.b);
    println!("residual={:e}", p.residual);
    if let Some(path) = &args.field {
        let r = args.radius;
        let rows = vector_field(
            &scenario,
            (scenario.a - r, scenario.a + r),
            (scenario.b - r, scenario.b + r),
            args.grid,
        )?;
        let f = std::fs::File::create(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        write_field_csv(&rows, f)?;
        println!("field={}", path.display());
    }
    Ok(())
}

fn accountant_cmd(args: &AccountantArgs) -> Result<()> {
    let sigma = match (args.sigma, args.target_epsilon) {
        (Some(s), _) => s,
        (None, Some(eps)) => calibrate_sigma(args.q, args.steps, eps, args.delta)?,
        (None, None) => return Err(Error::Config("give --sigma or --target-epsilon".into())),
    };
    let mut ledger = RdpLedger::new(args.q, sigma)?;
    ledger.compose(args.steps);
    println!("{}", ledger.record(args.delta)?.to_json()?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train_cmd(a),
        Command::BiasLab(a) => bias_cmd(a),
        Command::Accountant(a) => accountant_cmd(a),
        Command::SensitivityReport(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error\tcode={}\tmessage={msg}", e.code());
            ExitCode::from(2)
        }
    }
}
