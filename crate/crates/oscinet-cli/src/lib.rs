//! Subcommand implementations behind the `oscinet` binary.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use oscinet::config::{parse_config, to_canonical_toml, RunConfig};
use oscinet::data::{
    build_dataset, slab_analytic, solve_scattering, DatasetConfig, FourierField,
    Mesh1D, QueryMode, ScatteringProblem,
};
use oscinet::diagnostics::{param_audit, residual_spectrum, SpectrumReport};
use oscinet::io::{read_checkpoint, read_dataset, write_atomic, write_checkpoint, write_dataset};
use oscinet::nets::{init_parameters, predict, predict_complex, CountConvention};
use oscinet::tensor::{grad_check, Activation, Tensor};
use oscinet::train::{evaluate, relative_l2, train};

#[derive(Parser)]
#[command(
    name = "oscinet",
    version,
    about = "Data generation, training, and diagnostics for multi-scale operator networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Train a model from a TOML run configuration.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset.
    Eval(EvalArgs),
    /// Print the parameter count of a configured architecture.
    Params(ParamsArgs),
    /// Band-wise residual energy of a checkpoint on a dataset's test split.
    Spectrum(SpectrumArgs),
    /// Self-checks against independent references.
    #[command(subcommand)]
    Verify(VerifyCommand),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Closed-form oscillatory mapping applied to random media.
    Map(GenMapArgs),
    /// Scattered fields from the integral-equation solver.
    Helmholtz(GenHelmholtzArgs),
}

#[derive(Args)]
struct GenCommonArgs {
    /// Fourier mode count M of the input media.
    #[arg(long, default_value_t = 50)]
    modes: usize,
    /// Amplitude constant c.
    #[arg(long, default_value_t = 0.1)]
    amplitude: f64,
    #[arg(long, default_value_t = 5000)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    test: usize,
    /// Sensor count m.
    #[arg(long)]
    sensors: usize,
    /// Query count q.
    #[arg(long)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Query layout: uniform or random.
    #[arg(long, default_value = "uniform")]
    query: String,
    /// Escalate warnings (e.g. coarse meshes) into errors.
    #[arg(long)]
    strict: bool,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenMapArgs {
    #[command(flatten)]
    common: GenCommonArgs,
    /// Mode cap K of the mapping.
    #[arg(long = "map-modes", default_value_t = 50)]
    map_modes: usize,
    /// Separate stream seed for the mapping coefficients.
    #[arg(long = "coeff-seed")]
    coeff_seed: Option<u64>,
}

#[derive(Args)]
struct GenHelmholtzArgs {
    #[command(flatten)]
    common: GenCommonArgs,
    /// Wave number k.
    #[arg(long)]
    k: f64,
    /// Uniform mesh element count (default targets ~20 nodes/wavelength).
    #[arg(long)]
    mesh: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the dataset directory from the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Override the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model initialization seed (training seed comes from the config).
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    config: PathBuf,
    /// Counting convention: reported or all.
    #[arg(long, default_value = "reported")]
    convention: String,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 16)]
    bins: usize,
    /// Output CSV path (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Compare the integral-equation solver against the analytic slab.
    Slab(VerifySlabArgs),
    /// Autodiff gradients against central finite differences.
    Grad(VerifyGradArgs),
}

#[derive(Args)]
struct VerifySlabArgs {
    #[arg(long, default_value_t = 50.0)]
    k: f64,
    #[arg(long, default_value_t = 0.5)]
    a0: f64,
    #[arg(long, default_value_t = 2000)]
    mesh: usize,
    /// Pass threshold on the relative L2 error.
    #[arg(long, default_value_t = 2e-2)]
    tol: f64,
}

#[derive(Args)]
struct VerifyGradArgs {
    /// Number of random models to check.
    #[arg(long, default_value_t = 20)]
    models: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Run the CLI on explicit arguments. Exit codes: 0 success, 1 runtime
/// failure, 2 usage error.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Gen(GenCommand::Map(args)) => gen_map(args),
        Command::Gen(GenCommand::Helmholtz(args)) => gen_helmholtz(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Params(args) => run_params(args),
        Command::Spectrum(args) => run_spectrum(args),
        Command::Verify(VerifyCommand::Slab(args)) => verify_slab(args),
        Command::Verify(VerifyCommand::Grad(args)) => verify_grad(args),
    }
}

fn query_mode(name: &str) -> Result<QueryMode> {
    match name {
        "uniform" => Ok(QueryMode::Uniform),
        "random" => Ok(QueryMode::Random),
        other => bail!("unknown query mode `{other}` (expected uniform or random)"),
    }
}

fn gen_dataset_common(config: DatasetConfig, out: &Path) -> Result<i32> {
    if let Some(npw) = config.resolution_shortfall() {
        eprintln!(
            "warning: mesh resolves only {npw:.1} nodes per wavelength (rule of thumb: >= 10)"
        );
    }
    let dataset = build_dataset(&config).context("dataset generation failed")?;
    write_dataset(&dataset, out).context("dataset write failed")?;
    println!(
        "wrote {} dataset: {} train / {} test functions, {} sensors, {} queries -> {}",
        dataset.manifest.kind,
        dataset.manifest.n_train,
        dataset.manifest.n_test,
        dataset.manifest.n_sensors,
        dataset.manifest.n_queries,
        out.display()
    );
    Ok(0)
}

fn gen_map(args: GenMapArgs) -> Result<i32> {
    let c = &args.common;
    let mut config = DatasetConfig::nonlinear_map(c.modes, args.map_modes);
    config.amplitude = c.amplitude;
    config.n_train = c.train;
    config.n_test = c.test;
    config.n_sensors = c.sensors;
    config.n_queries = c.queries;
    config.seed = c.seed;
    config.coeff_seed = args.coeff_seed;
    config.query_mode = query_mode(&c.query)?;
    config.strict = c.strict;
    gen_dataset_common(config, &c.out)
}

fn gen_helmholtz(args: GenHelmholtzArgs) -> Result<i32> {
    let c = &args.common;
    let mut config = DatasetConfig::helmholtz(c.modes, args.k);
    config.amplitude = c.amplitude;
    config.n_train = c.train;
    config.n_test = c.test;
    config.n_sensors = c.sensors;
    config.n_queries = c.queries;
    config.seed = c.seed;
    config.mesh_elements = args.mesh;
    config.query_mode = query_mode(&c.query)?;
    config.strict = c.strict;
    gen_dataset_common(config, &c.out)
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_config(&text)?)
}

fn run_train(args: TrainArgs) -> Result<i32> {
    let mut config = load_config(&args.config)?;
    if let Some(ds) = &args.dataset {
        config.dataset = ds.display().to_string();
    }
    if let Some(out) = &args.out {
        config.output = out.display().to_string();
    }
    let dataset_dir = Path::new(&config.dataset);
    if !dataset_dir.exists() {
        bail!("dataset directory {} does not exist", dataset_dir.display());
    }
    let dataset = read_dataset(dataset_dir)?;
    let spec = config.model.to_spec()?;
    let train_config = config.train.to_train_config()?;
    let out_dir = PathBuf::from(&config.output);
    std::fs::create_dir_all(&out_dir)?;
    // snapshot the effective configuration next to the artifacts
    write_atomic(&out_dir.join("config.toml"), to_canonical_toml(&config)?)?;

    let mut params = init_parameters(&spec, args.model_seed)?;
    let record = train(&spec, &mut params, &dataset, &train_config, Some(&out_dir))?;

    // final-epoch residual spectrum over the test split
    let spectrum = test_spectrum(&spec, &params, &dataset, 16, record.rows.len())?;
    write_atomic(&out_dir.join("spectrum.csv"), spectrum.to_csv())?;
    write_checkpoint(&spec, &params, &out_dir.join("checkpoint_final.mson"))?;

    let last = record.rows.last().expect("at least one epoch");
    println!(
        "trained {} epochs: train loss {:.6e}, test loss {:.6e}, rel L2 {:.4}{} -> {}",
        last.epoch,
        last.train_loss,
        last.test_loss,
        last.rel_l2_re,
        last.rel_l2_im
            .map(|v| format!(" / {v:.4} (imag)"))
            .unwrap_or_default(),
        out_dir.display()
    );
    Ok(0)
}

/// Residual spectrum of a model on a dataset split, summed over functions.
fn split_spectrum(
    spec: &oscinet::nets::DeepOnetSpec,
    params: &oscinet::nets::ModelParams,
    dataset: &oscinet::data::OperatorDataset,
    inputs: &Tensor,
    out_re: &Tensor,
    out_im: Option<&Tensor>,
    bins: usize,
    epoch: usize,
) -> Result<SpectrumReport> {
    let queries = Tensor::new(vec![dataset.queries.len(), 1], dataset.queries.clone())?;
    let q = dataset.queries.len();
    let (pred_re, pred_im) = if spec.complex_output {
        let (re, im) = predict_complex(spec, params, inputs, &queries)?;
        (re, Some(im))
    } else {
        (predict(spec, params, inputs, &queries)?, None)
    };
    let mut reports = Vec::new();
    for row in 0..inputs.rows() {
        let res_re: Vec<f64> = (0..q)
            .map(|p| pred_re.at(row, p) - out_re.at(row, p))
            .collect();
        let res_im: Option<Vec<f64>> = pred_im.as_ref().map(|pi| {
            (0..q)
                .map(|p| pi.at(row, p) - out_im.unwrap().at(row, p))
                .collect()
        });
        let mut report =
            residual_spectrum(&dataset.queries, &res_re, res_im.as_deref(), bins)?;
        report.epoch = Some(epoch);
        reports.push(report);
    }
    Ok(SpectrumReport::accumulate(reports)?)
}

fn test_spectrum(
    spec: &oscinet::nets::DeepOnetSpec,
    params: &oscinet::nets::ModelParams,
    dataset: &oscinet::data::OperatorDataset,
    bins: usize,
    epoch: usize,
) -> Result<SpectrumReport> {
    split_spectrum(
        spec,
        params,
        dataset,
        &dataset.test_in,
        &dataset.test_out_re,
        dataset.test_out_im.as_ref(),
        bins,
        epoch,
    )
}

fn run_eval(args: EvalArgs) -> Result<i32> {
    let (spec, params) = read_checkpoint(&args.checkpoint)?;
    let dataset = read_dataset(&args.dataset)?;
    let metrics = evaluate(&spec, &params, &dataset)?;
    println!(
        "test loss {:.6e}, rel L2 (real) {:.6}{}",
        metrics.loss,
        metrics.rel_l2_re,
        metrics
            .rel_l2_im
            .map(|v| format!(", rel L2 (imag) {v:.6}"))
            .unwrap_or_default()
    );
    Ok(0)
}

fn run_params(args: ParamsArgs) -> Result<i32> {
    let config = load_config(&args.config)?;
    let spec = config.model.to_spec()?;
    let convention: CountConvention = args.convention.parse()?;
    let audit = param_audit(&spec)?;
    print!("{audit}");
    let total = oscinet::nets::count_parameters(&spec, convention);
    println!("{total}");
    Ok(0)
}

fn run_spectrum(args: SpectrumArgs) -> Result<i32> {
    let (spec, params) = read_checkpoint(&args.checkpoint)?;
    let dataset = read_dataset(&args.dataset)?;
    let report = test_spectrum(&spec, &params, &dataset, args.bins, 0)?;
    match &args.out {
        Some(path) => write_atomic(path, report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    Ok(0)
}

fn verify_slab(args: VerifySlabArgs) -> Result<i32> {
    let slab = slab_analytic(args.k, args.a0)?;
    let medium = FourierField::constant(args.a0)?;
    let mesh = Mesh1D::uniform(args.mesh)?;
    let problem = ScatteringProblem::new(args.k, medium, mesh)?;
    let numeric = solve_scattering(&problem)?;
    let nodes = problem.mesh.nodes();
    let reference = slab.scattered_field(nodes);
    let (re_n, im_n): (Vec<f64>, Vec<f64>) = numeric.iter().map(|c| (c.re, c.im)).unzip();
    let (re_r, im_r): (Vec<f64>, Vec<f64>) = reference.iter().map(|c| (c.re, c.im)).unzip();
    let n = nodes.len();
    let err = relative_l2(
        &Tensor::new(vec![1, n], re_n)?,
        Some(&Tensor::new(vec![1, n], im_n)?),
        &Tensor::new(vec![1, n], re_r)?,
        Some(&Tensor::new(vec![1, n], im_r)?),
    )?;
    println!(
        "slab check: k={}, a0={}, {} elements -> relative L2 error {err:.6e} (tolerance {:.1e})",
        args.k, args.a0, args.mesh, args.tol
    );
    Ok(if err <= args.tol { 0 } else { 1 })
}

fn verify_grad(args: VerifyGradArgs) -> Result<i32> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let activations = [
        Activation::Tanh,
        Activation::Relu,
        Activation::Sin,
        Activation::Srelu,
    ];
    let mut worst = 0.0f64;
    for i in 0..args.models {
        let activation = activations[i % activations.len()];
        let n_in = rng.random_range(1..=6);
        let width = rng.random_range(2..=16);
        let depth = rng.random_range(1..=3);
        let mut widths = vec![n_in];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(1);
        let mut params: Vec<Tensor> = Vec::new();
        for w in widths.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.push(Tensor::new(
                vec![w[0], w[1]],
                (0..w[0] * w[1])
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect(),
            )?);
            params.push(Tensor::new(
                vec![w[1]],
                (0..w[1]).map(|_| rng.random_range(-0.1..=0.1)).collect(),
            )?);
        }
        let batch = 3;
        let x = Tensor::new(
            vec![batch, n_in],
            (0..batch * n_in)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect(),
        )?;
        let t = Tensor::new(
            vec![batch, 1],
            (0..batch).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        )?;
        let err = grad_check(
            |tape, p| {
                let mut h = tape.leaf(x.clone());
                let layers = p.len() / 2;
                for l in 0..layers {
                    h = tape.affine(h, p[2 * l], Some(p[2 * l + 1]))?;
                    if l + 1 != layers {
                        h = tape.activation(h, activation);
                    }
                }
                let target = tape.leaf(t.clone());
                tape.mse(h, target)
            },
            &params,
            args.step,
        )?;
        worst = worst.max(err);
    }
    println!(
        "gradient check: {} models, max relative error {worst:.3e} (tolerance {:.1e})",
        args.models, args.tol
    );
    Ok(if worst <= args.tol { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_error_is_exit_2() {
        assert_eq!(run_command(["oscinet", "no-such-command"]), 2);
        assert_eq!(run_command(["oscinet", "gen", "map"]), 2); // missing --out etc.
    }

    #[test]
    fn help_is_exit_0() {
        assert_eq!(run_command(["oscinet", "--help"]), 0);
        assert_eq!(run_command(["oscinet", "verify", "--help"]), 0);
    }
}
