//! `ridgelab` — singular ridge regression from the command line.
//!
//! Three subcommands:
//!
//! - `validate`: run the seeded Monte Carlo verifiers (estimator law,
//!   training error, testing error) for a configured model; exit 0 when
//!   every check passes, 1 on a scientific failure, 2 on usage or config
//!   errors.
//! - `sweep`: trace training/testing error curves over a range of
//!   covariate counts and write `CSV` + `SVG` files.
//! - `errors`: print characteristic, conditional characteristic, training,
//!   and testing error reports for one model instance.

mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ridgelab_core::config::{RunConfig, SweepFileConfig};
use ridgelab_core::models::{homoscedasticity_check, Model, SampleKind, HOMOSCEDASTICITY_TOL};
use ridgelab_core::montecarlo::{
    verify_estimator_law, verify_testing_error, verify_training_error, McComparison, McConfig,
};
use ridgelab_core::mse::{self, ErrorReport};
use ridgelab_core::ridge::{self, CovariatePoint};
use ridgelab_core::sweep::{
    argmin_testing, generalization_preset, overfitting_preset, run_sweep, sweep_to_csv, SweepSpec,
};
use ridgelab_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "ridgelab",
    version,
    about = "Singular ridge regression: closed-form training/testing errors with seeded Monte Carlo validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the estimator law and both error formulas by simulation
    Validate {
        /// TOML run configuration (model + experiment)
        #[arg(long)]
        config: PathBuf,
        /// Override the configured replication count
        #[arg(long)]
        reps: Option<usize>,
        /// Override the configured master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute error curves over a covariate-count range; write CSV and SVG
    Sweep {
        /// Built-in sweep definition
        #[arg(long, value_enum, conflicts_with = "config")]
        preset: Option<Preset>,
        /// TOML sweep definition ([sweep] section)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the sweep seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print error reports for one model instance
    Errors {
        /// TOML run configuration (model + experiment)
        #[arg(long)]
        config: PathBuf,
        /// Covariate count to evaluate at
        #[arg(long)]
        p: usize,
        /// Regularization strength (must be positive)
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Write per-kind CSV reports into this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Matched-support overfitting sweep (λ=0.9, N₁=N₂=20)
    Figure1,
    /// Shifted-support generalization sweep (λ=1, N₁=30, N₂=40, ζ on [1,2])
    Figure2,
}

/// CLI failure classes and their exit codes: scientific failures exit 1,
/// usage/config/environment problems exit 2.
enum Failure {
    Scientific(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Scientific(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Scientific(m) | Failure::Usage(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::HeteroscedasticResiduals(_) | CoreError::InternalConsistency(_) => {
                Failure::Scientific(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate {
            config,
            reps,
            seed,
            out,
        } => cmd_validate(&config, reps, seed, out.as_deref()),
        Command::Sweep {
            preset,
            config,
            out,
            seed,
        } => cmd_sweep(preset, config.as_deref(), &out, seed),
        Command::Errors {
            config,
            p,
            lambda,
            out,
        } => cmd_errors(&config, p, lambda, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn print_comparison(c: &McComparison) {
    for q in &c.quantities {
        let verdict = if q.pass { "PASS" } else { "FAIL" };
        let detail = match (q.max_standardized_deviation, q.relative_frobenius) {
            (Some(z), _) if z.is_finite() => format!("max |dev|/SE = {z:.3}"),
            (_, Some(rel)) => format!("relative Frobenius = {rel:.4}"),
            _ => String::new(),
        };
        let rel = q
            .relative_error
            .map(|r| format!(", relative error = {:.3e}", r))
            .unwrap_or_default();
        println!("  [{verdict}] {} ({detail}{rel})", q.name);
    }
}

fn cmd_validate(
    config: &Path,
    reps: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let model = cfg.build_model()?;
    let exp = cfg.experiment;
    let seed = seed.unwrap_or(exp.seed);
    let mc = McConfig::new(reps.unwrap_or(exp.replications), seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = model.draw_design(exp.n1, SampleKind::Training, &mut rng)?;

    println!(
        "validating {} model (p = {}, q = {}) at lambda = {}, N1 = {}, {} replications, seed {}",
        model.kind_name(),
        model.p(),
        model.q(),
        exp.lambda,
        exp.n1,
        mc.replications,
        seed
    );

    let estimator = verify_estimator_law(&model, &design, exp.lambda, &mc)?;
    println!("estimator law:");
    print_comparison(&estimator);
    let training = verify_training_error(&model, &design, exp.lambda, &mc)?;
    println!("training error:");
    print_comparison(&training);
    let testing = verify_testing_error(&model, &design, exp.lambda, exp.n2, &mc)?;
    println!("testing error:");
    print_comparison(&testing);

    if let Some(path) = out {
        let report = serde_json::json!({
            "estimator_law": estimator,
            "training_error": training,
            "testing_error": testing,
        });
        std::fs::write(path, serde_json::to_string_pretty(&report).unwrap())?;
        println!("report written to {}", path.display());
    }

    if estimator.pass && training.pass && testing.pass {
        println!("all verifications passed");
        Ok(())
    } else {
        Err(Failure::Scientific(
            "one or more Monte Carlo verifications failed".into(),
        ))
    }
}

fn cmd_sweep(
    preset: Option<Preset>,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let (spec, stem): (SweepSpec, &str) = match (preset, config) {
        (Some(Preset::Figure1), _) => (overfitting_preset(seed), "figure1"),
        (Some(Preset::Figure2), _) => (generalization_preset(seed), "figure2"),
        (None, Some(path)) => {
            let mut spec = SweepFileConfig::load(path)?.to_spec();
            if let Some(s) = seed {
                spec.seed = s;
            }
            (spec, "sweep")
        }
        (None, None) => {
            return Err(Failure::Usage(
                "sweep needs either --preset or --config".into(),
            ))
        }
    };

    let rows = run_sweep(&spec)?;
    std::fs::create_dir_all(out)?;
    let csv_path = out.join(format!("{stem}.csv"));
    let svg_path = out.join(format!("{stem}.svg"));
    std::fs::write(&csv_path, sweep_to_csv(&rows))?;
    let title = format!(
        "training/testing error vs p  (lambda = {}, N1 = {}, N2 = {}, testing on [{}, {}])",
        spec.lambda, spec.n1, spec.n2, spec.test_interval.0, spec.test_interval.1
    );
    std::fs::write(&svg_path, svg::render_two_series(&rows, &title))?;

    let best = argmin_testing(&rows).expect("nonempty sweep");
    println!(
        "swept p = {}..{} (lambda = {}, seed = {})",
        spec.p_min, spec.p_max, spec.lambda, spec.seed
    );
    println!("testing error minimized at p = {best}");
    println!("wrote {}", csv_path.display());
    println!("wrote {}", svg_path.display());
    Ok(())
}

fn print_report(report: &ErrorReport, context: &str) {
    println!(
        "{:<28} {:>14.8} {}",
        report.kind.as_str(),
        report.value,
        context
    );
    for (label, value) in &report.breakdown {
        println!("    {label:<24} {value:>14.8}");
    }
}

fn cmd_errors(config: &Path, p: usize, lambda: f64, out: Option<&Path>) -> Result<(), Failure> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Failure::Usage(format!(
            "usage: --lambda must be a positive real, got {lambda}"
        )));
    }
    if p == 0 {
        return Err(Failure::Usage("usage: --p must be at least 1".into()));
    }
    let cfg = RunConfig::load(config)?;
    let model = rebuild_at_p(&cfg, p)?;
    let exp = cfg.experiment;

    let moments = model.population_moments()?;
    let solution = ridge::ridge_matrix(&moments, lambda)?;
    let law = model.residual_law(&solution)?;

    println!(
        "{} model, p = {}, lambda = {}, N1 = {}, seed = {}",
        model.kind_name(),
        p,
        lambda,
        exp.n1,
        exp.seed
    );
    println!("sigma_x condition number: {:.6e}", moments.sigma_x_condition_number());
    println!();

    let characteristic = mse::characteristic_error(&law)?;
    print_report(&characteristic, "");

    // Conditional characteristic at a named point: the driver-support
    // midpoint for scalar models, the covariate mean for linear ones.
    let (point, point_label) = match &model {
        Model::Linear(_) => (
            CovariatePoint::Vector(moments.mu_x().clone()),
            "at x = mu_x".to_string(),
        ),
        _ => (CovariatePoint::Scalar(0.0), "at xi = 0 (support midpoint)".to_string()),
    };
    let conditional = mse::conditional_characteristic_error(&law, &point)?;
    print_report(&conditional, &point_label);

    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let design = model.draw_design(exp.n1, SampleKind::Training, &mut rng)?;
    let homo = homoscedasticity_check(&model, solution.b_lambda(), None, HOMOSCEDASTICITY_TOL)?;
    if !homo.homoscedastic {
        return Err(Failure::Scientific(format!(
            "heteroscedastic residuals: the training/testing error formulas need a constant \
             conditional covariance (max relative spread {:.3e})",
            homo.max_relative_spread
        )));
    }
    let cond_mean = model.conditional_mean_matrix(solution.b_lambda(), &design)?;
    let training = mse::training_error(
        &design.x,
        solution.b_lambda(),
        &cond_mean,
        &homo.representative_cov,
        lambda,
    )?;
    print_report(&training, &format!("(N1 = {})", exp.n1));

    // The testing row needs a testing distribution; for the polynomial
    // model that means an explicit test interval in the config.
    let testing = if matches!(model, Model::ExpPoly(_)) && cfg.model.test_interval.is_none() {
        println!("testing                      (omitted: no test_interval in the config)");
        None
    } else {
        let testing_moments = model.testing_moments()?;
        let report = mse::testing_error(
            &design.x,
            solution.b_lambda(),
            &cond_mean,
            &homo.representative_cov,
            &testing_moments,
            lambda,
        )?;
        print_report(&report, "");
        Some(report)
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let n1 = exp.n1;
        let n2 = exp.n2;
        let batches: Vec<(&str, Vec<(ErrorReport, usize, usize, usize)>)> = vec![
            ("characteristic.csv", vec![(characteristic, p, 0, 0)]),
            ("conditional_characteristic.csv", vec![(conditional, p, 0, 0)]),
            ("training.csv", vec![(training, p, n1, 0)]),
            (
                "testing.csv",
                testing.map(|t| vec![(t, p, n1, n2)]).unwrap_or_default(),
            ),
        ];
        for (name, batch) in batches {
            if batch.is_empty() {
                continue;
            }
            let path = dir.join(name);
            std::fs::write(&path, mse::reports_to_csv(&batch)?)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Rebuilds the configured model at covariate count `p`. Scalar-driver
/// models regrow their feature set; a linear model's dimension is fixed by
/// its coefficient matrix.
fn rebuild_at_p(cfg: &RunConfig, p: usize) -> Result<Model, Failure> {
    let mut model_cfg = cfg.clone();
    match model_cfg.model.kind.as_str() {
        "linear" => {
            let model = model_cfg.build_model()?;
            if model.p() != p {
                return Err(Failure::Usage(format!(
                    "usage: --p {} does not match the linear model dimension {}",
                    p,
                    model.p()
                )));
            }
            Ok(model)
        }
        _ => {
            model_cfg.model.p = Some(p);
            Ok(model_cfg.build_model()?)
        }
    }
}
