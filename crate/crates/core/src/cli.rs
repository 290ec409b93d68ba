//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration problems, 2 for
//! model, numerical and I/O failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checks::{heldout_predictive_check, ppn_check, ppn_study};
use crate::config::{ModelEntry, StudyConfig};
use crate::data::{read_csv, write_csv, CsvLayout};
use crate::datagen::DataPreset;
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::report::emit_report;
use crate::rng::Seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ppn", version, about = "Heldout predictive checks and posterior predictive null studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate {
        #[arg(value_enum)]
        preset: DataPreset,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heldout predictive check of one model.
    Check {
        #[arg(long)]
        data: PathBuf,
        /// Model id from the config, or a spec such as `gmm:3`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior predictive null: does B's data fool A's check?
    Ppn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_a: String,
        #[arg(long)]
        model_b: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full grid of checks and PPNs over the configured models.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Parse a model spec: `gmm:K`, `multmix:K`, `reg-intercept`,
/// `reg-covariates` or `ppca:K`.
pub fn parse_model_spec(text: &str) -> Result<ModelKind> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (text, None),
    };
    let count = |what: &str| -> Result<usize> {
        arg.ok_or_else(|| Error::Config(format!("`{name}` needs {what}, e.g. `{name}:2`")))?
            .parse()
            .map_err(|_| Error::Config(format!("bad {what} in model spec `{text}`")))
    };
    let kind = match name {
        "gmm" => ModelKind::Gmm {
            components: count("a component count")?,
        },
        "multmix" => ModelKind::MultinomialMixture {
            components: count("a component count")?,
        },
        "ppca" => ModelKind::Ppca {
            latent_dim: count("a latent dimension")?,
        },
        "reg-intercept" if arg.is_none() => ModelKind::RegressionIntercept,
        "reg-covariates" if arg.is_none() => ModelKind::RegressionCovariates,
        _ => return Err(Error::Config(format!("unknown model spec `{text}`"))),
    };
    Ok(kind)
}

fn resolve_model(cfg: &StudyConfig, text: &str) -> Result<ModelEntry> {
    if let Some(entry) = cfg.models.iter().find(|e| e.model().id == text) {
        return Ok(entry.clone());
    }
    Ok(ModelEntry {
        id: None,
        kind: parse_model_spec(text)?,
        reduction: None,
        draws: None,
    })
}

fn layout_for(kind: &ModelKind) -> CsvLayout {
    match kind {
        ModelKind::Gmm { .. } | ModelKind::Ppca { .. } => CsvLayout::Continuous,
        ModelKind::RegressionIntercept | ModelKind::RegressionCovariates => CsvLayout::Regression,
        ModelKind::MultinomialMixture { .. } => CsvLayout::Categorical { levels: None },
    }
}

fn load_config(path: Option<&Path>) -> Result<StudyConfig> {
    match path {
        Some(p) => StudyConfig::load(p),
        None => {
            let mut cfg = StudyConfig::default();
            cfg.apply_env_seed(std::env::var(crate::config::SEED_ENV).ok().as_deref())?;
            Ok(cfg)
        }
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Generate { preset, n, seed, out } => {
            let data = preset.generate(n, seed)?;
            write_csv(&data, &out)?;
            writeln!(stdout, "wrote {} rows to {}", data.n_rows(), out.display())?;
        }
        Command::Check {
            data,
            model,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let entry = resolve_model(&cfg, &model)?;
            let spec = cfg.spec_for(&entry)?;
            let dataset = read_csv(&data, &layout_for(&entry.kind))?;
            let split = cfg.split(&dataset)?;
            let stream = Seed::new(cfg.seed).stream("check");
            let outcome = heldout_predictive_check(&split, &entry.model(), &spec, &cfg.check(), &stream)?;
            write_json(&outcome, &out)?;
            let verdict = if outcome.pass { "pass" } else { "fail" };
            writeln!(stdout, "{}: p = {} ({verdict})", outcome.model, outcome.p_value)?;
        }
        Command::Ppn {
            data,
            model_a,
            model_b,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let a = resolve_model(&cfg, &model_a)?;
            let b = resolve_model(&cfg, &model_b)?;
            if layout_for(&a.kind) != layout_for(&b.kind) {
                return Err(Error::Config(format!("`{model_a}` and `{model_b}` expect different data")));
            }
            let spec = cfg.spec_for(&a)?;
            let dataset = read_csv(&data, &layout_for(&a.kind))?;
            let split = cfg.split(&dataset)?;
            let stream = Seed::new(cfg.seed).stream("ppn");
            let outcome = ppn_check(&split, &a.model(), &b.model(), &spec, &cfg.check(), &stream)?;
            write_json(&outcome, &out)?;
            let verdict = if outcome.fools { "fools" } else { "does not fool" };
            writeln!(
                stdout,
                "{} data {verdict} the {} check (sym-KL {})",
                outcome.data_source, outcome.diag_owner, outcome.sym_kl
            )?;
        }
        Command::Study { config, out_dir } => {
            let cfg = StudyConfig::load(&config)?;
            let dataset = cfg.dataset()?;
            let split = cfg.split(&dataset)?;
            let stream = Seed::new(cfg.seed).stream("study");
            let report = ppn_study(&split, &cfg.models(), &cfg.specs()?, &cfg.check(), &stream)?;
            let files = emit_report(&report, &out_dir)?;
            for check in &report.diagonal {
                let verdict = if check.pass { "pass" } else { "fail" };
                writeln!(stdout, "{}: p = {} ({verdict})", check.model, check.p_value)?;
            }
            for v in &report.verdicts {
                writeln!(stdout, "{} vs {}: {:?}", v.a, v.b, v.class)?;
            }
            writeln!(stdout, "report written to {}", files.json.display())?;
        }
    }
    Ok(())
}

/// Run the CLI on `argv` (program name first), writing normal output to
/// `stdout` and messages to `stderr`. Returns the process exit code.
pub fn run_cli_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{rendered}");
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

/// [`run_cli_with`] on the process's standard streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_specs() {
        assert_eq!(parse_model_spec("gmm:3").unwrap(), ModelKind::Gmm { components: 3 });
        assert_eq!(parse_model_spec("ppca:2").unwrap(), ModelKind::Ppca { latent_dim: 2 });
        assert_eq!(parse_model_spec("reg-covariates").unwrap(), ModelKind::RegressionCovariates);
        for bad in ["gmm", "gmm:x", "reg-intercept:1", "vae:2"] {
            assert!(parse_model_spec(bad).unwrap_err().is_usage(), "{bad}");
        }
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli_with(["ppn", "study", "--bogus"], &mut out, &mut err);
        assert_eq!(code, EXIT_USAGE);
        assert!(!err.is_empty());
    }

    #[test]
    fn help_goes_to_stdout() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run_cli_with(["ppn", "--help"], &mut out, &mut err), EXIT_OK);
        assert!(String::from_utf8(out).unwrap().contains("study"));
    }
}
