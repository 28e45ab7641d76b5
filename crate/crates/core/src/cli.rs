//! Command-line front end. [`run`] does all the work so the commands can be
//! driven in-process; the `coxian` binary only forwards its arguments.
//!
//! Exit codes: 0 success or equivalent, 1 I/O failure, 2 invalid input,
//! 3 negative result (not equivalent, no converged fit), 4 order above cap.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::enumerator::{enumerate_representations, EnumerateOptions};
use crate::equivalence::{check_equivalent, DEFAULT_TOL};
use crate::error::CoxianError;
use crate::fitter::{distinct_modes, fit_mle, select_order, FitOptions, FitResult};
use crate::io::{format_durations, read_durations, read_model, ModelDocument, ReadError};
use crate::model::{moment, summary, CoxianParams, DEFAULT_MAX_ORDER};
use crate::sampler::sample_dataset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NEGATIVE: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

/// Environment variable overriding the maximum enumerable order.
pub const MAX_ORDER_ENV: &str = "COXIAN_MAX_ORDER";

/// Relative parameter distance under which fitted modes are merged.
pub const MODE_MERGE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "coxian", version, about = "Coxian phase-type distributions")]
struct Cli {
    /// Random seed for simulation and fitting starts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Tolerance for equivalence checks.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw absorption times from a model and write them as CSV.
    Simulate {
        /// Model JSON file.
        model: PathBuf,
        /// Number of absorption times to draw.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n_obs: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Write a `duration` header line.
        #[arg(long)]
        header: bool,
    },
    /// Fit a model of fixed order (or select the order by AIC).
    Fit {
        /// Duration CSV, one observation per line.
        data: PathBuf,
        /// Number of phases.
        #[arg(long, default_value_t = 3)]
        phases: usize,
        /// Optimizer starts per order.
        #[arg(long, default_value_t = 10)]
        starts: usize,
        /// Fit orders 1..=N and report the AIC choice.
        #[arg(long, value_name = "N")]
        order_select: Option<usize>,
    },
    /// List every equivalent representation of a model.
    Enumerate {
        /// Model JSON file.
        model: PathBuf,
    },
    /// Test whether two models are representations of one distribution.
    CheckEquiv {
        /// Reference model JSON file.
        model_a: PathBuf,
        /// Candidate model JSON file.
        model_b: PathBuf,
    },
    /// Sojourn times, exit probabilities and moments of a model.
    Summary {
        /// Model JSON file.
        model: PathBuf,
        /// Number of raw moments to report.
        #[arg(long, default_value_t = 4)]
        moments: usize,
    },
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn fail(&mut self, code: i32, msg: impl std::fmt::Display) -> i32 {
        let _ = writeln!(self.err, "error: {msg}");
        code
    }
}

fn code_for(e: &CoxianError) -> i32 {
    match e {
        CoxianError::OrderTooLarge { .. } => EXIT_CAPACITY,
        _ => EXIT_INVALID,
    }
}

fn read_failure(io: &mut Io, e: ReadError) -> i32 {
    match e {
        ReadError::Io(msg) => io.fail(EXIT_IO, msg),
        ReadError::Invalid(e) => io.fail(EXIT_INVALID, e),
    }
}

fn max_order() -> usize {
    std::env::var(MAX_ORDER_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_MAX_ORDER)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(io.err, "{text}");
            } else {
                let _ = write!(io.out, "{text}");
            }
            return code;
        }
    };
    if !(cli.tol > 0.0) {
        return io.fail(EXIT_INVALID, "--tol must be positive");
    }
    match &cli.command {
        Command::Simulate {
            model,
            n_obs,
            out,
            header,
        } => simulate(&mut io, model, *n_obs as usize, cli.seed, out, *header),
        Command::Fit {
            data,
            phases,
            starts,
            order_select,
        } => fit(&mut io, &cli, data, *phases, *starts, *order_select),
        Command::Enumerate { model } => enumerate(&mut io, &cli, model),
        Command::CheckEquiv { model_a, model_b } => check_equiv(&mut io, &cli, model_a, model_b),
        Command::Summary { model, moments } => summary_cmd(&mut io, &cli, model, *moments),
    }
}

fn load_params(io: &mut Io, path: &Path) -> Result<CoxianParams, i32> {
    let doc = read_model(path).map_err(|e| read_failure(io, e))?;
    doc.params().map_err(|e| io.fail(EXIT_INVALID, e))
}

fn simulate(io: &mut Io, model: &Path, n_obs: usize, seed: u64, out: &Path, header: bool) -> i32 {
    let p = match load_params(io, model) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let data = match sample_dataset(&p, n_obs, seed) {
        Ok(d) => d,
        Err(e) => return io.fail(EXIT_INVALID, e),
    };
    if let Err(e) = std::fs::write(out, format_durations(&data, header)) {
        return io.fail(EXIT_IO, format!("{}: {e}", out.display()));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = if data.len() > 1 {
        data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let theoretical = moment(&p.to_generator(), 1).unwrap_or(f64::NAN);
    let _ = writeln!(
        io.out,
        "{}",
        serde_json::json!({
            "n_obs": data.len(),
            "seed": seed,
            "mean": mean,
            "sd": var.sqrt(),
            "theoretical_mean": theoretical,
            "out": out.display().to_string(),
        })
    );
    EXIT_OK
}

fn json_line<T: Serialize>(io: &mut Io, value: &T) {
    let _ = writeln!(
        io.out,
        "{}",
        serde_json::to_string_pretty(value).expect("outputs serialize")
    );
}

fn fit(
    io: &mut Io,
    cli: &Cli,
    data: &Path,
    phases: usize,
    starts: usize,
    order_select: Option<usize>,
) -> i32 {
    let data = match read_durations(data) {
        Ok(d) => d,
        Err(e) => return read_failure(io, e),
    };
    let opts = FitOptions {
        n_starts: starts,
        seed: cli.seed,
        ..FitOptions::default()
    };
    if let Some(n_max) = order_select {
        return match select_order(&data, n_max, &opts) {
            Ok(sel) => {
                json_line(io, &sel);
                EXIT_OK
            }
            Err(CoxianError::InvalidOption(msg)) if msg.contains("converged") => {
                io.fail(EXIT_NEGATIVE, msg)
            }
            Err(e) => io.fail(code_for(&e), e),
        };
    }
    let results = match fit_mle(&data, phases, &opts) {
        Ok(r) => r,
        Err(e) => return io.fail(code_for(&e), e),
    };
    let modes = distinct_modes(&results, MODE_MERGE_TOL);
    if modes.is_empty() {
        return io.fail(EXIT_NEGATIVE, "no start converged");
    }
    match cli.format {
        Format::Json => json_line(io, &modes),
        Format::Table | Format::Csv => write_fit_rows(io, &modes, cli.format),
    }
    EXIT_OK
}

fn write_fit_rows(io: &mut Io, modes: &[FitResult], format: Format) {
    let n = modes[0].params.order();
    let mut header = vec!["start".to_string(), "loglik".into(), "aic".into()];
    header.extend((1..n).map(|i| format!("lambda{i}")));
    header.extend((1..=n).map(|i| format!("mu{i}")));
    let rows: Vec<Vec<String>> = modes
        .iter()
        .map(|m| {
            let mut r = vec![
                m.start_index.to_string(),
                format!("{:.2}", m.loglik),
                format!("{:.2}", m.aic),
            ];
            r.extend(m.params.to_vec().iter().map(|v| cell(*v, format)));
            r
        })
        .collect();
    write_rows(io, &header, &rows, format);
}

/// Four significant digits, matching how published tables print rates.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn cell(v: f64, format: Format) -> String {
    match format {
        Format::Csv => format!("{v}"),
        _ => sig4(v),
    }
}

fn write_rows(io: &mut Io, header: &[String], rows: &[Vec<String>], format: Format) {
    if format == Format::Csv {
        let _ = writeln!(io.out, "{}", header.join(","));
        for r in rows {
            let _ = writeln!(io.out, "{}", r.join(","));
        }
        return;
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain(std::iter::once(header[c].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(io.out, "{}", line(header));
    for r in rows {
        let _ = writeln!(io.out, "{}", line(r));
    }
}

#[derive(Serialize)]
struct EnumeratedRow {
    r: usize,
    #[serde(flatten)]
    model: ModelDocument,
    diag: Vec<f64>,
    los: Vec<f64>,
    permutation: Vec<usize>,
}

fn enumerate(io: &mut Io, cli: &Cli, model: &Path) -> i32 {
    let p = match load_params(io, model) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let opts = EnumerateOptions {
        tol: cli.tol,
        max_order: max_order(),
    };
    let set = match enumerate_representations(&p.to_generator(), opts) {
        Ok(s) => s,
        Err(e) => return io.fail(code_for(&e), e),
    };
    if set.near_duplicate_eigenvalues {
        let _ = writeln!(
            io.err,
            "warning: diagonal has nearly coincident entries; representations may be ill-conditioned"
        );
    }
    let rows: Vec<EnumeratedRow> = set
        .feasible_candidates()
        .zip(&set.representations)
        .enumerate()
        .map(|(k, (c, rep))| EnumeratedRow {
            r: k + 1,
            model: ModelDocument {
                label: Some(format!("permutation {}", c.perm_index)),
                ..ModelDocument::from(rep)
            },
            diag: c.v.clone(),
            los: rep.los(),
            permutation: c.permutation.clone(),
        })
        .collect();
    match cli.format {
        Format::Json => json_line(io, &rows),
        Format::Table | Format::Csv => {
            let n = p.order();
            let mut header = vec!["r".to_string()];
            header.extend((1..=n).map(|i| format!("V{i}")));
            header.extend((1..n).map(|i| format!("b{}{}", i, i + 1)));
            header.extend((1..=n).map(|i| format!("LoS{i}")));
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|row| {
                    let mut r = vec![row.r.to_string()];
                    r.extend(row.diag.iter().map(|v| cell(*v, cli.format)));
                    r.extend(row.model.lambda.iter().map(|v| cell(*v, cli.format)));
                    r.extend(row.los.iter().map(|v| cell(*v, cli.format)));
                    r
                })
                .collect();
            write_rows(io, &header, &table, cli.format);
        }
    }
    EXIT_OK
}

fn check_equiv(io: &mut Io, cli: &Cli, a: &Path, b: &Path) -> i32 {
    let pa = match load_params(io, a) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let pb = match load_params(io, b) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match check_equivalent(&pa.to_generator(), &pb.to_generator(), cli.tol) {
        Ok(report) => {
            json_line(io, &report);
            if report.equivalent {
                EXIT_OK
            } else {
                EXIT_NEGATIVE
            }
        }
        Err(e) => io.fail(EXIT_INVALID, e),
    }
}

fn summary_cmd(io: &mut Io, cli: &Cli, model: &Path, m: usize) -> i32 {
    let p = match load_params(io, model) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let s = match summary(&p, m) {
        Ok(s) => s,
        Err(e) => return io.fail(EXIT_INVALID, e),
    };
    let mu1 = p.mu()[0];
    match cli.format {
        Format::Json => json_line(
            io,
            &serde_json::json!({
                "los": s.los,
                "exit_probs": s.exit_probs,
                "moments": s.moments,
                "mu1": mu1,
            }),
        ),
        Format::Table | Format::Csv => {
            let header: Vec<String> = ["phase", "los", "exit_prob"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = (0..p.order())
                .map(|k| {
                    vec![
                        (k + 1).to_string(),
                        cell(s.los[k], cli.format),
                        cell(s.exit_probs[k], cli.format),
                    ]
                })
                .collect();
            write_rows(io, &header, &rows, cli.format);
            let _ = writeln!(io.out);
            let header: Vec<String> = vec!["r".into(), "moment".into()];
            let rows: Vec<Vec<String>> = s
                .moments
                .iter()
                .enumerate()
                .map(|(r, v)| vec![(r + 1).to_string(), cell(*v, cli.format)])
                .collect();
            write_rows(io, &header, &rows, cli.format);
            let _ = writeln!(io.out, "\nmu1 = {}", cell(mu1, cli.format));
        }
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(38.6100), "38.61");
        assert_eq!(sig4(0.0241), "0.02410");
        assert_eq!(sig4(-1.0018), "-1.002");
        assert_eq!(sig4(1234.5), "1234");
        assert_eq!(sig4(0.0), "0");
    }
}
