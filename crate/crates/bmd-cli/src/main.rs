//! Command-line driver over the chain library: simulate paths, tabulate
//! transition and equilibrium values, evaluate distance bounds, estimate
//! rates from magnitude data, answer prediction queries, and sweep the
//! link function for plotting.
//!
//! Every command is a thin adapter around the library; outputs carry a
//! metadata header sufficient to reproduce them. Exit codes: 0 success,
//! 1 configuration errors, 2 numerical guard trips.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use bmd::chain::{self, ChainParams, StateDistribution};
use bmd::infer::{self, MagnitudeSample};
use bmd::predict::{self, PredictionQuery};
use bmd::sim::{self, NegJumpRecord};
use bmd::{bounds, specfun};

#[derive(Parser)]
#[command(name = "bmd", version, about = "Birth/mass-death chain toolkit")]
struct Cli {
    /// Up-jump rate (pair with --mu)
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,

    /// Rate ratio lambda/mu (alternative to --lambda, pair with --mu)
    #[arg(long, global = true, conflicts_with = "lambda", allow_negative_numbers = true)]
    theta: Option<f64>,

    /// Down-jump rate per reachable level
    #[arg(long, global = true, allow_negative_numbers = true)]
    mu: Option<f64>,

    /// RNG seed for the randomized commands
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Truncation tolerance for tabulated laws, in (0, 1e-6]
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol: f64,

    /// Output path, or '-' for stdout
    #[arg(long, global = true, default_value = "-")]
    out: String,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Omit the timestamp metadata line for byte-identical reruns
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one trajectory and export it (or its negative-jump record)
    Simulate {
        /// Length of the simulated time interval
        #[arg(long)]
        horizon: f64,
        /// Initial law: delta:<x>, geometric:<ratio>:<n_max>, or equilibrium
        #[arg(long, default_value = "delta:0")]
        initial: String,
        /// Export the negative-jump record instead of the full path
        #[arg(long)]
        records: bool,
        /// Drop the post-jump state column from the record export
        #[arg(long, requires = "records")]
        hide_states: bool,
    },
    /// Tabulate the transition row p_t(x, .)
    Transition {
        /// Starting state
        #[arg(long)]
        x: usize,
        /// Elapsed time
        #[arg(long)]
        t: f64,
        /// Largest tabulated state (default: adaptive until the tail is negligible)
        #[arg(long)]
        max_y: Option<usize>,
    },
    /// Tabulate the equilibrium law
    Equilibrium {
        /// Largest tabulated state (default: adaptive against --tol)
        #[arg(long)]
        max_n: Option<usize>,
    },
    /// Evaluate the distance bounds against their exact counterparts
    Bounds {
        /// Comma-separated evaluation times
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        /// Initial law: delta:<x>, geometric:<ratio>:<n_max>, or equilibrium
        #[arg(long, default_value = "delta:0")]
        tau: String,
        /// Highest moment order to include
        #[arg(long, default_value_t = 3)]
        moments: usize,
    },
    /// Estimate the rate ratio from a file of magnitudes (one integer per line)
    Estimate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Answer a prediction query given as a JSON file
    Predict {
        #[arg(long)]
        query: PathBuf,
    },
    /// Sweep the link function L and its derivatives
    Linkfun {
        #[arg(long, default_value_t = 0.0)]
        theta_min: f64,
        #[arg(long, default_value_t = 20.0)]
        theta_max: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Emit paired series/asymptotic values instead of derivatives
        #[arg(long)]
        asymptotic: bool,
        /// Order of the asymptotic ladder (with --asymptotic)
        #[arg(long, default_value_t = 5)]
        order: usize,
    },
    /// Run an end-to-end simulation/estimation study over many replicates
    Replicate {
        /// Number of replicate paths
        #[arg(long)]
        paths: usize,
        /// Length of each simulated time interval
        #[arg(long)]
        horizon: f64,
        /// Initial law: delta:<x>, geometric:<ratio>:<n_max>, or equilibrium
        #[arg(long, default_value = "equilibrium")]
        initial: String,
        /// Worker threads (default: available parallelism)
        #[arg(long)]
        threads: Option<usize>,
    },
}

enum CliError {
    Config(String),
    Io(std::io::Error),
    Lib(bmd::Error),
}

impl From<bmd::Error> for CliError {
    fn from(e: bmd::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Io(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                bmd::Error::PrecisionLoss { .. }
                | bmd::Error::NonConvergence { .. }
                | bmd::Error::Underflow { .. }
                | bmd::Error::Overflow { .. } => 2,
                _ => 1,
            }
        }
    }
}

struct Meta {
    command: &'static str,
    params: Option<ChainParams>,
    seed: u64,
    tol: f64,
    timestamp: Option<u64>,
    extra: Vec<(&'static str, String)>,
}

impl Meta {
    fn new(cli: &Cli, command: &'static str, params: Option<ChainParams>) -> Self {
        let timestamp = (!cli.no_timestamp).then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Meta { command, params, seed: cli.seed, tol: cli.tol, timestamp, extra: Vec::new() }
    }

    fn push(&mut self, key: &'static str, value: String) {
        self.extra.push((key, value));
    }

    fn csv_lines(&self) -> String {
        let mut s = format!("# bmd {}\n# command: {}\n", env!("CARGO_PKG_VERSION"), self.command);
        if let Some(p) = self.params {
            s += &format!("# params: lambda={} mu={} theta={}\n", p.lambda(), p.mu(), p.theta());
        }
        s += &format!("# seed: {}\n# tol: {}\n", self.seed, self.tol);
        for (k, v) in &self.extra {
            s += &format!("# {k}: {v}\n");
        }
        if let Some(ts) = self.timestamp {
            s += &format!("# timestamp: {ts}\n");
        }
        s
    }

    fn json_value(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        m.insert("command".into(), json!(self.command));
        if let Some(p) = self.params {
            m.insert("lambda".into(), json!(p.lambda()));
            m.insert("mu".into(), json!(p.mu()));
            m.insert("theta".into(), json!(p.theta()));
        }
        m.insert("seed".into(), json!(self.seed));
        m.insert("tol".into(), json!(self.tol));
        for (k, v) in &self.extra {
            m.insert((*k).into(), json!(v));
        }
        if let Some(ts) = self.timestamp {
            m.insert("timestamp".into(), json!(ts));
        }
        serde_json::Value::Object(m)
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if !(cli.tol > 0.0 && cli.tol <= 1e-6) {
        return Err(config(format!("--tol must lie in (0, 1e-6], got {}", cli.tol)));
    }
    let body = match &cli.command {
        Command::Simulate { horizon, initial, records, hide_states } => {
            cmd_simulate(cli, *horizon, initial, *records, *hide_states)?
        }
        Command::Transition { x, t, max_y } => cmd_transition(cli, *x, *t, *max_y)?,
        Command::Equilibrium { max_n } => cmd_equilibrium(cli, *max_n)?,
        Command::Bounds { times, tau, moments } => cmd_bounds(cli, times, tau, *moments)?,
        Command::Estimate { input } => cmd_estimate(cli, input)?,
        Command::Predict { query } => cmd_predict(cli, query)?,
        Command::Linkfun { theta_min, theta_max, step, asymptotic, order } => {
            cmd_linkfun(cli, *theta_min, *theta_max, *step, *asymptotic, *order)?
        }
        Command::Replicate { paths, horizon, initial, threads } => {
            cmd_replicate(cli, *paths, *horizon, initial, *threads)?
        }
    };
    if cli.out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(body.as_bytes())?;
        stdout.flush()?;
    } else {
        fs::write(&cli.out, body)?;
    }
    Ok(())
}

fn required_params(cli: &Cli) -> Result<ChainParams, CliError> {
    match (cli.lambda, cli.theta, cli.mu) {
        (Some(l), None, Some(m)) => Ok(ChainParams::new(l, m)?),
        (None, Some(th), Some(m)) => Ok(ChainParams::from_theta(th, m)?),
        (None, None, Some(_)) => Err(config("--mu requires --lambda or --theta")),
        (Some(_), None, None) | (None, Some(_), None) => {
            Err(config("--lambda/--theta require --mu"))
        }
        (None, None, None) => {
            Err(config("this command requires chain rates: --lambda and --mu, or --theta and --mu"))
        }
        (Some(_), Some(_), _) => unreachable!("clap rejects --lambda with --theta"),
    }
}

fn parse_initial(
    spec: &str,
    params: &ChainParams,
    tol: f64,
) -> Result<StateDistribution, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["delta", x] => {
            let x: usize = x
                .parse()
                .map_err(|_| config(format!("invalid state in initial law '{spec}'")))?;
            Ok(StateDistribution::delta(x))
        }
        ["geometric", ratio, n_max] => {
            let ratio: f64 = ratio
                .parse()
                .map_err(|_| config(format!("invalid ratio in initial law '{spec}'")))?;
            let n_max: usize = n_max
                .parse()
                .map_err(|_| config(format!("invalid cutoff in initial law '{spec}'")))?;
            Ok(StateDistribution::truncated_geometric(ratio, n_max)?)
        }
        ["equilibrium"] => Ok(StateDistribution::equilibrium_truncated(params, tol)?),
        _ => Err(config(format!(
            "unrecognized initial law '{spec}' (expected delta:<x>, geometric:<ratio>:<n_max>, or equilibrium)"
        ))),
    }
}

fn cmd_simulate(
    cli: &Cli,
    horizon: f64,
    initial: &str,
    records: bool,
    hide_states: bool,
) -> Result<String, CliError> {
    let p = required_params(cli)?;
    let init = parse_initial(initial, &p, cli.tol)?;
    let path = sim::sample_path(&p, &init, horizon, cli.seed)?;
    let mut meta = Meta::new(cli, "simulate", Some(p));
    meta.push("initial", initial.to_string());
    meta.push("horizon", format!("{horizon}"));

    if records {
        let record = sim::extract_negjumps(&path)
            .map(|r| if hide_states { r.hide_states() } else { r });
        return Ok(match cli.format {
            Format::Json => {
                let rec_value = match &record {
                    Some(r) => serde_json::to_value(r).expect("record serializes"),
                    None => json!({"times": [], "magnitudes": []}),
                };
                pretty(json!({"meta": meta.json_value(), "record": rec_value}))
            }
            Format::Csv => {
                let mut s = meta.csv_lines();
                match &record {
                    Some(r) if r.post_states().is_some() => {
                        s += "time,magnitude,post_state\n";
                        let posts = r.post_states().unwrap();
                        for ((&t, &d), &x) in r.times().iter().zip(r.magnitudes()).zip(posts) {
                            s += &format!("{t},{d},{x}\n");
                        }
                    }
                    Some(r) => {
                        s += "time,magnitude\n";
                        for (&t, &d) in r.times().iter().zip(r.magnitudes()) {
                            s += &format!("{t},{d}\n");
                        }
                    }
                    None => {
                        s += if hide_states { "time,magnitude\n" } else { "time,magnitude,post_state\n" };
                    }
                }
                s
            }
        });
    }

    Ok(match cli.format {
        Format::Json => pretty(json!({
            "meta": meta.json_value(),
            "path": serde_json::to_value(&path).expect("path serializes"),
        })),
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "time,state\n";
            s += &format!("0,{}\n", path.states[0]);
            for (&t, &x) in path.jump_times.iter().zip(&path.states[1..]) {
                s += &format!("{t},{x}\n");
            }
            s
        }
    })
}

fn cmd_transition(
    cli: &Cli,
    x: usize,
    t: f64,
    max_y: Option<usize>,
) -> Result<String, CliError> {
    let p = required_params(cli)?;
    let (mut row, mut remainder) = chain::transition_row(&p, x, t, max_y)?;
    if max_y.is_none() {
        // fold negligible trailing entries into the reported remainder
        while let Some(&last) = row.last() {
            if remainder + last <= cli.tol && row.len() > 1 {
                remainder += last;
                row.pop();
            } else {
                break;
            }
        }
    }
    let mut meta = Meta::new(cli, "transition", Some(p));
    meta.push("x", x.to_string());
    meta.push("t", format!("{t}"));
    meta.push("remainder", format!("{remainder}"));
    Ok(match cli.format {
        Format::Json => pretty(json!({
            "meta": meta.json_value(),
            "x": x,
            "t": t,
            "probabilities": row,
            "remainder": remainder,
        })),
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "y,probability\n";
            for (y, &v) in row.iter().enumerate() {
                s += &format!("{y},{v}\n");
            }
            s
        }
    })
}

fn cmd_equilibrium(cli: &Cli, max_n: Option<usize>) -> Result<String, CliError> {
    let p = required_params(cli)?;
    let eq = chain::equilibrium(&p);
    let n_top = match max_n {
        Some(n) => n,
        None => {
            let mut n = 0usize;
            while eq.tail(n + 1) > cli.tol {
                n += 1;
            }
            n
        }
    };
    let mean = chain::equilibrium_moment(&p, 1.0)?;
    let mut meta = Meta::new(cli, "equilibrium", Some(p));
    meta.push("mean", format!("{mean}"));
    Ok(match cli.format {
        Format::Json => {
            let pmf: Vec<f64> = (0..=n_top).map(|n| eq.pmf(n)).collect();
            let tail: Vec<f64> = (0..=n_top).map(|n| eq.tail(n)).collect();
            pretty(json!({
                "meta": meta.json_value(),
                "pmf": pmf,
                "tail": tail,
                "mean": mean,
            }))
        }
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "n,pmf,tail\n";
            for n in 0..=n_top {
                s += &format!("{n},{},{}\n", eq.pmf(n), eq.tail(n));
            }
            s
        }
    })
}

fn cmd_bounds(cli: &Cli, times: &[f64], tau: &str, moments: usize) -> Result<String, CliError> {
    let p = required_params(cli)?;
    if !(1..=4).contains(&moments) {
        return Err(config(format!("--moments must lie in 1..=4, got {moments}")));
    }
    let law = parse_initial(tau, &p, cli.tol)?;
    let mut rows: Vec<(String, f64, bounds::BoundReport)> = Vec::new();
    for &t in times {
        rows.push(("kolmogorov".into(), t, bounds::kolmogorov_bound(&p, &law, t)?));
        rows.push(("gini".into(), t, bounds::gini_bound(&p, &law, t)?));
        for m in 1..=moments {
            rows.push((format!("moment:{m}"), t, bounds::moment_bound(&p, &law, t, m)?));
        }
    }
    let mut meta = Meta::new(cli, "bounds", Some(p));
    meta.push("tau", tau.to_string());
    Ok(match cli.format {
        Format::Json => {
            let items: Vec<serde_json::Value> = rows
                .iter()
                .map(|(kind, t, r)| {
                    json!({
                        "kind": kind,
                        "t": t,
                        "exact": r.exact,
                        "bound": r.bound,
                        "ratio": ratio_or_null(r),
                    })
                })
                .collect();
            pretty(json!({"meta": meta.json_value(), "tau": tau, "reports": items}))
        }
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "kind,t,theta,mu,tau,exact,bound,ratio\n";
            for (kind, t, r) in &rows {
                let ratio = r.ratio();
                let ratio_cell =
                    if ratio.is_finite() { format!("{ratio}") } else { String::new() };
                s += &format!(
                    "{kind},{t},{},{},{tau},{},{},{ratio_cell}\n",
                    p.theta(),
                    p.mu(),
                    r.exact,
                    r.bound
                );
            }
            s
        }
    })
}

fn ratio_or_null(r: &bounds::BoundReport) -> serde_json::Value {
    let v = r.ratio();
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn cmd_estimate(cli: &Cli, input: &PathBuf) -> Result<String, CliError> {
    let text = fs::read_to_string(input)?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let d: usize = s.parse().map_err(|_| {
            config(format!(
                "{}:{}: expected an integer magnitude, found '{s}'",
                input.display(),
                idx + 1
            ))
        })?;
        values.push(d);
    }
    let sample = MagnitudeSample::new(values)?;
    let report = infer::estimate_theta(&sample)?;
    let meta = Meta::new(cli, "estimate", None);
    Ok(match cli.format {
        Format::Json => pretty(json!({
            "meta": meta.json_value(),
            "report": serde_json::to_value(&report).expect("report serializes"),
        })),
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "field,value\n";
            s += &format!("theta_hat,{}\n", report.theta_hat);
            s += &format!("n,{}\n", report.n);
            s += &format!("dbar,{}\n", report.dbar);
            s += &format!("se_asymptotic,{}\n", opt_cell(report.se_asymptotic));
            s += &format!("mu_hat,{}\n", opt_cell(report.mu_hat));
            s
        }
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryFile {
    lambda: f64,
    mu: f64,
    tau: TauSpec,
    record: RecordSpec,
    #[serde(default)]
    xi: usize,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum TauSpec {
    Delta { x: usize },
    Geometric { ratio: f64, n_max: usize },
    Equilibrium {},
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordSpec {
    times: Vec<f64>,
    magnitudes: Vec<usize>,
}

fn cmd_predict(cli: &Cli, query_path: &PathBuf) -> Result<String, CliError> {
    let text = fs::read_to_string(query_path)?;
    let qf: QueryFile = serde_json::from_str(&text)
        .map_err(|e| config(format!("{}: {e}", query_path.display())))?;
    let p = ChainParams::new(qf.lambda, qf.mu)?;
    let initial = match qf.tau {
        TauSpec::Delta { x } => StateDistribution::delta(x),
        TauSpec::Geometric { ratio, n_max } => {
            StateDistribution::truncated_geometric(ratio, n_max)?
        }
        TauSpec::Equilibrium {} => StateDistribution::equilibrium_truncated(&p, cli.tol)?,
    };
    let record = NegJumpRecord::from_observations(qf.record.times, qf.record.magnitudes)?;
    let query = PredictionQuery { params: p, initial, record, xi: qf.xi };

    let weights = predict::weights(&query)?;
    let tail = predict::tail_unseen(&query)?;
    let expected = predict::expected_unseen(&query)?;
    let w = weights.weights();
    let mode = w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(x, _)| x)
        .unwrap_or(0);
    let mean: f64 = w.iter().enumerate().map(|(x, &v)| x as f64 * v).sum();

    let mut meta = Meta::new(cli, "predict", Some(p));
    meta.push("query", query_path.display().to_string());
    let truncation = tail.truncation_error.max(expected.truncation_error);
    Ok(match cli.format {
        Format::Json => pretty(json!({
            "meta": meta.json_value(),
            "xi": qf.xi,
            "tail_probability": tail.value,
            "expected_unseen": expected.value,
            "truncation_error": truncation,
            "weights_summary": {
                "states": w.len(),
                "mode": mode,
                "mean": mean,
                "tail": weights.tail(),
            },
        })),
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "field,value\n";
            s += &format!("xi,{}\n", qf.xi);
            s += &format!("tail_probability,{}\n", tail.value);
            s += &format!("expected_unseen,{}\n", expected.value);
            s += &format!("truncation_error,{truncation}\n");
            s += &format!("weights_states,{}\n", w.len());
            s += &format!("weights_mode,{mode}\n");
            s += &format!("weights_mean,{mean}\n");
            s += &format!("weights_tail,{}\n", weights.tail());
            s
        }
    })
}

fn cmd_linkfun(
    cli: &Cli,
    theta_min: f64,
    theta_max: f64,
    step: f64,
    asymptotic: bool,
    order: usize,
) -> Result<String, CliError> {
    if !(theta_min >= 0.0 && theta_max > theta_min && step > 0.0) {
        return Err(config("require 0 <= --theta-min < --theta-max and --step > 0"));
    }
    if asymptotic && theta_min <= 0.0 {
        return Err(config("--asymptotic requires --theta-min > 0"));
    }
    let mut grid = Vec::new();
    let mut i = 0usize;
    loop {
        let theta = theta_min + i as f64 * step;
        if theta > theta_max + 1e-9 * step {
            break;
        }
        grid.push(theta);
        i += 1;
    }
    let mut meta = Meta::new(cli, "linkfun", None);
    meta.push("range", format!("{theta_min}..{theta_max} step {step}"));

    if asymptotic {
        meta.push("order", order.to_string());
        let mut rows = Vec::new();
        for &theta in &grid {
            let exact = specfun::eval_l_series(theta)?.value;
            let asym = specfun::eval_l_asym_partial(theta, order)?;
            rows.push((theta, exact, asym));
        }
        return Ok(match cli.format {
            Format::Json => {
                let items: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|(t, e, a)| json!({"theta": t, "series": e, "asymptotic": a}))
                    .collect();
                pretty(json!({"meta": meta.json_value(), "order": order, "rows": items}))
            }
            Format::Csv => {
                let mut s = meta.csv_lines();
                s += "theta,L_series,L_asymptotic\n";
                for (t, e, a) in rows {
                    s += &format!("{t},{e},{a}\n");
                }
                s
            }
        });
    }

    let mut rows = Vec::new();
    for &theta in &grid {
        let link = specfun::eval_l(theta)?;
        rows.push((theta, link.value, link.d1, link.d2));
    }
    Ok(match cli.format {
        Format::Json => {
            let items: Vec<serde_json::Value> = rows
                .iter()
                .map(|(t, l, d1, d2)| json!({"theta": t, "L": l, "dL": d1, "ddL": d2}))
                .collect();
            pretty(json!({"meta": meta.json_value(), "rows": items}))
        }
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "theta,L,dL,ddL\n";
            for (t, l, d1, d2) in rows {
                s += &format!("{t},{l},{d1},{d2}\n");
            }
            s
        }
    })
}

#[derive(serde::Serialize)]
struct ReplicateRow {
    replicate: u64,
    jumps: usize,
    dbar: Option<f64>,
    theta_hat: Option<f64>,
    se_asymptotic: Option<f64>,
    mu_hat: Option<f64>,
}

fn cmd_replicate(
    cli: &Cli,
    paths: usize,
    horizon: f64,
    initial: &str,
    threads: Option<usize>,
) -> Result<String, CliError> {
    let p = required_params(cli)?;
    if paths == 0 {
        return Err(config("--paths must be at least 1"));
    }
    if let Some(0) = threads {
        return Err(config("--threads must be at least 1"));
    }
    let init = parse_initial(initial, &p, cli.tol)?;
    let workers = threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
        .min(paths);
    let seed = cli.seed;

    let run_one = |k: usize| -> Result<ReplicateRow, bmd::Error> {
        let path = sim::sample_path_stream(&p, &init, horizon, seed, k as u64)?;
        match sim::extract_negjumps(&path) {
            Some(rec) => {
                let report = infer::estimate_from_record(&rec, Some(horizon))?;
                Ok(ReplicateRow {
                    replicate: k as u64,
                    jumps: rec.len(),
                    dbar: Some(report.dbar),
                    theta_hat: Some(report.theta_hat),
                    se_asymptotic: report.se_asymptotic,
                    mu_hat: report.mu_hat,
                })
            }
            None => Ok(ReplicateRow {
                replicate: k as u64,
                jumps: 0,
                dbar: None,
                theta_hat: None,
                se_asymptotic: None,
                mu_hat: None,
            }),
        }
    };

    // replicate k always consumes RNG stream k, so the output is identical
    // for every thread count
    let chunk = paths.div_ceil(workers);
    let rows: Vec<ReplicateRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(paths);
                let run_one = &run_one;
                scope.spawn(move || (lo..hi).map(run_one).collect::<Result<Vec<_>, _>>())
            })
            .collect();
        let mut all = Vec::with_capacity(paths);
        for h in handles {
            all.extend(h.join().expect("replicate worker panicked")?);
        }
        Ok::<_, bmd::Error>(all)
    })?;

    let mut meta = Meta::new(cli, "replicate", Some(p));
    meta.push("initial", initial.to_string());
    meta.push("horizon", format!("{horizon}"));
    meta.push("paths", paths.to_string());
    Ok(match cli.format {
        Format::Json => pretty(json!({
            "meta": meta.json_value(),
            "replicates": serde_json::to_value(&rows).expect("rows serialize"),
        })),
        Format::Csv => {
            let mut s = meta.csv_lines();
            s += "replicate,jumps,dbar,theta_hat,se_asymptotic,mu_hat\n";
            for r in &rows {
                s += &format!(
                    "{},{},{},{},{},{}\n",
                    r.replicate,
                    r.jumps,
                    opt_cell(r.dbar),
                    opt_cell(r.theta_hat),
                    opt_cell(r.se_asymptotic),
                    opt_cell(r.mu_hat)
                );
            }
            s
        }
    })
}

fn pretty(value: serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(&value).expect("serializable value");
    s.push('\n');
    s
}
