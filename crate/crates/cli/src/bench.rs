use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use povm_forge::compiler::compile;
use povm_forge::povm::{gram_det, sic_povm_d4, sic_states_d4, usd_state_sets};
use povm_forge::sdp::SolveOptions;
use povm_forge::simulator::probability_table;
use povm_forge::tasks::certification::{max_psuc_n_outcomes, min_entropy, sic_witness, witness_from_probabilities};
use povm_forge::tasks::eat::{eat_rate, EatParams};
use povm_forge::tasks::entropy::shannon_bound;
use povm_forge::tasks::estimation::{
    estimation_fidelity, massar_popescu, sphere_average, sphere_minimum, two_copy_optimal,
};
use povm_forge::tasks::usd::{mesd_min_error, usd_optimize};
use povm_forge::tasks::TaskRecord;
use povm_forge::{io, Result};

/// Largest witness reachable with N outcomes, N = 1..16.
pub const NOUTCOME_TABLE: [f64; 16] = [
    0.0625, 0.1184, 0.1708, 0.2210, 0.2263, 0.2323, 0.2367, 0.2392, 0.2418, 0.2431, 0.2445,
    0.2458, 0.2471, 0.2481, 0.2491, 0.2500,
];

pub const OBSERVED_WITNESS: f64 = 0.24730;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Usd,
    Mesd,
    Gram,
    Estimate,
    Witness,
    Noutcome,
    Hmin,
    Shannon,
    Eat,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(value_enum)]
    suite: Suite,
    /// Only the cheap rows (noutcome: N in 1..=4 and 15, 16).
    #[arg(long)]
    fast: bool,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Witness value for hmin and shannon.
    #[arg(long, default_value_t = OBSERVED_WITNESS)]
    witness: f64,
    /// Quadrature nodes for shannon.
    #[arg(long, default_value_t = 8)]
    nodes: usize,
}

struct Row {
    label: String,
    value: f64,
    reference: Option<f64>,
    inputs: Value,
    details: Value,
}

impl Row {
    fn new(label: impl Into<String>, value: f64, reference: Option<f64>) -> Self {
        Self {
            label: label.into(),
            value,
            reference,
            inputs: Value::Null,
            details: Value::Null,
        }
    }

    fn inputs(mut self, v: Value) -> Self {
        self.inputs = v;
        self
    }

    fn details(mut self, v: Value) -> Self {
        self.details = v;
        self
    }
}

fn usd_rows() -> Result<Vec<Row>> {
    let refs = [0.7259, 0.5974, 0.5575];
    usd_state_sets()
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(k, (s, r))| {
            let u = usd_optimize(s)?;
            Ok(Row::new(format!("set{} p_incn", k + 1), u.p_incn, Some(r))
                .inputs(json!({ "set": k + 1 }))
                .details(json!({ "coefficients": u.coefficients })))
        })
        .collect()
}

fn mesd_rows() -> Result<Vec<Row>> {
    let refs = [0.1364, 0.0921, 0.0953];
    usd_state_sets()
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(k, (s, r))| {
            let m = mesd_min_error(s)?;
            Ok(Row::new(format!("set{} p_err", k + 1), m.p_err, Some(r)).inputs(json!({ "set": k + 1 })))
        })
        .collect()
}

fn gram_rows() -> Result<Vec<Row>> {
    let refs = [0.3011, 0.4446, 0.4275];
    usd_state_sets()
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(k, (s, r))| {
            Ok(Row::new(format!("set{} det G", k + 1), gram_det(s)?, Some(r)).inputs(json!({ "set": k + 1 })))
        })
        .collect()
}

fn estimate_rows() -> Result<Vec<Row>> {
    let opt = two_copy_optimal();
    let proj = massar_popescu();
    let opt_mean = sphere_average(|n| estimation_fidelity(&opt, n), 12)?;
    let (opt_min, _) = sphere_minimum(|n| estimation_fidelity(&opt, n), 24)?;
    let mean = sphere_average(|n| estimation_fidelity(&proj, n), 12)?;
    let (min, at) = sphere_minimum(|n| estimation_fidelity(&proj, n), 24)?;
    Ok(vec![
        Row::new("covariant mean F", opt_mean, Some(0.75)),
        Row::new("covariant min F", opt_min, Some(0.75)),
        Row::new("projective mean F", mean, Some(0.75)),
        Row::new("projective min F", min, Some(2.0 / 3.0)).details(json!({ "argmin": at })),
    ])
}

fn witness_rows() -> Result<Vec<Row>> {
    let ideal = sic_witness(&sic_povm_d4())?;
    let (prog, _) = compile(&sic_povm_d4())?;
    let table = probability_table(&prog, &sic_states_d4(), None)?;
    let simulated = witness_from_probabilities(&table.rows)?;
    Ok(vec![
        Row::new("ideal SIC", ideal, Some(0.25)),
        Row::new("compiled SIC", simulated, Some(0.25)),
        Row::new("uniform noise", 1.0 / 16.0, Some(0.0625)),
    ])
}

fn noutcome_rows(fast: bool, opts: &SolveOptions) -> Result<Vec<Row>> {
    let ns: Vec<usize> = if fast {
        vec![1, 2, 3, 4, 15, 16]
    } else {
        (1..=16).collect()
    };
    ns.into_iter()
        .map(|n| {
            let v = max_psuc_n_outcomes(n, opts)?;
            Ok(Row::new(format!("N = {n}"), v, Some(NOUTCOME_TABLE[n - 1])).inputs(json!({ "n": n })))
        })
        .collect()
}

fn hmin_rows(w: f64, opts: &SolveOptions) -> Result<Vec<Row>> {
    let r = min_entropy(w, opts)?;
    let reference = ((w - OBSERVED_WITNESS).abs() < 1e-12).then_some(2.740);
    Ok(vec![Row::new(format!("H_min(W = {w})"), r.h_min, reference)
        .inputs(json!({ "witness": w }))
        .details(json!({ "p_guess": r.p_guess }))])
}

fn shannon_rows(w: f64, m: usize, opts: &SolveOptions) -> Result<Vec<Row>> {
    let v = shannon_bound(w, m, 1, opts)?;
    let reference = ((w - OBSERVED_WITNESS).abs() < 1e-12 && m == 8).then_some(2.951);
    Ok(vec![Row::new(format!("H(W = {w}, m = {m}, 2k = 2)"), v, reference)
        .inputs(json!({ "witness": w, "m": m, "k": 1 }))])
}

fn eat_rows() -> Result<Vec<Row>> {
    let p = EatParams::sic_experiment();
    let r = eat_rate(&p)?;
    let details = json!({
        "alpha": r.alpha,
        "g": r.g,
        "v": r.v,
        "k_prime": r.k_prime,
        "var_f": r.var_f,
    });
    let inputs = json!({
        "c_m": p.c_m, "r_tilde": p.r_tilde, "s_tilde": p.s_tilde, "w_obs": p.w_obs,
        "var_w": p.var_w, "rounds": p.rounds, "epsilon": p.epsilon, "d_a": p.d_a,
        "prob_omega": p.prob_omega,
    });
    Ok(vec![
        Row::new("f_min(W_obs)", r.f_min, Some(3.0227)).inputs(inputs.clone()),
        Row::new("correction", r.correction, Some(0.0441)).inputs(inputs.clone()),
        Row::new("rate", r.rate, Some(2.9786)).inputs(inputs).details(details),
    ])
}

fn csv_text(rows: &[Row]) -> String {
    let mut out = String::from("label,value,reference,abs_diff\n");
    for r in rows {
        let (reference, diff) = match r.reference {
            Some(x) => (format!("{x}"), format!("{:e}", (r.value - x).abs())),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{},{},{},{}", r.label, r.value, reference, diff);
    }
    out
}

fn table_text(rows: &[Row]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  {:>10}  {:>10}  {:>9}\n", "case", "value", "reference", "|diff|");
    for r in rows {
        let (reference, diff) = match r.reference {
            Some(x) => (format!("{x:.4}"), format!("{:.2e}", (r.value - x).abs())),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(out, "{:<width$}  {:>10.5}  {:>10}  {:>9}", r.label, r.value, reference, diff);
    }
    out
}

pub fn run(args: &BenchArgs, tol: Option<f64>, json_out: bool) -> Result<ExitCode> {
    let mut opts = SolveOptions::default();
    if let Some(t) = tol {
        opts.gap_abs_tol = t;
    }
    let rows = match args.suite {
        Suite::Usd => usd_rows()?,
        Suite::Mesd => mesd_rows()?,
        Suite::Gram => gram_rows()?,
        Suite::Estimate => estimate_rows()?,
        Suite::Witness => witness_rows()?,
        Suite::Noutcome => noutcome_rows(args.fast, &opts)?,
        Suite::Hmin => hmin_rows(args.witness, &opts)?,
        Suite::Shannon => shannon_rows(args.witness, args.nodes, &opts)?,
        Suite::Eat => eat_rows()?,
    };
    if let Some(path) = &args.csv {
        io::write_text(path, &csv_text(&rows))?;
    }
    if json_out {
        let records: Vec<TaskRecord> = rows
            .into_iter()
            .map(|r| TaskRecord {
                inputs: r.inputs,
                value: r.value,
                details: json!({
                    "case": r.label,
                    "reference": r.reference,
                    "extra": r.details,
                }),
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&records).expect("serializable"));
    } else {
        print!("{}", table_text(&rows));
    }
    Ok(ExitCode::SUCCESS)
}
