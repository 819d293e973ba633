use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use povm_forge::compiler::{check_structure, compile};
use povm_forge::io;
use povm_forge::linalg::random_ket;
use povm_forge::povm::{mub_probe_states_d4, validate_povm, StateSet};
use povm_forge::rng::seeded;
use povm_forge::simulator::{
    calibrate_multi, dithered, probability_table, sample_counts, CalibrationOptions, PhaseError,
};
use povm_forge::tomography::{measurement_fidelity, mle_reconstruct, MleOptions};
use povm_forge::{Error, Result};

mod bench;

const DEFAULT_VERIFY_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "povm-forge", version, about = "Compile, simulate and certify rank-1 POVMs on interferometer meshes")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Pass threshold for `verify`; SDP gap tolerance for `bench`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, env = "POVM_FORGE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Probes {
    Random,
    Mub,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile a rank-1 POVM into a program.
    Compile {
        povm: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare simulated statistics of a program with the Born rule.
    Verify {
        program: PathBuf,
        povm: PathBuf,
        #[arg(long, value_enum, default_value = "random")]
        probes: Probes,
        /// Number of random probes.
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Print outcome probabilities for a set of probe states.
    Simulate {
        program: PathBuf,
        #[arg(long, value_enum, default_value = "mub")]
        probes: Probes,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Probe states as a state-set file, overriding `--probes`.
        #[arg(long)]
        states: Option<PathBuf>,
        /// Phase deviations to apply.
        #[arg(long)]
        phase_error: Option<PathBuf>,
    },
    /// Draw shot counts for a set of probe states.
    Sample {
        program: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        shots: u64,
        #[arg(long, value_enum, default_value = "mub")]
        probes: Probes,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        phase_error: Option<PathBuf>,
        /// Add this offset to every beta before sampling.
        #[arg(long)]
        dither: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the measurement from counts on MUB probes.
    Tomo {
        counts: PathBuf,
        #[arg(long)]
        states: Option<PathBuf>,
        /// Score the reconstruction against this POVM.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Estimate phase deviations from observed frequencies.
    Calibrate {
        program: PathBuf,
        counts: PathBuf,
        /// Counts taken with every beta offset by `--dither`.
        #[arg(long, requires = "dither")]
        dithered_counts: Option<PathBuf>,
        #[arg(long)]
        dither: Option<f64>,
        #[arg(long, value_enum, default_value = "mub")]
        probes: Probes,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Reproduce a table of reference values.
    Bench(bench::BenchArgs),
}

fn probe_states(kind: Probes, trials: usize, dim: usize, seed: u64, file: Option<&Path>) -> Result<StateSet> {
    if let Some(path) = file {
        let s = io::state_set_from_json(&io::read_text(path)?)?;
        if s.dim != dim {
            return Err(Error::InvalidInput(format!(
                "states have dimension {}, program has {dim}",
                s.dim
            )));
        }
        return Ok(s);
    }
    if trials == 0 {
        return Err(Error::InvalidInput("--trials must be at least 1".into()));
    }
    match kind {
        Probes::Mub => {
            if dim != 4 {
                return Err(Error::InvalidInput(format!(
                    "MUB probes exist for dimension 4 only, got {dim}"
                )));
            }
            Ok(mub_probe_states_d4())
        }
        Probes::Random => {
            let mut rng = seeded(seed);
            let states = (0..trials).map(|_| random_ket(dim, &mut rng)).collect();
            Ok(StateSet { dim, states })
        }
    }
}

fn read_phase_error(path: Option<&Path>) -> Result<Option<PhaseError>> {
    path.map(|p| io::phase_error_from_json(&io::read_text(p)?))
        .transpose()
}

fn emit(json: bool, value: serde_json::Value, text: String) {
    if json {
        println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
    } else {
        print!("{text}");
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Compile { povm, out } => {
            let p = io::povm_from_json(&io::read_text(povm)?)?;
            let report = validate_povm(&p)?;
            if !report.pass {
                return Err(Error::InvalidInput(format!("not a valid POVM: {report:?}")));
            }
            let (prog, trace) = compile(&p)?;
            io::write_text(out, &io::program_to_json(&prog))?;
            let structure = check_structure(&prog, &trace);
            let dims: Vec<usize> = trace.modules.iter().map(|m| m.l).collect();
            let mut text = format!(
                "compiled {} outcomes in dimension {} into {} modules\n",
                prog.n_outcomes,
                prog.dim,
                prog.modules.len()
            );
            text += &format!("effective dimensions: {dims:?}\n");
            text += &format!("structure checks: {}\n", if structure.ok() { "ok" } else { "FAILED" });
            emit(
                cli.json,
                json!({
                    "dim": prog.dim,
                    "n_outcomes": prog.n_outcomes,
                    "modules": prog.modules.len(),
                    "effective_dims": dims,
                    "structure_ok": structure.ok(),
                }),
                text,
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            program,
            povm,
            probes,
            trials,
        } => {
            let prog = io::program_from_json(&io::read_text(program)?)?;
            let p = io::povm_from_json(&io::read_text(povm)?)?;
            if p.dim != prog.dim || p.n_outcomes() != prog.n_outcomes {
                return Err(Error::InvalidInput(format!(
                    "program is {} outcomes in dimension {}, POVM is {} in dimension {}",
                    prog.n_outcomes,
                    prog.dim,
                    p.n_outcomes(),
                    p.dim
                )));
            }
            let states = probe_states(*probes, *trials, prog.dim, cli.seed, None)?;
            let sim = probability_table(&prog, &states, None)?;
            let mut worst = (0.0f64, 0, 0);
            for (j, phi) in states.states.iter().enumerate() {
                for (i, born) in p.probabilities(phi).into_iter().enumerate() {
                    let dev = (sim.rows[i][j] - born).abs();
                    if dev > worst.0 {
                        worst = (dev, i + 1, j + 1);
                    }
                }
            }
            let tol = cli.tol.unwrap_or(DEFAULT_VERIFY_TOL);
            let pass = worst.0 < tol;
            let text = format!(
                "max |p_sim - p_born| = {:.3e} (outcome {}, probe {}) over {} probes: {}\n",
                worst.0,
                worst.1,
                worst.2,
                states.len(),
                if pass { "PASS" } else { "FAIL" }
            );
            emit(
                cli.json,
                json!({
                    "max_deviation": worst.0,
                    "outcome": worst.1,
                    "probe": worst.2,
                    "probes": states.len(),
                    "tol": tol,
                    "pass": pass,
                }),
                text,
            );
            Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Simulate {
            program,
            probes,
            trials,
            states,
            phase_error,
        } => {
            let prog = io::program_from_json(&io::read_text(program)?)?;
            let s = probe_states(*probes, *trials, prog.dim, cli.seed, states.as_deref())?;
            let err = read_phase_error(phase_error.as_deref())?;
            let t = probability_table(&prog, &s, err.as_ref())?;
            let mut text = String::new();
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(|p| format!("{p:.6}")).collect();
                text += &cells.join(" ");
                text.push('\n');
            }
            emit(cli.json, serde_json::from_str(&io::count_table_to_json(&t))?, text);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample {
            program,
            shots,
            probes,
            trials,
            states,
            phase_error,
            dither,
            out,
        } => {
            let mut prog = io::program_from_json(&io::read_text(program)?)?;
            if let Some(offset) = dither {
                prog = dithered(&prog, *offset);
            }
            let s = probe_states(*probes, *trials, prog.dim, cli.seed, states.as_deref())?;
            let err = read_phase_error(phase_error.as_deref())?;
            let t = sample_counts(&prog, &s, *shots, cli.seed, err.as_ref())?;
            let text = io::count_table_to_json(&t);
            match out {
                Some(path) => io::write_text(path, &text)?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tomo {
            counts,
            states,
            reference,
            out,
        } => {
            let t = io::count_table_from_json(&io::read_text(counts)?)?;
            let s = match states {
                Some(path) => io::state_set_from_json(&io::read_text(path)?)?,
                None => mub_probe_states_d4(),
            };
            let r = mle_reconstruct(&s, &t, &MleOptions::default())?;
            let fidelity = match reference {
                Some(path) => {
                    let p = io::povm_from_json(&io::read_text(path)?)?;
                    Some(measurement_fidelity(&p.to_operator_povm(), &r.povm)?)
                }
                None => None,
            };
            if let Some(path) = out {
                io::write_text(path, &io::operator_povm_to_json(&r.povm))?;
            }
            let mut text = format!(
                "log-likelihood {:.6} after {} iterations (converged: {})\n",
                r.log_likelihood, r.iterations, r.converged
            );
            if let Some(f) = fidelity {
                text += &format!("measurement fidelity {f:.6}\n");
            }
            emit(
                cli.json,
                json!({
                    "log_likelihood": r.log_likelihood,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "fidelity": fidelity,
                }),
                text,
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            program,
            counts,
            dithered_counts,
            dither,
            probes,
            trials,
            states,
            out,
        } => {
            let prog = io::program_from_json(&io::read_text(program)?)?;
            let s = probe_states(*probes, *trials, prog.dim, cli.seed, states.as_deref())?;
            let t = io::count_table_from_json(&io::read_text(counts)?)?.frequencies()?;
            let mut points = vec![(prog.clone(), t)];
            if let (Some(path), Some(offset)) = (dithered_counts, dither) {
                let td = io::count_table_from_json(&io::read_text(path)?)?.frequencies()?;
                points.push((dithered(&prog, *offset), td));
            }
            let r = calibrate_multi(&points, &s, &CalibrationOptions::default())?;
            let text = io::phase_error_to_json(&r.estimate);
            if let Some(path) = out {
                io::write_text(path, &text)?;
            }
            let summary = format!(
                "residual {:.3e} -> {:.3e} in {} iterations (converged: {}), max |dphi| = {:.4}\n",
                r.initial_residual,
                r.residual,
                r.iterations,
                r.converged,
                r.estimate.max_abs()
            );
            emit(
                cli.json,
                json!({
                    "initial_residual": r.initial_residual,
                    "residual": r.residual,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "estimate": serde_json::from_str::<serde_json::Value>(&text)?,
                }),
                if out.is_some() { summary } else { format!("{summary}{text}\n") },
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench(args) => bench::run(args, cli.tol, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
