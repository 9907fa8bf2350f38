use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sacasscf::ansatz::{adapt_build, uccsd_qubit_pool};
use sacasscf::casscf::{active_hamiltonian_at, CircuitChoice, MacroConfig};
use sacasscf::chem_io::read_fcidump;
use sacasscf::measure::MitigationPolicy;
use sacasscf::scan::{group_report, run_point, run_scan, trace_json, write_outputs, Manifest, NoiseKind, Overrides, PointEntry};
use sacasscf::vqe::{qubit_hamiltonian, sector_ground_energy};

#[derive(Parser)]
#[command(name = "sacasscf", version, about = "State-averaged CASSCF with simulated VQE solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the macro loop at every manifest point and write CSV and JSON traces.
    Scan(Common),
    /// Print measured-string and group counts per state.
    Groups {
        #[command(flatten)]
        common: Common,
        /// Point to analyse (first point by default).
        #[arg(long)]
        point: Option<String>,
    },
    /// Grow a qubit-ADAPT circuit for one state at one point.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: String,
        #[arg(long)]
        state: String,
    },
    /// Optimize one state at one point with fixed orbitals.
    Vqe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        point: String,
        #[arg(long)]
        state: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (all cores by default).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    noise: Option<Noise>,
    #[arg(long, value_enum)]
    mitigation: Option<Mitigation>,
    #[arg(long)]
    shots: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Off,
    Depol,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mitigation {
    None,
    Em1,
    Em2,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            noise: self.noise.map(|n| match n {
                Noise::Off => NoiseKind::Off,
                Noise::Depol => NoiseKind::Depol,
            }),
            mitigation: self.mitigation.map(|m| match m {
                Mitigation::None => MitigationPolicy::None,
                Mitigation::Em1 => MitigationPolicy::Em1,
                Mitigation::Em2 => MitigationPolicy::Em2,
            }),
            shots: self.shots,
            orbital_optimization: None,
        }
    }
}

type CliResult = Result<ExitCode, String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn setup(common: &Common) -> Result<Manifest, String> {
    if let Some(w) = common.workers {
        if w == 0 {
            return Err("--workers must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| e.to_string())?;
    }
    Manifest::load(&common.manifest).map_err(|e| e.to_string())
}

fn find_point<'a>(m: &'a Manifest, label: &str) -> Result<&'a PointEntry, String> {
    m.points.iter().find(|p| p.label == label).ok_or_else(|| format!("no point labelled {label}"))
}

fn only_state(m: &Manifest, label: &str) -> Result<Manifest, String> {
    let s = m.states.iter().find(|s| s.label == label).ok_or_else(|| format!("no state labelled {label}"))?;
    let mut one = m.clone();
    one.states = vec![sacasscf::scan::StateEntry { weight: 1.0, ..s.clone() }];
    one.macro_cfg = MacroConfig { orbital_optimization: false, ..m.macro_cfg };
    Ok(one)
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Scan(common) => {
            let m = setup(&common)?;
            let results = run_scan(&m, &common.overrides());
            write_outputs(&common.out, &m, &results).map_err(|e| e.to_string())?;
            let mut all = true;
            for (label, r) in &results {
                match r {
                    Ok(p) if p.converged => {}
                    Ok(_) => {
                        all = false;
                        eprintln!("{label}: not converged");
                    }
                    Err(e) => {
                        all = false;
                        eprintln!("{label}: {e}");
                    }
                }
            }
            println!("{} point(s) written to {}", results.len(), common.out.display());
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Groups { common, point } => {
            let m = setup(&common)?;
            let p = match point {
                Some(l) => find_point(&m, &l)?,
                None => m.points.first().ok_or("manifest lists no points")?,
            };
            let report = group_report(&m, p, &common.overrides()).map_err(|e| e.to_string())?;
            for r in &report {
                println!("{} terms={} groups={}", r.state, r.n_strings, r.groups.len());
                for (i, g) in r.groups.iter().enumerate() {
                    println!("  {i}: {}", g.join(" "));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Adapt { common, point, state } => {
            let m = setup(&common)?;
            let p = find_point(&m, &point)?;
            let one = only_state(&m, &state)?;
            let ints = read_fcidump(&one.resolve(&p.fcidump)).map_err(|e| e.to_string())?;
            let problem = one.problem(&ints, &common.overrides()).map_err(|e| e.to_string())?;
            let t = &problem.states[0];
            let CircuitChoice::Adapt(opts) = &t.circuit else {
                return Err(format!("state {state} does not use an adaptive circuit"));
            };
            let c = sacasscf::nalgebra::DMatrix::identity(ints.n_orb, ints.n_orb);
            let ah = active_hamiltonian_at(&ints, &c, &problem.cas).map_err(|e| e.to_string())?;
            let ham = qubit_hamiltonian(&ah, &problem.spec).map_err(|e| e.to_string())?;
            let exact = sector_ground_energy(&ham, &t.projector).map_err(|e| e.to_string())?;
            let syms: Vec<_> = t.projector.constraints.iter().map(|(z, _)| *z).collect();
            let pool = uccsd_qubit_pool(problem.cas.n_active_elec, problem.spec.n_qubits_tapered(), &problem.spec)
                .map_err(|e| e.to_string())?
                .restrict_commuting(&syms);
            let out = adapt_build(&ham.ops, &pool, t.reference, opts, &state).map_err(|e| e.to_string())?;
            let mut table = String::from("n_ops,operator,energy,error\n");
            table.push_str(&format!("0,,{},{}\n", out.reference_energy + ham.e_const, out.reference_energy + ham.e_const - exact));
            for (i, s) in out.steps.iter().enumerate() {
                let e = s.energy + ham.e_const;
                table.push_str(&format!("{},{},{},{}\n", i + 1, s.operator, e, e - exact));
            }
            let stem = format!("{}_{}_{}", m.name, point, state);
            write(&common.out.join(format!("{stem}.circuit")), &out.circuit.to_text())?;
            write(&common.out.join(format!("{stem}.csv")), &table)?;
            print!("{table}");
            println!("stop: {}", out.stop_reason);
            Ok(if out.stop_reason == "max_ops" { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Vqe { common, point, state } => {
            let m = setup(&common)?;
            let p = find_point(&m, &point)?;
            let one = only_state(&m, &state)?;
            let r = run_point(&one, p, &common.overrides());
            let text = trace_json(&point, &r);
            write(&common.out.join(format!("{}_{}_{}.json", m.name, point, state)), &text)?;
            match r {
                Ok(res) => {
                    println!("{state} at {point}: E = {}", res.energies[0]);
                    Ok(if res.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
                }
                Err(e) => Err(e.to_string()),
            }
        }
    }
}
