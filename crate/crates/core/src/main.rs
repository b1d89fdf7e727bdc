use clap::{Args, Parser, Subcommand};
use formation_sim::analysis::{convergence_report, monte_carlo};
use formation_sim::control::linearization_diagonal;
use formation_sim::framework::{
    are_equivalent, is_strongly_congruent, DirectedFormationGraph, Framework,
};
use formation_sim::geometry::Vec3;
use formation_sim::projections::{desired_lambda, lambda, NormalCache};
use formation_sim::scenario::{load_scenario, Scenario};
use formation_sim::sim::{run, run_2d, SimError, Termination, Trajectory};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_VERDICT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "formation-sim",
    about = "Formation shape control simulator for single-integrator agents",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Integration step override.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon override (seconds).
    #[arg(long)]
    tmax: Option<f64>,
    /// Convergence tolerance override.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes trajectory.csv and summary.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Monte Carlo sweep over the built-in initial-condition classes.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Runs per initial-condition class.
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional directory for the aggregate report (also printed).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare two framework files (same graph): equivalence, volume
    /// vectors, projection variables, strong-congruency verdict.
    Verify {
        framework_a: PathBuf,
        framework_b: PathBuf,
        /// Comparison tolerance.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Print the desired projection variables, the linearization diagonal,
    /// and the predicted slowest decay rate for a scenario.
    Predict {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// On-disk framework: the graph (as insertion bases) plus positions.
/// cmd_run's summary.json is a superset of this format.
#[derive(Serialize, Deserialize)]
struct FrameworkFile {
    insertions: Vec<[usize; 3]>,
    positions: Vec<[f64; 3]>,
}

impl FrameworkFile {
    fn load(path: &Path) -> Result<Framework, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let file: FrameworkFile =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let insertions: Vec<(usize, [usize; 3])> = file
            .insertions
            .iter()
            .enumerate()
            .map(|(idx, &b)| (idx + 4, b))
            .collect();
        let graph = DirectedFormationGraph::henneberg(&insertions)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let positions: Vec<Vec3> = file
            .positions
            .iter()
            .map(|&[x, y, z]| Vec3::new(x, y, z))
            .collect();
        Framework::new(graph, positions).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Serialize)]
struct RunSummary {
    termination: Termination,
    final_error_inf: f64,
    steps: usize,
    wall_time_s: f64,
    diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<formation_sim::analysis::ConvergenceReport>,
    insertions: Vec<[usize; 3]>,
    positions: Vec<[f64; 3]>,
}

fn usage_err(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn apply_overrides(sc: &mut Scenario, ov: &Overrides) {
    let cfg = sc.sim_config_mut();
    if let Some(dt) = ov.dt {
        cfg.dt = dt;
    }
    if let Some(tmax) = ov.tmax {
        cfg.t_max = tmax;
    }
    if let Some(tol) = ov.tol {
        cfg.convergence_tol = tol;
    }
}

fn positions_as_rows(p: &[Vec3]) -> Vec<[f64; 3]> {
    p.iter().map(|v| [v.x, v.y, v.z]).collect()
}

fn write_outputs(
    out: &Path,
    traj: &Trajectory,
    summary: &RunSummary,
) -> Result<(), std::io::Error> {
    std::fs::create_dir_all(out)?;
    let csv = std::fs::File::create(out.join("trajectory.csv"))?;
    traj.write_csv(std::io::BufWriter::new(csv))?;
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(summary).expect("summary serializes") + "\n",
    )
}

fn cmd_run(scenario_path: &Path, out: &Path, overrides: &Overrides) -> ExitCode {
    let mut sc = match load_scenario(scenario_path) {
        Ok(sc) => sc,
        Err(e) => return usage_err(e),
    };
    apply_overrides(&mut sc, overrides);
    let started = std::time::Instant::now();
    let (traj_result, insertions, report) = match &sc {
        Scenario::ThreeD {
            desired,
            gains,
            sim,
        } => {
            let insertions: Vec<[usize; 3]> = desired
                .graph
                .tetrahedra()
                .iter()
                .map(|&[i, j, k, _]| [i, j, k])
                .collect();
            match run(desired, gains, sim) {
                Ok(traj) => {
                    let report =
                        convergence_report(&traj, desired, gains, sim.convergence_tol, 1e-4).ok();
                    (Ok(traj), insertions, report)
                }
                Err(e) => (Err(e), insertions, None),
            }
        }
        Scenario::TwoD { plan, gains, sim } => (run_2d(plan, gains, sim), Vec::new(), None),
    };
    let wall = started.elapsed().as_secs_f64();

    match traj_result {
        Ok(traj) => {
            let summary = RunSummary {
                termination: traj.termination,
                final_error_inf: traj.final_err_inf(),
                steps: traj.steps,
                wall_time_s: wall,
                diagnostics: traj.diagnostics.clone(),
                report,
                insertions,
                positions: positions_as_rows(traj.final_positions()),
            };
            if let Err(e) = write_outputs(out, &traj, &summary) {
                return usage_err(e);
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            if traj.termination == Termination::Converged {
                ExitCode::from(EXIT_OK)
            } else {
                ExitCode::from(EXIT_VERDICT)
            }
        }
        Err(SimError::Diverged { t, trajectory }) => {
            eprintln!("diverged at t = {t:.6}");
            let summary = RunSummary {
                termination: Termination::Diverged,
                final_error_inf: trajectory.final_err_inf(),
                steps: trajectory.steps,
                wall_time_s: wall,
                diagnostics: trajectory.diagnostics.clone(),
                report: None,
                insertions: Vec::new(),
                positions: positions_as_rows(trajectory.final_positions()),
            };
            let _ = write_outputs(out, &trajectory, &summary);
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(e) => usage_err(e),
    }
}

fn cmd_sweep(
    scenario_path: &Path,
    runs: usize,
    seed: u64,
    out: Option<&Path>,
    overrides: &Overrides,
) -> ExitCode {
    if runs == 0 {
        return usage_err("--runs must be at least 1");
    }
    let mut sc = match load_scenario(scenario_path) {
        Ok(sc) => sc,
        Err(e) => return usage_err(e),
    };
    apply_overrides(&mut sc, overrides);
    let (desired, gains, sim) = match &sc {
        Scenario::ThreeD {
            desired,
            gains,
            sim,
        } => (desired, gains, sim),
        Scenario::TwoD { .. } => return usage_err("sweep requires a 3D scenario"),
    };
    let report = match monte_carlo(desired, gains, sim, runs, seed, 1e-4) {
        Ok(r) => r,
        Err(e) => return usage_err(e),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    if let Some(dir) = out {
        if let Err(e) = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(dir.join("sweep.json"), text + "\n"))
        {
            return usage_err(e);
        }
    }
    if report.all_converged_congruent() {
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_VERDICT)
    }
}

fn cmd_verify(path_a: &Path, path_b: &Path, tol: f64) -> ExitCode {
    let fa = match FrameworkFile::load(path_a) {
        Ok(f) => f,
        Err(e) => return usage_err(e),
    };
    let fb = match FrameworkFile::load(path_b) {
        Ok(f) => f,
        Err(e) => return usage_err(e),
    };
    if fa.graph != fb.graph {
        return usage_err("frameworks are built on different graphs");
    }
    let eps = 1e-3;
    let n2_plus = Vec3::new(1.0, 0.0, 0.0);
    let lam = |f: &Framework| {
        let cache = NormalCache::from_initial(&f.positions, eps, n2_plus);
        lambda(f, &cache)
    };
    let (equivalent, congruent) = match (
        are_equivalent(&fa, &fb, tol),
        is_strongly_congruent(&fa, &fb, tol),
    ) {
        (Ok(e), Ok(c)) => (e, c),
        (Err(e), _) | (_, Err(e)) => return usage_err(e),
    };
    let report = serde_json::json!({
        "equivalent": equivalent,
        "volume_vector_a": fa.volume_vector(),
        "volume_vector_b": fb.volume_vector(),
        "lambda_a": lam(&fa).map(|v| v.as_slice().to_vec()).ok(),
        "lambda_b": lam(&fb).map(|v| v.as_slice().to_vec()).ok(),
        "strongly_congruent": congruent,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if congruent {
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_VERDICT)
    }
}

fn cmd_predict(scenario_path: &Path) -> ExitCode {
    let sc = match load_scenario(scenario_path) {
        Ok(sc) => sc,
        Err(e) => return usage_err(e),
    };
    let (desired, gains) = match &sc {
        Scenario::ThreeD { desired, gains, .. } => (desired, gains),
        Scenario::TwoD { .. } => return usage_err("predict requires a 3D scenario"),
    };
    let lambda_star = match desired_lambda(desired) {
        Ok(l) => l,
        Err(e) => return usage_err(e),
    };
    let diag = match linearization_diagonal(desired, gains) {
        Ok(d) => d,
        Err(e) => return usage_err(e),
    };
    let min_rate = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let report = serde_json::json!({
        "lambda_star": lambda_star.as_slice(),
        "linearization_diagonal": diag,
        "predicted_min_rate": min_rate,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    ExitCode::from(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            overrides,
        } => cmd_run(&scenario, &out, &overrides),
        Command::Sweep {
            scenario,
            runs,
            seed,
            out,
            overrides,
        } => cmd_sweep(&scenario, runs, seed, out.as_deref(), &overrides),
        Command::Verify {
            framework_a,
            framework_b,
            tol,
        } => cmd_verify(&framework_a, &framework_b, tol),
        Command::Predict { scenario } => cmd_predict(&scenario),
    }
}
