use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use gapforge::costs::{classical_cost, relaxed_cost, LagrangianKind, TerminalCost};
use gapforge::domain::{classify, InstanceParams, RegionTag, StateConstraint};
use gapforge::geometry::{eta, phi, phi_inv};
use gapforge::io::{self, PlotData, PlotKind};
use gapforge::optimize::{
    assemble_reference_measure, fw_separation_experiment, gap_lower_bound_eps, lp::measure_report, occupation_lp, run_gap,
    FwConfig, GapConfig, GapReport, LpSolver, OccupationGrid,
};
use gapforge::relaxation::TargetMode;
use gapforge::topology::{ballbox_study, winding_bound_check};
use gapforge::trajectories::{admissible, integrate_horizontal, reference_classical, reference_minimizer, steps_for, Curve, REFERENCE_STEP};
use gapforge::{build_instance, GapError, Instance};

#[derive(Parser, Debug)]
#[command(name = "gapforge", version, about = "Relaxation-gap experiments on the spiral counterexample")]
struct Cli {
    /// Output directory (falls back to $GAPFORGE_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Instance override, repeatable: d, a, b, lambda, delta, eps_moll.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Vee,
    Veevee,
    Flat,
    Mollified,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Ipm,
    Pdhg,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Validate parameters and write instance.json.
    BuildInstance {
        #[arg(long, default_value_t = 0.1)]
        a: f64,
        #[arg(long, default_value_t = 40.0 * std::f64::consts::PI)]
        b: f64,
        #[arg(long, default_value_t = 1.2)]
        lambda: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 2.5e-3)]
        eps_moll: f64,
    },
    /// Structural checks on an instance and its reference minimizer.
    CheckInvariants { instance: PathBuf },
    /// Relaxed cost of the reference minimizer and classical cost of its Dirac collapse.
    EvalCost {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Veevee)]
        kind: Kind,
        /// Add the terminal penalty with this weight.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 2e-3)]
        terminal_eps: f64,
    },
    /// Winding of the ring lift over the crossing interval.
    Winding {
        instance: PathBuf,
        /// `ref`, `classical` or a curve CSV.
        #[arg(long, default_value = "ref")]
        curve: String,
    },
    /// Ball-box displacement study at eta(0).
    Ballbox {
        instance: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Multistart classical search against the relaxed reference.
    DemoGap {
        instance: PathBuf,
        #[arg(long, default_value_t = 50)]
        starts: usize,
        #[arg(long = "N", default_value_t = 200)]
        n: usize,
        /// Drop the state constraint.
        #[arg(long)]
        free: bool,
        /// Penalized variant with this terminal weight.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 300_000)]
        budget: u64,
        /// Also solve the occupation LP.
        #[arg(long)]
        lp: bool,
    },
    /// Discretized occupation-measure LP.
    OccupationLp {
        instance: PathBuf,
        #[arg(long)]
        refine: bool,
        #[arg(long, value_enum, default_value_t = Solver::Ipm)]
        solver: Solver,
    },
    /// Sup-distance of admissible curves from perturbed starts to the relaxed reference.
    FwSeparation {
        instance: PathBuf,
        #[arg(long, default_value_t = 500)]
        curves: usize,
        #[arg(long, default_value_t = 2e-3)]
        delta: f64,
        #[arg(long = "N", default_value_t = 200)]
        n: usize,
        #[arg(long)]
        free: bool,
    },
    /// omega-projection, ring-curve or gap-table.
    ExportPlot {
        instance: PathBuf,
        #[arg(long)]
        kind: String,
        /// gap_report.json for gap-table.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Curve CSV for ring-curve (reference minimizer otherwise).
        #[arg(long)]
        curve: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Experiment(String),
}

impl From<GapError> for Failure {
    fn from(e: GapError) -> Self {
        if e.is_experiment_failure() {
            Failure::Experiment(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!("instance schema: {}", io::SCHEMA_REF);
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            eprintln!("instance schema: {}", io::SCHEMA_REF);
            ExitCode::from(1)
        }
        Err(Failure::Experiment(m)) => {
            eprintln!("experiment failed: {m}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Instance, Failure> {
    Ok(io::override_instance(&io::load_instance(path)?, &cli.set)?)
}

fn write(dir: &Path, name: &str, bytes: &str) -> Outcome {
    let p = dir.join(name);
    io::write_atomic(&p, bytes.as_bytes())?;
    println!("wrote {}", p.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, v: &T) -> Outcome {
    write(dir, name, &io::to_json(v)?)
}

fn lagrangian(kind: Kind, inst: &Instance) -> LagrangianKind {
    match kind {
        Kind::Vee => LagrangianKind::Vee,
        Kind::Veevee => LagrangianKind::VeeVee,
        Kind::Flat => LagrangianKind::Flat,
        Kind::Mollified => LagrangianKind::Mollified { eps: inst.eps_moll },
    }
}

fn run(cli: &Cli) -> Outcome {
    let out = io::resolve_out_dir(cli.out.as_deref());
    match &cli.cmd {
        Cmd::BuildInstance { a, b, lambda, delta, d, eps_moll } => {
            let params = InstanceParams { d: *d, a: *a, b: *b, lambda: *lambda, delta: *delta, eps_moll: *eps_moll, ..InstanceParams::default() };
            let inst = build_instance(io::apply_overrides(params, &cli.set)?)?;
            println!("ab/2π = {:.4}", inst.a * inst.b / std::f64::consts::TAU);
            if inst.d == 4 {
                let [c, s] = inst.spiral_center_tail(-inst.a);
                let seam = phi(&[-inst.a, 0.0, c, s]);
                let cfg = gapforge::trajectories::PlannerConfig::default();
                match gapforge::trajectories::plan_cap_connector(&inst, &inst.x0(), &seam, -1, &cfg) {
                    Ok(r) if !r.within_target => eprintln!(
                        "warning: cap connector length {:.4} exceeds delta/2 = {:.4}",
                        r.length, r.target_length
                    ),
                    Ok(_) => {}
                    Err(e) => eprintln!("warning: cap connector: {e}"),
                }
            }
            io::save_instance(&out.join("instance.json"), &inst)?;
            println!("wrote {}", out.join("instance.json").display());
        }
        Cmd::CheckInvariants { instance } => {
            let inst = load(cli, instance)?;
            let mut checks = Vec::new();
            let mut check = |name: &str, pass: bool, value: f64| checks.push(json!({"name": name, "pass": pass, "value": value}));
            let tags = [classify(&inst.x0(), &inst), classify(&inst.x1(), &inst)];
            check("endpoints_in_closure", tags.iter().all(|t| *t != RegionTag::Outside), 0.0);
            let mut worst: f64 = 0.0;
            for i in 0..=100 {
                let t = -inst.cap_tip() + 2.0 * inst.cap_tip() * i as f64 / 100.0;
                let mut x = eta(t, inst.d);
                x[inst.d - 1] = 1e-3 * (i as f64).sin();
                for (p, q) in phi(&phi_inv(&x)).iter().zip(&x) {
                    worst = worst.max((p - q).abs());
                }
            }
            check("phi_round_trip", worst <= 1e-12, worst);
            let (ypath, rcurve) = reference_minimizer(&inst);
            let adm = admissible(&rcurve, &inst);
            check("reference_admissible", adm.admissible && adm.endpoint_in_target, adm.min_clearance);
            let relaxed = relaxed_cost(&inst, LagrangianKind::VeeVee, &ypath, &rcurve, None)?.total;
            check("relaxed_reference_cost_2a", (relaxed - 2.0 * inst.a).abs() <= 1e-6, relaxed);
            let path = reference_classical(&inst);
            let ccurve = integrate_horizontal(&inst, &path, &inst.x0(), steps_for(&path.breakpoints, REFERENCE_STEP))?;
            let classical = classical_cost(&inst, LagrangianKind::VeeVee, &path, &ccurve, None)?.total;
            check("dirac_collapse_above_2a", classical > 2.0 * inst.a, classical);
            match winding_bound_check(&ccurve, &inst) {
                Ok(w) => check("reference_winding_bound", w.pass, w.winding),
                Err(_) => check("reference_winding_bound", false, f64::NAN),
            }
            let all = checks.iter().all(|c| c["pass"] == true);
            write_json(&out, "invariants.json", &json!({"pass": all, "checks": checks}))?;
            if !all {
                return Err(Failure::Validation("invariant check failed, see invariants.json".into()));
            }
        }
        Cmd::EvalCost { instance, kind, alpha, terminal_eps } => {
            let inst = load(cli, instance)?;
            let k = lagrangian(*kind, &inst);
            k.check(&inst)?;
            let tc = alpha.map(|al| TerminalCost::new(al, *terminal_eps, &inst)).transpose()?;
            let (ypath, rcurve) = reference_minimizer(&inst);
            let relaxed = relaxed_cost(&inst, k, &ypath, &rcurve, tc.as_ref())?;
            let path = reference_classical(&inst);
            let ccurve = integrate_horizontal(&inst, &path, &inst.x0(), steps_for(&path.breakpoints, REFERENCE_STEP))?;
            let classical = classical_cost(&inst, k, &path, &ccurve, tc.as_ref())?;
            println!("relaxed reference cost = {:.10}", relaxed.total);
            write_json(&out, "cost.json", &json!({"kind": k, "terminal": tc, "relaxed_reference": relaxed, "classical_reference": classical}))?;
        }
        Cmd::Winding { instance, curve } => {
            let inst = load(cli, instance)?;
            let c: Curve = match curve.as_str() {
                "ref" => reference_minimizer(&inst).1,
                "classical" => {
                    let path = reference_classical(&inst);
                    integrate_horizontal(&inst, &path, &inst.x0(), steps_for(&path.breakpoints, REFERENCE_STEP))?
                }
                p => io::parse_curve_csv(&std::fs::read_to_string(p).map_err(GapError::from)?, &inst)?,
            };
            let w = winding_bound_check(&c, &inst)?;
            println!("winding = {:.6}, bound = {:.6}, pass = {}", w.winding, w.bound, w.pass);
            write_json(&out, "winding.json", &json!({"curve": curve, "check": w}))?;
        }
        Cmd::Ballbox { instance, samples } => {
            let inst = load(cli, instance)?;
            let study = ballbox_study(&inst, &eta(0.0, inst.d), &[4, 5, 6, 7, 8, 9], *samples, cli.seed)?;
            let eps_min = gap_lower_bound_eps(&inst, study.cbar);
            println!("slopes = {:?}, cbar = {:.4e}", study.slopes, study.cbar);
            write_json(&out, "ballbox.json", &json!({"seed": cli.seed, "study": study, "gap_lower_bound_eps": eps_min}))?;
        }
        Cmd::DemoGap { instance, starts, n, free, alpha, budget, lp } => {
            let inst = load(cli, instance)?;
            let mut cfg = GapConfig { budget: *budget, with_lp: *lp, ..GapConfig::new(*starts, *n, cli.seed) };
            if *free {
                cfg.constraint = StateConstraint::Free;
            }
            if let Some(al) = alpha {
                cfg.terminal = Some(TerminalCost::new(*al, 2e-3, &inst)?);
                cfg.target = TargetMode::None;
            }
            let report = run_gap(&inst, &cfg)?;
            write_json(&out, "gap_report.json", &report)?;
            write(&out, "gap_table.csv", &io::gap_table_csv(&report)?)?;
            match report.margin {
                Some(m) => println!("relaxed = {:.6}, best classical = {:.6}, margin = {m:.6}", report.relaxed_cost, report.relaxed_cost + m),
                None => return Err(Failure::Experiment("FAILED_FEASIBILITY in every start".into())),
            }
        }
        Cmd::OccupationLp { instance, refine, solver } => {
            let inst = load(cli, instance)?;
            let mut grid = OccupationGrid::default();
            if *refine {
                grid = grid.refined();
            }
            grid.solver = match solver {
                Solver::Ipm => LpSolver::InteriorPoint,
                Solver::Pdhg => LpSolver::Pdhg,
            };
            let (outcome, _) = occupation_lp(&inst, &grid)?;
            let olp = gapforge::optimize::lp::build_occupation_lp(&inst, &grid)?;
            let x = assemble_reference_measure(&inst, &olp, &grid)?;
            let (residual, objective) = measure_report(&inst, &grid, &x)?;
            println!("LP value = {:.6} (residual {:.2e})", outcome.value, outcome.primal_residual);
            write_json(
                &out,
                "occupation_lp.json",
                &json!({"grid": grid, "outcome": outcome, "reference_measure": {"residual": residual, "objective": objective}}),
            )?;
        }
        Cmd::FwSeparation { instance, curves, delta, n, free } => {
            let inst = load(cli, instance)?;
            let cfg = FwConfig {
                n: *n,
                constraint: if *free { StateConstraint::Free } else { StateConstraint::Omega },
                ..FwConfig::default()
            };
            let report = fw_separation_experiment(&inst, *delta, *curves, cli.seed, &cfg)?;
            write_json(&out, "fw_report.json", &report)?;
            if *curves > 0 && report.n_admissible == 0 {
                return Err(Failure::Experiment("no admissible curve sampled".into()));
            }
            println!("min sup-distance = {:.6} over {} curves", report.min_sup_distance, report.n_admissible);
        }
        Cmd::ExportPlot { instance, kind, report, curve } => {
            let kind: PlotKind = kind.parse()?;
            let inst = load(cli, instance)?;
            let report: Option<GapReport> = match report {
                Some(p) => Some(serde_json::from_str(&std::fs::read_to_string(p).map_err(GapError::from)?).map_err(GapError::from)?),
                None => None,
            };
            let curve = match curve {
                Some(p) => io::parse_curve_csv(&std::fs::read_to_string(p).map_err(GapError::from)?, &inst)?,
                None => reference_minimizer(&inst).1,
            };
            let text = io::export_plot(kind, &PlotData { instance: &inst, curve: Some(&curve), report: report.as_ref() })?;
            write(&out, kind.file_name(), &text)?;
        }
    }
    Ok(())
}
