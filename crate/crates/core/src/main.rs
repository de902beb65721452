use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phasefrac::driver::{Simulation, SolveReport};
use phasefrac::output::{CsvSink, MultiSink, ProgressSink, RunSummary, VtkSink};
use phasefrac::problems::{self, Benchmark};
use phasefrac::scenario::Scenario;
use phasefrac::{mesh, oned};

/// Quasi-static phase-field brittle fracture: P1 finite elements for the
/// mechanics coupled with a cell-centered TPFA finite volume phase field.
#[derive(Parser)]
#[command(name = "phasefrac", version, about)]
struct Cli {
    /// Force sequential linear algebra for bit-reproducible output.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario configuration file.
    Run {
        /// Path to the scenario JSON.
        config: PathBuf,
    },
    /// Solve the 1D stationary-crack benchmark and print the profile.
    Validate1d {
        /// Number of cells (must be odd).
        #[arg(long)]
        cells: usize,
        /// Regularization length.
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
        /// Domain half-length.
        #[arg(long, default_value_t = 10.0)]
        half_length: f64,
    },
    /// Mesh-refinement study of the 1D benchmark for both discretizations.
    Convergence1d {
        /// Odd cell counts of the ladder.
        #[arg(long, value_delimiter = ',', default_values_t = oned::LADDER.to_vec())]
        ladder: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
        #[arg(long, default_value_t = 10.0)]
        half_length: f64,
    },
    /// Notched tension benchmark on a generated mesh.
    Tension {
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Notched shear benchmark on a generated mesh (Amor split).
    Shear {
        #[command(flatten)]
        bench: BenchArgs,
        /// Final prescribed displacement (mm).
        #[arg(long, default_value_t = 0.015)]
        final_ux: f64,
    },
    /// Stretching of a specimen with preexisting cracks (uniform mesh).
    Multicrack {
        /// Cells per regularization length (the full study uses 8).
        #[arg(long, default_value_t = 8.0)]
        lh: f64,
        /// Calibration constant of the exponential degradation function.
        #[arg(long, default_value_t = 25.0)]
        k: f64,
        /// Keep crack cells constrained instead of seeding the history field.
        #[arg(long)]
        retain_constraints: bool,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Refined-band resolution: cells per regularization length.
    #[arg(long, default_value_t = 2.0)]
    lh: f64,
    /// Use equal-order P1 finite elements for the phase field instead of
    /// finite volumes.
    #[arg(long)]
    fe_fe: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory for CSV/VTK/summary artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// VTK stride; 0 writes only the final state.
    #[arg(long, default_value_t = 0)]
    vtk_stride: usize,
    /// Save the generated mesh as ASCII MSH 2.2.
    #[arg(long)]
    write_mesh: Option<PathBuf>,
    /// Also write a scenario JSON equivalent to this run (requires
    /// --write-mesh).
    #[arg(long)]
    emit_config: Option<PathBuf>,
    /// Suppress progress lines.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_parallelism(cli.deterministic);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn configure_parallelism(deterministic: bool) {
    let threads = std::env::var("PHASEFRAC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1);
    if deterministic || threads <= 1 {
        faer::set_global_parallelism(faer::Par::Seq);
    } else {
        faer::set_global_parallelism(faer::Par::rayon(threads));
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { config } => {
            let scenario = Scenario::load(&config)?;
            let (mut sim, schedule, mut state) = scenario.build()?;
            let mut sinks: Vec<Box<dyn phasefrac::driver::StepSink>> = Vec::new();
            if let Some(csv) = &scenario.output.csv {
                sinks.push(Box::new(CsvSink::create(csv)?));
            }
            if let Some(dir) = &scenario.output.vtk_dir {
                sinks.push(Box::new(VtkSink::create(
                    dir,
                    scenario.output.vtk_stride,
                    schedule.steps.len(),
                )?));
            }
            sinks.push(Box::new(ProgressSink {
                every: 10,
                total: schedule.steps.len(),
            }));
            let mut sink = MultiSink { sinks };
            let report = sim.run_schedule(&mut state, &schedule, &mut sink)?;
            if let Some(path) = &scenario.output.summary {
                RunSummary::new(&report, &sim).write(path)?;
            }
            print_report(&report, &sim);
            Ok(())
        }
        Command::Validate1d {
            cells,
            ell,
            half_length,
        } => {
            let fv = oned::validate_fv(cells, ell, half_length)?;
            let fe = oned::validate_fe(cells, ell, half_length)?;
            println!("# 1D stationary crack, {cells} cells, h = {:.6}", fv.h);
            println!("# x_center  phi_fv  exact");
            for (x, p) in fv.positions.iter().zip(&fv.phi) {
                println!("{:+.6e} {:.9e} {:.9e}", x, p, (-x.abs() / ell).exp());
            }
            println!("L2 error  FV: {:.6e}   FE: {:.6e}", fv.l2_error, fe.l2_error);
            println!(
                "max error FV: {:.6e}   FE: {:.6e}",
                fv.max_error, fe.max_error
            );
            Ok(())
        }
        Command::Convergence1d {
            ladder,
            ell,
            half_length,
        } => {
            let study = oned::convergence_study(&ladder, ell, half_length)?;
            println!("#       h        L2(FV)        L2(FE)");
            for i in 0..study.h.len() {
                println!(
                    "{:.6e} {:.6e} {:.6e}",
                    study.h[i], study.err_fv[i], study.err_fe[i]
                );
            }
            println!(
                "fitted rates: FV {:.4}  FE {:.4}",
                study.rate_fv, study.rate_fe
            );
            Ok(())
        }
        Command::Tension { bench } => {
            let p = problems::tension(bench.lh, bench.fe_fe)?;
            run_benchmark(
                Benchmark::Tension,
                p,
                &bench.out,
                bench.fe_fe,
                25.0,
                "tension",
                bench.lh,
            )
        }
        Command::Shear { bench, final_ux } => {
            let p = problems::shear(bench.lh, bench.fe_fe, final_ux)?;
            run_benchmark(
                Benchmark::Shear,
                p,
                &bench.out,
                bench.fe_fe,
                25.0,
                "shear",
                bench.lh,
            )
        }
        Command::Multicrack {
            lh,
            k,
            retain_constraints,
            out,
        } => {
            let p = problems::multicrack(lh, k, retain_constraints)?;
            run_benchmark(Benchmark::Multicrack, p, &out, false, k, "multicrack", lh)
        }
    }
}

fn run_benchmark(
    benchmark: Benchmark,
    p: problems::Problem,
    out: &OutArgs,
    fe_fe: bool,
    k: f64,
    name: &str,
    lh: f64,
) -> Result<(), Box<dyn std::error::Error>> {
    let problems::Problem {
        mut sim,
        schedule,
        mut state,
        fine_h,
    } = p;
    eprintln!(
        "{name}: {} nodes, {} cells, fine h = {:.6e} (ell/h = {:.3}), {} displacement and {} phase unknowns",
        sim.mesh.n_nodes(),
        sim.mesh.n_cells(),
        fine_h,
        match benchmark {
            Benchmark::Multicrack => problems::MULTICRACK_ELL / fine_h,
            _ => problems::NOTCHED_ELL / fine_h,
        },
        sim.mech.matrix.dim(),
        sim.n_phase_unknowns(),
    );
    let _ = lh;
    if let Some(path) = &out.write_mesh {
        mesh::write_msh(&sim.mesh, path)?;
        if let Some(cfg) = &out.emit_config {
            problems::scenario_for(benchmark, path.clone(), fe_fe, k).save(cfg)?;
        }
    } else if out.emit_config.is_some() {
        return Err("--emit-config requires --write-mesh".into());
    }
    let dir = out.out.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "out-{name}{}",
            if fe_fe { "-fefe" } else { "" }
        ))
    });
    let mut sinks: Vec<Box<dyn phasefrac::driver::StepSink>> = vec![
        Box::new(CsvSink::create(dir.join("load_displacement.csv"))?),
        Box::new(VtkSink::create(
            dir.join("vtk"),
            out.vtk_stride,
            schedule.steps.len(),
        )?),
    ];
    if !out.quiet {
        sinks.push(Box::new(ProgressSink {
            every: 10,
            total: schedule.steps.len(),
        }));
    }
    let mut sink = MultiSink { sinks };
    let report = sim.run_schedule(&mut state, &schedule, &mut sink)?;
    RunSummary::new(&report, &sim).write(dir.join("summary.json"))?;
    print_report(&report, &sim);
    Ok(())
}

fn print_report(report: &SolveReport, _sim: &Simulation) {
    println!(
        "steps {}  iterations {}  clamps {}  peak load {:.4} N (step {})  wall {:.1} s",
        report.steps.len(),
        report.total_iterations,
        report.total_clamp_events,
        report.peak_load,
        report.peak_load_step,
        report.wall_seconds
    );
}
