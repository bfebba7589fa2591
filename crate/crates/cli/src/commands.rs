//! Command handlers: each one resolves flags, runs the requested job and
//! writes its artifacts, returning the process exit code (0 converged, 2
//! iteration limit, 3 solver failure, 4 bad input).

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use odecol::collocation::CollocationScheme;
use odecol::mesh::Mesh;
use odecol::problems::{
    build_qvm_model, generate_qvm_data, generate_vdp_data, init_qvm_params, lambda_for_sigma,
    max_abs_deviation, qvm_surrogate_fit, sensitivity_sweep, simulate_vdp_trained,
    simulate_vdp_truth, train_qvm, train_vdp, QvmDataConfig, QvmTrainConfig, SurrogatePick,
    SweepConfig, TrainPhase, VdpDataConfig, VdpTrainConfig,
};
use odecol::model::DynamicModel as _;
use odecol::solver::{Nlp, SolveStatus, SolverOptions};
use odecol::transcription::SparseNlp;

use crate::svg::{line_chart, Series, PALETTE};
use crate::{BenchArgs, NodesArgs, SimulateArgs, SweepArgs, TrainArgs};

/// environment variable supplying the default thread count
pub const THREADS_ENV: &str = "ODECOL_THREADS";

pub fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal | SolveStatus::Acceptable => 0,
        SolveStatus::MaxIter => 2,
        SolveStatus::Infeasible | SolveStatus::EvalFailure => 3,
    }
}

// ---------------------------------------------------------------------------
// report plumbing

#[derive(Serialize)]
struct PhaseJson {
    label: String,
    status: String,
    objective: f64,
    iterations: usize,
    n_var: usize,
    n_con: usize,
    wall_s: f64,
    callback_s: f64,
}

impl From<&TrainPhase> for PhaseJson {
    fn from(p: &TrainPhase) -> Self {
        Self {
            label: p.label.clone(),
            status: format!("{:?}", p.status),
            objective: p.objective,
            iterations: p.iterations,
            n_var: p.n_var,
            n_con: p.n_con,
            wall_s: p.wall_s,
            callback_s: p.callback_s,
        }
    }
}

#[derive(Serialize)]
struct TimingJson {
    total_s: f64,
    solver_core_s: f64,
    callbacks_s: f64,
}

/// the machine-readable summary every training or sweep run writes last
#[derive(Serialize)]
struct RunReport {
    problem: String,
    command: String,
    config: serde_json::Value,
    status: String,
    iterations: usize,
    objective: f64,
    objective_history: Vec<f64>,
    phases: Vec<PhaseJson>,
    timing: TimingJson,
    threads: usize,
    metrics: serde_json::Value,
    /// files this run wrote, relative to the output directory
    outputs: Vec<String>,
}

fn write_report(dir: &Path, mut report: RunReport) -> Result<()> {
    report.outputs.push("report.json".to_string());
    let path = dir.join("report.json");
    let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &report)?;
    Ok(())
}

fn out_dir(flag: &Option<PathBuf>, default: &str) -> Result<PathBuf> {
    let dir = flag.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_params_csv(path: &Path, p: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,value")?;
    for (i, v) in p.iter().enumerate() {
        writeln!(f, "{i},{v:.16e}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// nodes

pub fn cmd_nodes(a: &NodesArgs) -> Result<i32> {
    if a.stages == 0 {
        bail!(BadFlag("--stages must be at least 1".into()));
    }
    let scheme = CollocationScheme::new(a.stages);
    let mut text = String::from("kind,i,j,value\n");
    for (i, v) in scheme.nodes.iter().enumerate() {
        text.push_str(&format!("node,{},,{v:.16e}\n", i + 1));
    }
    for (i, v) in scheme.weights.iter().enumerate() {
        text.push_str(&format!("weight,{},,{v:.16e}\n", i + 1));
    }
    for j in 1..=a.stages {
        for k in 0..=a.stages {
            text.push_str(&format!("dmatrix,{j},{k},{:.16e}\n", scheme.d(j, k)));
        }
    }
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let text = match a.problem.as_str() {
        "vdp" => {
            let n = ((a.horizon * 100.0).round() as usize).max(2) + 1;
            let sim = simulate_vdp_truth(a.mu, [2.0, 0.0], a.horizon, n)?;
            let mut text = String::from("t,x,y\n");
            for q in 0..sim.t.len() {
                text.push_str(&format!("{:.9e},{:.9e},{:.9e}\n", sim.t[q], sim.x[0][q], sim.x[1][q]));
            }
            text
        }
        "qvm" => {
            let cfg = QvmDataConfig {
                road_seed: a.road_seed,
                class: a.road_class,
                speed: a.speed,
                horizon: a.horizon,
                sample_rate: a.rate,
                ..Default::default()
            };
            let ds = generate_qvm_data(&cfg)?;
            let mut text = String::from("t,z_b,z_w,v_b,v_w,body_acc,wheel_acc\n");
            for q in 0..ds.clean.t.len() {
                text.push_str(&format!("{:.9e}", ds.clean.t[q]));
                for ch in &ds.clean.channels {
                    text.push_str(&format!(",{:.9e}", ch[q]));
                }
                text.push('\n');
            }
            text
        }
        other => bail!(BadFlag(format!("unknown problem '{other}', expected vdp or qvm"))),
    };
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// train

pub fn cmd_train(a: &TrainArgs) -> Result<i32> {
    match a.problem.as_str() {
        "vdp" => train_vdp_cmd(a),
        "qvm" => train_qvm_cmd(a),
        other => bail!(BadFlag(format!("unknown problem '{other}', expected vdp or qvm"))),
    }
}

fn solver_options(a: &TrainArgs, default_max_iter: usize) -> SolverOptions {
    SolverOptions {
        max_iter: a.max_iter.unwrap_or(default_max_iter),
        tol: a.tol,
        print: a.verbose,
        ..Default::default()
    }
}

fn train_vdp_cmd(a: &TrainArgs) -> Result<i32> {
    let threads = resolve_threads(a.threads);
    let lambda = a.lambda.unwrap_or_else(|| lambda_for_sigma(a.sigma));
    let dir = out_dir(&a.out, "out/train-vdp")?;

    let data_cfg = VdpDataConfig {
        sigma: a.sigma,
        noise_seed: a.seed.wrapping_mul(2),
        ..Default::default()
    };
    let data = generate_vdp_data(&data_cfg)?;
    let cfg = VdpTrainConfig {
        lambda,
        n_intervals: a.intervals.unwrap_or(500),
        stages: a.stages,
        seed: a.seed.wrapping_mul(2).wrapping_add(1),
        threads,
        solver: solver_options(a, 200),
        ..Default::default()
    };
    let run = train_vdp(&cfg, &data)?;
    let sol = &run.solution;
    println!(
        "train vdp: {:?} after {} iterations, objective {:.6e} ({:.1} s)",
        sol.status, sol.iterations, sol.objective, sol.timing.total
    );

    let mut outputs = Vec::new();
    sol.write_iteration_csv(&dir.join("iterations.csv"))?;
    outputs.push("iterations.csv".to_string());
    write_params_csv(&dir.join("solution.csv"), run.params())?;
    outputs.push("solution.csv".to_string());

    // rollout of the trained model against the generating one
    let mut metrics = json!({});
    let points = (data_cfg.horizon * 80.0) as usize + 1;
    let truth = simulate_vdp_truth(data_cfg.mu, data_cfg.x0, data_cfg.horizon, points)?;
    match simulate_vdp_trained(run.model(), run.params(), data_cfg.horizon, points) {
        Ok(roll) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?);
            writeln!(f, "t,x_fit,y_fit,x_ref,y_ref")?;
            for q in 0..roll.t.len() {
                writeln!(
                    f,
                    "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                    roll.t[q], roll.x[0][q], roll.x[1][q], truth.x[0][q], truth.x[1][q]
                )?;
            }
            drop(f);
            outputs.push("trajectory.csv".to_string());
            let dev = max_abs_deviation(&roll, &truth, data_cfg.horizon);
            println!("max trajectory deviation on [0, {}]: {dev:.4}", data_cfg.horizon);
            metrics = json!({ "max_deviation": dev });
            if a.svg {
                let series = vec![
                    Series { label: "x fit".into(), color: PALETTE[0], points: zip(&roll.t, &roll.x[0]) },
                    Series { label: "x ref".into(), color: PALETTE[1], points: zip(&truth.t, &truth.x[0]) },
                    Series { label: "y fit".into(), color: PALETTE[2], points: zip(&roll.t, &roll.x[1]) },
                    Series { label: "y ref".into(), color: PALETTE[3], points: zip(&truth.t, &truth.x[1]) },
                ];
                line_chart(&dir.join("trajectory.svg"), "trained rollout vs reference", "t", "state", &series)?;
                outputs.push("trajectory.svg".to_string());
            }
        }
        Err(e) => {
            println!("rollout of the trained model failed: {e}");
            metrics = json!({ "rollout_error": e.to_string() });
        }
    }

    let code = status_code(sol.status);
    write_report(
        &dir,
        RunReport {
            problem: "vdp".into(),
            command: "train".into(),
            config: json!({
                "sigma": a.sigma, "lambda": lambda, "intervals": cfg.n_intervals,
                "stages": cfg.stages, "seed": a.seed, "max_iter": cfg.solver.max_iter,
                "tol": cfg.solver.tol,
            }),
            status: format!("{:?}", sol.status),
            iterations: sol.iterations,
            objective: sol.objective,
            objective_history: sol.log.iter().map(|r| r.objective).collect(),
            phases: vec![PhaseJson::from(&run.phase)],
            timing: TimingJson {
                total_s: sol.timing.total,
                solver_core_s: sol.timing.solver_core,
                callbacks_s: sol.timing.callbacks,
            },
            threads,
            metrics,
            outputs,
        },
    )?;
    Ok(code)
}

fn train_qvm_cmd(a: &TrainArgs) -> Result<i32> {
    let threads = resolve_threads(a.threads);
    let dir = out_dir(&a.out, "out/train-qvm")?;

    let mut cfg = QvmTrainConfig {
        data: QvmDataConfig { noise_rel: a.noise, road_seed: a.road_seed, ..Default::default() },
        strategy: a.strategy,
        surrogate: a.surrogate,
        stages: a.stages,
        seed: a.seed,
        threads,
        solver: solver_options(a, 200),
        ..Default::default()
    };
    if a.full_scale {
        cfg = cfg.full_scale();
        if let Some(mi) = a.max_iter {
            cfg.solver.max_iter = mi;
        }
    }
    if let Some(n) = a.intervals {
        cfg.n_intervals = n;
    }
    let data = generate_qvm_data(&cfg.data)?;
    let run = train_qvm(&cfg, &data)?;
    let sol = &run.solution;
    for ph in &run.phases {
        println!(
            "train qvm [{}]: {:?} after {} iterations, objective {:.6e} ({:.1} s)",
            ph.label, ph.status, ph.iterations, ph.objective, ph.wall_s
        );
    }

    let mut outputs = Vec::new();
    sol.write_iteration_csv(&dir.join("iterations.csv"))?;
    outputs.push("iterations.csv".to_string());
    write_params_csv(&dir.join("solution.csv"), run.params())?;
    outputs.push("solution.csv".to_string());

    // fitted accelerations along the solved trajectory vs the data
    {
        let model = run.model();
        let states = run.nlp.unpack_states(&sol.z);
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?);
        writeln!(f, "t,body_acc_data,wheel_acc_data,body_acc_fit,wheel_acc_fit")?;
        let mut row = [0.0; 4];
        let mut acc = [0.0; 2];
        for (t, x) in &states {
            use odecol::data::DataSource as _;
            data.train.sample_into(*t, &mut row)?;
            model.observe(x, run.params(), &odecol::model::NodeCtx::new(*t, &row), &mut acc)?;
            writeln!(f, "{t:.9e},{:.9e},{:.9e},{:.9e},{:.9e}", row[2], row[3], acc[0], acc[1])?;
        }
        outputs.push("trajectory.csv".to_string());
    }

    // learned force curves vs the generating ones
    let mut metrics = serde_json::Map::new();
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("surrogates.csv"))?);
        writeln!(f, "surrogate,input,fitted,reference")?;
        for (pick, name) in [(SurrogatePick::Friction, "friction"), (SurrogatePick::Spring, "spring")] {
            let fit = qvm_surrogate_fit(run.model(), run.params(), &data, pick)?;
            let mut fitted = Vec::new();
            let mut reference = Vec::new();
            const GRID: usize = 201;
            for i in 0..GRID {
                let s = fit.input_lo + (fit.input_hi - fit.input_lo) * i as f64 / (GRID - 1) as f64;
                let r = match pick {
                    SurrogatePick::Friction => run.model().par.friction(s),
                    SurrogatePick::Spring => run.model().par.progressive(s),
                };
                let v = run.model().surrogate_output(pick, s, run.params())?;
                writeln!(f, "{name},{s:.9e},{v:.9e},{r:.9e}")?;
                fitted.push((s, v));
                reference.push((s, r));
            }
            println!(
                "{name}: rms {:.2}% of the generating range, value at zero {:.3e}",
                100.0 * fit.relative_rms(),
                fit.at_zero
            );
            metrics.insert(
                name.to_string(),
                json!({
                    "relative_rms": fit.relative_rms(), "rms": fit.rms, "range": fit.range,
                    "at_zero": fit.at_zero, "input_lo": fit.input_lo, "input_hi": fit.input_hi,
                }),
            );
            if a.svg {
                let series = vec![
                    Series { label: "learned".into(), color: PALETTE[0], points: fitted },
                    Series { label: "generating".into(), color: PALETTE[1], points: reference },
                ];
                line_chart(
                    &dir.join(format!("{name}.svg")),
                    &format!("{name} force"),
                    if pick == SurrogatePick::Friction { "relative speed (m/s)" } else { "deflection (m)" },
                    "force (N)",
                    &series,
                )?;
                outputs.push(format!("{name}.svg"));
            }
        }
        outputs.push("surrogates.csv".to_string());
    }

    let code = status_code(sol.status);
    write_report(
        &dir,
        RunReport {
            problem: "qvm".into(),
            command: "train".into(),
            config: json!({
                "strategy": a.strategy.to_string(), "surrogate": a.surrogate.to_string(),
                "intervals": cfg.n_intervals, "stages": cfg.stages, "horizon": cfg.horizon,
                "noise": a.noise, "road_seed": cfg.data.road_seed, "seed": a.seed,
                "max_iter": cfg.solver.max_iter, "tol": cfg.solver.tol, "full_scale": a.full_scale,
            }),
            status: format!("{:?}", sol.status),
            iterations: sol.iterations,
            objective: sol.objective,
            objective_history: sol.log.iter().map(|r| r.objective).collect(),
            phases: run.phases.iter().map(PhaseJson::from).collect(),
            timing: TimingJson {
                total_s: run.phases.iter().map(|p| p.wall_s).sum(),
                solver_core_s: run.phases.iter().map(|p| p.wall_s - p.callback_s).sum(),
                callbacks_s: run.phases.iter().map(|p| p.callback_s).sum(),
            },
            threads,
            metrics: serde_json::Value::Object(metrics),
            outputs,
        },
    )?;
    Ok(code)
}

fn zip(t: &[f64], x: &[f64]) -> Vec<(f64, f64)> {
    t.iter().copied().zip(x.iter().copied()).collect()
}

// ---------------------------------------------------------------------------
// sweep

pub fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    if a.problem != "vdp" {
        bail!(BadFlag(format!("unknown sweep problem '{}', only vdp is available", a.problem)));
    }
    if a.runs == 0 {
        bail!(BadFlag("--runs must be at least 1".into()));
    }
    let threads = resolve_threads(a.threads);
    let dir = out_dir(&a.out, "out/sweep-vdp")?;
    let cfg = SweepConfig {
        sigmas: match a.sigma {
            Some(s) => vec![s],
            None => vec![0.0, 0.1, 0.5],
        },
        runs_per_sigma: a.runs,
        n_intervals: a.intervals.unwrap_or(250),
        stages: a.stages,
        base_seed: a.seed,
        threads,
        solver: SolverOptions { max_iter: a.max_iter.unwrap_or(200), tol: a.tol, ..Default::default() },
        ..Default::default()
    };
    let report = sensitivity_sweep(&cfg)?;

    let mut outputs = Vec::new();
    report.write_runs_csv(&dir.join("runs.csv"))?;
    outputs.push("runs.csv".to_string());
    report.write_bands_csv(&dir.join("bands.csv"))?;
    outputs.push("bands.csv".to_string());
    for r in &report.runs {
        if let Some(roll) = &r.rollout {
            let name = format!("run_sigma{}_seed{}.csv", tag(r.sigma), r.seed);
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
            writeln!(f, "t,x,y")?;
            for q in 0..roll.t.len() {
                writeln!(f, "{:.9e},{:.9e},{:.9e}", roll.t[q], roll.x[0][q], roll.x[1][q])?;
            }
            outputs.push(name);
        }
    }

    let mut summaries = Vec::new();
    for s in &report.summaries {
        println!(
            "sigma {}: {}/{} converged, median field error {:.4e}",
            s.sigma, s.converged, s.total, s.median_field_err
        );
        summaries.push(json!({
            "sigma": s.sigma, "total": s.total, "converged": s.converged,
            "median_field_err": s.median_field_err,
        }));
        if a.svg {
            let b = &s.bands[0];
            let series = vec![
                Series { label: "reference".into(), color: PALETTE[1], points: zip(&report.t, &report.reference.x[0]) },
                Series { label: "p10".into(), color: PALETTE[5], points: zip(&report.t, &b.p10) },
                Series { label: "p50".into(), color: PALETTE[0], points: zip(&report.t, &b.p50) },
                Series { label: "p90".into(), color: PALETTE[5], points: zip(&report.t, &b.p90) },
            ];
            let name = format!("bands_sigma{}.svg", tag(s.sigma));
            line_chart(
                &dir.join(&name),
                &format!("rollout percentiles, noise {}", s.sigma),
                "t",
                "x",
                &series,
            )?;
            outputs.push(name);
        }
    }

    let total_wall: f64 = report.runs.iter().map(|r| r.wall_s).sum();
    write_report(
        &dir,
        RunReport {
            problem: "vdp".into(),
            command: "sweep".into(),
            config: json!({
                "sigmas": cfg.sigmas, "runs_per_sigma": cfg.runs_per_sigma,
                "intervals": cfg.n_intervals, "stages": cfg.stages, "base_seed": cfg.base_seed,
                "max_iter": cfg.solver.max_iter, "tol": cfg.solver.tol,
            }),
            status: "Completed".into(),
            iterations: report.runs.iter().map(|r| r.iterations).sum(),
            objective: f64::NAN,
            objective_history: Vec::new(),
            phases: Vec::new(),
            timing: TimingJson { total_s: total_wall, solver_core_s: 0.0, callbacks_s: 0.0 },
            threads,
            metrics: json!({ "summaries": summaries }),
            outputs,
        },
    )?;
    // partial failures are data, not command failures
    Ok(0)
}

/// filename-safe noise tag: 0.1 -> "0p1"
fn tag(sigma: f64) -> String {
    format!("{sigma}").replace('.', "p")
}

// ---------------------------------------------------------------------------
// bench-callbacks

pub fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let mut data_cfg = QvmDataConfig::default();
    let mut intervals = a.intervals.unwrap_or(625);
    let mut horizon = data_cfg.horizon;
    if a.full_scale {
        data_cfg.horizon = 42.0;
        horizon = 42.0;
        if a.intervals.is_none() {
            intervals = 2500;
        }
    }
    let data = generate_qvm_data(&data_cfg)?;
    let tc = QvmTrainConfig {
        data: data_cfg.clone(),
        horizon,
        n_intervals: intervals,
        stages: a.stages,
        ..Default::default()
    };
    let model = build_qvm_model(&tc, &data);
    let p0 = init_qvm_params(&model, a.seed);
    let mesh = Mesh::uniform(0.0, horizon, intervals, a.stages);
    let mut nlp = SparseNlp::new(model, mesh, &data.train)?;

    // a representative evaluation point: measured states, seeded parameters
    let z0 = {
        use odecol::data::DataSource as _;
        let states = &data.measured_states;
        nlp.pack_guess(
            |t, out| {
                states.sample_into(t, out).expect("guess sampling inside the data window");
            },
            &p0,
        )
    };
    let (jr, _) = nlp.jac_pattern();
    let jac_len = jr.len();
    let (hr, _) = nlp.hess_pattern();
    let hess_len = hr.len();
    println!(
        "benchmark NLP: {} variables, {} constraints, {} Jacobian and {} Hessian entries",
        nlp.n_var(),
        nlp.n_con(),
        jac_len,
        hess_len
    );

    let mut rows = Vec::new();
    let mut base: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let mut base_derivs_s = 0.0;
    for &t in &a.threads_list {
        nlp.set_threads(t);
        let mut c = vec![0.0; nlp.n_con()];
        let mut grad = vec![0.0; nlp.n_var()];
        let mut jac = vec![0.0; jac_len];
        let mut hess = vec![0.0; hess_len];
        let lam = vec![0.3; nlp.n_con()];

        let t0 = std::time::Instant::now();
        let mut f_val = 0.0;
        for _ in 0..a.repeats {
            f_val = nlp.eval_fc(&z0, &mut c).map_err(|e| anyhow::anyhow!("objective evaluation: {e}"))?;
        }
        let fc_s = t0.elapsed().as_secs_f64() / a.repeats as f64;

        let t1 = std::time::Instant::now();
        for _ in 0..a.repeats {
            nlp.eval_derivs(&z0, 1.0, &lam, &mut grad, &mut jac, &mut hess)
                .map_err(|e| anyhow::anyhow!("derivative evaluation: {e}"))?;
        }
        let derivs_s = t1.elapsed().as_secs_f64() / a.repeats as f64;

        let identical = match &base {
            None => {
                base = Some((f_val, c.clone(), grad.clone(), jac.clone(), hess.clone()));
                base_derivs_s = derivs_s;
                true
            }
            Some((bf, bc, bg, bj, bh)) => {
                bits(*bf) == bits(f_val)
                    && bc.iter().zip(&c).all(|(x, y)| bits(*x) == bits(*y))
                    && bg.iter().zip(&grad).all(|(x, y)| bits(*x) == bits(*y))
                    && bj.iter().zip(&jac).all(|(x, y)| bits(*x) == bits(*y))
                    && bh.iter().zip(&hess).all(|(x, y)| bits(*x) == bits(*y))
            }
        };
        let speedup = base_derivs_s / derivs_s;
        println!(
            "threads {t}: objective {fc_s:.4} s, derivatives {derivs_s:.4} s, speedup {speedup:.2}, identical {identical}"
        );
        rows.push((t, fc_s, derivs_s, speedup, identical));
    }

    if let Some(path) = &a.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "threads,fc_s,derivs_s,speedup,identical")?;
        for (t, fc, dv, sp, id) in &rows {
            writeln!(f, "{t},{fc:.6},{dv:.6},{sp:.3},{id}")?;
        }
    }
    Ok(0)
}

fn bits(v: f64) -> u64 {
    v.to_bits()
}

// ---------------------------------------------------------------------------
// flag-error carrier: main maps it to exit code 4

#[derive(Debug)]
pub struct BadFlag(pub String);

impl std::fmt::Display for BadFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::error::Error for BadFlag {}
