//! Pipelines behind `echolab run`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use echolab::diagnostics::{esn_lyapunov, lorenz_lyapunov};
use echolab::dynsys::{circle_rotation, example_drive, observe, ExampleMap, LorenzParams, ObservationFn};
use echolab::experiment::{
    autonomous_forecast, eight_box_contraction, embedding_trial, fixed_point_experiment, homology_points, landmark_h1,
    lorenz_xi_range, train_lorenz_esn, two_gs_experiment, value_learning, EsnScheme, HomologySettings, HomologySource,
    LorenzEsnConfig, LorenzTask, ValueLearnConfig,
};
use echolab::pde::{
    grid_rms, run_disc, sample_disc, sample_residuals, solution_field, solve_dirichlet_online, write_field_csv, BoundaryData,
    DirichletReport, DiscRunConfig, RandomFeatureModel, Stacking,
};
use echolab::series::fmt_f64;
use echolab::training::{Objective, Schedule};
use echolab::{dynsys, Error, Result};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig};

pub const MANIFEST: &str = "manifest.json";

/// What a finished run left on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub output_dir: PathBuf,
    /// Output files other than the manifest, in write order.
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

fn write_manifest(dir: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

/// Runs the configured experiment. The manifest is written before any
/// computation and rewritten with the outcome afterwards.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config.to_json(),
        "status": "running",
    });
    write_manifest(&dir, &manifest)?;
    let start = Instant::now();
    let mut out = Outputs { dir: dir.clone(), files: Vec::new() };
    let result = dispatch(config, &mut out);
    let wall_time_s = start.elapsed().as_secs_f64();
    manifest["wall_time_s"] = json!(wall_time_s);
    manifest["outputs"] = json!(out.files);
    match &result {
        Ok(()) => manifest["status"] = json!("completed"),
        Err(e) => {
            manifest["status"] = json!("failed");
            manifest["error"] = json!(e.to_string());
        }
    }
    write_manifest(&dir, &manifest)?;
    result.map(|()| RunReport { output_dir: dir, files: out.files, wall_time_s })
}

fn dispatch(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    match c.experiment {
        Experiment::LorenzTrain => lorenz_train(c, out),
        Experiment::LorenzForecast => lorenz_forecast(c, out),
        Experiment::FixedPoint => fixed_point(c, out),
        Experiment::Lyapunov => lyapunov(c, out),
        Experiment::Homology => homology(c, out),
        Experiment::GsExamples => gs_examples(c, out),
        Experiment::EmbeddingCheck => embedding_check(c, out),
        Experiment::ValueLearn => value_learn(c, out),
        Experiment::PdeDirichlet => pde_dirichlet(c, out),
    }
}

fn lorenz_params(c: &ExperimentConfig) -> LorenzParams {
    LorenzParams::default().with_tau(c.float("lorenz.tau"))
}

fn esn_config(c: &ExperimentConfig, task: LorenzTask) -> LorenzEsnConfig {
    LorenzEsnConfig {
        n: c.usize("reservoir.n"),
        scheme: if c.text("reservoir.scheme") == "sparse" { EsnScheme::Sparse } else { EsnScheme::Uniform },
        lambda: c.float("training.lambda"),
        objective: if c.text("training.objective") == "mean" { Objective::Mean } else { Objective::Sum },
        length: c.usize("training.length"),
        burn_in: c.usize("training.burn_in"),
        lorenz: lorenz_params(c),
        task,
        seed: c.seed,
    }
}

fn lorenz_train(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let task = if c.text("task") == "next_xi" { LorenzTask::NextXi } else { LorenzTask::ZetaFromXi };
    let cfg = esn_config(c, task);
    let esn = train_lorenz_esn(&cfg)?;
    out.write("readout.json", |w| {
        writeln!(w, "{}", esn.readout.to_json()?)?;
        Ok(())
    })?;
    out.write("predictions.csv", |w| {
        writeln!(w, "k,t,target,prediction")?;
        for k in cfg.burn_in + 1..esn.states.len() {
            let pred = esn.readout.predict(esn.states.sample(k));
            writeln!(w, "{k},{},{},{}", fmt_f64(esn.states.time(k)), fmt_f64(esn.target(task, k)), fmt_f64(pred))?;
        }
        Ok(())
    })?;
    out.json("summary.json", &json!({ "train_rmse": esn.train_rmse(), "pairs": esn.problem.len(), "features": esn.problem.n_features() }))
}

fn lorenz_forecast(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let cfg = esn_config(c, LorenzTask::NextXi);
    let steps = c.usize("forecast.steps");
    let threshold = c.float("forecast.threshold");
    let esn = train_lorenz_esn(&cfg)?;
    let total = cfg.burn_in + cfg.length;
    let truth = dynsys::integrate_lorenz(&cfg.lorenz, total + steps)?;
    let (_, preds) = autonomous_forecast(&esn, steps)?;
    let errors: Vec<f64> = (0..steps).map(|j| (preds[j] - truth.sample(total + j)[0]).abs()).collect();
    let valid_steps = errors.iter().position(|e| *e > threshold).unwrap_or(steps);
    out.write("forecast.csv", |w| {
        writeln!(w, "step,t,truth,forecast,abs_error")?;
        for j in 0..steps {
            let k = total + j;
            writeln!(w, "{j},{},{},{},{}", fmt_f64(truth.time(k)), fmt_f64(truth.sample(k)[0]), fmt_f64(preds[j]), fmt_f64(errors[j]))?;
        }
        Ok(())
    })?;
    out.json(
        "summary.json",
        &json!({
            "train_rmse": esn.train_rmse(),
            "threshold": threshold,
            "valid_steps": valid_steps,
            "valid_time": valid_steps as f64 * cfg.lorenz.tau,
        }),
    )
}

fn fixed_point(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let cfg = esn_config(c, LorenzTask::NextXi);
    let esn = train_lorenz_esn(&cfg)?;
    let wing = if c.text("fixed_point.wing") == "minus" { 1 } else { 0 };
    let r = fixed_point_experiment(&esn, &cfg.lorenz, wing, c.float("newton.tol"), c.usize("newton.max_iter"), c.float("match.radius"), c.seed)?;
    out.write("eigenvalues.csv", |w| {
        let mut eigs = r.fixed_point.jacobian_eigs.clone();
        eigs.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
        writeln!(w, "re,im,modulus")?;
        for e in eigs {
            writeln!(w, "{},{},{}", fmt_f64(e.re), fmt_f64(e.im), fmt_f64(e.norm()))?;
        }
        Ok(())
    })?;
    let mut report = serde_json::to_value(&r)?;
    report["passes"] = json!(r.eigen_match.passes());
    report["train_rmse"] = json!(esn.train_rmse());
    out.json("fixed_point.json", &report)
}

fn lyapunov(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let steps = c.usize("steps");
    let transient = c.usize("transient");
    let system = c.text("system");
    let result = if system == "esn" {
        let cfg = esn_config(c, LorenzTask::NextXi);
        let esn = train_lorenz_esn(&cfg)?;
        // Settle onto the learned attractor before measuring.
        let (settle, _) = autonomous_forecast(&esn, transient)?;
        let x0 = settle.last().expect("nonempty run").to_vec();
        esn_lyapunov(&esn.spec, &esn.readout, &x0, c.usize("esn.exponents"), steps, cfg.lorenz.tau)?
    } else {
        lorenz_lyapunov(&lorenz_params(c), steps, transient)?
    };
    out.write("running_means.csv", |w| result.write_running_means_csv(w))?;
    out.json("exponents.json", &json!({ "system": system, "exponents": result.exponents, "iterations": result.n_iterations }))
}

fn homology(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let source = match c.text("source") {
        "driven" => HomologySource::Driven,
        "autonomous" => HomologySource::Autonomous,
        _ => HomologySource::Lorenz,
    };
    let settings = HomologySettings {
        landmarks: c.usize("landmarks"),
        max_eps_factor: c.float("max_eps_factor"),
        transient: c.usize("transient"),
        autonomous_steps: c.usize("autonomous.steps"),
        autonomous_transient: c.usize("autonomous.transient"),
    };
    let points = if source == HomologySource::Lorenz {
        let lorenz = lorenz_params(c);
        let traj = dynsys::integrate_lorenz(&lorenz, c.usize("training.burn_in") + c.usize("training.length"))?;
        traj.slice(settings.transient, traj.len())?
    } else {
        let esn = train_lorenz_esn(&esn_config(c, LorenzTask::NextXi))?;
        homology_points(&esn, source, &settings)?
    };
    let r = landmark_h1(&points, &settings)?;
    out.write("diagram.csv", |w| r.diagram.write_csv(w))?;
    out.write("landmarks.csv", |w| {
        writeln!(w, "index,{}", (0..points.dim()).map(|i| format!("x{i}")).collect::<Vec<_>>().join(","))?;
        for &i in &r.landmarks {
            let coords: Vec<String> = points.sample(i).iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{i},{}", coords.join(","))?;
        }
        Ok(())
    })?;
    let p = r.persistences();
    out.json(
        "h1.json",
        &json!({
            "source": c.text("source"),
            "points": points.len(),
            "landmarks": r.landmarks.len(),
            "max_eps": r.max_eps,
            "top_persistence": &p[..p.len().min(5)],
            "gap_ratio": r.gap_ratio,
            "dominant_count": r.dominant_count(2.0),
        }),
    )
}

fn gs_examples(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let steps = c.usize("steps");
    let burn_in = c.usize("burn_in");
    let (eps, m0) = (c.float("epsilon"), c.float("m0"));
    let example = c.text("example");
    let map = ExampleMap::from_name(example, Some(c.float("alpha")), Some(c.float("lambda")), Some(c.float("k")), Some(c.float("delta")))?;
    match map {
        ExampleMap::Tanh2x => {
            let r = two_gs_experiment(eps, m0, steps, burn_in, [0.9, -0.9])?;
            out.write("gs.csv", |w| {
                writeln!(w, "angle,z,x_upper,x_lower")?;
                for i in 0..r.angles.len() {
                    writeln!(w, "{},{},{},{}", fmt_f64(r.angles[i]), fmt_f64(r.inputs[i]), fmt_f64(r.upper[i]), fmt_f64(r.lower[i]))?;
                }
                Ok(())
            })?;
            out.json("summary.json", &json!({ "min_gap": r.min_gap, "self_consistent": r.self_consistent }))
        }
        ExampleMap::SignedPower { .. } => {
            let range = lorenz_xi_range(&LorenzParams::default(), c.usize("xi_range_steps"))?;
            let boxes = eight_box_contraction(&map, range, c.usize("probes"), c.seed)?;
            out.write("contraction.csv", |w| {
                writeln!(w, "box,lo0,lo1,lo2,invariant,c_est,escapes")?;
                for (i, (b, lc)) in boxes.iter().enumerate() {
                    let lo: Vec<String> = b.lo.iter().map(|v| fmt_f64(*v)).collect();
                    writeln!(w, "{i},{},{},{},{}", lo.join(","), lc.invariant, fmt_f64(lc.c_est), lc.escapes)?;
                }
                Ok(())
            })?;
            let all = boxes.iter().all(|(_, lc)| lc.is_contracting());
            out.json("summary.json", &json!({ "input_range": [range.0, range.1], "all_contracting": all }))
        }
        _ => {
            let angles = circle_rotation(eps, m0, steps);
            let input = observe(&angles, &ObservationFn::scaled_sin(c.float("input.amplitude")))?;
            let mut finals = Vec::new();
            let mut runs = Vec::new();
            for rho0 in c.list("polar.rho0") {
                match example_drive(&map, &input, &[rho0, 0.0]) {
                    Ok(ts) => {
                        finals.push(json!({ "rho0": rho0, "diverged": false, "final": ts.last().expect("nonempty") }));
                        runs.push((rho0, ts));
                    }
                    // Unbounded growth is an outcome of the example, not a failure.
                    Err(Error::Diverged { step, .. }) => finals.push(json!({ "rho0": rho0, "diverged": true, "step": step })),
                    Err(e) => return Err(e),
                }
            }
            out.write("trajectories.csv", |w| {
                writeln!(w, "rho0,k,rho,theta")?;
                for (rho0, ts) in &runs {
                    for (k, s) in ts.samples().enumerate() {
                        writeln!(w, "{},{k},{},{}", fmt_f64(*rho0), fmt_f64(s[0]), fmt_f64(s[1]))?;
                    }
                }
                Ok(())
            })?;
            out.json("summary.json", &json!({ "example": example, "runs": finals }))
        }
    }
}

fn embedding_check(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (n, q, period) = (c.usize("n"), c.usize("eigenvalues"), c.usize("period"));
    let trials = (0..c.usize("trials") as u64)
        .map(|t| embedding_trial(n, q, period, c.seed.wrapping_add(t)))
        .collect::<Result<Vec<_>>>()?;
    out.write("trials.csv", |w| {
        writeln!(w, "trial,condition_d,condition_c")?;
        for (i, t) in trials.iter().enumerate() {
            writeln!(w, "{i},{},{}", t.condition_d, t.condition_c)?;
        }
        Ok(())
    })?;
    out.json(
        "summary.json",
        &json!({
            "trials": trials.len(),
            "condition_d": trials.iter().filter(|t| t.condition_d).count(),
            "condition_c": trials.iter().filter(|t| t.condition_c).count(),
        }),
    )
}

fn value_learn(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let cfg = ValueLearnConfig {
        transition: c.matrix("chain.transition"),
        rewards: c.list("chain.rewards"),
        gamma: c.float("gamma"),
        path_length: c.usize("path.length"),
        rollouts: c.usize("mc.rollouts"),
        horizon: c.usize("mc.horizon"),
        pairs: c.usize("contraction.pairs"),
        seed: c.seed,
    };
    let r = value_learning(&cfg)?;
    out.write("value.csv", |w| {
        writeln!(w, "state,exact,monte_carlo,mc_stderr,offline")?;
        for s in 0..r.exact.len() {
            let mc = &r.monte_carlo[s];
            writeln!(w, "{s},{},{},{},{}", fmt_f64(r.exact[s]), fmt_f64(mc.value), fmt_f64(mc.stderr), fmt_f64(r.offline[s]))?;
        }
        Ok(())
    })?;
    let mut summary = serde_json::to_value(&r)?;
    summary["max_offline_error"] = json!(r.max_offline_error());
    summary["max_mc_z"] = json!(r.max_mc_z());
    out.json("value.json", &summary)
}

fn pde_dirichlet(c: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let cfg = DiscRunConfig {
        n: c.usize("n"),
        ell: c.usize("ell"),
        ell_prime: c.usize("ell_prime"),
        lambda: c.float("lambda"),
        half_width: c.float("half_width"),
        boundary: BoundaryData::CosK { k: c.usize("boundary.k") as u32 },
        stacking: if c.text("stacking") == "normalized" { Stacking::Normalized } else { Stacking::Plain },
        include_norm_factor: c.flag("norm_factor"),
        seed: c.seed,
    };
    let (field, report, readout) = if c.text("solver") == "online" {
        let mut model = RandomFeatureModel::uniform(cfg.n, 2, cfg.half_width, cfg.seed)?;
        model.include_norm_factor = cfg.include_norm_factor;
        let sample = sample_disc(cfg.ell, cfg.ell_prime, &cfg.boundary, cfg.seed)?;
        let schedule = Schedule::Harmonic { a: c.float("online.a"), k0: c.float("online.k0") };
        let reg = DMatrix::identity(cfg.n, cfg.n) * cfg.lambda.sqrt();
        let readout = solve_dirichlet_online(&model, &sample, schedule, &reg, c.usize("online.steps"))?;
        let field = solution_field(&model, &readout.w, &cfg.boundary);
        let (interior_rms, boundary_rms) = sample_residuals(&model, &readout.w, &sample);
        let report = DirichletReport { interior_rms, boundary_rms, grid_rms: grid_rms(&field), config: serde_json::to_value(&cfg)? };
        (field, report, readout)
    } else {
        let run = run_disc(&cfg)?;
        (run.field, run.report, run.readout)
    };
    out.write("field.csv", |w| write_field_csv(&field, w))?;
    out.write("readout.json", |w| {
        writeln!(w, "{}", readout.to_json()?)?;
        Ok(())
    })?;
    let mut r = serde_json::to_value(&report)?;
    r["solver"] = json!(c.text("solver"));
    out.json("report.json", &r)
}
