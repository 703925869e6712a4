//! Experiment runner: multi-trial exploration sessions per system and
//! criterion, paired across criteria, with CSV outputs.
//!
//! Within one trial every criterion shares the initial data and the
//! initially trained model, so differences in the RMSE curves isolate the
//! effect of the selection strategy. Trials run in parallel, each owning
//! its derived seed stream; outputs are byte-identical across reruns
//! except for the wall-clock columns.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::{
    al_session, AcquisitionConfig, ControlOptimizer, Criterion, EvalProtocol, SessionResult,
};
use crate::elbo::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::model::{GpssmModel, Trajectory, VariationalChain};
use crate::numerics::{GaussianDist, Vector};
use crate::seeds::{self, tags};
use crate::systems::{SystemKind, SystemSpec};

/// Root-mean-square error, normalized by the observation dimension:
/// `sqrt( mean_i ||pred_i - truth_i||^2 / d_y )`.
pub fn rmse(pred: &[Vector<f64>], truth: &[Vector<f64>]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch {
            context: format!("rmse over {} predictions vs {} truths", pred.len(), truth.len()),
        });
    }
    let d_y = truth[0].len() as f64;
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let d = p.sub(t);
        acc += d.dot(&d);
    }
    Ok((acc / pred.len() as f64 / d_y).sqrt())
}

/// Full description of one experiment; all defaults are recorded here and
/// in the config file format.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    pub criteria: Vec<Criterion>,
    pub trials: usize,
    /// T: number of randomly-driven warm-up points.
    pub initial_points: usize,
    /// N: exploration steps per session.
    pub steps: usize,
    pub kernel_family: KernelFamily,
    pub sigma2: f64,
    pub lengthscale: f64,
    /// Initial training epochs; retraining uses `epochs / retrain_divisor`.
    pub epochs: usize,
    pub retrain_divisor: usize,
    pub learning_rate: f64,
    pub elbo_samples: usize,
    pub mi_samples: usize,
    pub grid_points: usize,
    pub local_starts: usize,
    pub local_iters: usize,
    pub quadrature_nodes: usize,
    pub num_inducing: usize,
    pub process_noise_init: f64,
    pub obs_noise_init: f64,
    pub x0_prior_var: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Per-system defaults: kernel family, initial hyperparameters and
    /// epoch budget follow the experiment table; the rest are the
    /// artifact's own recorded defaults.
    pub fn for_system(system: SystemKind) -> Self {
        let (kernel_family, sigma2, lengthscale, epochs) = match system {
            SystemKind::Kink => (KernelFamily::SquaredExponential, 1.0, 1.0, 100),
            SystemKind::Pendulum => (KernelFamily::Matern32, 0.3, 5.0, 200),
            SystemKind::CartPole => (KernelFamily::Matern32, 1.0, 1.0, 200),
            SystemKind::Tras => (KernelFamily::SquaredExponential, 1.0, 1.0, 500),
        };
        // Observation noise starts at the sensor scale of the system; a
        // too-large start detaches the derived chain from the data and the
        // optimizer then explains everything as emission noise.
        let sensor_std = SystemSpec::by_kind(system).obs_noise_std[0];
        ExperimentConfig {
            system,
            criteria: vec![Criterion::Random, Criterion::LatMi, Criterion::TotMi],
            trials: 10,
            initial_points: 5,
            steps: 30,
            kernel_family,
            sigma2,
            lengthscale,
            epochs,
            retrain_divisor: 4,
            learning_rate: 0.05,
            elbo_samples: 10,
            mi_samples: 32,
            grid_points: 50,
            local_starts: 8,
            local_iters: 60,
            quadrature_nodes: 24,
            num_inducing: 20,
            process_noise_init: 1e-3,
            obs_noise_init: sensor_std * sensor_std,
            x0_prior_var: 1e-4,
            seed: 0,
        }
    }

    pub fn to_key_values(&self) -> String {
        let criteria =
            self.criteria.iter().map(|c| c.name()).collect::<Vec<_>>().join(",");
        format!(
            "system = {}\ncriteria = {}\ntrials = {}\ninitial_points = {}\nsteps = {}\n\
             kernel = {}\nsigma2 = {:?}\nlambda = {:?}\nepochs = {}\nretrain_divisor = {}\n\
             learning_rate = {:?}\nelbo_samples = {}\nmi_samples = {}\ngrid_points = {}\n\
             local_starts = {}\nlocal_iters = {}\nquadrature_nodes = {}\nnum_inducing = {}\n\
             process_noise_init = {:?}\nobs_noise_init = {:?}\nx0_prior_var = {:?}\nseed = {}\n",
            self.system.name(),
            criteria,
            self.trials,
            self.initial_points,
            self.steps,
            self.kernel_family.name(),
            self.sigma2,
            self.lengthscale,
            self.epochs,
            self.retrain_divisor,
            self.learning_rate,
            self.elbo_samples,
            self.mi_samples,
            self.grid_points,
            self.local_starts,
            self.local_iters,
            self.quadrature_nodes,
            self.num_inducing,
            self.process_noise_init,
            self.obs_noise_init,
            self.x0_prior_var,
            self.seed,
        )
    }

    /// Parses the flat key-value format; unknown keys are errors, missing
    /// keys fall back to the per-system defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let system = SystemKind::parse(
            map.get("system")
                .ok_or_else(|| Error::Config("config needs a `system` key".into()))?,
        )?;
        let mut cfg = ExperimentConfig::for_system(system);
        for (key, value) in &map {
            let bad = |what: &str| Error::Config(format!("bad {what} in `{key} = {value}`"));
            match key.as_str() {
                "system" => {}
                "criteria" => {
                    cfg.criteria = value
                        .split(',')
                        .map(Criterion::parse)
                        .collect::<Result<Vec<_>>>()?;
                }
                "trials" => cfg.trials = value.parse().map_err(|_| bad("usize"))?,
                "initial_points" => cfg.initial_points = value.parse().map_err(|_| bad("usize"))?,
                "steps" => cfg.steps = value.parse().map_err(|_| bad("usize"))?,
                "kernel" => cfg.kernel_family = KernelFamily::parse(value)?,
                "sigma2" => cfg.sigma2 = value.parse().map_err(|_| bad("float"))?,
                "lambda" => cfg.lengthscale = value.parse().map_err(|_| bad("float"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("usize"))?,
                "retrain_divisor" => cfg.retrain_divisor = value.parse().map_err(|_| bad("usize"))?,
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|_| bad("float"))?,
                "elbo_samples" => cfg.elbo_samples = value.parse().map_err(|_| bad("usize"))?,
                "mi_samples" => cfg.mi_samples = value.parse().map_err(|_| bad("usize"))?,
                "grid_points" => cfg.grid_points = value.parse().map_err(|_| bad("usize"))?,
                "local_starts" => cfg.local_starts = value.parse().map_err(|_| bad("usize"))?,
                "local_iters" => cfg.local_iters = value.parse().map_err(|_| bad("usize"))?,
                "quadrature_nodes" => cfg.quadrature_nodes = value.parse().map_err(|_| bad("usize"))?,
                "num_inducing" => cfg.num_inducing = value.parse().map_err(|_| bad("usize"))?,
                "process_noise_init" => cfg.process_noise_init = value.parse().map_err(|_| bad("float"))?,
                "obs_noise_init" => cfg.obs_noise_init = value.parse().map_err(|_| bad("float"))?,
                "x0_prior_var" => cfg.x0_prior_var = value.parse().map_err(|_| bad("float"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("u64"))?,
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        if cfg.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(cfg)
    }

    fn optimizer(&self, d_c: usize) -> ControlOptimizer {
        if d_c == 1 {
            ControlOptimizer::Grid { points_per_dim: self.grid_points }
        } else {
            ControlOptimizer::MultiStartLocal { starts: self.local_starts, iters: self.local_iters }
        }
    }
}

/// Initial data plus the simulator state it left behind.
pub struct InitialData {
    pub trajectory: Trajectory,
    pub final_state: Vector<f64>,
}

/// Drives the system with uniformly random controls for `points` steps.
pub fn generate_initial_data(system: &SystemSpec, points: usize, seed: u64) -> Result<InitialData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, tags::INIT_DATA));
    let mut obs_rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, tags::OBSERVE));
    let mut state = system.init_state.clone();
    let mut traj = Trajectory::default();
    for _ in 0..points {
        let control = system.control_box.sample(&mut rng);
        state = system.step(&state, &control)?;
        let observation = system.observe(&state, &mut obs_rng);
        traj.push_step(control, observation);
    }
    Ok(InitialData { trajectory: traj, final_state: state })
}

/// Builds the untrained model for a system under one experiment config.
pub fn build_model(system: &SystemSpec, cfg: &ExperimentConfig, seed: u64) -> Result<GpssmModel<f64>> {
    let d_in = system.d_x + system.d_c;
    let kernels = (0..system.d_x)
        .map(|_| KernelSpec::isotropic(cfg.kernel_family, cfg.sigma2, cfg.lengthscale, d_in))
        .collect();
    let (emission, offset) = system.emission();
    let mut input_bounds: Vec<(f64, f64)> = system.state_bounds.clone();
    for i in 0..system.d_c {
        input_bounds.push((system.control_box.lower[i], system.control_box.upper[i]));
    }
    GpssmModel::init(
        system.d_x,
        system.d_y,
        system.d_c,
        kernels,
        emission,
        offset,
        Vector::from_fn(system.d_x, |_| cfg.process_noise_init),
        Vector::from_fn(system.d_y, |_| cfg.obs_noise_init),
        GaussianDist::isotropic(system.init_state.clone(), cfg.x0_prior_var),
        &input_bounds,
        cfg.num_inducing,
        seeds::derive(seed, tags::INDUCING),
    )
}

/// One session of one trial.
#[derive(Clone, Debug)]
pub struct TrialOutput {
    pub trial: usize,
    pub session: SessionResult,
}

/// Per-(criterion, step) aggregates across trials.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub criterion: Criterion,
    pub step: usize,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub mean_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AggregateResult {
    pub rows: Vec<AggregateRow>,
}

pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub aggregate: AggregateResult,
    pub sessions: Vec<TrialOutput>,
    pub all_completed: bool,
}

/// Runs every trial (in parallel) and criterion (paired within a trial).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let system = SystemSpec::by_kind(cfg.system);
    let eval = EvalProtocol::for_system(&system)?;
    let trial_indices: Vec<usize> = (0..cfg.trials).collect();
    let per_trial: Vec<Result<Vec<TrialOutput>>> = trial_indices
        .par_iter()
        .map(|&trial| run_trial(cfg, &system, &eval, trial))
        .collect();
    let mut sessions = Vec::new();
    for outputs in per_trial {
        sessions.extend(outputs?);
    }
    let all_completed = sessions.iter().all(|t| t.session.aborted.is_none());
    let aggregate = aggregate(cfg, &sessions);
    Ok(ExperimentOutput { config: cfg.clone(), aggregate, sessions, all_completed })
}

fn run_trial(
    cfg: &ExperimentConfig,
    system: &SystemSpec,
    eval: &EvalProtocol,
    trial: usize,
) -> Result<Vec<TrialOutput>> {
    let trial_seed = seeds::derive_indexed(cfg.seed, tags::TRIAL, trial as u64);
    let init = generate_initial_data(system, cfg.initial_points, trial_seed)?;
    let untrained = build_model(system, cfg, trial_seed)?;
    let initial_train = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        samples_per_estimate: cfg.elbo_samples,
        seed: seeds::derive(trial_seed, tags::TRAIN_EPOCH),
        ..TrainConfig::default()
    };
    let trained = train(&untrained, &init.trajectory, &initial_train)?;
    if trained.aborted_at.is_some() {
        return Err(Error::NonFiniteGradient { epoch: trained.aborted_at.unwrap() });
    }
    let retrain = TrainConfig {
        epochs: (cfg.epochs / cfg.retrain_divisor).max(1),
        ..initial_train.clone()
    };
    let mut outputs = Vec::with_capacity(cfg.criteria.len());
    for &criterion in &cfg.criteria {
        let acq = AcquisitionConfig {
            criterion,
            optimizer: cfg.optimizer(system.d_c),
            mi_samples: cfg.mi_samples,
            quadrature_nodes: cfg.quadrature_nodes,
            seed: trial_seed,
        };
        let session = al_session(
            system,
            trained.model.clone(),
            init.trajectory.clone(),
            init.final_state.clone(),
            cfg.steps,
            &acq,
            &retrain,
            eval,
        )?;
        outputs.push(TrialOutput { trial, session });
    }
    Ok(outputs)
}

fn aggregate(cfg: &ExperimentConfig, sessions: &[TrialOutput]) -> AggregateResult {
    let mut rows = Vec::new();
    for &criterion in &cfg.criteria {
        for step in 0..cfg.steps {
            let values: Vec<(f64, f64)> = sessions
                .iter()
                .filter(|t| t.session.criterion == criterion)
                .filter_map(|t| t.session.records.get(step))
                .map(|r| (r.rmse, r.seconds))
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean_rmse = values.iter().map(|v| v.0).sum::<f64>() / n;
            let var = values.iter().map(|v| (v.0 - mean_rmse).powi(2)).sum::<f64>() / n;
            let mean_seconds = values.iter().map(|v| v.1).sum::<f64>() / n;
            rows.push(AggregateRow {
                criterion,
                step,
                mean_rmse,
                std_rmse: var.sqrt(),
                mean_seconds,
            });
        }
    }
    AggregateResult { rows }
}

// ---------------------------------------------------------------------------
// CSV emission and parsing.
// ---------------------------------------------------------------------------

/// Aggregate CSV: `step,criterion,mean_rmse,std_rmse,mean_seconds`.
pub fn emit_aggregate_csv(result: &AggregateResult, path: &Path) -> Result<()> {
    let mut out = String::from("step,criterion,mean_rmse,std_rmse,mean_seconds\n");
    for row in &result.rows {
        out.push_str(&format!(
            "{},{},{:?},{:?},{:?}\n",
            row.step,
            row.criterion.name(),
            row.mean_rmse,
            row.std_rmse,
            row.mean_seconds
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Inverse of [`emit_aggregate_csv`], exact for round-trip checks.
pub fn parse_aggregate_csv(text: &str) -> Result<AggregateResult> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Config(format!("aggregate csv line {}: expected 5 fields", lineno + 1)));
        }
        let bad = |what: &str| Error::Config(format!("aggregate csv line {}: bad {what}", lineno + 1));
        rows.push(AggregateRow {
            step: fields[0].parse().map_err(|_| bad("step"))?,
            criterion: Criterion::parse(fields[1])?,
            mean_rmse: fields[2].parse().map_err(|_| bad("mean_rmse"))?,
            std_rmse: fields[3].parse().map_err(|_| bad("std_rmse"))?,
            mean_seconds: fields[4].parse().map_err(|_| bad("mean_seconds"))?,
        });
    }
    Ok(AggregateResult { rows })
}

/// Session CSV:
/// `step,criterion,c_*,criterion_value,rmse,seconds,acq_seconds`.
pub fn emit_session_csv(session: &SessionResult, d_c: usize, path: &Path) -> Result<()> {
    let controls: Vec<String> = (0..d_c).map(|i| format!("c_{i}")).collect();
    let mut out = format!("step,criterion,{},criterion_value,rmse,seconds,acq_seconds\n", controls.join(","));
    for r in &session.records {
        let controls: Vec<String> = r.control.iter().map(|c| format!("{c:?}")).collect();
        out.push_str(&format!(
            "{},{},{},{:?},{:?},{:?},{:?}\n",
            r.step,
            session.criterion.name(),
            controls.join(","),
            r.criterion_value,
            r.rmse,
            r.seconds,
            r.acq_seconds
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes every per-trial session CSV plus the aggregate into `dir`.
pub fn emit_experiment_csvs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d_c = SystemSpec::by_kind(output.config.system).d_c;
    emit_aggregate_csv(&output.aggregate, &dir.join("aggregate.csv"))?;
    for t in &output.sessions {
        let name = format!("session_trial{}_{}.csv", t.trial, t.session.criterion.name());
        emit_session_csv(&t.session, d_c, &dir.join(name))?;
    }
    std::fs::write(dir.join("config.txt"), output.config.to_key_values())
        .map_err(|e| Error::io(dir.join("config.txt"), e))?;
    Ok(())
}

/// Total-MI landscape snapshots over a control grid at chosen data counts.
///
/// Runs one total-MI exploration session; whenever the training set reaches
/// a requested size, the criterion is evaluated over the whole grid and
/// recorded as rows `(points, control components..., totmi)`.
pub fn emit_mi_landscape(
    cfg: &ExperimentConfig,
    snapshots: &[usize],
    grid_points: usize,
    path: &Path,
) -> Result<()> {
    let system = SystemSpec::by_kind(cfg.system);
    let eval = EvalProtocol::for_system(&system)?;
    let trial_seed = seeds::derive_indexed(cfg.seed, tags::TRIAL, 0);
    let init = generate_initial_data(&system, cfg.initial_points, trial_seed)?;
    let untrained = build_model(&system, cfg, trial_seed)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        samples_per_estimate: cfg.elbo_samples,
        seed: seeds::derive(trial_seed, tags::TRAIN_EPOCH),
        ..TrainConfig::default()
    };
    let mut model = train(&untrained, &init.trajectory, &train_cfg)?.model;
    let retrain = TrainConfig { epochs: (cfg.epochs / cfg.retrain_divisor).max(1), ..train_cfg };

    let grid = system.control_box.grid(grid_points);
    let controls_header: Vec<String> = (0..system.d_c).map(|i| format!("c_{i}")).collect();
    let mut out = format!("points,{},totmi\n", controls_header.join(","));
    let mut traj = init.trajectory.clone();
    let mut state = init.final_state.clone();
    let max_points = snapshots.iter().copied().max().unwrap_or(0);

    let snapshot = |model: &GpssmModel<f64>, traj: &Trajectory, out: &mut String| -> Result<()> {
        if !snapshots.contains(&traj.len()) {
            return Ok(());
        }
        let chain = VariationalChain::derive(model, traj)?;
        let scorer = crate::mi::total::TotalMiScorer::new(
            model,
            &chain,
            traj,
            cfg.mi_samples,
            seeds::derive(trial_seed, tags::MI_SAMPLE),
        )?;
        for c in &grid {
            let vals: Vec<String> = c.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&format!("{},{},{:?}\n", traj.len(), vals.join(","), scorer.score(c).value));
        }
        Ok(())
    };

    snapshot(&model, &traj, &mut out)?;
    let mut step = 0usize;
    while traj.len() < max_points {
        let acq = AcquisitionConfig {
            criterion: Criterion::TotMi,
            optimizer: cfg.optimizer(system.d_c),
            mi_samples: cfg.mi_samples,
            quadrature_nodes: cfg.quadrature_nodes,
            seed: seeds::derive_indexed(trial_seed, tags::SESSION_STEP, step as u64),
        };
        let session = al_session(
            &system,
            model,
            traj,
            state,
            1,
            &acq,
            &retrain,
            &eval,
        )?;
        if session.aborted.is_some() {
            return Err(Error::Config("landscape session aborted".into()));
        }
        model = session.final_model;
        traj = session.final_trajectory;
        state = session.final_true_state;
        step += 1;
        snapshot(&model, &traj, &mut out)?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Fast invariant battery behind the `check` CLI subcommand.
pub fn self_check() -> Vec<(String, bool, String)> {
    use crate::kernels::{AugmentedInput, KernelFamily as KF, KernelSpec as KS};
    use crate::numerics::{gaussian_kl, Matrix};
    let mut results = Vec::new();
    let mut push = |name: &str, ok: bool, detail: String| results.push((name.to_string(), ok, detail));

    {
        let a = Matrix::<f64>::from_rows_f64(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = a.cholesky().unwrap();
        let r = l.matmul(&l.transpose());
        let err = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (r[(i, j)] - a[(i, j)]).abs())
            .fold(0.0f64, f64::max);
        push("cholesky_reconstruction", err < 1e-8, format!("max err {err:.2e}"));
    }
    {
        let q = GaussianDist::isotropic(Vector::new(vec![0.0]), 1.0);
        let p = GaussianDist::isotropic(Vector::new(vec![1.0]), 1.0);
        let kl = gaussian_kl(&q, &p).unwrap();
        push("unit_gaussian_kl", (kl - 0.5).abs() < 1e-12, format!("kl {kl}"));
    }
    {
        let got = crate::systems::kink_next(0.0, 1.0);
        push("kink_map_value", (got - 0.7).abs() < 1e-12, format!("kink(0, 1) = {got}"));
    }
    {
        let grown = crate::systems::rk4_step(|s| s.clone(), &Vector::new(vec![1.0]), 0.1).unwrap();
        push(
            "rk4_exponential",
            (grown[0] - 0.1f64.exp()).abs() < 1e-7,
            format!("growth {} vs e^0.1", grown[0]),
        );
    }
    {
        let k = KS::isotropic(KF::SquaredExponential, 1.0, 1.0, 1);
        let a = AugmentedInput::from_concat(Vector::new(vec![0.0]), 1);
        let b = AugmentedInput::from_concat(Vector::new(vec![2f64.sqrt()]), 1);
        let v = crate::kernels::kernel_eval(&k, &a, &b).unwrap();
        push("se_kernel_value", (v - (-1.0f64).exp()).abs() < 1e-12, format!("k = {v}"));
    }
    {
        let system = SystemSpec::kink();
        let cfg = ExperimentConfig::for_system(SystemKind::Kink);
        let model = build_model(&system, &cfg, 1).unwrap();
        let traj = generate_initial_data(&system, 3, 2).unwrap().trajectory;
        let chain = VariationalChain::derive(&model, &traj).unwrap();
        let precision = 1.0 / cfg.process_noise_init + 1.0 / cfg.obs_noise_init;
        let err = (chain.noise[(0, 0)] * precision - 1.0).abs();
        push("chain_identity", err < 1e-8, format!("S(Q^-1 + C^T R^-1 C) err {err:.2e}"));
    }
    {
        let system = SystemSpec::kink();
        let cfg = ExperimentConfig::for_system(SystemKind::Kink);
        let model = build_model(&system, &cfg, 3).unwrap();
        let belief = crate::mi::latest::MomentBelief {
            step: 1,
            mean: Vector::zeros(1),
            var: Vector::zeros(1),
        };
        let mi = crate::mi::latest::latest_mi(&model, &belief).unwrap();
        push("latest_mi_zero_case", mi == 0.0, format!("mi {mi}"));
    }
    results
}
