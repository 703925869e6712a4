//! The closed exploration loop: score candidate controls by an information
//! criterion, apply the best one to the true system, absorb the new
//! observation, retrain, repeat.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elbo::{elbo, train, TrainConfig};
use crate::error::{Error, Result};
use crate::kernels::AugmentedInput;
use crate::mi::latest::{latest_mi_for_candidate, MomentPropagator};
use crate::mi::total::TotalMiScorer;
use crate::model::{GpssmModel, SparsePosterior, Trajectory, VariationalChain};
use crate::numerics::Vector;
use crate::seeds::{self, tags};
use crate::systems::SystemSpec;

/// Axis-aligned feasible region for controls.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("control box bound lengths differ"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("control box needs lower < upper componentwise".into()));
        }
        Ok(ControlBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, c: &Vector<f64>) -> bool {
        (0..self.dim()).all(|i| c[i] >= self.lower[i] && c[i] <= self.upper[i])
    }

    pub fn clip(&self, c: &Vector<f64>) -> Vector<f64> {
        Vector::from_fn(self.dim(), |i| c[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector<f64> {
        Vector::from_fn(self.dim(), |i| rng.gen_range(self.lower[i]..self.upper[i]))
    }

    /// Full lattice with `points` per dimension, in lexicographic order
    /// (last dimension fastest).
    pub fn grid(&self, points: usize) -> Vec<Vector<f64>> {
        assert!(points >= 2);
        let d = self.dim();
        let total = points.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        let mut index = vec![0usize; d];
        for _ in 0..total {
            out.push(Vector::from_fn(d, |i| {
                self.lower[i] + (self.upper[i] - self.lower[i]) * index[i] as f64 / (points - 1) as f64
            }));
            for axis in (0..d).rev() {
                index[axis] += 1;
                if index[axis] < points {
                    break;
                }
                index[axis] = 0;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Random,
    LatMi,
    TotMi,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Random => "random",
            Criterion::LatMi => "latmi",
            Criterion::TotMi => "totmi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Criterion::Random),
            "latmi" | "lat_mi" | "latest" => Ok(Criterion::LatMi),
            "totmi" | "tot_mi" | "total" => Ok(Criterion::TotMi),
            other => Err(Error::Config(format!("unknown criterion `{other}`"))),
        }
    }
}

/// How the per-step argmax over the control box is carried out.
#[derive(Clone, Copy, Debug)]
pub enum ControlOptimizer {
    Grid { points_per_dim: usize },
    MultiStartLocal { starts: usize, iters: usize },
}

#[derive(Clone, Debug)]
pub struct AcquisitionConfig {
    pub criterion: Criterion,
    pub optimizer: ControlOptimizer,
    /// Sample count of the total-MI estimator.
    pub mi_samples: usize,
    /// Gauss-Hermite nodes per uncertain dimension for the latest-MI
    /// recursion on kernels without closed-form expectations.
    pub quadrature_nodes: usize,
    pub seed: u64,
}

impl AcquisitionConfig {
    pub fn new(criterion: Criterion, d_c: usize, seed: u64) -> Self {
        let optimizer = if d_c == 1 {
            ControlOptimizer::Grid { points_per_dim: 50 }
        } else {
            ControlOptimizer::MultiStartLocal { starts: 8, iters: 60 }
        };
        AcquisitionConfig { criterion, optimizer, mi_samples: 32, quadrature_nodes: 24, seed }
    }
}

fn check_finite(value: f64, candidate: &Vector<f64>) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteScore { candidate: candidate.as_slice().to_vec() })
    }
}

/// Maximizes `score` over the box. Grid search keeps the first (lowest
/// lexicographic index) maximizer on ties; local search runs Nelder-Mead
/// from each start with every vertex clipped into the box.
pub fn optimize_control(
    score: &dyn Fn(&Vector<f64>) -> Result<f64>,
    bounds: &ControlBox,
    optimizer: &ControlOptimizer,
    seed: u64,
) -> Result<(Vector<f64>, f64)> {
    match *optimizer {
        ControlOptimizer::Grid { points_per_dim } => {
            let mut best: Option<(Vector<f64>, f64)> = None;
            for candidate in bounds.grid(points_per_dim) {
                let value = check_finite(score(&candidate)?, &candidate)?;
                if best.as_ref().map_or(true, |(_, b)| value > *b) {
                    best = Some((candidate, value));
                }
            }
            Ok(best.expect("grid has at least 2^d points"))
        }
        ControlOptimizer::MultiStartLocal { starts, iters } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, tags::OPTIMIZER));
            let mut best: Option<(Vector<f64>, f64)> = None;
            for _ in 0..starts {
                let start = bounds.sample(&mut rng);
                let (point, value) = nelder_mead(score, bounds, &start, iters)?;
                if best.as_ref().map_or(true, |(_, b)| value > *b) {
                    best = Some((point, value));
                }
            }
            Ok(best.expect("at least one start"))
        }
    }
}

/// Nelder-Mead ascent, clipped to the box.
fn nelder_mead(
    score: &dyn Fn(&Vector<f64>) -> Result<f64>,
    bounds: &ControlBox,
    start: &Vector<f64>,
    iters: usize,
) -> Result<(Vector<f64>, f64)> {
    let n = bounds.dim();
    let eval = |c: &Vector<f64>| -> Result<f64> { check_finite(score(c)?, c) };
    let mut simplex: Vec<(Vector<f64>, f64)> = Vec::with_capacity(n + 1);
    let clipped = bounds.clip(start);
    simplex.push((clipped.clone(), eval(&clipped)?));
    for i in 0..n {
        let mut v = clipped.clone();
        let h = 0.1 * (bounds.upper[i] - bounds.lower[i]);
        v[i] = if v[i] + h <= bounds.upper[i] { v[i] + h } else { v[i] - h };
        let v = bounds.clip(&v);
        simplex.push((v.clone(), eval(&v)?));
    }
    let centroid = |simplex: &[(Vector<f64>, f64)]| -> Vector<f64> {
        Vector::from_fn(n, |i| simplex.iter().take(n).map(|(v, _)| v[i]).sum::<f64>() / n as f64)
    };
    for _ in 0..iters {
        // Descending by score: first is best, last is worst.
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let c = centroid(&simplex);
        let worst = simplex[n].0.clone();
        let reflect = bounds.clip(&Vector::from_fn(n, |i| c[i] + (c[i] - worst[i])));
        let f_reflect = eval(&reflect)?;
        if f_reflect > simplex[0].1 {
            let expand = bounds.clip(&Vector::from_fn(n, |i| c[i] + 2.0 * (c[i] - worst[i])));
            let f_expand = eval(&expand)?;
            simplex[n] = if f_expand > f_reflect { (expand, f_expand) } else { (reflect, f_reflect) };
        } else if f_reflect > simplex[n - 1].1 {
            simplex[n] = (reflect, f_reflect);
        } else {
            let contract = bounds.clip(&Vector::from_fn(n, |i| c[i] + 0.5 * (worst[i] - c[i])));
            let f_contract = eval(&contract)?;
            if f_contract > simplex[n].1 {
                simplex[n] = (contract, f_contract);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk =
                        bounds.clip(&Vector::from_fn(n, |i| best[i] + 0.5 * (entry.0[i] - best[i])));
                    *entry = (shrunk.clone(), eval(&shrunk)?);
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(simplex.swap_remove(0))
}

/// Fixed held-out evaluation set, identical across criteria.
///
/// Fully observed systems use a lattice of (state, control) points scored
/// by the one-step predictive mean. Systems with latent dimensions that
/// the emission never anchors use a free-running rollout under held-out
/// controls instead: feeding true states into the model would quiz it on
/// coordinates whose meaning it was never told, and the resulting score
/// ignores what the model actually learned.
#[derive(Clone, Debug)]
pub enum EvalProtocol {
    Lattice {
        inputs: Vec<(Vector<f64>, Vector<f64>)>,
        truths: Vec<Vector<f64>>,
    },
    Rollout {
        controls: Vec<Vector<f64>>,
        truths: Vec<Vector<f64>>,
    },
}

impl EvalProtocol {
    pub fn for_system(system: &SystemSpec) -> Result<Self> {
        let state_points = match system.d_x {
            1 => 41,
            2 => 13,
            _ => 5,
        };
        let control_points = match system.d_c {
            1 => 5,
            _ => 3,
        };
        Self::lattice(system, state_points, control_points)
    }

    pub fn lattice(system: &SystemSpec, state_points: usize, control_points: usize) -> Result<Self> {
        let state_axes: Vec<Vec<f64>> = system
            .state_bounds
            .iter()
            .map(|&(lo, hi)| {
                (0..state_points)
                    .map(|i| lo + (hi - lo) * i as f64 / (state_points - 1) as f64)
                    .collect()
            })
            .collect();
        let controls = system.control_box.grid(control_points);
        let mut inputs = Vec::new();
        let mut truths = Vec::new();
        let mut index = vec![0usize; system.d_x];
        let total = state_points.pow(system.d_x as u32);
        for _ in 0..total {
            let state = Vector::from_fn(system.d_x, |i| state_axes[i][index[i]]);
            for control in &controls {
                let next = system.step(&state, control)?;
                truths.push(system.observe_noiseless(&next));
                inputs.push((state.clone(), control.clone()));
            }
            for axis in (0..system.d_x).rev() {
                index[axis] += 1;
                if index[axis] < state_points {
                    break;
                }
                index[axis] = 0;
            }
        }
        Ok(EvalProtocol::Lattice { inputs, truths })
    }

    /// A held-out control sequence applied from the known initial state;
    /// the model free-runs its own latent trajectory against the true one.
    pub fn rollout(system: &SystemSpec, horizon: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = system.init_state.clone();
        let mut controls = Vec::with_capacity(horizon);
        let mut truths = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let control = system.control_box.sample(&mut rng);
            state = system.step(&state, &control)?;
            truths.push(system.observe_noiseless(&state));
            controls.push(control);
        }
        Ok(EvalProtocol::Rollout { controls, truths })
    }

    pub fn len(&self) -> usize {
        match self {
            EvalProtocol::Lattice { inputs, .. } => inputs.len(),
            EvalProtocol::Rollout { controls, .. } => controls.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// RMSE of the model against the held-out truth.
    pub fn rmse(&self, model: &GpssmModel<f64>) -> Result<f64> {
        let posterior = SparsePosterior::build(model)?;
        match self {
            EvalProtocol::Lattice { inputs, truths } => {
                let predictions: Vec<Vector<f64>> = inputs
                    .iter()
                    .map(|(state, control)| {
                        let input = AugmentedInput::new(state, control);
                        let (f_mean, _) = posterior.predict(model, &input);
                        model.emission.matvec(&f_mean).add(&model.offset)
                    })
                    .collect();
                crate::harness::rmse(&predictions, truths)
            }
            EvalProtocol::Rollout { controls, truths } => {
                let mut state = model.x0_prior.mean.clone();
                let mut predictions = Vec::with_capacity(controls.len());
                for control in controls {
                    let input = AugmentedInput::new(&state, control);
                    let (f_mean, _) = posterior.predict(model, &input);
                    state = f_mean;
                    predictions.push(model.emission.matvec(&state).add(&model.offset));
                }
                crate::harness::rmse(&predictions, truths)
            }
        }
    }
}

/// Metrics of one exploration step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub control: Vec<f64>,
    /// Criterion value at the chosen control; NaN under random selection.
    pub criterion_value: f64,
    pub rmse: f64,
    /// Wall time of the whole step.
    pub seconds: f64,
    /// Wall time of control selection alone.
    pub acq_seconds: f64,
    pub retrain_elbo: f64,
    /// Bound of the pre-step model on the pre-step data (guard reference).
    pub guard_pre_elbo: f64,
    /// Bound of the retrained model on the pre-step data.
    pub guard_post_elbo: f64,
    /// False when the guard rejected the retrained parameters.
    pub guard_kept: bool,
}

/// Everything produced by one closed-loop session.
#[derive(Clone, Debug)]
pub struct SessionResult {
    pub criterion: Criterion,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// Populated when a step failed; records hold the completed prefix.
    pub aborted: Option<String>,
    pub final_model: GpssmModel<f64>,
    pub final_trajectory: Trajectory,
    /// The simulator's latent state after the last applied control.
    pub final_true_state: Vector<f64>,
}

/// Retraining must not end up more than this fraction worse than the
/// pre-step bound on the pre-step data; otherwise the step keeps the
/// previous parameters (guard against optimizer divergence).
pub const RETRAIN_GUARD_FRACTION: f64 = 0.05;

/// Runs `steps` exploration steps from an already-trained model.
///
/// `true_state` is the simulator's current latent state, reached while
/// generating the initial data. Every stochastic choice derives from
/// `acq.seed`, so reruns are bit-identical.
#[allow(clippy::too_many_arguments)]
pub fn al_session(
    system: &SystemSpec,
    model: GpssmModel<f64>,
    init_traj: Trajectory,
    true_state: Vector<f64>,
    steps: usize,
    acq: &AcquisitionConfig,
    train_cfg: &TrainConfig,
    eval: &EvalProtocol,
) -> Result<SessionResult> {
    let mut model = model;
    let mut traj = init_traj;
    let mut state = true_state;
    let mut records = Vec::with_capacity(steps);
    let mut aborted = None;

    for step in 0..steps {
        let step_start = Instant::now();
        let step_seed = seeds::derive_indexed(acq.seed, tags::SESSION_STEP, step as u64);
        let chain = VariationalChain::derive(&model, &traj)?;

        // Select the control.
        let acq_start = Instant::now();
        let (control, criterion_value) = match acq.criterion {
            Criterion::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
                (system.control_box.sample(&mut rng), f64::NAN)
            }
            Criterion::TotMi => {
                let scorer = TotalMiScorer::new(&model, &chain, &traj, acq.mi_samples, step_seed)?;
                let score = |c: &Vector<f64>| -> Result<f64> { Ok(scorer.score(c).value) };
                optimize_control(&score, &system.control_box, &acq.optimizer, step_seed)?
            }
            Criterion::LatMi => {
                let propagator = MomentPropagator::new(&model, acq.quadrature_nodes)?;
                let score = |c: &Vector<f64>| -> Result<f64> {
                    latest_mi_for_candidate(&propagator, &model, &traj.controls, c)
                };
                optimize_control(&score, &system.control_box, &acq.optimizer, step_seed)?
            }
        };
        let acq_seconds = acq_start.elapsed().as_secs_f64();
        debug_assert!(system.control_box.contains(&control));

        // Bound on the pre-step data, for the retraining guard.
        let guard_seed = seeds::derive(step_seed, tags::TRAIN_EVAL);
        let pre_elbo = elbo(&model, &chain, &traj, train_cfg.samples_per_estimate, guard_seed)?.value;

        // Query the true system.
        state = system.step(&state, &control)?;
        let mut obs_rng =
            ChaCha8Rng::seed_from_u64(seeds::derive(step_seed, tags::OBSERVE));
        let observation = system.observe(&state, &mut obs_rng);
        let pre_traj = traj.clone();
        traj.push_step(control.clone(), observation);

        // Retrain, warm-started from the current parameters.
        let retrain_cfg = TrainConfig { seed: seeds::derive(step_seed, tags::TRAIN_EPOCH), ..train_cfg.clone() };
        let outcome = train(&model, &traj, &retrain_cfg)?;
        if let Some(epoch) = outcome.aborted_at {
            aborted = Some(format!("non-finite gradient at step {step}, epoch {epoch}"));
            records.push(StepRecord {
                step,
                control: control.as_slice().to_vec(),
                criterion_value,
                rmse: f64::NAN,
                seconds: step_start.elapsed().as_secs_f64(),
                acq_seconds,
                retrain_elbo: f64::NAN,
                guard_pre_elbo: pre_elbo,
                guard_post_elbo: f64::NAN,
                guard_kept: false,
            });
            break;
        }
        let candidate_model = outcome.model;
        let post_chain = VariationalChain::derive(&candidate_model, &pre_traj)?;
        let post_elbo_on_pre =
            elbo(&candidate_model, &post_chain, &pre_traj, train_cfg.samples_per_estimate, guard_seed)?.value;
        let guard_kept = post_elbo_on_pre >= pre_elbo - RETRAIN_GUARD_FRACTION * pre_elbo.abs();
        if guard_kept {
            model = candidate_model;
        }
        let retrain_elbo = outcome.trace.last().map_or(f64::NAN, |e| e.value);

        let rmse = eval.rmse(&model)?;
        records.push(StepRecord {
            step,
            control: control.as_slice().to_vec(),
            criterion_value,
            rmse,
            seconds: step_start.elapsed().as_secs_f64(),
            acq_seconds,
            retrain_elbo,
            guard_pre_elbo: pre_elbo,
            guard_post_elbo: post_elbo_on_pre,
            guard_kept,
        });
    }

    Ok(SessionResult {
        criterion: acq.criterion,
        seed: acq.seed,
        records,
        aborted,
        final_model: model,
        final_trajectory: traj,
        final_true_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(d: usize) -> ControlBox {
        ControlBox::new(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    #[test]
    fn box_validation_and_grid_order() {
        assert!(ControlBox::new(vec![0.0], vec![0.0]).is_err());
        let b = unit_box(2);
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        // Lexicographic: last dimension fastest.
        assert_eq!(g[0].as_slice(), &[0.0, 0.0]);
        assert_eq!(g[1].as_slice(), &[0.0, 0.5]);
        assert_eq!(g[3].as_slice(), &[0.5, 0.0]);
    }

    #[test]
    fn grid_finds_known_optimum() {
        let b = unit_box(1);
        let target = 0.62;
        let score = |c: &Vector<f64>| -> Result<f64> { Ok(-(c[0] - target).powi(2)) };
        let (c, _) = optimize_control(&score, &b, &ControlOptimizer::Grid { points_per_dim: 50 }, 0).unwrap();
        assert!((c[0] - target).abs() <= 0.5 / 49.0 + 1e-12);
    }

    #[test]
    fn grid_tie_break_takes_lowest_index() {
        let b = unit_box(2);
        let score = |_: &Vector<f64>| -> Result<f64> { Ok(1.0) };
        let (c, v) = optimize_control(&score, &b, &ControlOptimizer::Grid { points_per_dim: 4 }, 0).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 0.0]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let b = unit_box(1);
        let score = |c: &Vector<f64>| -> Result<f64> { Ok(if c[0] > 0.5 { f64::NAN } else { 0.0 }) };
        assert!(matches!(
            optimize_control(&score, &b, &ControlOptimizer::Grid { points_per_dim: 10 }, 0),
            Err(Error::NonFiniteScore { .. })
        ));
    }

    #[test]
    fn local_search_reaches_quadratic_optimum() {
        let b = unit_box(2);
        let target = [0.31, 0.74];
        let score = |c: &Vector<f64>| -> Result<f64> {
            Ok(-(c[0] - target[0]).powi(2) - (c[1] - target[1]).powi(2))
        };
        let (c, _) = optimize_control(
            &score,
            &b,
            &ControlOptimizer::MultiStartLocal { starts: 4, iters: 60 },
            7,
        )
        .unwrap();
        assert!((c[0] - target[0]).abs() < 1e-4 && (c[1] - target[1]).abs() < 1e-4);
    }

    #[test]
    fn multistart_finds_global_mode_of_two_gaussians() {
        let b = unit_box(2);
        let global = [0.25, 0.3];
        let local = [0.75, 0.7];
        let score = |c: &Vector<f64>| -> Result<f64> {
            let d1 = (c[0] - global[0]).powi(2) + (c[1] - global[1]).powi(2);
            let d2 = (c[0] - local[0]).powi(2) + (c[1] - local[1]).powi(2);
            Ok((-d1 / 0.05).exp() + 0.7 * (-d2 / 0.05).exp())
        };
        let mut hits = 0;
        for seed in 0..100u64 {
            let (c, _) = optimize_control(
                &score,
                &b,
                &ControlOptimizer::MultiStartLocal { starts: 8, iters: 60 },
                seed,
            )
            .unwrap();
            let dist = ((c[0] - global[0]).powi(2) + (c[1] - global[1]).powi(2)).sqrt();
            if dist < 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "global mode found in only {hits}/100 runs");
    }

    #[test]
    fn sampled_controls_stay_inside_the_box() {
        let b = ControlBox::new(vec![-1.0, 0.5], vec![1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(b.contains(&b.sample(&mut rng)));
        }
        for c in b.grid(5) {
            assert!(b.contains(&c));
        }
        let outside = Vector::new(vec![5.0, -3.0]);
        assert!(b.contains(&b.clip(&outside)));
    }

    #[test]
    fn random_sessions_are_reproducible() {
        // Covered end to end in the integration tests; here only the seeded
        // control draw itself.
        let b = unit_box(1);
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample(&mut rng)[0]
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }
}
