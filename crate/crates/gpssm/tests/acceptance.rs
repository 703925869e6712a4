//! Acceptance suite: every release-gating property in one sequential run,
//! printing one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p gpssm --test acceptance -- --nocapture` to see
//! the per-criterion lines and measured values.

mod support;

use std::time::Instant;

use gpssm::acquisition::Criterion;
use gpssm::elbo::{elbo, elbo_with_grad, train, TrainConfig};
use gpssm::harness::{run_experiment, ExperimentConfig};
use gpssm::kernels::{AugmentedInput, KernelFamily, KernelSpec};
use gpssm::mi::latest::{latest_mi, MomentBelief, MomentPropagator};
use gpssm::mi::total::total_mi;
use gpssm::model::{GpssmModel, InducingSet, SparsePosterior, VariationalChain};
use gpssm::numerics::{GaussianDist, Matrix, Vector};
use gpssm::params::{ParamLayout, ParamMask};
use gpssm::systems::{
    cartpole_deriv, pendulum_deriv, rk4_step, tras_m_v1, CartPoleParams, PendulumParams,
    SystemKind, TrasParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use support::LinearSsm;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn random_se_model(rng: &mut ChaCha8Rng, d_x: usize) -> GpssmModel<f64> {
    let d_in = d_x + 1;
    let kernels: Vec<KernelSpec<f64>> = (0..d_x)
        .map(|_| {
            KernelSpec::new(
                KernelFamily::SquaredExponential,
                rng.gen_range(0.3..1.5),
                Vector::from_fn(d_in, |_| rng.gen_range(0.6..1.8)),
            )
        })
        .collect();
    let m = 5;
    let locations: Vec<AugmentedInput<f64>> = (0..m)
        .map(|_| {
            AugmentedInput::from_concat(
                Vector::from_fn(d_in, |i| {
                    if i < d_x {
                        rng.gen_range(-1.5..1.5)
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                }),
                d_x,
            )
        })
        .collect();
    let mut mean = Vec::new();
    let mut cov_chol = Vec::new();
    for dim in 0..d_x {
        mean.push(Vector::from_fn(m, |i| locations[i].full()[dim] + rng.gen_range(-0.8..0.8)));
        let kzz = gpssm::kernels::gram(&kernels[dim], &locations, &locations).unwrap();
        // Shrink q(u) towards confident-but-not-degenerate.
        cov_chol.push(kzz.cholesky().unwrap().scale(rng.gen_range(0.2..0.7)));
    }
    GpssmModel {
        d_x,
        d_y: d_x,
        d_c: 1,
        kernels,
        emission: Matrix::identity(d_x),
        offset: Vector::zeros(d_x),
        process_noise: Vector::from_fn(d_x, |_| rng.gen_range(0.005..0.05)),
        obs_noise: Vector::from_fn(d_x, |_| rng.gen_range(0.01..0.2)),
        x0_prior: GaussianDist::isotropic(Vector::from_fn(d_x, |_| rng.gen_range(-0.5..0.5)), 0.2),
        x0_q_mean: Vector::zeros(d_x),
        x0_q_std: Vector::from_fn(d_x, |_| 1.0),
        inducing: InducingSet { locations, mean, cov_chol },
    }
}

/// 1. Moment propagation against brute-force Monte Carlo.
fn criterion_moment_matching_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let samples = 1_000_000usize;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for case in 0..20 {
        let d_x = if case % 2 == 0 { 1 } else { 2 };
        let mut model = random_se_model(&mut rng, d_x);
        let prop = MomentPropagator::new(&model, 16).unwrap();
        let control = Vector::new(vec![rng.gen_range(0.0..1.0)]);
        // Alternate between the initial belief (integrating the x0 prior)
        // and one recursion step (integrating belief variance plus Q).
        let (next, input_mean, input_sd);
        if case % 4 < 2 {
            let belief = MomentBelief {
                step: 1,
                mean: Vector::from_fn(d_x, |_| rng.gen_range(-0.8..0.8)),
                var: Vector::from_fn(d_x, |_| rng.gen_range(0.02..0.3)),
            };
            next = prop.propagate(&belief, &control).unwrap();
            input_sd =
                Vector::from_fn(d_x, |i| (belief.var[i] + model.process_noise[i]).sqrt());
            input_mean = belief.mean;
        } else {
            model.x0_prior = GaussianDist::isotropic(
                Vector::from_fn(d_x, |_| rng.gen_range(-0.8..0.8)),
                rng.gen_range(0.02..0.3),
            );
            let prop = MomentPropagator::new(&model, 16).unwrap();
            next = prop.init_belief(&control).unwrap();
            input_sd = Vector::from_fn(d_x, |i| model.x0_prior.cov[(i, i)].sqrt());
            input_mean = model.x0_prior.mean.clone();
        }

        // Monte-Carlo pushforward of the same input distribution.
        let posterior = SparsePosterior::build(&model).unwrap();
        let mut sum_mean = vec![0.0; d_x];
        let mut sum_mean_sq = vec![0.0; d_x];
        let mut sum_second = vec![0.0; d_x];
        let mut cross = vec![0.0; d_x];
        let mut second_sq = vec![0.0; d_x];
        for _ in 0..samples {
            let x = Vector::from_fn(d_x, |i| {
                input_mean[i] + input_sd[i] * rng.sample::<f64, _>(StandardNormal)
            });
            let input = AugmentedInput::new(&x, &control);
            for dim in 0..d_x {
                let (mean, var) = posterior.predict_dim_at(dim, &input, &model.inducing.locations);
                let second = var + mean * mean;
                sum_mean[dim] += mean;
                sum_mean_sq[dim] += mean * mean;
                sum_second[dim] += second;
                second_sq[dim] += second * second;
                cross[dim] += second * mean;
            }
        }
        let n = samples as f64;
        for dim in 0..d_x {
            let mc_mean = sum_mean[dim] / n;
            let mc_second = sum_second[dim] / n;
            let mc_var = mc_second - mc_mean * mc_mean;
            let se_mean = ((sum_mean_sq[dim] / n - mc_mean * mc_mean).max(0.0) / n).sqrt();
            let dev_mean = (next.mean[dim] - mc_mean).abs() / se_mean.max(1e-300);
            // Delta-method standard error of second - mean^2.
            let var_second = (second_sq[dim] / n - mc_second * mc_second).max(0.0);
            let cov_sm = cross[dim] / n - mc_second * mc_mean;
            let var_mean = (sum_mean_sq[dim] / n - mc_mean * mc_mean).max(0.0);
            let se_var = ((var_second - 4.0 * mc_mean * cov_sm + 4.0 * mc_mean * mc_mean * var_mean)
                .max(0.0)
                / n)
                .sqrt();
            let dev_var = (next.var[dim] - mc_var).abs() / se_var.max(1e-300);
            worst = worst.max(dev_mean).max(dev_var);
            checked += 2;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    Outcome {
        name: "1 moment-matching vs monte carlo",
        pass: worst < 3.0 && elapsed < 60.0,
        detail: format!("{checked} moments, worst dev {worst:.2} se, {elapsed:.1}s"),
    }
}

/// 2. Exact linear degeneracy of one propagation step.
fn criterion_exact_linear() -> Outcome {
    let z = [-1.0, 0.0, 1.0];
    let kernel = KernelSpec::isotropic(KernelFamily::SquaredExponential, 1e-14, 1.0, 2);
    let locations: Vec<AugmentedInput<f64>> = z
        .iter()
        .map(|&v| AugmentedInput::from_concat(Vector::new(vec![v, 0.0]), 1))
        .collect();
    let kzz = gpssm::kernels::gram(&kernel, &locations, &locations).unwrap();
    let model = GpssmModel {
        d_x: 1,
        d_y: 1,
        d_c: 1,
        kernels: vec![kernel],
        emission: Matrix::identity(1),
        offset: Vector::zeros(1),
        process_noise: Vector::new(vec![0.02]),
        obs_noise: Vector::new(vec![0.1]),
        x0_prior: GaussianDist::isotropic(Vector::new(vec![0.4]), 0.09),
        x0_q_mean: Vector::new(vec![0.4]),
        x0_q_std: Vector::new(vec![0.3]),
        inducing: InducingSet {
            locations: locations.clone(),
            mean: vec![Vector::new(z.to_vec())],
            cov_chol: vec![kzz.cholesky().unwrap()],
        },
    };
    let prop = MomentPropagator::new(&model, 16).unwrap();
    let belief = MomentBelief { step: 1, mean: Vector::new(vec![0.4]), var: Vector::new(vec![0.09]) };
    let next = prop.propagate(&belief, &Vector::new(vec![0.7])).unwrap();
    // Identity map through N(u, Sigma + Q): mean u, variance Sigma + Q.
    let mean_err = (next.mean[0] - 0.4).abs();
    let var_err = (next.var[0] - 0.11).abs();
    Outcome {
        name: "2 exact linear degeneracy",
        pass: mean_err < 1e-6 && var_err < 1e-6,
        detail: format!("mean err {mean_err:.2e}, var err {var_err:.2e}"),
    }
}

/// 3. Latest-MI nonnegativity and the sharp-belief zero case.
fn criterion_latmi_nonnegative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut min_value = f64::INFINITY;
    for _ in 0..1000 {
        let d_x = rng.gen_range(1..4);
        let d_y = rng.gen_range(1..=d_x);
        let kernel = KernelSpec::isotropic(KernelFamily::SquaredExponential, 1.0, 1.0, d_x + 1);
        let locations = vec![AugmentedInput::from_concat(Vector::zeros(d_x + 1), d_x)];
        let kzz = gpssm::kernels::gram(&kernel, &locations, &locations).unwrap();
        let model = GpssmModel {
            d_x,
            d_y,
            d_c: 1,
            kernels: vec![kernel.clone(); d_x],
            emission: Matrix::from_fn(d_y, d_x, |_, _| rng.gen_range(-1.0..1.0)),
            offset: Vector::zeros(d_y),
            process_noise: Vector::from_fn(d_x, |_| rng.gen_range(0.001..0.1)),
            obs_noise: Vector::from_fn(d_y, |_| rng.gen_range(0.001..0.5)),
            x0_prior: GaussianDist::isotropic(Vector::zeros(d_x), 1.0),
            x0_q_mean: Vector::zeros(d_x),
            x0_q_std: Vector::from_fn(d_x, |_| 1.0),
            inducing: InducingSet {
                locations: locations.clone(),
                mean: vec![Vector::zeros(1); d_x],
                cov_chol: vec![kzz.cholesky().unwrap(); d_x],
            },
        };
        let belief = MomentBelief {
            step: 1,
            mean: Vector::zeros(d_x),
            var: Vector::from_fn(d_x, |_| rng.gen_range(0.0..2.0)),
        };
        min_value = min_value.min(latest_mi(&model, &belief).unwrap());
        let zero = MomentBelief { step: 1, mean: Vector::zeros(d_x), var: Vector::zeros(d_x) };
        let at_zero = latest_mi(&model, &zero).unwrap();
        if at_zero != 0.0 {
            return Outcome {
                name: "3 latest-mi nonnegativity",
                pass: false,
                detail: format!("zero-belief value {at_zero}"),
            };
        }
    }
    Outcome {
        name: "3 latest-mi nonnegativity",
        pass: min_value >= -1e-10,
        detail: format!("min over 1000 beliefs {min_value:.3e}, zero case exact"),
    }
}

/// 4. Monte-Carlo bound against the Kalman log marginal likelihood.
fn criterion_elbo_bound() -> Outcome {
    let started = Instant::now();
    let ssm = LinearSsm { sigma_f2: 1e-12, q: 1.0, r: 0.1, mu0: 0.0, p0: 0.01, steps: 20 };
    let traj = ssm.simulate(5);
    let logp = ssm.log_marginal(&traj);
    let model = ssm.gpssm(5, 7);
    let chain = VariationalChain::derive(&model, &traj).unwrap();

    // 10^4 samples split into batches to estimate the standard error.
    let batches = 100usize;
    let per_batch = 100usize;
    let values: Vec<f64> = (0..batches)
        .map(|b| elbo(&model, &chain, &traj, per_batch, 900 + b as u64).unwrap().value)
        .collect();
    let mean: f64 = values.iter().sum::<f64>() / batches as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
    let se = sd / (batches as f64).sqrt();
    let bound_ok = mean <= logp + 3.0 * se;

    let cfg = TrainConfig { epochs: 150, mask: ParamMask::variational_only(), seed: 3, ..TrainConfig::default() };
    let trained = train(&model, &traj, &cfg).unwrap().model;
    let chain2 = VariationalChain::derive(&trained, &traj).unwrap();
    let trained_value = elbo(&trained, &chain2, &traj, 10_000, 901).unwrap().value;
    let gap = logp - trained_value;
    let gap_ok = gap <= 0.05 * logp.abs();
    let elapsed = started.elapsed().as_secs_f64();
    Outcome {
        name: "4 elbo vs kalman log-likelihood",
        pass: bound_ok && gap_ok && elapsed < 120.0,
        detail: format!(
            "logp {logp:.3}, mc-elbo {mean:.3} (se {se:.3}), trained gap {gap:.3} = {:.1}% of |logp|, {elapsed:.1}s",
            100.0 * gap / logp.abs()
        ),
    }
}

/// 5. Autodiff gradients against same-seed finite differences.
fn criterion_gradient_check() -> Outcome {
    let system = gpssm::systems::SystemSpec::kink();
    let cfg = ExperimentConfig::for_system(SystemKind::Kink);
    let init = gpssm::harness::generate_initial_data(&system, 6, 21).unwrap();
    let model = gpssm::harness::build_model(&system, &cfg, 21).unwrap();
    let layout = ParamLayout::of(&model);
    let theta = layout.pack(&model);
    let (samples, seed) = (4usize, 77u64);
    let (_, grad) = elbo_with_grad(&layout, &theta, &model, &init.trajectory, samples, seed).unwrap();
    let objective = |theta: &[f64]| -> f64 {
        let m = layout.unpack::<f64>(theta, &model);
        let chain = VariationalChain::derive(&m, &init.trajectory).unwrap();
        elbo(&m, &chain, &init.trajectory, samples, seed).unwrap().value
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let i = rng.gen_range(0..theta.len());
        let h = 1e-5 * (1.0 + theta[i].abs());
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        worst = worst.max((grad[i] - fd).abs() / (1.0 + fd.abs()));
    }
    Outcome {
        name: "5 gradient finite-difference check",
        pass: worst < 1e-4,
        detail: format!("worst relative deviation {worst:.3e}"),
    }
}

/// 6. Sample-based total-MI estimate against the Kalman joint-Gaussian
/// oracle on the linear system.
fn criterion_totmi_oracle() -> Outcome {
    let started = Instant::now();
    let ssm = LinearSsm { sigma_f2: 1e-12, q: 1.0, r: 0.1, mu0: 0.0, p0: 0.01, steps: 20 };
    let traj = ssm.simulate(5);
    let model = ssm.gpssm(5, 7);
    let cfg = TrainConfig { epochs: 150, mask: ParamMask::variational_only(), seed: 3, ..TrainConfig::default() };
    let trained = train(&model, &traj, &cfg).unwrap().model;
    let chain = VariationalChain::derive(&trained, &traj).unwrap();
    let est = total_mi(&trained, &chain, &traj, &Vector::new(vec![0.0]), 10_000, 31).unwrap();
    let se = {
        let mean = est.value;
        let var = est.per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (est.per_sample.len() - 1) as f64;
        (var / est.per_sample.len() as f64).sqrt()
    };
    let realized = ssm.realized_factorized_mi(&traj);
    let rel = (est.value - realized) / realized.abs();
    let elapsed = started.elapsed().as_secs_f64();
    Outcome {
        name: "6 total-mi vs kalman joint oracle",
        pass: rel.abs() <= 0.10 && elapsed < 120.0,
        detail: format!(
            "estimate {:.3} (se {:.3}) vs realized oracle {realized:.3} ({:+.1}%); population oracle {:.3}, exact joint mi {:.3}; {elapsed:.1}s",
            est.value,
            se,
            100.0 * rel,
            ssm.factorized_mi(),
            ssm.true_mi()
        ),
    }
}

/// 7. Physics of the simulators.
fn criterion_physics() -> Outcome {
    let mut failures = Vec::new();

    // Energy drift of the undamped pendulum at dt = 0.01 over 10 s.
    let p = PendulumParams { b: 0.0, ..PendulumParams::default() };
    let energy = |s: &Vector<f64>| 0.5 * p.inertia() * s[1] * s[1] - p.m * p.g * p.l * s[0].cos();
    let mut s = Vector::new(vec![std::f64::consts::FRAC_PI_4, 0.0]);
    let e0 = energy(&s);
    for _ in 0..1000 {
        s = rk4_step(|s| pendulum_deriv(s, 0.0, &p), &s, 0.01).unwrap();
    }
    let drift = (energy(&s) - e0).abs() / e0.abs();
    if drift >= 1e-6 {
        failures.push(format!("energy drift {drift:.2e}"));
    }

    // Fourth-order convergence over a 2 s horizon.
    let solve = |dt: f64| -> Vector<f64> {
        let mut s = Vector::new(vec![std::f64::consts::FRAC_PI_4, 0.0]);
        for _ in 0..(2.0 / dt).round() as usize {
            s = rk4_step(|s| pendulum_deriv(s, 0.0, &p), &s, dt).unwrap();
        }
        s
    };
    let reference = solve(0.0003125);
    let err = |dt: f64| {
        let s = solve(dt);
        ((s[0] - reference[0]).powi(2) + (s[1] - reference[1]).powi(2)).sqrt()
    };
    let ratio = err(0.02) / err(0.01);
    if ratio < 14.0 {
        failures.push(format!("convergence ratio {ratio:.1}"));
    }

    // Hanging cart-pole stays put.
    let cp = CartPoleParams::default();
    let d = cartpole_deriv(&Vector::new(vec![std::f64::consts::PI, 0.0, 0.0, 0.0]), 0.0, &cp);
    let cp_worst = (0..4).map(|i| d[i].abs()).fold(0.0f64, f64::max);
    if cp_worst >= 1e-12 {
        failures.push(format!("cart-pole residual {cp_worst:.2e}"));
    }

    // Zero-voltage gravity equilibrium of the twin rotor.
    let tp = TrasParams::default();
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tras_m_v1(mid, &tp) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let lift = (tp.m_t / 2.0 + tp.m_tr + tp.m_ts) * tp.l_t + (tp.m_m / 2.0 + tp.m_mr + tp.m_ms) * tp.l_m;
    let counter = tp.m_b / 2.0 * tp.l_b + tp.m_cb * tp.l_cb;
    let tras_err = (root - (lift / counter).atan()).abs();
    if tras_err >= 1e-8 {
        failures.push(format!("tras equilibrium err {tras_err:.2e}"));
    }

    Outcome {
        name: "7 simulator physics",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "energy drift {drift:.1e}, rk4 ratio {ratio:.1}, cart-pole residual {cp_worst:.1e}, tras root err {tras_err:.1e}"
            )
        } else {
            failures.join("; ")
        },
    }
}

/// 8. End-to-end orderings: informed selection beats random exploration.
fn criterion_end_to_end() -> (Outcome, Outcome) {
    let run = |system: SystemKind, margin: f64, name: &'static str| -> Outcome {
        let started = Instant::now();
        let mut cfg = ExperimentConfig::for_system(system);
        cfg.criteria = vec![Criterion::Random, Criterion::TotMi];
        cfg.trials = 10;
        cfg.steps = 30;
        cfg.initial_points = 5;
        cfg.seed = 42;
        let output = run_experiment(&cfg).unwrap();
        let final_mean = |criterion: Criterion| -> f64 {
            output
                .aggregate
                .rows
                .iter()
                .find(|r| r.criterion == criterion && r.step == cfg.steps - 1)
                .map(|r| r.mean_rmse)
                .unwrap()
        };
        let random = final_mean(Criterion::Random);
        let totmi = final_mean(Criterion::TotMi);
        let elapsed = started.elapsed().as_secs_f64();
        Outcome {
            name,
            pass: output.all_completed && totmi <= margin * random && elapsed < 1800.0,
            detail: format!(
                "final rmse totmi {totmi:.4} vs random {random:.4} (ratio {:.2}, margin {margin}), {elapsed:.0}s",
                totmi / random
            ),
        }
    };
    (
        run(SystemKind::Kink, 0.90, "8a end-to-end kink ordering"),
        run(SystemKind::Pendulum, 1.00, "8b end-to-end pendulum ordering"),
    )
}

/// 9. Per-step acquisition time: the sample-based criterion must stay
/// cheaper than the recursive one at every step count.
fn criterion_timing() -> Outcome {
    let mut cfg = ExperimentConfig::for_system(SystemKind::Kink);
    cfg.criteria = vec![Criterion::LatMi, Criterion::TotMi];
    cfg.trials = 1;
    cfg.steps = 30;
    cfg.seed = 7;
    let output = run_experiment(&cfg).unwrap();
    let times = |criterion: Criterion| -> Vec<f64> {
        output
            .sessions
            .iter()
            .find(|t| t.session.criterion == criterion)
            .unwrap()
            .session
            .records
            .iter()
            .map(|r| r.acq_seconds)
            .collect()
    };
    let lat = times(Criterion::LatMi);
    let tot = times(Criterion::TotMi);
    let violations = lat.iter().zip(&tot).filter(|(l, t)| t >= l).count();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Outcome {
        name: "9 acquisition timing ordering",
        pass: violations == 0,
        detail: format!(
            "totmi slower on {violations}/30 steps; mean acq totmi {:.1}ms vs latmi {:.1}ms",
            1e3 * mean(&tot),
            1e3 * mean(&lat)
        ),
    }
}

/// 10. Byte-identical reruns, wall-clock columns excluded.
fn criterion_determinism() -> Outcome {
    let mut cfg = ExperimentConfig::for_system(SystemKind::Kink);
    cfg.criteria = vec![Criterion::Random, Criterion::TotMi];
    cfg.trials = 2;
    cfg.steps = 4;
    cfg.epochs = 25;
    cfg.num_inducing = 8;
    cfg.seed = 9;
    let dir_a = std::env::temp_dir().join(format!("gpssm_acc_a_{}", std::process::id()));
    let dir_b = std::env::temp_dir().join(format!("gpssm_acc_b_{}", std::process::id()));
    gpssm::harness::emit_experiment_csvs(&run_experiment(&cfg).unwrap(), &dir_a).unwrap();
    gpssm::harness::emit_experiment_csvs(&run_experiment(&cfg).unwrap(), &dir_b).unwrap();
    let strip_wall_clock = |text: &str| -> String {
        let mut drop = Vec::new();
        let mut out = String::new();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if i == 0 {
                drop = fields
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f.contains("seconds"))
                    .map(|(idx, _)| idx)
                    .collect();
            }
            let kept: Vec<&str> = fields
                .iter()
                .enumerate()
                .filter(|(idx, _)| !drop.contains(idx))
                .map(|(_, f)| *f)
                .collect();
            out.push_str(&kept.join(","));
            out.push('\n');
        }
        out
    };
    let mut names: Vec<String> = std::fs::read_dir(&dir_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut identical = true;
    for name in &names {
        let a = std::fs::read_to_string(dir_a.join(name)).unwrap();
        let b = std::fs::read_to_string(dir_b.join(name)).unwrap();
        identical &= strip_wall_clock(&a) == strip_wall_clock(&b);
    }
    let _ = std::fs::remove_dir_all(&dir_a);
    let _ = std::fs::remove_dir_all(&dir_b);
    Outcome {
        name: "10 determinism of rerun outputs",
        pass: identical && names.len() > 2,
        detail: format!("{} files compared (wall-clock columns excluded)", names.len()),
    }
}

#[test]
fn acceptance_criteria() {
    let outcomes = vec![
        criterion_moment_matching_oracle(),
        criterion_exact_linear(),
        criterion_latmi_nonnegative(),
        criterion_elbo_bound(),
        criterion_gradient_check(),
        criterion_totmi_oracle(),
        criterion_physics(),
        {
            let (a, b) = criterion_end_to_end();
            println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
            println!("{} {}: {}", if b.pass { "PASS" } else { "FAIL" }, b.name, b.detail);
            let pass = a.pass && b.pass;
            Outcome {
                name: "8 end-to-end orderings",
                pass,
                detail: "see 8a/8b above".into(),
            }
        },
        criterion_timing(),
        criterion_determinism(),
    ];
    let mut failed = Vec::new();
    for o in &outcomes {
        if o.name.starts_with("8 ") {
            continue; // already printed per sub-criterion
        }
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    for o in &outcomes {
        if !o.pass {
            failed.push(format!("{}: {}", o.name, o.detail));
        }
    }
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
