//! Ground-truth simulators: the kink map, a torque-driven pendulum, the
//! cart-pole with track and joint friction, and a twin-rotor aerodynamical
//! system (TRAS) driven by two motor voltages. Continuous systems are
//! integrated with classical Runge-Kutta under zero-order-hold controls.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::acquisition::ControlBox;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

pub const GRAVITY: f64 = 9.81;

/// The modified kink map. The latent state equals the observation.
pub fn kink_next(y: f64, c: f64) -> f64 {
    c + (y + 0.2) * (1.0 - 5.0 / (1.0 + (-2.0 * y).exp()))
}

#[derive(Clone, Copy, Debug)]
pub struct PendulumParams {
    pub g: f64,
    pub m: f64,
    pub l: f64,
    pub b: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams { g: GRAVITY, m: 0.1, l: 1.0, b: 0.05 }
    }
}

impl PendulumParams {
    pub fn inertia(&self) -> f64 {
        self.m * self.l * self.l
    }
}

/// State (theta, theta_dot), control torque.
pub fn pendulum_deriv(s: &Vector<f64>, c: f64, p: &PendulumParams) -> Vector<f64> {
    let theta = s[0];
    let theta_dot = s[1];
    let accel = (-p.b * theta_dot - p.m * p.g * p.l * theta.sin() + c) / p.inertia();
    Vector::new(vec![theta_dot, accel])
}

#[derive(Clone, Copy, Debug)]
pub struct CartPoleParams {
    pub g: f64,
    pub m_p: f64,
    pub m_c: f64,
    pub l: f64,
    pub mu_c: f64,
    pub mu_p: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams { g: GRAVITY, m_p: 0.1, m_c: 0.5, l: 0.5, mu_c: 0.05, mu_p: 0.01 }
    }
}

fn cartpole_theta_accel(s: &Vector<f64>, c: f64, p: &CartPoleParams, friction_sign: f64) -> f64 {
    let (theta, theta_dot) = (s[0], s[1]);
    let total = p.m_c + p.m_p;
    let numerator = p.g * theta.sin()
        + theta.cos()
            * ((-c - p.m_p * p.l * theta_dot * theta_dot
                * (theta.sin() + p.mu_c * friction_sign * theta.cos()))
                / total
                + p.mu_c * p.g * friction_sign)
        - p.mu_p * theta_dot / (p.m_p * p.l);
    let denominator =
        p.l * (4.0 / 3.0 - p.m_p * theta.cos() / total * (theta.cos() - p.mu_c * friction_sign));
    numerator / denominator
}

fn cartpole_normal_force(s: &Vector<f64>, theta_accel: f64, p: &CartPoleParams) -> f64 {
    let (theta, theta_dot) = (s[0], s[1]);
    (p.m_c + p.m_p) * p.g
        - p.m_p * p.l * (theta_accel * theta.sin() + theta_dot * theta_dot * theta.cos())
}

/// State (theta, theta_dot, x, x_dot), control force on the cart.
///
/// The normal force appears inside `sgn(N_c x_dot)` while depending on the
/// angular acceleration; its sign is first assumed non-negative, then the
/// acceleration is recomputed once if the computed force flips it.
pub fn cartpole_deriv(s: &Vector<f64>, c: f64, p: &CartPoleParams) -> Vector<f64> {
    let x_dot = s[3];
    let mut sign = x_dot.signum() * if x_dot == 0.0 { 0.0 } else { 1.0 };
    let mut theta_accel = cartpole_theta_accel(s, c, p, sign);
    let mut n_c = cartpole_normal_force(s, theta_accel, p);
    if n_c < 0.0 {
        sign = -sign;
        theta_accel = cartpole_theta_accel(s, c, p, sign);
        n_c = cartpole_normal_force(s, theta_accel, p);
    }
    let total = p.m_c + p.m_p;
    let x_accel = (c
        + p.m_p * p.l * (s[1] * s[1] * s[0].sin() - theta_accel * s[0].cos())
        - p.mu_c * n_c * sign)
        / total;
    Vector::new(vec![s[1], theta_accel, x_dot, x_accel])
}

/// All physical constants of the twin-rotor rig.
#[derive(Clone, Copy, Debug)]
pub struct TrasParams {
    pub g: f64,
    pub m_m: f64,
    pub m_mr: f64,
    pub m_ms: f64,
    pub m_t: f64,
    pub m_tr: f64,
    pub m_ts: f64,
    pub m_b: f64,
    pub m_cb: f64,
    pub l_m: f64,
    pub l_t: f64,
    pub l_b: f64,
    pub l_cb: f64,
    pub r_ms: f64,
    pub r_ts: f64,
    pub k_fv: f64,
    pub k_fh: f64,
    pub k_hv: f64,
    pub k_vh: f64,
    pub a_1: f64,
    pub a_2: f64,
}

impl Default for TrasParams {
    fn default() -> Self {
        TrasParams {
            g: GRAVITY,
            m_m: 0.029,
            m_mr: 0.199,
            m_ms: 0.083,
            m_t: 0.031,
            m_tr: 0.154,
            m_ts: 0.061,
            m_b: 0.011,
            m_cb: 0.024,
            l_m: 0.202,
            l_t: 0.216,
            l_b: 0.15,
            l_cb: 0.15,
            r_ms: 0.145,
            r_ts: 0.1,
            k_fv: 0.013,
            k_fh: 0.006,
            k_hv: 0.004,
            k_vh: -0.018,
            a_1: 0.001,
            a_2: 0.01,
        }
    }
}

/// The printed quadratic coefficient of the tail-rotor speed polynomial.
/// The source typesets it as "- 3 + 10^2 c^2"; the neighbouring terms all
/// follow coefficient-times-power form, so it is read as -3e2 * c^2.
pub const OMEGA_H_QUADRATIC_COEFF: f64 = -3.0e2;

/// Main-rotor angular velocity as a function of its supply voltage.
pub fn tras_omega_v(c_v: f64) -> f64 {
    -5.2e3 * c_v.powi(7) - 1.1e2 * c_v.powi(6) + 1.1e4 * c_v.powi(5) - 1.3e2 * c_v.powi(4)
        - 9.2e3 * c_v.powi(3)
        - 31.0 * c_v.powi(2)
        + 6.1e3 * c_v
        - 4.5
}

/// Main-rotor propulsive force as a function of its angular velocity.
pub fn tras_force_v(omega: f64) -> f64 {
    -1.8e-18 * omega.powi(5) - 7.8e-16 * omega.powi(4) + 4.1e-11 * omega.powi(3)
        + 2.7e-8 * omega.powi(2)
        + 3.5e-5 * omega
        - 0.014
}

/// Tail-rotor angular velocity as a function of its supply voltage.
pub fn tras_omega_h(c_h: f64) -> f64 {
    2.2e3 * c_h.powi(5) - 1.7e2 * c_h.powi(4) - 4.5e3 * c_h.powi(3)
        + OMEGA_H_QUADRATIC_COEFF * c_h.powi(2)
        + 9.8e3 * c_h
        - 9.2
}

/// Tail-rotor propulsive force as a function of its angular velocity.
pub fn tras_force_h(omega: f64) -> f64 {
    -2.6e-20 * omega.powi(5) + 4.1e-17 * omega.powi(4) + 3.2e-12 * omega.powi(3)
        - 7.3e-9 * omega.powi(2)
        + 2.1e-5 * omega
        - 0.0091
}

/// Return torque from gravity in the vertical plane.
pub fn tras_m_v1(alpha_v: f64, p: &TrasParams) -> f64 {
    let lift = (p.m_t / 2.0 + p.m_tr + p.m_ts) * p.l_t + (p.m_m / 2.0 + p.m_mr + p.m_ms) * p.l_m;
    let counter = p.m_b / 2.0 * p.l_b + p.m_cb * p.l_cb;
    p.g * (lift * alpha_v.cos() - counter * alpha_v.sin())
}

/// The six vertical and four horizontal moment components plus the two
/// moments of inertia, exposed for diagnostics and tests.
pub struct TrasMoments {
    pub m_v: [f64; 6],
    pub m_h: [f64; 4],
    pub j_v: f64,
    pub j_h: f64,
}

pub fn tras_moments(s: &Vector<f64>, c: &Vector<f64>, p: &TrasParams) -> TrasMoments {
    let (alpha_v, alpha_v_dot, _alpha_h, alpha_h_dot) = (s[0], s[1], s[2], s[3]);
    let (c_v, c_h) = (c[0], c[1]);
    let omega_v = tras_omega_v(c_v);
    let omega_h = tras_omega_h(c_h);

    let m_v1 = tras_m_v1(alpha_v, p);
    let m_v2 = p.l_m * tras_force_v(omega_v);
    let m_v3 = -alpha_h_dot * alpha_h_dot
        * ((p.m_m / 2.0 + p.m_mr + p.m_ms)
            + (p.m_t / 2.0 + p.m_tr + p.m_ts)
            + p.m_cb * p.l_cb
            + p.m_b / 2.0 * p.l_b)
        * alpha_v.sin()
        * alpha_v.cos();
    let m_v4 = -alpha_v_dot * p.k_fv;
    let m_v5 = -c_h * p.k_hv;
    let m_v6 = -p.a_1 * alpha_v_dot * omega_v.abs();

    let j_v = p.m_mr * p.l_m * p.l_m
        + p.m_m * p.l_m * p.l_m / 3.0
        + p.m_cb * p.l_cb * p.l_cb
        + p.m_b * p.l_b * p.l_b / 3.0
        + p.m_tr * p.l_t * p.l_t
        + p.m_t * p.l_t * p.l_t / 3.0
        + p.m_ms / 2.0 * p.r_ms * p.r_ms
        + p.m_ms * p.l_m * p.l_m
        + p.m_ts * p.r_ts * p.r_ts
        + p.m_ts * p.l_t * p.l_t;

    let m_h1 = p.l_t * tras_force_h(omega_h) * alpha_v.cos();
    let m_h2 = -alpha_h_dot * p.k_fh;
    let m_h3 = c_v * p.k_vh;
    let m_h4 = -p.a_2 * alpha_h_dot * omega_h.abs();

    let cos_v = alpha_v.cos();
    let sin_v = alpha_v.sin();
    let j_h = p.m_m / 3.0 * (p.l_m * cos_v).powi(2)
        + p.m_t / 3.0 * (p.l_t * cos_v).powi(2)
        + p.m_b / 3.0 * (p.l_b * sin_v).powi(2)
        + p.m_tr * (p.l_t * cos_v).powi(2)
        + p.m_mr * (p.l_m * cos_v).powi(2)
        + p.m_cb * (p.l_cb * sin_v).powi(2)
        + p.m_ts / 2.0 * p.r_ts * p.r_ts
        + p.m_ts * (p.l_t * cos_v).powi(2)
        + p.m_ms * p.r_ms * p.r_ms
        + p.m_ms * (p.l_m * cos_v).powi(2);

    TrasMoments { m_v: [m_v1, m_v2, m_v3, m_v4, m_v5, m_v6], m_h: [m_h1, m_h2, m_h3, m_h4], j_v, j_h }
}

/// State (alpha_v, alpha_v_dot, alpha_h, alpha_h_dot), controls (c_v, c_h).
pub fn tras_deriv(s: &Vector<f64>, c: &Vector<f64>, p: &TrasParams) -> Vector<f64> {
    let m = tras_moments(s, c, p);
    let m_v: f64 = m.m_v.iter().sum();
    let m_h: f64 = m.m_h.iter().sum();
    Vector::new(vec![s[1], m_v / m.j_v, s[3], m_h / m.j_h])
}

/// Classical 4th-order Runge-Kutta step with the control held constant.
pub fn rk4_step(
    deriv: impl Fn(&Vector<f64>) -> Vector<f64>,
    state: &Vector<f64>,
    dt: f64,
) -> Result<Vector<f64>> {
    let k1 = deriv(state);
    let k2 = deriv(&state.add(&k1.scale(dt / 2.0)));
    let k3 = deriv(&state.add(&k2.scale(dt / 2.0)));
    let k4 = deriv(&state.add(&k3.scale(dt)));
    let next = Vector::from_fn(state.len(), |i| {
        state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    });
    if !next.all_finite() {
        return Err(Error::NonFiniteState);
    }
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    Kink,
    Pendulum,
    CartPole,
    Tras,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Kink => "kink",
            SystemKind::Pendulum => "pendulum",
            SystemKind::CartPole => "cartpole",
            SystemKind::Tras => "tras",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kink" => Ok(SystemKind::Kink),
            "pendulum" => Ok(SystemKind::Pendulum),
            "cartpole" | "cart-pole" | "cart_pole" => Ok(SystemKind::CartPole),
            "tras" => Ok(SystemKind::Tras),
            other => Err(Error::Config(format!("unknown system `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum SystemParams {
    Kink,
    Pendulum(PendulumParams),
    CartPole(CartPoleParams),
    Tras(TrasParams),
}

/// A simulated system: dimensions, dynamics parameters, observation map,
/// noise, and the state/control region used for evaluation.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub d_x: usize,
    pub d_y: usize,
    pub d_c: usize,
    /// Per-state-dimension bounds of the evaluation lattice.
    pub state_bounds: Vec<(f64, f64)>,
    pub control_box: ControlBox,
    /// Control-hold period in seconds (ignored by the discrete kink map).
    pub dt: f64,
    /// Runge-Kutta substeps per control period.
    pub substeps: usize,
    pub params: SystemParams,
    pub obs_noise_std: Vec<f64>,
    /// Indices of the observed state components.
    pub obs_indices: Vec<usize>,
    pub init_state: Vector<f64>,
}

impl SystemSpec {
    pub fn kink() -> Self {
        SystemSpec {
            kind: SystemKind::Kink,
            d_x: 1,
            d_y: 1,
            d_c: 1,
            state_bounds: vec![(-3.0, 1.1)],
            control_box: ControlBox::new(vec![0.0], vec![1.0]).unwrap(),
            dt: 1.0,
            substeps: 1,
            params: SystemParams::Kink,
            obs_noise_std: vec![0.01],
            obs_indices: vec![0],
            init_state: Vector::zeros(1),
        }
    }

    pub fn pendulum() -> Self {
        SystemSpec {
            kind: SystemKind::Pendulum,
            d_x: 2,
            d_y: 1,
            d_c: 1,
            state_bounds: vec![(-std::f64::consts::PI, std::f64::consts::PI), (-1.0, 1.0)],
            control_box: ControlBox::new(vec![-1.0], vec![1.0]).unwrap(),
            dt: 0.05,
            substeps: 1,
            params: SystemParams::Pendulum(PendulumParams::default()),
            obs_noise_std: vec![0.005],
            obs_indices: vec![0],
            init_state: Vector::zeros(2),
        }
    }

    pub fn cartpole() -> Self {
        SystemSpec {
            kind: SystemKind::CartPole,
            d_x: 4,
            d_y: 2,
            d_c: 1,
            state_bounds: vec![
                (-std::f64::consts::PI, std::f64::consts::PI),
                (-4.0, 4.0),
                (-2.0, 2.0),
                (-3.0, 3.0),
            ],
            control_box: ControlBox::new(vec![-5.0], vec![5.0]).unwrap(),
            dt: 0.05,
            substeps: 1,
            params: SystemParams::CartPole(CartPoleParams::default()),
            obs_noise_std: vec![0.005, 0.005],
            obs_indices: vec![0, 2],
            // Hanging pole (theta = pi points down in this convention).
            init_state: Vector::new(vec![std::f64::consts::PI, 0.0, 0.0, 0.0]),
        }
    }

    pub fn tras() -> Self {
        SystemSpec {
            kind: SystemKind::Tras,
            d_x: 4,
            d_y: 2,
            d_c: 2,
            state_bounds: vec![
                (-std::f64::consts::PI, std::f64::consts::PI),
                (-5.0, 5.0),
                (-std::f64::consts::PI, std::f64::consts::PI),
                (-3.0, 3.0),
            ],
            control_box: ControlBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            dt: 0.02,
            substeps: 1,
            params: SystemParams::Tras(TrasParams::default()),
            obs_noise_std: vec![0.005, 0.005],
            obs_indices: vec![0, 2],
            init_state: Vector::zeros(4),
        }
    }

    pub fn by_kind(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Kink => SystemSpec::kink(),
            SystemKind::Pendulum => SystemSpec::pendulum(),
            SystemKind::CartPole => SystemSpec::cartpole(),
            SystemKind::Tras => SystemSpec::tras(),
        }
    }

    /// The fixed linear observation map (selector matrix, zero offset).
    pub fn emission(&self) -> (Matrix<f64>, Vector<f64>) {
        let mut c = Matrix::zeros(self.d_y, self.d_x);
        for (row, &idx) in self.obs_indices.iter().enumerate() {
            c[(row, idx)] = 1.0;
        }
        (c, Vector::zeros(self.d_y))
    }

    /// Advances the true system by one control period.
    pub fn step(&self, state: &Vector<f64>, control: &Vector<f64>) -> Result<Vector<f64>> {
        match &self.params {
            SystemParams::Kink => Ok(Vector::new(vec![kink_next(state[0], control[0])])),
            SystemParams::Pendulum(p) => {
                let mut s = state.clone();
                let h = self.dt / self.substeps as f64;
                for _ in 0..self.substeps {
                    s = rk4_step(|s| pendulum_deriv(s, control[0], p), &s, h)?;
                }
                Ok(s)
            }
            SystemParams::CartPole(p) => {
                let mut s = state.clone();
                let h = self.dt / self.substeps as f64;
                for _ in 0..self.substeps {
                    s = rk4_step(|s| cartpole_deriv(s, control[0], p), &s, h)?;
                }
                Ok(s)
            }
            SystemParams::Tras(p) => {
                let mut s = state.clone();
                let h = self.dt / self.substeps as f64;
                for _ in 0..self.substeps {
                    s = rk4_step(|s| tras_deriv(s, control, p), &s, h)?;
                }
                Ok(s)
            }
        }
    }

    /// Noiseless observation: selection of the observed components.
    pub fn observe_noiseless(&self, state: &Vector<f64>) -> Vector<f64> {
        Vector::from_fn(self.d_y, |i| state[self.obs_indices[i]])
    }

    /// Observation with the configured Gaussian noise.
    pub fn observe(&self, state: &Vector<f64>, rng: &mut impl Rng) -> Vector<f64> {
        Vector::from_fn(self.d_y, |i| {
            state[self.obs_indices[i]] + self.obs_noise_std[i] * rng.sample::<f64, _>(StandardNormal)
        })
    }

    /// Named dynamics parameters, matching the key-value file format.
    pub fn params_map(&self) -> std::collections::BTreeMap<String, f64> {
        let mut map = std::collections::BTreeMap::new();
        match &self.params {
            SystemParams::Kink => {}
            SystemParams::Pendulum(p) => {
                map.insert("g".into(), p.g);
                map.insert("m".into(), p.m);
                map.insert("l".into(), p.l);
                map.insert("b".into(), p.b);
            }
            SystemParams::CartPole(p) => {
                map.insert("g".into(), p.g);
                map.insert("m_p".into(), p.m_p);
                map.insert("m_c".into(), p.m_c);
                map.insert("l".into(), p.l);
                map.insert("mu_c".into(), p.mu_c);
                map.insert("mu_p".into(), p.mu_p);
            }
            SystemParams::Tras(p) => {
                for (k, v) in [
                    ("g", p.g),
                    ("m_m", p.m_m),
                    ("m_mr", p.m_mr),
                    ("m_ms", p.m_ms),
                    ("m_t", p.m_t),
                    ("m_tr", p.m_tr),
                    ("m_ts", p.m_ts),
                    ("m_b", p.m_b),
                    ("m_cb", p.m_cb),
                    ("l_m", p.l_m),
                    ("l_t", p.l_t),
                    ("l_b", p.l_b),
                    ("l_cb", p.l_cb),
                    ("r_ms", p.r_ms),
                    ("r_ts", p.r_ts),
                    ("k_fv", p.k_fv),
                    ("k_fh", p.k_fh),
                    ("k_hv", p.k_hv),
                    ("k_vh", p.k_vh),
                    ("a_1", p.a_1),
                    ("a_2", p.a_2),
                ] {
                    map.insert(k.into(), v);
                }
            }
        }
        map
    }

    /// Serializes the dynamics parameters as `name = value` lines.
    pub fn params_to_key_values(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.params_map() {
            out.push_str(&format!("{k} = {v:?}\n"));
        }
        out
    }

    /// Overrides dynamics parameters from `name = value` lines.
    pub fn apply_params_text(&mut self, text: &str) -> Result<()> {
        let mut map = self.params_map();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("params line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("params line {}: bad float", lineno + 1)))?;
            if !map.contains_key(&key) {
                return Err(Error::Config(format!(
                    "unknown parameter `{key}` for system `{}`",
                    self.kind.name()
                )));
            }
            map.insert(key, value);
        }
        let get = |k: &str| map[k];
        self.params = match self.kind {
            SystemKind::Kink => SystemParams::Kink,
            SystemKind::Pendulum => SystemParams::Pendulum(PendulumParams {
                g: get("g"),
                m: get("m"),
                l: get("l"),
                b: get("b"),
            }),
            SystemKind::CartPole => SystemParams::CartPole(CartPoleParams {
                g: get("g"),
                m_p: get("m_p"),
                m_c: get("m_c"),
                l: get("l"),
                mu_c: get("mu_c"),
                mu_p: get("mu_p"),
            }),
            SystemKind::Tras => SystemParams::Tras(TrasParams {
                g: get("g"),
                m_m: get("m_m"),
                m_mr: get("m_mr"),
                m_ms: get("m_ms"),
                m_t: get("m_t"),
                m_tr: get("m_tr"),
                m_ts: get("m_ts"),
                m_b: get("m_b"),
                m_cb: get("m_cb"),
                l_m: get("l_m"),
                l_t: get("l_t"),
                l_b: get("l_b"),
                l_cb: get("l_cb"),
                r_ms: get("r_ms"),
                r_ts: get("r_ts"),
                k_fv: get("k_fv"),
                k_fh: get("k_fh"),
                k_hv: get("k_hv"),
                k_vh: get("k_vh"),
                a_1: get("a_1"),
                a_2: get("a_2"),
            }),
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kink_values() {
        assert_eq!(kink_next(-0.2, 0.0), 0.0);
        assert!((kink_next(0.0, 0.0) - (-0.3)).abs() < 1e-15);
        assert!((kink_next(0.0, 1.0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn pendulum_equilibrium_and_analytic_acceleration() {
        let p = PendulumParams::default();
        let rest = pendulum_deriv(&Vector::zeros(2), 0.0, &p);
        assert_eq!(rest[0], 0.0);
        assert_eq!(rest[1], 0.0);

        let horizontal = pendulum_deriv(
            &Vector::new(vec![std::f64::consts::FRAC_PI_2, 0.0]),
            0.0,
            &p,
        );
        assert!((horizontal[1] + 9.81).abs() < 1e-12);

        // Torque balancing gravity freezes the angular acceleration.
        let theta = 0.7f64;
        let balance = p.m * p.g * p.l * theta.sin();
        let balanced = pendulum_deriv(&Vector::new(vec![theta, 0.0]), balance, &p);
        assert!(balanced[1].abs() < 1e-12);
    }

    #[test]
    fn cartpole_hanging_equilibrium_is_stationary() {
        let p = CartPoleParams::default();
        let hanging = Vector::new(vec![std::f64::consts::PI, 0.0, 0.0, 0.0]);
        let d = cartpole_deriv(&hanging, 0.0, &p);
        for i in 0..4 {
            assert!(d[i].abs() < 1e-12, "component {i}: {}", d[i]);
        }
    }

    #[test]
    fn cartpole_frictionless_upright_is_stationary() {
        let p = CartPoleParams { mu_c: 0.0, mu_p: 0.0, ..CartPoleParams::default() };
        let d = cartpole_deriv(&Vector::zeros(4), 0.0, &p);
        for i in 0..4 {
            assert!(d[i].abs() < 1e-14);
        }
    }

    #[test]
    fn cartpole_matches_frictionless_formula() {
        // Independent implementation of the standard frictionless cart-pole.
        let p = CartPoleParams { mu_c: 0.0, mu_p: 0.0, ..CartPoleParams::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let s = Vector::new(vec![
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-2.0..2.0),
            ]);
            let c: f64 = rng.gen_range(-5.0..5.0);
            let total = p.m_c + p.m_p;
            let theta = s[0];
            let theta_dot = s[1];
            let expected_theta_accel = (p.g * theta.sin()
                + theta.cos() * (-c - p.m_p * p.l * theta_dot * theta_dot * theta.sin()) / total)
                / (p.l * (4.0 / 3.0 - p.m_p * theta.cos() * theta.cos() / total));
            let expected_x_accel = (c
                + p.m_p * p.l * (theta_dot * theta_dot * theta.sin() - expected_theta_accel * theta.cos()))
                / total;
            let d = cartpole_deriv(&s, c, &p);
            assert!((d[1] - expected_theta_accel).abs() < 1e-10);
            assert!((d[3] - expected_x_accel).abs() < 1e-10);
        }
    }

    #[test]
    fn tras_gravity_equilibrium_matches_mass_length_ratio() {
        let p = TrasParams::default();
        // Bisection root of the implemented return torque.
        let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2);
        assert!(tras_m_v1(lo, &p) > 0.0 && tras_m_v1(hi, &p) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tras_m_v1(mid, &p) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let lift = (p.m_t / 2.0 + p.m_tr + p.m_ts) * p.l_t + (p.m_m / 2.0 + p.m_mr + p.m_ms) * p.l_m;
        let counter = p.m_b / 2.0 * p.l_b + p.m_cb * p.l_cb;
        assert!((root - (lift / counter).atan()).abs() < 1e-8);
    }

    #[test]
    fn tras_centrifugal_term_vanishes_at_zero_rate() {
        let p = TrasParams::default();
        let s = Vector::new(vec![0.4, 0.7, -0.2, 0.0]);
        let m = tras_moments(&s, &Vector::new(vec![0.3, -0.5]), &p);
        assert_eq!(m.m_v[2], 0.0);
    }

    #[test]
    fn tras_inertia_at_vertical_beam() {
        let p = TrasParams::default();
        let s = Vector::new(vec![std::f64::consts::FRAC_PI_2, 0.0, 0.0, 0.0]);
        let m = tras_moments(&s, &Vector::zeros(2), &p);
        // At alpha_v = pi/2 only the sin terms and the shield constants
        // survive; re-evaluate the printed formula directly.
        let expected = p.m_b / 3.0 * p.l_b * p.l_b
            + p.m_cb * p.l_cb * p.l_cb
            + p.m_ts / 2.0 * p.r_ts * p.r_ts
            + p.m_ms * p.r_ms * p.r_ms;
        assert!((m.j_h - expected).abs() < 1e-12);
    }

    #[test]
    fn tras_moments_stay_finite() {
        let p = TrasParams::default();
        for i in 0..40 {
            let alpha_v = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * i as f64 / 39.0;
            for &v in &[-1.0, -0.3, 0.0, 0.6, 1.0] {
                let s = Vector::new(vec![alpha_v, 1.3, 0.4, -0.8]);
                let m = tras_moments(&s, &Vector::new(vec![v, -v]), &p);
                assert!(m.m_v.iter().chain(m.m_h.iter()).all(|x| x.is_finite()));
                assert!(m.j_v.is_finite() && m.j_h > 0.0);
            }
        }
    }

    #[test]
    fn rk4_identity_and_exponential() {
        let state = Vector::new(vec![0.3, -0.7]);
        let same = rk4_step(|_| Vector::zeros(2), &state, 0.1).unwrap();
        assert_eq!(same, state);

        let grown = rk4_step(|s| s.clone(), &Vector::new(vec![1.0]), 0.1).unwrap();
        assert!((grown[0] - 1.105_170_91).abs() < 1e-7);
    }

    #[test]
    fn rk4_rejects_non_finite() {
        let blow_up = rk4_step(|_| Vector::new(vec![f64::INFINITY]), &Vector::zeros(1), 0.1);
        assert!(matches!(blow_up, Err(Error::NonFiniteState)));
    }

    fn pendulum_energy(s: &Vector<f64>, p: &PendulumParams) -> f64 {
        0.5 * p.inertia() * s[1] * s[1] - p.m * p.g * p.l * s[0].cos()
    }

    #[test]
    fn undamped_pendulum_energy_drift() {
        let p = PendulumParams { b: 0.0, ..PendulumParams::default() };
        let mut s = Vector::new(vec![std::f64::consts::FRAC_PI_4, 0.0]);
        let e0 = pendulum_energy(&s, &p);
        for _ in 0..1000 {
            s = rk4_step(|s| pendulum_deriv(s, 0.0, &p), &s, 0.01).unwrap();
        }
        let drift = (pendulum_energy(&s, &p) - e0).abs() / e0.abs();
        assert!(drift < 1e-6, "relative energy drift {drift:.3e}");
    }

    #[test]
    fn rk4_is_fourth_order_on_the_pendulum() {
        let p = PendulumParams { b: 0.0, ..PendulumParams::default() };
        let horizon = 2.0;
        let solve = |dt: f64| -> Vector<f64> {
            let mut s = Vector::new(vec![std::f64::consts::FRAC_PI_4, 0.0]);
            let steps = (horizon / dt).round() as usize;
            for _ in 0..steps {
                s = rk4_step(|s| pendulum_deriv(s, 0.0, &p), &s, dt).unwrap();
            }
            s
        };
        let reference = solve(0.0003125);
        let err = |dt: f64| -> f64 {
            let s = solve(dt);
            ((s[0] - reference[0]).powi(2) + (s[1] - reference[1]).powi(2)).sqrt()
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio >= 14.0, "convergence ratio {ratio:.2}");
    }

    #[test]
    fn observations_select_components_and_carry_noise() {
        let spec = SystemSpec::cartpole();
        let state = Vector::new(vec![0.5, -1.0, 0.25, 2.0]);
        let clean = spec.observe_noiseless(&state);
        assert_eq!(clean.as_slice(), &[0.5, 0.25]);

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let y = spec.observe(&state, &mut rng);
            let noise = y[0] - 0.5;
            sum += noise;
            sum_sq += noise * noise;
        }
        let std = (sum_sq / n as f64 - (sum / n as f64).powi(2)).sqrt();
        let configured = spec.obs_noise_std[0];
        assert!((std - configured).abs() / configured < 0.02, "sample std {std}");
    }

    #[test]
    fn kink_observation_equals_latent_when_noiseless() {
        let mut spec = SystemSpec::kink();
        spec.obs_noise_std = vec![0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = Vector::new(vec![-0.37]);
        assert_eq!(spec.observe(&state, &mut rng)[0], -0.37);
    }

    #[test]
    fn params_round_trip_and_override() {
        let mut spec = SystemSpec::tras();
        let text = spec.params_to_key_values();
        assert!(text.contains("m_mr = 0.199"));
        assert!(text.contains("k_vh = -0.018"));
        spec.apply_params_text("k_fv = 0.02\n# comment\n").unwrap();
        match &spec.params {
            SystemParams::Tras(p) => assert_eq!(p.k_fv, 0.02),
            _ => unreachable!(),
        }
        assert!(spec.apply_params_text("bogus = 1\n").is_err());
    }
}
