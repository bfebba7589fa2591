//! The two benchmark problems shipped with the library: a quarter-vehicle
//! suspension model whose unknown friction and progressive-spring forces are
//! learned by small surrogates embedded in otherwise known rigid-body
//! dynamics, and a Van-der-Pol oscillator whose entire right-hand side is
//! learned from noisy trajectory samples. Each comes with deterministic
//! synthetic-data generation, ready-to-solve training builders, quality
//! metrics against the generating model, and (for the oscillator) a
//! multi-run noise-robustness sweep.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::data::{DataError, DataSource, NoData, TrajectoryData};
use crate::mesh::Mesh;
use crate::model::{
    eval_rhs, eval_surrogates, Activation, DynamicModel, EvalError, FeedForwardNet,
    ModelStructure, NodeCtx, RationalChebyshev, SurrogateSpec,
};
use crate::simulate::{simulate, SimError, SimOptions, SimResult};
use crate::solver::{solve, Nlp, Solution, SolveStatus, SolverOptions};
use crate::transcription::{SparseNlp, TranscribeError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("reference simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("data handling failed: {0}")]
    Data(#[from] DataError),
    #[error("transcription failed: {0}")]
    Transcribe(#[from] TranscribeError),
    #[error("model evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
}

// ---------------------------------------------------------------------------
// road synthesis

/// Road roughness class, identified by the value of its displacement power
/// spectral density at the reference spatial frequency of 1 rad/m.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoadClass {
    /// average paved road
    C,
    /// poor road, one class rougher (4x the displacement PSD)
    D,
}

impl RoadClass {
    /// displacement PSD at 1 rad/m, in m^3 (class midpoint)
    pub fn psd_at_reference(self) -> f64 {
        match self {
            RoadClass::C => 256e-6,
            RoadClass::D => 1024e-6,
        }
    }
}

/// number of sinusoids a synthesized road is built from
pub const ROAD_COMPONENTS: usize = 200;
/// synthesized spatial-frequency band, rad/m
pub const ROAD_BAND: (f64, f64) = (0.069, 17.77);

/// A stationary random road: a finite sum of sinusoids whose power follows
/// the displacement PSD `Phi(W) = Phi0 (W/W0)^-2` over [`ROAD_BAND`],
/// traversed at constant speed. Height and vertical contact-point speed are
/// analytic in time, so the profile can be sampled exactly at any
/// resolution.
#[derive(Debug, Clone)]
pub struct RoadProfile {
    /// per-component height amplitude, m
    pub amp: Vec<f64>,
    /// per-component temporal angular frequency, rad/s
    pub omega: Vec<f64>,
    /// per-component phase, rad
    pub phase: Vec<f64>,
}

impl RoadProfile {
    /// Deterministic synthesis on a log-spaced spatial-frequency grid: each
    /// sinusoid carries the PSD mass of its bin (`A^2/2 = Phi(W_c) dW` with
    /// the bin center at the geometric mean of its edges), phases come from
    /// the seeded generator.
    pub fn synthesize(class: RoadClass, seed: u64, speed: f64) -> Self {
        assert!(speed > 0.0, "traversal speed must be positive");
        let phi0 = class.psd_at_reference();
        let (lo, hi) = ROAD_BAND;
        let step = (hi / lo).powf(1.0 / ROAD_COMPONENTS as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amp = Vec::with_capacity(ROAD_COMPONENTS);
        let mut omega = Vec::with_capacity(ROAD_COMPONENTS);
        let mut phase = Vec::with_capacity(ROAD_COMPONENTS);
        let mut edge = lo;
        for _ in 0..ROAD_COMPONENTS {
            let next = edge * step;
            let center = (edge * next).sqrt();
            let psd = phi0 / (center * center);
            amp.push((2.0 * psd * (next - edge)).sqrt());
            omega.push(center * speed);
            phase.push(rng.gen_range(0.0..std::f64::consts::TAU));
            edge = next;
        }
        Self { amp, omega, phase }
    }

    /// uniformly rescale all heights (zero silences the road)
    pub fn scaled(mut self, factor: f64) -> Self {
        for a in &mut self.amp {
            *a *= factor;
        }
        self
    }

    /// road height under the wheel at time `t`, m
    pub fn height(&self, t: f64) -> f64 {
        let mut z = 0.0;
        for i in 0..self.amp.len() {
            z += self.amp[i] * (self.omega[i] * t + self.phase[i]).sin();
        }
        z
    }

    /// vertical speed of the contact point at time `t`, m/s
    pub fn vertical_speed(&self, t: f64) -> f64 {
        let mut v = 0.0;
        for i in 0..self.amp.len() {
            v += self.amp[i] * self.omega[i] * (self.omega[i] * t + self.phase[i]).cos();
        }
        v
    }

    /// total height variance carried by the sinusoids, m^2
    pub fn height_variance(&self) -> f64 {
        self.amp.iter().map(|a| a * a / 2.0).sum()
    }
}

impl DataSource for RoadProfile {
    fn width(&self) -> usize {
        2
    }
    fn sample_into(&self, t: f64, out: &mut [f64]) -> Result<(), DataError> {
        out[0] = self.height(t);
        out[1] = self.vertical_speed(t);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// quarter-vehicle model

/// Physical parameters of the quarter-vehicle model, including the two
/// nonlinear suspension force laws used when generating reference data.
#[derive(Debug, Clone, Copy)]
pub struct QvmParams {
    /// body (sprung) mass, kg
    pub m_b: f64,
    /// wheel (unsprung) mass, kg
    pub m_w: f64,
    /// suspension spring rate, N/m
    pub c_s: f64,
    /// suspension damper rate, N s/m
    pub d_s: f64,
    /// tire vertical stiffness, N/m
    pub c_t: f64,
    /// tire damping, N s/m
    pub d_t: f64,
    /// saturated friction force, N
    pub friction_force: f64,
    /// relative speed over which the friction transitions, m/s
    pub friction_width: f64,
    /// progressive-spring cubic coefficient, N/m^3
    pub spring_cubic: f64,
}

impl Default for QvmParams {
    fn default() -> Self {
        Self {
            m_b: 400.0,
            m_w: 40.0,
            c_s: 2.0e4,
            d_s: 1.5e3,
            c_t: 2.0e5,
            d_t: 1.0e2,
            friction_force: 300.0,
            friction_width: 0.25,
            spring_cubic: 1.0e6,
        }
    }
}

impl QvmParams {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let pos = [self.m_b, self.m_w, self.c_s, self.d_s, self.c_t, self.d_t, self.friction_width];
        if pos.iter().any(|v| !(*v > 0.0)) {
            return Err(ProblemError::BadConfig(
                "vehicle masses, rates and the friction width must be positive",
            ));
        }
        Ok(())
    }

    /// generating friction force over the suspension extension speed
    /// `dv = v_w - v_b`; saturating, oriented like the linear damper so it
    /// only ever removes energy
    pub fn friction(&self, dv: f64) -> f64 {
        self.friction_force * (dv / self.friction_width).tanh()
    }

    /// generating progressive-spring force over the suspension extension
    /// `dz = z_w - z_b`; cubic hardening on top of the linear spring
    pub fn progressive(&self, dz: f64) -> f64 {
        self.spring_cubic * dz * dz * dz
    }
}

/// linear suspension force `c_s (z_w - z_b) + d_s (v_w - v_b)`
#[inline]
fn qvm_linear_force<S: Scalar>(par: &QvmParams, x: &[S]) -> S {
    let dz = x[1].sub_ref(&x[0]);
    let dv = x[3].sub_ref(&x[2]);
    dz.scale(par.c_s) + dv.scale(par.d_s)
}

/// Body and wheel accelerations given the total suspension force and the
/// road inputs. The suspension force acts upward on the body and reacts on
/// the wheel; the tire transmits the road contact.
#[inline]
fn qvm_accels<S: Scalar>(par: &QvmParams, x: &[S], f_susp: S, road_z: f64, road_v: f64) -> (S, S) {
    let tire = (x[1].clone().scale(-1.0).add_f64(road_z)).scale(par.c_t)
        + (x[3].clone().scale(-1.0).add_f64(road_v)).scale(par.d_t);
    let a_b = f_susp.clone().scale(1.0 / par.m_b);
    let a_w = (tire - f_susp).scale(1.0 / par.m_w);
    (a_b, a_w)
}

/// The data-generating quarter-vehicle model. States are
/// `[z_b, z_w, v_b, v_w]` (body height, wheel height and their rates); the
/// exogenous data channels are road height and road vertical speed. With
/// `nonlinear` off only the linear spring/damper pair acts, which is the
/// initializer model for training runs.
#[derive(Debug, Clone, Copy)]
pub struct QvmTruth {
    pub par: QvmParams,
    pub nonlinear: bool,
}

impl QvmTruth {
    fn suspension_force<S: Scalar>(&self, x: &[S]) -> S {
        let mut f = qvm_linear_force(&self.par, x);
        if self.nonlinear {
            let dz = x[1].sub_ref(&x[0]);
            let dv = x[3].sub_ref(&x[2]);
            let friction = dv.scale(1.0 / self.par.friction_width).tanh().scale(self.par.friction_force);
            let hardening = dz.powi(3).scale(self.par.spring_cubic);
            f = f + friction + hardening;
        }
        f
    }
}

impl DynamicModel for QvmTruth {
    fn dim_x(&self) -> usize {
        4
    }
    fn dim_p(&self) -> usize {
        0
    }
    fn data_width(&self) -> usize {
        2
    }

    fn rhs<S: Scalar>(
        &self,
        x: &[S],
        _pd: &[S],
        _nu: &[S],
        ctx: &NodeCtx,
        out: &mut [S],
    ) -> Result<(), EvalError> {
        let f = self.suspension_force(x);
        let (a_b, a_w) = qvm_accels(&self.par, x, f, ctx.data[0], ctx.data[1]);
        out[0] = x[2].clone();
        out[1] = x[3].clone();
        out[2] = a_b;
        out[3] = a_w;
        Ok(())
    }

    fn n_observables(&self) -> usize {
        2
    }
    fn observable_names(&self) -> Vec<&'static str> {
        vec!["body_acc", "wheel_acc"]
    }
    fn observe(&self, x: &[f64], _p: &[f64], ctx: &NodeCtx, out: &mut [f64]) -> Result<(), EvalError> {
        let f = self.suspension_force(x);
        let (a_b, a_w) = qvm_accels(&self.par, x, f, ctx.data[0], ctx.data[1]);
        out[0] = a_b;
        out[1] = a_w;
        Ok(())
    }
}

/// integration steps per second used when generating vehicle reference data
pub const QVM_SIM_RATE: f64 = 3200.0;

/// Configuration of one synthetic vehicle measurement campaign.
#[derive(Debug, Clone)]
pub struct QvmDataConfig {
    pub par: QvmParams,
    pub class: RoadClass,
    pub road_seed: u64,
    /// extra factor on all road amplitudes; zero keeps the vehicle at rest
    pub road_scale: f64,
    /// traversal speed, m/s
    pub speed: f64,
    /// lead-in driven before recording starts, s; lets the rest transient
    /// decay so the recorded window is statistically stationary
    pub settle_s: f64,
    /// recorded horizon, s
    pub horizon: f64,
    /// samples per second
    pub sample_rate: f64,
    /// measurement noise as a fraction of each channel's standard deviation
    pub noise_rel: f64,
    pub noise_seed: u64,
}

impl Default for QvmDataConfig {
    fn default() -> Self {
        Self {
            par: QvmParams::default(),
            class: RoadClass::D,
            road_seed: 11,
            road_scale: 1.0,
            speed: 25.0,
            settle_s: 2.0,
            horizon: 10.0,
            sample_rate: 1000.0,
            noise_rel: 0.0,
            noise_seed: 12,
        }
    }
}

/// Everything one measurement campaign produces.
#[derive(Debug, Clone)]
pub struct QvmDataset {
    /// training channels `[road_z, road_v, body_acc, wheel_acc]`; the
    /// accelerations carry the configured noise, the road inputs are exact
    pub train: TrajectoryData,
    /// noisy state measurements `[z_b, z_w, v_b, v_w]` (guess material only)
    pub measured_states: TrajectoryData,
    /// noise-free reference `[z_b, z_w, v_b, v_w, body_acc, wheel_acc]`
    pub clean: TrajectoryData,
}

pub fn generate_qvm_data(cfg: &QvmDataConfig) -> Result<QvmDataset, ProblemError> {
    cfg.par.validate()?;
    if !(cfg.horizon > 0.0) || !(cfg.sample_rate > 0.0) {
        return Err(ProblemError::BadConfig("horizon and sample rate must be positive"));
    }
    if cfg.noise_rel < 0.0 || cfg.road_scale < 0.0 || cfg.settle_s < 0.0 {
        return Err(ProblemError::BadConfig("noise level, road scale and settle time must be nonnegative"));
    }
    let road = RoadProfile::synthesize(cfg.class, cfg.road_seed, cfg.speed).scaled(cfg.road_scale);
    let n = (cfg.horizon * cfg.sample_rate).round() as usize + 1;
    if n < 2 {
        return Err(ProblemError::BadConfig("horizon times sample rate must give at least one interval"));
    }
    let times: Vec<f64> = (0..n).map(|i| cfg.horizon * i as f64 / (n - 1) as f64).collect();

    let truth = QvmTruth { par: cfg.par, nonlinear: true };
    // ninth-order steps at a rate resolving the saturating-friction layer;
    // the recorded window starts after the rest transient has settled
    let n_steps = (((cfg.settle_s + cfg.horizon) * QVM_SIM_RATE).ceil() as usize).max(8);
    let sim = simulate(
        &truth,
        &[],
        &[0.0; 4],
        -cfg.settle_s,
        cfg.horizon,
        n_steps,
        5,
        &road,
        &times,
        &SimOptions::default(),
    )?;

    let mut road_z = Vec::with_capacity(n);
    let mut road_v = Vec::with_capacity(n);
    let mut acc_b = Vec::with_capacity(n);
    let mut acc_w = Vec::with_capacity(n);
    let mut obs = [0.0; 2];
    for (q, &t) in times.iter().enumerate() {
        let zr = road.height(t);
        let vr = road.vertical_speed(t);
        let x = [sim.x[0][q], sim.x[1][q], sim.x[2][q], sim.x[3][q]];
        truth.observe(&x, &[], &NodeCtx::new(t, &[zr, vr]), &mut obs)?;
        road_z.push(zr);
        road_v.push(vr);
        acc_b.push(obs[0]);
        acc_w.push(obs[1]);
    }

    let clean = TrajectoryData::new(
        times.clone(),
        vec![
            sim.x[0].clone(),
            sim.x[1].clone(),
            sim.x[2].clone(),
            sim.x[3].clone(),
            acc_b.clone(),
            acc_w.clone(),
        ],
    )?;

    // channel-major draws in a fixed order keep the noise reproducible
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
    let states_noisy: Vec<Vec<f64>> =
        (0..4).map(|s| add_relative_noise(&sim.x[s], cfg.noise_rel, &mut rng)).collect();
    let acc_b_noisy = add_relative_noise(&acc_b, cfg.noise_rel, &mut rng);
    let acc_w_noisy = add_relative_noise(&acc_w, cfg.noise_rel, &mut rng);

    let train = TrajectoryData::new(times.clone(), vec![road_z, road_v, acc_b_noisy, acc_w_noisy])?;
    let measured_states = TrajectoryData::new(times, states_noisy)?;
    Ok(QvmDataset { train, measured_states, clean })
}

/// per-channel Gaussian noise scaled to `rel` times the channel's std
fn add_relative_noise<R: Rng>(c: &[f64], rel: f64, rng: &mut R) -> Vec<f64> {
    if rel == 0.0 {
        return c.to_vec();
    }
    let sigma = rel * slice_std(c);
    c.iter().map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn slice_mean_std(c: &[f64]) -> (f64, f64) {
    let n = c.len().max(1) as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn slice_std(c: &[f64]) -> f64 {
    slice_mean_std(c).1
}

// ---------------------------------------------------------------------------
// quarter-vehicle training model

/// layer sizes of each force network
pub const QVM_NET_LAYERS: [usize; 4] = [1, 5, 5, 1];
/// numerator and denominator degree of the rational surrogates
pub const QVM_RATIONAL_DEGREE: usize = 7;

/// Feed-forward net with an affine input standardization and a fixed output
/// scale. The net proper works in O(1) coordinates on both ends, which keeps
/// the default weight initialization in the responsive range of the
/// activation regardless of the physical units of the force it learns; the
/// constants come from data statistics and carry no free parameters.
#[derive(Debug, Clone)]
pub struct ScaledNet {
    pub net: FeedForwardNet,
    in_center: f64,
    in_spread: f64,
    out_scale: f64,
}

impl ScaledNet {
    fn new(layers: &[usize], act: Activation, input: (f64, f64), out_scale: f64) -> Self {
        Self {
            net: FeedForwardNet::new(layers, act),
            in_center: input.0,
            in_spread: if input.1 > 0.0 { input.1 } else { 1.0 },
            out_scale: if out_scale > 0.0 { out_scale } else { 1.0 },
        }
    }

    /// net value at a raw, unstandardized scalar input
    fn output<S: Scalar>(&self, input: S, w: &[S]) -> S {
        let s = input.add_f64(-self.in_center).scale(1.0 / self.in_spread);
        self.net.forward(&[s], w).scale(self.out_scale)
    }

    fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn init_weights<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.net.init_weights(rng)
    }
}

/// The two learnable suspension-force surrogates.
#[derive(Debug, Clone)]
pub enum QvmSurrogates {
    /// small feed-forward nets over the relative speed / deflection
    Nets { friction: ScaledNet, spring: ScaledNet },
    /// rational functions in the Chebyshev basis
    Rationals { friction: RationalChebyshev, spring: RationalChebyshev },
}

impl QvmSurrogates {
    /// parameters of one surrogate (both always have the same count)
    pub fn n_each(&self) -> usize {
        match self {
            QvmSurrogates::Nets { friction, .. } => friction.n_params(),
            QvmSurrogates::Rationals { friction, .. } => friction.n_params(),
        }
    }
}

/// selector for one of the two learned forces
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogatePick {
    Friction,
    Spring,
}

/// Vehicle training model: the linear rigid-body part is kept, the friction
/// and progressive-spring forces are replaced by surrogates over the
/// suspension speed and deflection. Data channels are
/// `[road_z, road_v, body_acc, wheel_acc]`; the integrand is the
/// std-normalized squared acceleration mismatch. Boundary rows pin every
/// surrogate to zero force at zero input; rational surrogates additionally
/// pin each denominator's constant coefficient to one, removing their scale
/// ambiguity.
#[derive(Debug, Clone)]
pub struct QvmTrainModel {
    pub par: QvmParams,
    pub sur: QvmSurrogates,
    inv_sig_b: f64,
    inv_sig_w: f64,
}

impl QvmTrainModel {
    /// Net surrogates; `sigma_b`/`sigma_w` are the stds of the measured
    /// accelerations and weigh the two residuals. Each `(center, spread)`
    /// pair standardizes that surrogate's input and `force_scale` converts
    /// unit net outputs into force units.
    pub fn with_nets(
        par: QvmParams,
        sigma_b: f64,
        sigma_w: f64,
        friction_input: (f64, f64),
        spring_input: (f64, f64),
        force_scale: f64,
    ) -> Self {
        let act = Activation::Squareplus;
        Self {
            par,
            sur: QvmSurrogates::Nets {
                friction: ScaledNet::new(&QVM_NET_LAYERS, act, friction_input, force_scale),
                spring: ScaledNet::new(&QVM_NET_LAYERS, act, spring_input, force_scale),
            },
            inv_sig_b: safe_recip(sigma_b),
            inv_sig_w: safe_recip(sigma_w),
        }
    }

    /// rational surrogates; each `(center, halfwidth)` maps the observed
    /// input range of that surrogate onto the Chebyshev interval
    pub fn with_rationals(
        par: QvmParams,
        sigma_b: f64,
        sigma_w: f64,
        friction_input: (f64, f64),
        spring_input: (f64, f64),
    ) -> Self {
        let d = QVM_RATIONAL_DEGREE;
        Self {
            par,
            sur: QvmSurrogates::Rationals {
                friction: RationalChebyshev::new(d, d, friction_input.0, friction_input.1),
                spring: RationalChebyshev::new(d, d, spring_input.0, spring_input.1),
            },
            inv_sig_b: safe_recip(sigma_b),
            inv_sig_w: safe_recip(sigma_w),
        }
    }

    /// trained force at a raw scalar input (plain values, no derivatives)
    pub fn surrogate_output(&self, pick: SurrogatePick, input: f64, p: &[f64]) -> Result<f64, EvalError> {
        let n = self.sur.n_each();
        let w = match pick {
            SurrogatePick::Friction => &p[..n],
            SurrogatePick::Spring => &p[n..],
        };
        match (&self.sur, pick) {
            (QvmSurrogates::Nets { friction, .. }, SurrogatePick::Friction) => Ok(friction.output(input, w)),
            (QvmSurrogates::Nets { spring, .. }, SurrogatePick::Spring) => Ok(spring.output(input, w)),
            (QvmSurrogates::Rationals { friction, .. }, SurrogatePick::Friction) => friction.eval(&input, w),
            (QvmSurrogates::Rationals { spring, .. }, SurrogatePick::Spring) => spring.eval(&input, w),
        }
    }
}

fn safe_recip(sigma: f64) -> f64 {
    if sigma > 0.0 {
        1.0 / sigma
    } else {
        1.0
    }
}

impl DynamicModel for QvmTrainModel {
    fn dim_x(&self) -> usize {
        4
    }
    fn dim_p(&self) -> usize {
        2 * self.sur.n_each()
    }
    fn data_width(&self) -> usize {
        4
    }

    fn structure(&self) -> ModelStructure {
        let n = self.sur.n_each();
        ModelStructure {
            surrogates: vec![
                // friction over dv = v_w - v_b
                SurrogateSpec { state_deps: vec![2, 3], params: 0..n },
                // progressive spring over dz = z_w - z_b
                SurrogateSpec { state_deps: vec![0, 1], params: n..2 * n },
            ],
            direct_params: Vec::new(),
        }
    }

    fn surrogate<S: Scalar>(&self, k: usize, xa: &[S], w: &[S]) -> Result<S, EvalError> {
        let input = xa[1].sub_ref(&xa[0]);
        match (&self.sur, k) {
            (QvmSurrogates::Nets { friction, .. }, 0) => Ok(friction.output(input, w)),
            (QvmSurrogates::Nets { spring, .. }, 1) => Ok(spring.output(input, w)),
            (QvmSurrogates::Rationals { friction, .. }, 0) => friction.eval(&input, w),
            (QvmSurrogates::Rationals { spring, .. }, 1) => spring.eval(&input, w),
            _ => unreachable!("model declares exactly two surrogates"),
        }
    }

    fn rhs<S: Scalar>(
        &self,
        x: &[S],
        _pd: &[S],
        nu: &[S],
        ctx: &NodeCtx,
        out: &mut [S],
    ) -> Result<(), EvalError> {
        let f = qvm_linear_force(&self.par, x) + nu[0].clone() + nu[1].clone();
        let (a_b, a_w) = qvm_accels(&self.par, x, f, ctx.data[0], ctx.data[1]);
        out[0] = x[2].clone();
        out[1] = x[3].clone();
        out[2] = a_b;
        out[3] = a_w;
        Ok(())
    }

    fn lagrange<S: Scalar>(&self, x: &[S], _pd: &[S], nu: &[S], ctx: &NodeCtx) -> Result<S, EvalError> {
        let f = qvm_linear_force(&self.par, x) + nu[0].clone() + nu[1].clone();
        let (a_b, a_w) = qvm_accels(&self.par, x, f, ctx.data[0], ctx.data[1]);
        let r_b = a_b.add_f64(-ctx.data[2]).scale(self.inv_sig_b);
        let r_w = a_w.add_f64(-ctx.data[3]).scale(self.inv_sig_w);
        Ok(r_b.mul_ref(&r_b) + r_w.mul_ref(&r_w))
    }

    fn n_boundary(&self) -> usize {
        match &self.sur {
            QvmSurrogates::Nets { .. } => 2,
            QvmSurrogates::Rationals { .. } => 4,
        }
    }

    fn boundary<S: Scalar>(&self, _x0: &[S], _xf: &[S], p: &[S], out: &mut [S]) -> Result<(), EvalError> {
        let n = self.sur.n_each();
        let zero = S::from_f64(0.0);
        match &self.sur {
            QvmSurrogates::Nets { friction, spring } => {
                // zero force at zero relative motion
                out[0] = friction.output(zero.clone(), &p[..n]);
                out[1] = spring.output(zero, &p[n..]);
            }
            QvmSurrogates::Rationals { friction, spring } => {
                // the numerator form keeps the zero-force rows linear in the
                // coefficients; the last two rows pin each denominator's
                // constant coefficient
                out[0] = friction.numerator(&zero, &p[..n]);
                out[1] = spring.numerator(&zero, &p[n..]);
                out[2] = p[friction.den_const_index()].clone().add_f64(-1.0);
                out[3] = p[n + spring.den_const_index()].clone().add_f64(-1.0);
            }
        }
        Ok(())
    }

    fn n_observables(&self) -> usize {
        2
    }
    fn observable_names(&self) -> Vec<&'static str> {
        vec!["body_acc", "wheel_acc"]
    }
    fn observe(&self, x: &[f64], p: &[f64], ctx: &NodeCtx, out: &mut [f64]) -> Result<(), EvalError> {
        let st = self.structure();
        let mut nu = Vec::new();
        eval_surrogates(self, &st, x, p, &mut nu)?;
        let f = qvm_linear_force(&self.par, x) + nu[0] + nu[1];
        let (a_b, a_w) = qvm_accels(&self.par, x, f, ctx.data[0], ctx.data[1]);
        out[0] = a_b;
        out[1] = a_w;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// quarter-vehicle training runs

/// which family of surrogates a training run uses
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    Nn,
    Rational,
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurrogateKind::Nn => "nn",
            SurrogateKind::Rational => "rational",
        })
    }
}

impl std::str::FromStr for SurrogateKind {
    type Err = ProblemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nn" | "net" | "nets" => Ok(SurrogateKind::Nn),
            "rational" | "rc" => Ok(SurrogateKind::Rational),
            _ => Err(ProblemError::BadConfig("surrogate must be nn or rational")),
        }
    }
}

/// initialization strategy of a vehicle training run
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// random net parameters, state guesses from simulating the known
    /// linear part of the model
    I,
    /// a pass of `I` on the first eighth of the horizon, then the
    /// pre-trained model is simulated forward to produce full-horizon state
    /// guesses for the final solve
    II,
    /// like `I` but for rational surrogates: small random coefficients with
    /// the denominator constant terms started at their pinned value
    III,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::I => "I",
            Strategy::II => "II",
            Strategy::III => "III",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = ProblemError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Strategy::I),
            "II" | "2" => Ok(Strategy::II),
            "III" | "3" => Ok(Strategy::III),
            _ => Err(ProblemError::BadConfig("strategy must be I, II or III")),
        }
    }
}

/// Configuration of one vehicle training run.
#[derive(Debug, Clone)]
pub struct QvmTrainConfig {
    pub data: QvmDataConfig,
    /// trained horizon, s (at most the data horizon)
    pub horizon: f64,
    pub n_intervals: usize,
    pub stages: usize,
    pub strategy: Strategy,
    pub surrogate: SurrogateKind,
    /// parameter-initialization seed
    pub seed: u64,
    pub threads: usize,
    pub solver: SolverOptions,
}

impl Default for QvmTrainConfig {
    fn default() -> Self {
        Self {
            data: QvmDataConfig::default(),
            horizon: 10.0,
            n_intervals: 625,
            stages: 5,
            strategy: Strategy::I,
            surrogate: SurrogateKind::Nn,
            seed: 0,
            threads: 1,
            solver: SolverOptions::default(),
        }
    }
}

impl QvmTrainConfig {
    /// the full-size setup: 42 s of data on 2500 intervals, capped
    /// iteration count
    pub fn full_scale(mut self) -> Self {
        self.data.horizon = 42.0;
        self.horizon = 42.0;
        self.n_intervals = 2500;
        self.solver.max_iter = 150;
        self
    }
}

/// one solve inside a training run
#[derive(Debug, Clone)]
pub struct TrainPhase {
    pub label: String,
    pub status: SolveStatus,
    pub objective: f64,
    pub iterations: usize,
    pub n_var: usize,
    pub n_con: usize,
    /// wall-clock time of the solve, s
    pub wall_s: f64,
    /// share of the wall time spent in objective/derivative callbacks, s
    pub callback_s: f64,
}

fn make_phase(label: &str, nlp: &dyn Nlp, sol: &Solution) -> TrainPhase {
    TrainPhase {
        label: label.to_string(),
        status: sol.status,
        objective: sol.objective,
        iterations: sol.iterations,
        n_var: nlp.n_var(),
        n_con: nlp.n_con(),
        wall_s: sol.timing.total,
        callback_s: sol.timing.callbacks,
    }
}

/// A finished vehicle training run: per-phase summaries plus the final
/// transcription (which owns the trained model) and its solution.
pub struct QvmRun {
    pub phases: Vec<TrainPhase>,
    pub nlp: SparseNlp<QvmTrainModel>,
    pub solution: Solution,
}

impl QvmRun {
    pub fn model(&self) -> &QvmTrainModel {
        self.nlp.model()
    }
    pub fn params(&self) -> &[f64] {
        self.nlp.params(&self.solution.z)
    }
    /// wall-clock total over all phases, s
    pub fn total_wall(&self) -> f64 {
        self.phases.iter().map(|p| p.wall_s).sum()
    }
}

pub fn train_qvm(cfg: &QvmTrainConfig, data: &QvmDataset) -> Result<QvmRun, ProblemError> {
    cfg.data.par.validate()?;
    if cfg.n_intervals == 0 || cfg.stages == 0 {
        return Err(ProblemError::BadConfig("mesh needs at least one interval and one stage"));
    }
    let slack = 1e-9 * data.train.tf().max(1.0);
    if !(cfg.horizon > 0.0) || cfg.horizon > data.train.tf() + slack {
        return Err(ProblemError::BadConfig("trained horizon must be positive and within the data"));
    }
    match (cfg.strategy, cfg.surrogate) {
        (Strategy::III, SurrogateKind::Nn) => {
            return Err(ProblemError::BadConfig("strategy III initializes rational surrogates"));
        }
        (Strategy::I | Strategy::II, SurrogateKind::Rational) => {
            return Err(ProblemError::BadConfig("rational surrogates train with strategy III"));
        }
        _ => {}
    }

    let model = build_qvm_model(cfg, data);
    let p0 = init_qvm_params(&model, cfg.seed);

    match cfg.strategy {
        Strategy::I | Strategy::III => {
            let mesh = Mesh::uniform(0.0, cfg.horizon, cfg.n_intervals, cfg.stages);
            let guess = linear_state_guess(&cfg.data.par, data, &mesh)?;
            let (nlp, solution, phase) = solve_qvm_phase(model, mesh, data, &guess, &p0, cfg, "train")?;
            Ok(QvmRun { phases: vec![phase], nlp, solution })
        }
        Strategy::II => {
            let pre_h = cfg.horizon / 8.0;
            let pre_n = (cfg.n_intervals / 8).max(1);
            let mesh1 = Mesh::uniform(0.0, pre_h, pre_n, cfg.stages);
            let guess1 = linear_state_guess(&cfg.data.par, data, &mesh1)?;
            let (nlp1, sol1, phase1) =
                solve_qvm_phase(model.clone(), mesh1, data, &guess1, &p0, cfg, "pretrain first eighth")?;
            let p1 = nlp1.params(&sol1.z).to_vec();
            let x0 = sol1.z[..4].to_vec();

            let mesh2 = Mesh::uniform(0.0, cfg.horizon, cfg.n_intervals, cfg.stages);
            let times2 = mesh2.all_times();
            let rolled = simulate(
                &model,
                &p1,
                &x0,
                0.0,
                cfg.horizon,
                (2 * cfg.n_intervals).max(64),
                3,
                &data.train,
                &times2,
                &SimOptions::default(),
            );
            let (label2, guess2) = match rolled {
                Ok(r) => ("train full horizon", r),
                // a diverging pre-trained model falls back to the linear guess
                Err(_) => ("train full horizon (linear fallback guess)", linear_state_guess(&cfg.data.par, data, &mesh2)?),
            };
            let (nlp2, sol2, phase2) = solve_qvm_phase(model, mesh2, data, &guess2, &p1, cfg, label2)?;
            Ok(QvmRun { phases: vec![phase1, phase2], nlp: nlp2, solution: sol2 })
        }
    }
}

/// Assemble the training model for a config and dataset: measures the
/// acceleration stds that weigh the objective and the input/output scales
/// of the surrogates from the data.
pub fn build_qvm_model(cfg: &QvmTrainConfig, data: &QvmDataset) -> QvmTrainModel {
    let sig_b = data.train.channel_std(2);
    let sig_w = data.train.channel_std(3);
    let dv = difference_stats(&data.measured_states, 3, 2);
    let dz = difference_stats(&data.measured_states, 1, 0);
    match cfg.surrogate {
        SurrogateKind::Nn => {
            let scale = residual_force_spread(&cfg.data.par, data);
            QvmTrainModel::with_nets(cfg.data.par, sig_b, sig_w, dv, dz, scale)
        }
        SurrogateKind::Rational => {
            // map three standard deviations of each observed input onto the
            // Chebyshev interval
            QvmTrainModel::with_rationals(
                cfg.data.par,
                sig_b,
                sig_w,
                (dv.0, 3.0 * dv.1),
                (dz.0, 3.0 * dz.1),
            )
        }
    }
}

/// `(mean, std)` of channel `hi - lo`, with a unit fallback spread
fn difference_stats(d: &TrajectoryData, hi: usize, lo: usize) -> (f64, f64) {
    let diffs: Vec<f64> = (0..d.t.len()).map(|q| d.channels[hi][q] - d.channels[lo][q]).collect();
    let (mean, std) = slice_mean_std(&diffs);
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// Spread of the suspension force the linear model leaves unexplained,
/// isolated through the body equation `m_b a_b = F_s`; it sets the output
/// scale of the force nets.
fn residual_force_spread(par: &QvmParams, data: &QvmDataset) -> f64 {
    let st = &data.measured_states;
    let acc_b = &data.train.channels[2];
    let resid: Vec<f64> = (0..st.t.len())
        .map(|q| {
            let dz = st.channels[1][q] - st.channels[0][q];
            let dv = st.channels[3][q] - st.channels[2][q];
            par.m_b * acc_b[q] - par.c_s * dz - par.d_s * dv
        })
        .collect();
    let std = slice_std(&resid);
    if std > 0.0 {
        std
    } else {
        1.0
    }
}

/// seeded initial surrogate parameters for a vehicle training model
pub fn init_qvm_params(model: &QvmTrainModel, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::with_capacity(model.dim_p());
    match &model.sur {
        QvmSurrogates::Nets { friction, spring } => {
            p.extend(friction.init_weights(&mut rng));
            p.extend(spring.init_weights(&mut rng));
        }
        QvmSurrogates::Rationals { friction, spring } => {
            p.extend(friction.init_coeffs(&mut rng));
            p.extend(spring.init_coeffs(&mut rng));
        }
    }
    p
}

/// simulate the linear part from the measured initial state, sampling the
/// states at every mesh node time
fn linear_state_guess(par: &QvmParams, data: &QvmDataset, mesh: &Mesh) -> Result<SimResult, ProblemError> {
    let x0: Vec<f64> = (0..4).map(|s| data.measured_states.channels[s][0]).collect();
    let lin = QvmTruth { par: *par, nonlinear: false };
    let times = mesh.all_times();
    Ok(simulate(
        &lin,
        &[],
        &x0,
        mesh.t0,
        mesh.tf,
        (2 * mesh.n_intervals()).max(64),
        3,
        &data.train,
        &times,
        &SimOptions::default(),
    )?)
}

fn solve_qvm_phase(
    model: QvmTrainModel,
    mesh: Mesh,
    data: &QvmDataset,
    guess: &SimResult,
    p0: &[f64],
    cfg: &QvmTrainConfig,
    label: &str,
) -> Result<(SparseNlp<QvmTrainModel>, Solution, TrainPhase), ProblemError> {
    let mut nlp = SparseNlp::new(model, mesh, &data.train)?;
    nlp.set_threads(cfg.threads);
    let mut q = 0;
    let z0 = nlp.pack_guess(
        |_t, out| {
            for (s, o) in out.iter_mut().enumerate() {
                *o = guess.x[s][q];
            }
            q += 1;
        },
        p0,
    );
    let sol = solve(&nlp, &z0, &cfg.solver);
    let phase = make_phase(label, &nlp, &sol);
    Ok((nlp, sol, phase))
}

/// Quality of one trained surrogate against its generating curve, measured
/// on the +-1 std interval of the inputs occurring in the clean reference.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateFit {
    pub input_lo: f64,
    pub input_hi: f64,
    /// root-mean-square error over a uniform grid on the interval
    pub rms: f64,
    /// generating-force range over the same grid
    pub range: f64,
    /// trained force at zero input
    pub at_zero: f64,
}

impl SurrogateFit {
    /// rms error as a fraction of the generating-force range
    pub fn relative_rms(&self) -> f64 {
        self.rms / self.range
    }
}

pub fn qvm_surrogate_fit(
    model: &QvmTrainModel,
    p: &[f64],
    data: &QvmDataset,
    pick: SurrogatePick,
) -> Result<SurrogateFit, ProblemError> {
    let (hi, lo) = match pick {
        SurrogatePick::Friction => (3, 2),
        SurrogatePick::Spring => (1, 0),
    };
    let diffs: Vec<f64> = (0..data.clean.t.len())
        .map(|q| data.clean.channels[hi][q] - data.clean.channels[lo][q])
        .collect();
    let (mean, std) = slice_mean_std(&diffs);
    let (a, b) = (mean - std, mean + std);
    const GRID: usize = 201;
    let mut sq = 0.0;
    let mut truth_lo = f64::INFINITY;
    let mut truth_hi = f64::NEG_INFINITY;
    for i in 0..GRID {
        let s = a + (b - a) * i as f64 / (GRID - 1) as f64;
        let truth = match pick {
            SurrogatePick::Friction => model.par.friction(s),
            SurrogatePick::Spring => model.par.progressive(s),
        };
        let fit = model.surrogate_output(pick, s, p)?;
        sq += (fit - truth) * (fit - truth);
        truth_lo = truth_lo.min(truth);
        truth_hi = truth_hi.max(truth);
    }
    Ok(SurrogateFit {
        input_lo: a,
        input_hi: b,
        rms: (sq / GRID as f64).sqrt(),
        range: truth_hi - truth_lo,
        at_zero: model.surrogate_output(pick, 0.0, p)?,
    })
}

// ---------------------------------------------------------------------------
// Van-der-Pol oscillator

/// The data-generating oscillator.
#[derive(Debug, Clone, Copy)]
pub struct VdpTruth {
    pub mu: f64,
}

impl DynamicModel for VdpTruth {
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_p(&self) -> usize {
        0
    }
    fn rhs<S: Scalar>(
        &self,
        x: &[S],
        _pd: &[S],
        _nu: &[S],
        _ctx: &NodeCtx,
        out: &mut [S],
    ) -> Result<(), EvalError> {
        let one_minus_x2 = x[0].mul_ref(&x[0]).scale(-1.0).add_f64(1.0);
        out[0] = x[1].clone();
        out[1] = x[1].mul_ref(&one_minus_x2).scale(self.mu) - x[0].clone();
        Ok(())
    }
}

/// Configuration of one synthetic oscillator data set.
#[derive(Debug, Clone)]
pub struct VdpDataConfig {
    pub mu: f64,
    pub x0: [f64; 2],
    pub horizon: f64,
    /// sample intervals (samples = `n_grid + 1`)
    pub n_grid: usize,
    /// additive noise std applied independently to both channels
    pub sigma: f64,
    pub noise_seed: u64,
}

impl Default for VdpDataConfig {
    fn default() -> Self {
        Self { mu: 1.0, x0: [2.0, 0.0], horizon: 7.0, n_grid: 200, sigma: 0.0, noise_seed: 1 }
    }
}

/// noisy samples of the truth trajectory, channels `[x, y]`
pub fn generate_vdp_data(cfg: &VdpDataConfig) -> Result<TrajectoryData, ProblemError> {
    if !(cfg.horizon > 0.0) || cfg.n_grid == 0 {
        return Err(ProblemError::BadConfig("horizon and grid size must be positive"));
    }
    if cfg.sigma < 0.0 {
        return Err(ProblemError::BadConfig("noise level must be nonnegative"));
    }
    let n = cfg.n_grid + 1;
    let times: Vec<f64> = (0..n).map(|i| cfg.horizon * i as f64 / (n - 1) as f64).collect();
    let truth = VdpTruth { mu: cfg.mu };
    let sim = simulate(
        &truth,
        &[],
        &cfg.x0,
        0.0,
        cfg.horizon,
        4 * cfg.n_grid,
        5,
        &NoData,
        &times,
        &SimOptions::default(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
    let channels: Vec<Vec<f64>> = (0..2)
        .map(|s| {
            sim.x[s]
                .iter()
                .map(|v| v + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    Ok(TrajectoryData::new(times, channels)?)
}

// ---------------------------------------------------------------------------
// oscillator training model

/// layer sizes of each oscillator network
pub const VDP_NET_LAYERS: [usize; 4] = [2, 5, 5, 1];

/// Oscillator training model: both state derivatives are network outputs,
/// the integrand is the squared trajectory mismatch, a Tikhonov term on all
/// parameters enters at the endpoint stage, and two boundary rows pin the
/// initial state.
#[derive(Debug, Clone)]
pub struct VdpTrainModel {
    pub net_x: FeedForwardNet,
    pub net_y: FeedForwardNet,
    /// Tikhonov weight on the parameter vector
    pub lambda: f64,
    /// pinned initial state
    pub x_init: [f64; 2],
}

impl VdpTrainModel {
    pub fn new(lambda: f64, x_init: [f64; 2]) -> Self {
        Self {
            net_x: FeedForwardNet::new(&VDP_NET_LAYERS, Activation::Sigmoid),
            net_y: FeedForwardNet::new(&VDP_NET_LAYERS, Activation::Sigmoid),
            lambda,
            x_init,
        }
    }

    /// learned vector field at a plain point
    pub fn field(&self, x: [f64; 2], p: &[f64]) -> Result<[f64; 2], EvalError> {
        let st = self.structure();
        let ctx = NodeCtx::new(0.0, &[0.0, 0.0]);
        let mut out = [0.0; 2];
        eval_rhs(self, &st, &x, p, &ctx, &mut out)?;
        Ok(out)
    }
}

impl DynamicModel for VdpTrainModel {
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_p(&self) -> usize {
        self.net_x.n_params() + self.net_y.n_params()
    }
    fn data_width(&self) -> usize {
        2
    }

    fn structure(&self) -> ModelStructure {
        let n = self.net_x.n_params();
        ModelStructure {
            surrogates: vec![
                SurrogateSpec { state_deps: vec![0, 1], params: 0..n },
                SurrogateSpec { state_deps: vec![0, 1], params: n..n + self.net_y.n_params() },
            ],
            direct_params: Vec::new(),
        }
    }

    fn surrogate<S: Scalar>(&self, k: usize, xa: &[S], w: &[S]) -> Result<S, EvalError> {
        Ok(match k {
            0 => self.net_x.forward(xa, w),
            _ => self.net_y.forward(xa, w),
        })
    }

    fn rhs<S: Scalar>(
        &self,
        _x: &[S],
        _pd: &[S],
        nu: &[S],
        _ctx: &NodeCtx,
        out: &mut [S],
    ) -> Result<(), EvalError> {
        out[0] = nu[0].clone();
        out[1] = nu[1].clone();
        Ok(())
    }

    fn lagrange<S: Scalar>(&self, x: &[S], _pd: &[S], _nu: &[S], ctx: &NodeCtx) -> Result<S, EvalError> {
        let r_x = x[0].clone().scale(-1.0).add_f64(ctx.data[0]);
        let r_y = x[1].clone().scale(-1.0).add_f64(ctx.data[1]);
        Ok(r_x.mul_ref(&r_x) + r_y.mul_ref(&r_y))
    }

    fn mayer<S: Scalar>(&self, _x0: &[S], _xf: &[S], p: &[S]) -> Result<S, EvalError> {
        let mut acc = S::from_f64(0.0);
        for w in p {
            acc = acc + w.mul_ref(w);
        }
        Ok(acc.scale(self.lambda))
    }

    fn n_boundary(&self) -> usize {
        2
    }
    fn boundary<S: Scalar>(&self, x0: &[S], _xf: &[S], _p: &[S], out: &mut [S]) -> Result<(), EvalError> {
        out[0] = x0[0].clone().add_f64(-self.x_init[0]);
        out[1] = x0[1].clone().add_f64(-self.x_init[1]);
        Ok(())
    }
}

/// regularization weight matched to the noise level
pub fn lambda_for_sigma(sigma: f64) -> f64 {
    if sigma >= 0.25 {
        1e-3
    } else {
        1e-4
    }
}

/// Configuration of one oscillator training run.
#[derive(Debug, Clone)]
pub struct VdpTrainConfig {
    pub lambda: f64,
    pub n_intervals: usize,
    pub stages: usize,
    pub x_init: [f64; 2],
    /// parameter-initialization seed
    pub seed: u64,
    pub threads: usize,
    pub solver: SolverOptions,
}

impl Default for VdpTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            n_intervals: 500,
            stages: 5,
            x_init: [2.0, 0.0],
            seed: 0,
            threads: 1,
            solver: SolverOptions::default(),
        }
    }
}

/// A finished oscillator training run.
pub struct VdpRun {
    pub phase: TrainPhase,
    pub nlp: SparseNlp<VdpTrainModel>,
    pub solution: Solution,
}

impl VdpRun {
    pub fn model(&self) -> &VdpTrainModel {
        self.nlp.model()
    }
    pub fn params(&self) -> &[f64] {
        self.nlp.params(&self.solution.z)
    }
}

pub fn train_vdp(cfg: &VdpTrainConfig, data: &TrajectoryData) -> Result<VdpRun, ProblemError> {
    if data.channels.len() != 2 {
        return Err(ProblemError::BadConfig("oscillator training data needs exactly two channels"));
    }
    if cfg.n_intervals == 0 || cfg.stages == 0 {
        return Err(ProblemError::BadConfig("mesh needs at least one interval and one stage"));
    }
    let model = VdpTrainModel::new(cfg.lambda, cfg.x_init);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut p0 = model.net_x.init_weights(&mut rng);
    p0.extend(model.net_y.init_weights(&mut rng));
    let mesh = Mesh::uniform(data.t0(), data.tf(), cfg.n_intervals, cfg.stages);
    let x_init = cfg.x_init;
    let mut nlp = SparseNlp::new(model, mesh, data)?;
    nlp.set_threads(cfg.threads);
    let z0 = nlp.pack_guess(|_t, out| out.copy_from_slice(&x_init), &p0);
    let sol = solve(&nlp, &z0, &cfg.solver);
    let phase = make_phase("train", &nlp, &sol);
    Ok(VdpRun { phase, nlp, solution: sol })
}

/// integrate the truth oscillator on `n_out` uniform output times over
/// `[0, horizon]`
pub fn simulate_vdp_truth(mu: f64, x0: [f64; 2], horizon: f64, n_out: usize) -> Result<SimResult, ProblemError> {
    let times = uniform_grid(0.0, horizon, n_out)?;
    let steps = ((horizon * 50.0).ceil() as usize).max(64);
    Ok(simulate(&VdpTruth { mu }, &[], &x0, 0.0, horizon, steps, 5, &NoData, &times, &SimOptions::default())?)
}

/// integrate a trained oscillator model from its pinned initial state
pub fn simulate_vdp_trained(
    model: &VdpTrainModel,
    p: &[f64],
    horizon: f64,
    n_out: usize,
) -> Result<SimResult, ProblemError> {
    let times = uniform_grid(0.0, horizon, n_out)?;
    let steps = ((horizon * 50.0).ceil() as usize).max(64);
    Ok(simulate(model, p, &model.x_init, 0.0, horizon, steps, 3, &NoData, &times, &SimOptions::default())?)
}

fn uniform_grid(t0: f64, tf: f64, n: usize) -> Result<Vec<f64>, ProblemError> {
    if n < 2 || !(tf > t0) {
        return Err(ProblemError::BadConfig("output grid needs at least two ascending points"));
    }
    Ok((0..n).map(|i| t0 + (tf - t0) * i as f64 / (n - 1) as f64).collect())
}

/// largest absolute state deviation between two results sharing one output
/// grid, restricted to times at most `t_max`
pub fn max_abs_deviation(a: &SimResult, b: &SimResult, t_max: f64) -> f64 {
    debug_assert_eq!(a.t.len(), b.t.len(), "deviation needs a shared grid");
    let mut dev: f64 = 0.0;
    for (q, &t) in a.t.iter().enumerate() {
        if t > t_max + 1e-9 {
            break;
        }
        for s in 0..a.x.len().min(b.x.len()) {
            dev = dev.max((a.x[s][q] - b.x[s][q]).abs());
        }
    }
    dev
}

/// mean Euclidean error of the learned vector field along a reference
/// trajectory
pub fn vdp_field_error(
    model: &VdpTrainModel,
    p: &[f64],
    mu: f64,
    reference: &SimResult,
) -> Result<f64, ProblemError> {
    let truth = VdpTruth { mu };
    let ctx = NodeCtx::new(0.0, &[]);
    let mut acc = 0.0;
    let mut f_true = [0.0; 2];
    for q in 0..reference.t.len() {
        let x = [reference.x[0][q], reference.x[1][q]];
        let f_fit = model.field(x, p)?;
        truth.rhs(&x, &[], &[], &ctx, &mut f_true)?;
        acc += ((f_fit[0] - f_true[0]).powi(2) + (f_fit[1] - f_true[1]).powi(2)).sqrt();
    }
    Ok(acc / reference.t.len() as f64)
}

// ---------------------------------------------------------------------------
// oscillator noise-robustness sweep

/// Configuration of the oscillator noise-robustness sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
    pub runs_per_sigma: usize,
    /// training mesh
    pub n_intervals: usize,
    pub stages: usize,
    /// data grid intervals over the training horizon
    pub n_grid: usize,
    pub mu: f64,
    pub x_init: [f64; 2],
    /// training-data horizon, s
    pub horizon: f64,
    /// rollout horizon for the percentile bands, s
    pub extended_horizon: f64,
    /// window of the convergence classification, s
    pub classify_horizon: f64,
    /// state-deviation threshold of the classification
    pub classify_tol: f64,
    /// output points of the extended rollout
    pub rollout_points: usize,
    pub base_seed: u64,
    /// solver threads inside each run
    pub threads: usize,
    /// run several trainings concurrently
    pub parallel_runs: bool,
    pub solver: SolverOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.1, 0.5],
            runs_per_sigma: 20,
            n_intervals: 250,
            stages: 5,
            n_grid: 200,
            mu: 1.0,
            x_init: [2.0, 0.0],
            horizon: 7.0,
            extended_horizon: 32.0,
            classify_horizon: 7.0,
            classify_tol: 0.5,
            rollout_points: 321,
            base_seed: 1,
            threads: 1,
            parallel_runs: true,
            solver: SolverOptions::default(),
        }
    }
}

/// One run of the sweep.
#[derive(Debug)]
pub struct SweepRun {
    pub sigma: f64,
    pub seed: u64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub wall_s: f64,
    /// rollout stayed within the classification tolerance of the reference
    pub converged: bool,
    /// largest state deviation inside the classification window (NaN if the
    /// rollout failed there too)
    pub max_dev: f64,
    /// mean vector-field error along the reference (NaN on failure)
    pub field_err: f64,
    /// extended-horizon rollout, when it completed
    pub rollout: Option<SimResult>,
}

/// pointwise percentile curves of one state channel
#[derive(Debug, Clone)]
pub struct ChannelBands {
    pub p10: Vec<f64>,
    pub p25: Vec<f64>,
    pub p50: Vec<f64>,
    pub p75: Vec<f64>,
    pub p90: Vec<f64>,
}

/// aggregate over all runs of one noise level
#[derive(Debug, Clone)]
pub struct SigmaSummary {
    pub sigma: f64,
    pub total: usize,
    pub converged: usize,
    /// per state channel, over runs with a completed rollout
    pub bands: Vec<ChannelBands>,
    /// median field error among converged runs (NaN if none converged)
    pub median_field_err: f64,
}

/// Everything a sweep produces.
pub struct SweepReport {
    /// shared rollout time grid
    pub t: Vec<f64>,
    /// truth rollout on the same grid
    pub reference: SimResult,
    pub runs: Vec<SweepRun>,
    pub summaries: Vec<SigmaSummary>,
}

pub fn sensitivity_sweep(cfg: &SweepConfig) -> Result<SweepReport, ProblemError> {
    if cfg.sigmas.is_empty() || cfg.runs_per_sigma == 0 {
        return Err(ProblemError::BadConfig("sweep needs at least one noise level and one run"));
    }
    if cfg.classify_horizon > cfg.extended_horizon {
        return Err(ProblemError::BadConfig("classification window exceeds the rollout horizon"));
    }
    let reference = simulate_vdp_truth(cfg.mu, cfg.x_init, cfg.extended_horizon, cfg.rollout_points)?;

    let jobs: Vec<(usize, usize)> = (0..cfg.sigmas.len())
        .flat_map(|si| (0..cfg.runs_per_sigma).map(move |ri| (si, ri)))
        .collect();
    let run_one = |&(si, ri): &(usize, usize)| sweep_run(cfg, si, ri, &reference);
    let runs: Vec<SweepRun> = if cfg.parallel_runs {
        jobs.par_iter().map(run_one).collect()
    } else {
        jobs.iter().map(run_one).collect()
    };

    let mut summaries = Vec::with_capacity(cfg.sigmas.len());
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let chunk = &runs[si * cfg.runs_per_sigma..(si + 1) * cfg.runs_per_sigma];
        let converged = chunk.iter().filter(|r| r.converged).count();
        let bands = (0..2).map(|s| channel_bands(chunk, s, cfg.rollout_points)).collect();
        let mut field_errs: Vec<f64> = chunk
            .iter()
            .filter(|r| r.converged && r.field_err.is_finite())
            .map(|r| r.field_err)
            .collect();
        let median_field_err = percentile_of(&mut field_errs, 0.5);
        summaries.push(SigmaSummary { sigma, total: chunk.len(), converged, bands, median_field_err });
    }
    Ok(SweepReport { t: reference.t.clone(), reference, runs, summaries })
}

fn sweep_run(cfg: &SweepConfig, si: usize, ri: usize, reference: &SimResult) -> SweepRun {
    let sigma = cfg.sigmas[si];
    let seed = cfg.base_seed + (si * cfg.runs_per_sigma + ri) as u64;
    let mut run = SweepRun {
        sigma,
        seed,
        status: SolveStatus::EvalFailure,
        iterations: 0,
        objective: f64::NAN,
        wall_s: 0.0,
        converged: false,
        max_dev: f64::NAN,
        field_err: f64::NAN,
        rollout: None,
    };

    let data_cfg = VdpDataConfig {
        mu: cfg.mu,
        x0: cfg.x_init,
        horizon: cfg.horizon,
        n_grid: cfg.n_grid,
        sigma,
        noise_seed: seed.wrapping_mul(2),
    };
    let data = match generate_vdp_data(&data_cfg) {
        Ok(d) => d,
        Err(_) => return run,
    };
    let tcfg = VdpTrainConfig {
        lambda: lambda_for_sigma(sigma),
        n_intervals: cfg.n_intervals,
        stages: cfg.stages,
        x_init: cfg.x_init,
        seed: seed.wrapping_mul(2).wrapping_add(1),
        threads: cfg.threads,
        solver: cfg.solver.clone(),
    };
    let trained = match train_vdp(&tcfg, &data) {
        Ok(r) => r,
        Err(_) => return run,
    };
    run.status = trained.solution.status;
    run.iterations = trained.solution.iterations;
    run.objective = trained.solution.objective;
    run.wall_s = trained.phase.wall_s;

    let p = trained.params().to_vec();
    run.field_err = vdp_field_error(trained.model(), &p, cfg.mu, reference).unwrap_or(f64::NAN);

    match simulate_vdp_trained(trained.model(), &p, cfg.extended_horizon, cfg.rollout_points) {
        Ok(rollout) => {
            run.max_dev = max_abs_deviation(&rollout, reference, cfg.classify_horizon);
            run.converged = run.max_dev <= cfg.classify_tol;
            run.rollout = Some(rollout);
        }
        Err(_) => {
            // the extended rollout blew up: classify on the short window
            let pts = ((cfg.rollout_points as f64 * cfg.classify_horizon / cfg.extended_horizon).ceil()
                as usize)
                .max(2);
            if let (Ok(short), Ok(short_ref)) = (
                simulate_vdp_trained(trained.model(), &p, cfg.classify_horizon, pts),
                simulate_vdp_truth(cfg.mu, cfg.x_init, cfg.classify_horizon, pts),
            ) {
                run.max_dev = max_abs_deviation(&short, &short_ref, cfg.classify_horizon);
                run.converged = run.max_dev <= cfg.classify_tol;
            }
        }
    }
    run
}

/// pointwise percentiles of one state over the runs that produced a rollout
fn channel_bands(runs: &[SweepRun], s: usize, n_points: usize) -> ChannelBands {
    let mut bands = ChannelBands {
        p10: Vec::with_capacity(n_points),
        p25: Vec::with_capacity(n_points),
        p50: Vec::with_capacity(n_points),
        p75: Vec::with_capacity(n_points),
        p90: Vec::with_capacity(n_points),
    };
    let mut vals = Vec::with_capacity(runs.len());
    for q in 0..n_points {
        vals.clear();
        vals.extend(runs.iter().filter_map(|r| r.rollout.as_ref().map(|ro| ro.x[s][q])));
        vals.sort_unstable_by(f64::total_cmp);
        bands.p10.push(percentile_sorted(&vals, 0.10));
        bands.p25.push(percentile_sorted(&vals, 0.25));
        bands.p50.push(percentile_sorted(&vals, 0.50));
        bands.p75.push(percentile_sorted(&vals, 0.75));
        bands.p90.push(percentile_sorted(&vals, 0.90));
    }
    bands
}

/// percentile with linear interpolation between closest order statistics
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn percentile_of(vals: &mut [f64], q: f64) -> f64 {
    vals.sort_unstable_by(f64::total_cmp);
    percentile_sorted(vals, q)
}

impl SweepReport {
    /// one row per run
    pub fn write_runs_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "sigma,seed,status,iterations,objective,wall_s,converged,max_dev,field_err")?;
        for r in &self.runs {
            writeln!(
                f,
                "{},{},{:?},{},{:.9e},{:.3},{},{:.9e},{:.9e}",
                r.sigma,
                r.seed,
                r.status,
                r.iterations,
                r.objective,
                r.wall_s,
                r.converged,
                r.max_dev,
                r.field_err
            )?;
        }
        Ok(())
    }

    /// wide table: time, truth, then per-noise-level percentile curves of
    /// both states
    pub fn write_bands_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        let mut head = String::from("t,ref_x,ref_y");
        for s in &self.summaries {
            for ch in ["x", "y"] {
                for p in ["p10", "p25", "p50", "p75", "p90"] {
                    head.push_str(&format!(",sig{}_{}_{}", s.sigma, ch, p));
                }
            }
        }
        writeln!(f, "{head}")?;
        for q in 0..self.t.len() {
            let mut row = format!(
                "{:.9e},{:.9e},{:.9e}",
                self.t[q], self.reference.x[0][q], self.reference.x[1][q]
            );
            for s in &self.summaries {
                for ch in 0..2 {
                    let b = &s.bands[ch];
                    for v in [b.p10[q], b.p25[q], b.p50[q], b.p75[q], b.p90[q]] {
                        row.push_str(&format!(",{v:.9e}"));
                    }
                }
            }
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}
