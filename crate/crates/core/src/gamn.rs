//! Meta-learned joint optimisation of RIS phases and the BS precoder.
//!
//! Each outer epoch `t`:
//!
//! 1. `n_P` phase steps `θ ← θ + PL(∇_θ R(W*, θ))`, then `θ* = θ / |θ|`.
//! 2. `n_PR` precoder steps `W ← W + h PRL(∇_W R(W, θ*))`, then
//!    `W* = sqrt(P) W / ||W||`.
//! 3. `L = -R(W*, θ*)`; Adam on the precoder-learner weights every epoch and
//!    on the phase-learner weights when `t % n_I == 0`.
//!
//! The gradients fed into the learners are detached leaves, so the weight
//! gradients are first order. [`build_epoch`] exposes the detach point through
//! [`DetachedInputs`].

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::cdiff::{CdiffError, ComplexTensor, NodeId, Tape};
use crate::channel::{self, ChannelError, ChannelSet, Geometry, RicianParams};
use crate::manifold::{Manifold, ManifoldError, RadamState};
use crate::metrics::{self, MetricsError, SystemParams};
use crate::nets::{self, Mlp, MlpNodes, NetsError, PhaseLearner, DEFAULT_HIDDEN};

#[derive(Debug, Error)]
pub enum GamnError {
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("non-finite loss at epoch {epoch} ({variant})")]
    NonFinite { epoch: usize, variant: Variant },
    #[error("realization with seed {seed} failed: {source}")]
    Realization {
        seed: u64,
        #[source]
        source: Box<GamnError>,
    },
    #[error(transparent)]
    Cdiff(#[from] CdiffError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Outer epochs `n_M`.
    pub n_outer: usize,
    /// Phase inner steps `n_P`.
    pub n_phase: usize,
    /// Precoder inner steps `n_PR`.
    pub n_precoder: usize,
    /// Phase-learner learning rate `α_P`.
    pub lr_phase: f64,
    /// Precoder-learner learning rate `α_PR`.
    pub lr_precoder: f64,
    /// Euler factor `h`.
    pub euler: f64,
    /// Phase-learner update period `n_I`.
    pub phase_period: usize,
    pub hidden: usize,
    /// Initial arc step of the gradient-ascent baseline on the phases (rad).
    pub pga_theta_step: f64,
    /// Initial relative step of the gradient-ascent baseline on the precoder.
    pub pga_precoder_step: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_outer: 500,
            n_phase: 1,
            n_precoder: 1,
            lr_phase: 1e-2,
            lr_precoder: 3.5e-2,
            euler: 10.0,
            phase_period: 10,
            hidden: DEFAULT_HIDDEN,
            pga_theta_step: 0.1,
            pga_precoder_step: 0.1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), GamnError> {
        let counts = [
            ("n_outer", self.n_outer),
            ("n_phase", self.n_phase),
            ("n_precoder", self.n_precoder),
            ("phase_period", self.phase_period),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(GamnError::Hyper(format!("{name} must be >= 1")));
        }
        let rates = [
            ("lr_phase", self.lr_phase),
            ("lr_precoder", self.lr_precoder),
            ("euler", self.euler),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(GamnError::Hyper(format!("{name} must be > 0, got {v}")));
        }
        let steps = [
            ("pga_theta_step", self.pga_theta_step),
            ("pga_precoder_step", self.pga_precoder_step),
        ];
        if let Some((name, v)) = steps.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(GamnError::Hyper(format!("{name} must be >= 0, got {v}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Complex phase learner, configured Euler factor.
    Gamn,
    /// Real-weight phase learner on `[Re; Im]` of the phase gradient.
    GamnReal,
    /// Complex phase learner with `h = 1`.
    GamnNoEuler,
    /// Riemannian gradient ascent without learners.
    Pga,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Gamn,
        Variant::GamnReal,
        Variant::GamnNoEuler,
        Variant::Pga,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Gamn => "gamn",
            Variant::GamnReal => "gamn_real",
            Variant::GamnNoEuler => "gamn_no_euler",
            Variant::Pga => "pga",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// `R(W*, θ*)` after both retractions, one entry per epoch.
    pub wsr_per_epoch: Vec<f64>,
    pub final_theta: ComplexTensor,
    pub final_w: ComplexTensor,
    pub seed: u64,
    pub variant: Variant,
    pub hyper: HyperParams,
}

impl RunTrace {
    pub fn final_wsr(&self) -> f64 {
        self.wsr_per_epoch.last().copied().unwrap_or(0.0)
    }

    pub fn best_wsr(&self) -> f64 {
        self.wsr_per_epoch
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-epoch snapshot handed to observers.
#[derive(Debug)]
pub struct EpochView<'a> {
    /// Zero-based epoch index.
    pub epoch: usize,
    pub theta: &'a ComplexTensor,
    pub w: &'a ComplexTensor,
    pub wsr: f64,
    /// Learners after this epoch's weight updates (`None` for the baseline).
    pub phase: Option<&'a PhaseLearner>,
    pub precoder: Option<&'a Mlp>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Start both learners with a zero output layer.
    pub zero_output_layers: bool,
}

/// Random feasible starting point plus learner seeds, all drawn from `seed`.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub theta: ComplexTensor,
    pub w: ComplexTensor,
    pub phase_seed: u64,
    pub precoder_seed: u64,
}

impl Initialization {
    /// Phases uniform on the circle; precoder complex Gaussian retracted to
    /// power `power`.
    pub fn draw(seed: u64, n: usize, m: usize, k: usize, power: f64) -> Result<Self, GamnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = ComplexTensor::column(
            (0..n)
                .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect(),
        );
        let raw: Vec<Complex64> = (0..m * k)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im)
            })
            .collect();
        let raw = ComplexTensor::matrix(m, k, raw)?;
        let w = Manifold::PowerSphere { m, k, power }.normalize(&raw)?;
        Ok(Self {
            theta,
            w,
            phase_seed: rng.next_u64(),
            precoder_seed: rng.next_u64(),
        })
    }
}

/// Fixed inputs of one epoch graph.
#[derive(Debug, Clone, Copy)]
pub struct EpochContext<'a> {
    pub channels: &'a ChannelSet,
    pub system: &'a SystemParams,
    pub euler: f64,
    pub n_phase: usize,
    pub n_precoder: usize,
}

/// Learner inputs computed from rate gradients during an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct DetachedInputs {
    /// `∇_θ R` for each phase inner step.
    pub phase: Vec<ComplexTensor>,
    /// `∇_W R` for each precoder inner step.
    pub precoder: Vec<ComplexTensor>,
}

/// Handles into a recorded epoch.
#[derive(Debug, Clone)]
pub struct EpochGraph {
    pub loss: NodeId,
    pub rate: NodeId,
    pub theta: NodeId,
    pub w: NodeId,
    pub detached: DetachedInputs,
}

/// Records one outer epoch on `tape`, starting from the retracted iterates of
/// the previous epoch.
///
/// With `frozen = None` the learner inputs are computed from the current
/// iterates. Passing a previously returned [`DetachedInputs`] replays the
/// epoch with those inputs held fixed, which makes the loss an ordinary
/// function of the learner weights.
#[allow(clippy::too_many_arguments)]
pub fn build_epoch(
    tape: &mut Tape,
    ctx: &EpochContext<'_>,
    theta_prev: &ComplexTensor,
    w_prev: &ComplexTensor,
    phase: &PhaseLearner,
    phase_nodes: &MlpNodes,
    precoder: &Mlp,
    precoder_nodes: &MlpNodes,
    frozen: Option<&DetachedInputs>,
) -> Result<EpochGraph, GamnError> {
    let mut detached = DetachedInputs {
        phase: Vec::with_capacity(ctx.n_phase),
        precoder: Vec::with_capacity(ctx.n_precoder),
    };

    let mut theta = tape.leaf(theta_prev.clone());
    for step in 0..ctx.n_phase {
        let grad = match frozen {
            Some(f) => f.phase[step].clone(),
            None => {
                metrics::wsr_gradients(tape.value(theta), w_prev, ctx.channels, ctx.system)?.theta
            }
        };
        let input = tape.leaf(grad.clone());
        detached.phase.push(grad);
        let delta = phase.delta_graph(tape, phase_nodes, input)?;
        theta = tape.add(theta, delta)?;
    }
    let theta_star = tape.unit_normalize(theta)?;

    let mut w = tape.leaf(w_prev.clone());
    let h = Complex64::new(ctx.euler, 0.0);
    for step in 0..ctx.n_precoder {
        let grad = match frozen {
            Some(f) => f.precoder[step].clone(),
            None => {
                metrics::wsr_gradients(
                    tape.value(theta_star),
                    tape.value(w),
                    ctx.channels,
                    ctx.system,
                )?
                .w
            }
        };
        let input = tape.leaf(grad.clone());
        detached.precoder.push(grad);
        let delta = nets::precoder_delta_graph(precoder, tape, precoder_nodes, input)?;
        let scaled = tape.scale(delta, h)?;
        w = tape.add(w, scaled)?;
    }
    let w_star = tape.sphere_normalize(w, ctx.system.power.sqrt())?;

    let rate = metrics::wsr_graph(tape, theta_star, w_star, ctx.channels, ctx.system)?;
    let loss = tape.scale(rate, Complex64::new(-1.0, 0.0))?;
    Ok(EpochGraph {
        loss,
        rate,
        theta: theta_star,
        w: w_star,
        detached,
    })
}

/// Adam state for every parameter tensor of a learner.
struct NetOptimizer {
    states: Vec<(Manifold, RadamState)>,
    lr: f64,
}

impl NetOptimizer {
    fn new(net: &Mlp, lr: f64) -> Self {
        let states = net
            .params()
            .iter()
            .map(|p| {
                let man = Manifold::Euclidean(p.len());
                let st = RadamState::new(&man, p.shape());
                (man, st)
            })
            .collect();
        Self { states, lr }
    }

    fn step(&mut self, net: &mut Mlp, grads: [ComplexTensor; 4]) -> Result<(), GamnError> {
        for ((param, grad), (man, state)) in net
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(self.states.iter_mut())
        {
            *param = man.radam_step(param, &grad, state, self.lr)?;
        }
        Ok(())
    }
}

fn take_grads(grads: &mut crate::cdiff::GradientMap, nodes: &MlpNodes) -> [ComplexTensor; 4] {
    nodes.as_array().map(|id| {
        grads
            .take(id)
            .expect("parameter leaves always receive gradients")
    })
}

fn check_dims(channels: &ChannelSet, system: &SystemParams) -> Result<(), GamnError> {
    system.validate()?;
    if channels.k() != system.k() || channels.h_ru.cols() != channels.n() {
        return Err(MetricsError::Shape(format!(
            "channels N={} M={} K={} do not match {} user weights",
            channels.n(),
            channels.m(),
            channels.k(),
            system.k()
        ))
        .into());
    }
    Ok(())
}

/// Runs one variant on one channel realization.
pub fn run(
    channels: &ChannelSet,
    system: &SystemParams,
    hyper: &HyperParams,
    variant: Variant,
    seed: u64,
) -> Result<RunTrace, GamnError> {
    run_with(
        channels,
        system,
        hyper,
        variant,
        seed,
        &RunOptions::default(),
        &mut |_| {},
    )
}

/// [`run`] with options and a per-epoch observer.
pub fn run_with(
    channels: &ChannelSet,
    system: &SystemParams,
    hyper: &HyperParams,
    variant: Variant,
    seed: u64,
    options: &RunOptions,
    observer: &mut dyn FnMut(&EpochView<'_>),
) -> Result<RunTrace, GamnError> {
    hyper.validate()?;
    check_dims(channels, system)?;
    if variant == Variant::Pga {
        return pga_with(channels, system, hyper, seed, observer);
    }
    let (n, m, k) = (channels.n(), channels.m(), channels.k());
    let init = Initialization::draw(seed, n, m, k, system.power)?;

    let mut phase = match variant {
        Variant::GamnReal => PhaseLearner::Real(Mlp::real_phase(init.phase_seed, n, hyper.hidden)),
        _ => PhaseLearner::Complex(Mlp::complex_phase(init.phase_seed, n, hyper.hidden)),
    };
    let mut precoder = Mlp::precoder(init.precoder_seed, m, k, hyper.hidden);
    if options.zero_output_layers {
        phase.net_mut().zero_output_layer();
        precoder.zero_output_layer();
    }
    let euler = match variant {
        Variant::GamnNoEuler => 1.0,
        _ => hyper.euler,
    };
    let ctx = EpochContext {
        channels,
        system,
        euler,
        n_phase: hyper.n_phase,
        n_precoder: hyper.n_precoder,
    };
    let mut phase_opt = NetOptimizer::new(phase.net(), hyper.lr_phase);
    let mut precoder_opt = NetOptimizer::new(&precoder, hyper.lr_precoder);

    let mut theta = init.theta;
    let mut w = init.w;
    let mut trace = Vec::with_capacity(hyper.n_outer);
    for t in 1..=hyper.n_outer {
        let mut tape = Tape::new();
        let phase_nodes = phase.net().register(&mut tape);
        let precoder_nodes = precoder.register(&mut tape);
        let epoch = build_epoch(
            &mut tape,
            &ctx,
            &theta,
            &w,
            &phase,
            &phase_nodes,
            &precoder,
            &precoder_nodes,
            None,
        )?;
        let rate = tape.value(epoch.rate).data()[0].re;
        if !rate.is_finite() {
            return Err(GamnError::NonFinite {
                epoch: t - 1,
                variant,
            });
        }
        let mut grads = tape.backward(epoch.loss)?;
        precoder_opt.step(&mut precoder, take_grads(&mut grads, &precoder_nodes))?;
        if t % hyper.phase_period == 0 {
            phase_opt.step(phase.net_mut(), take_grads(&mut grads, &phase_nodes))?;
        }
        theta = tape.value(epoch.theta).clone();
        w = tape.value(epoch.w).clone();
        trace.push(rate);
        observer(&EpochView {
            epoch: t - 1,
            theta: &theta,
            w: &w,
            wsr: rate,
            phase: Some(&phase),
            precoder: Some(&precoder),
        });
    }

    Ok(RunTrace {
        wsr_per_epoch: trace,
        final_theta: theta,
        final_w: w,
        seed,
        variant,
        hyper: hyper.clone(),
    })
}

/// Riemannian gradient ascent on `θ` and `W` alternately, from the same
/// starting point [`run`] would use for `seed`.
///
/// Each block moves along its normalised Riemannian gradient: the phases by
/// at most `pga_theta_step` per element, the precoder by
/// `pga_precoder_step * sqrt(P)`. A move that lowers the rate is rejected and
/// halves that block's step, so the trace never decreases. `n_outer` sets the
/// iteration count.
pub fn pga_baseline(
    channels: &ChannelSet,
    system: &SystemParams,
    hyper: &HyperParams,
    seed: u64,
) -> Result<RunTrace, GamnError> {
    hyper.validate()?;
    check_dims(channels, system)?;
    pga_with(channels, system, hyper, seed, &mut |_| {})
}

fn pga_with(
    channels: &ChannelSet,
    system: &SystemParams,
    hyper: &HyperParams,
    seed: u64,
    observer: &mut dyn FnMut(&EpochView<'_>),
) -> Result<RunTrace, GamnError> {
    let (n, m, k) = (channels.n(), channels.m(), channels.k());
    let init = Initialization::draw(seed, n, m, k, system.power)?;
    let circle = Manifold::CircleProduct(n);
    let sphere = Manifold::PowerSphere {
        m,
        k,
        power: system.power,
    };
    let mut theta = init.theta;
    let mut w = init.w;
    let mut theta_step = hyper.pga_theta_step;
    let mut w_step = hyper.pga_precoder_step * system.power.sqrt();
    let rate = |theta: &ComplexTensor, w: &ComplexTensor| -> Result<f64, GamnError> {
        Ok(metrics::wsr_gradients(theta, w, channels, system)?.wsr)
    };
    let mut current = rate(&theta, &w)?;
    let mut trace = Vec::with_capacity(hyper.n_outer);

    for epoch in 0..hyper.n_outer {
        if theta_step > 0.0 {
            let g = metrics::wsr_gradients(&theta, &w, channels, system)?.theta;
            let rg = circle.tangent_project(&theta, &g)?;
            let scale = rg.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
            if scale > 0.0 {
                let cand =
                    circle.retract(&theta, &rg.scaled(Complex64::new(theta_step / scale, 0.0)))?;
                let r = rate(&cand, &w)?;
                if r >= current {
                    theta = cand;
                    current = r;
                } else {
                    theta_step *= 0.5;
                }
            }
        }
        if w_step > 0.0 {
            let g = metrics::wsr_gradients(&theta, &w, channels, system)?.w;
            let rg = sphere.tangent_project(&w, &g)?;
            let scale = rg.norm();
            if scale > 0.0 {
                let cand = sphere.retract(&w, &rg.scaled(Complex64::new(w_step / scale, 0.0)))?;
                let r = rate(&theta, &cand)?;
                if r >= current {
                    w = cand;
                    current = r;
                } else {
                    w_step *= 0.5;
                }
            }
        }
        if !current.is_finite() {
            return Err(GamnError::NonFinite {
                epoch,
                variant: Variant::Pga,
            });
        }
        trace.push(current);
        observer(&EpochView {
            epoch,
            theta: &theta,
            w: &w,
            wsr: current,
            phase: None,
            precoder: None,
        });
    }
    Ok(RunTrace {
        wsr_per_epoch: trace,
        final_theta: theta,
        final_w: w,
        seed,
        variant: Variant::Pga,
        hyper: hyper.clone(),
    })
}

/// Everything needed to draw and optimise one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub system: SystemParams,
    pub geometry: Geometry,
    pub rician: RicianParams,
    pub hyper: HyperParams,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Seed of realization `index` under `master`.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Per-realization seeds: the channel draw uses the realization seed itself,
/// the optimiser initialisation a value derived from it. All variants share
/// both, so variant comparisons are paired.
pub fn run_seed(realization: u64) -> u64 {
    splitmix64(realization.wrapping_add(1))
}

/// Channel draw plus one variant for a single realization seed.
pub fn run_realization(setup: &Setup, variant: Variant, seed: u64) -> Result<RunTrace, GamnError> {
    let channels = channel::generate(
        seed,
        &setup.geometry,
        &setup.rician,
        setup.n,
        setup.m,
        setup.k,
    )?;
    run(
        &channels,
        &setup.system,
        &setup.hyper,
        variant,
        run_seed(seed),
    )
}

/// Element-wise statistics over realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedTrace {
    pub variant: Variant,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Final-epoch rate of each realization, in seed order.
    pub final_wsr: Vec<f64>,
    /// Best-epoch rate of each realization, in seed order.
    pub best_wsr: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// Sample mean and standard error (zero for a single sample).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `variant` on each realization seed and averages the traces.
///
/// Realizations run on the current rayon pool; results are merged in seed
/// order so the output does not depend on the pool size. Any failure aborts
/// the whole average.
pub fn average_seeds(
    setup: &Setup,
    variant: Variant,
    seeds: &[u64],
) -> Result<AveragedTrace, GamnError> {
    if seeds.is_empty() {
        return Err(GamnError::Hyper("need at least one realization".into()));
    }
    let traces: Vec<RunTrace> = seeds
        .par_iter()
        .map(|&seed| {
            run_realization(setup, variant, seed).map_err(|e| GamnError::Realization {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;
    let epochs = traces[0].wsr_per_epoch.len();
    let mut mean = Vec::with_capacity(epochs);
    let mut stderr = Vec::with_capacity(epochs);
    let mut column = Vec::with_capacity(traces.len());
    for e in 0..epochs {
        column.clear();
        column.extend(traces.iter().map(|t| t.wsr_per_epoch[e]));
        let (mu, se) = mean_stderr(&column);
        mean.push(mu);
        stderr.push(se);
    }
    Ok(AveragedTrace {
        variant,
        mean,
        stderr,
        final_wsr: traces.iter().map(RunTrace::final_wsr).collect(),
        best_wsr: traces.iter().map(RunTrace::best_wsr).collect(),
        seeds: seeds.to_vec(),
    })
}

/// [`average_seeds`] over `n_realizations` seeds derived from `master_seed`.
pub fn average_runs(
    setup: &Setup,
    variant: Variant,
    n_realizations: usize,
    master_seed: u64,
) -> Result<AveragedTrace, GamnError> {
    let seeds: Vec<u64> = (0..n_realizations as u64)
        .map(|i| realization_seed(master_seed, i))
        .collect();
    average_seeds(setup, variant, &seeds)
}
