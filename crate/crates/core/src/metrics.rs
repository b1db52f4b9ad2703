//! SINR, weighted sum rate and training loss.
//!
//! Two independent routes are provided: plain loop evaluators over
//! [`SystemState`], and graph builders that record the same quantities on a
//! [`Tape`] so gradients with respect to the phases and the precoder can be
//! taken.

use num_complex::Complex64;
use thiserror::Error;

use crate::cdiff::{CdiffError, ComplexTensor, NodeId, Tape};
use crate::channel::ChannelSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid system state: {0}")]
    InvalidState(String),
    #[error("user index {index} out of range for K={k}")]
    UserIndex { index: usize, k: usize },
    #[error(transparent)]
    Cdiff(#[from] CdiffError),
}

/// Fixed, non-optimized parts of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Per-user rate weights `c_k`, summing to one.
    pub weights: Vec<f64>,
    /// Noise power in watts.
    pub sigma2: f64,
    /// Total transmit power in watts.
    pub power: f64,
}

impl SystemParams {
    /// Equal weights `1/K`.
    pub fn uniform(k: usize, sigma2: f64, power: f64) -> Self {
        Self {
            weights: vec![1.0 / k as f64; k],
            sigma2,
            power,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.weights.is_empty() {
            return Err(MetricsError::InvalidState("no user weights".into()));
        }
        if self.weights.iter().any(|&c| !(c >= 0.0)) {
            return Err(MetricsError::InvalidState("weights must be >= 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MetricsError::InvalidState(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(MetricsError::InvalidState(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(MetricsError::InvalidState(format!(
                "power must be > 0, got {}",
                self.power
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

/// A feasible operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Unit-modulus RIS coefficients, length `N`.
    pub theta: Vec<Complex64>,
    /// Precoder, `M × K`.
    pub w: ComplexTensor,
    pub params: SystemParams,
}

impl SystemState {
    pub fn new(
        theta: Vec<Complex64>,
        w: ComplexTensor,
        params: SystemParams,
    ) -> Result<Self, MetricsError> {
        params.validate()?;
        if let Some((n, z)) = theta
            .iter()
            .enumerate()
            .find(|(_, z)| (z.norm() - 1.0).abs() > 1e-9)
        {
            return Err(MetricsError::InvalidState(format!(
                "theta[{n}] has modulus {}",
                z.norm()
            )));
        }
        if w.rank() != 2 || w.cols() != params.k() {
            return Err(MetricsError::Shape(format!(
                "precoder shape {:?} does not have K={} columns",
                w.shape(),
                params.k()
            )));
        }
        let used = w.norm_sqr();
        if used > params.power * (1.0 + 1e-9) {
            return Err(MetricsError::InvalidState(format!(
                "trace(W^H W) = {used} exceeds P = {}",
                params.power
            )));
        }
        Ok(Self { theta, w, params })
    }
}

fn check_shapes(
    theta_len: usize,
    w: &ComplexTensor,
    channels: &ChannelSet,
    k: usize,
) -> Result<(), MetricsError> {
    let (n, m) = (channels.n(), channels.m());
    if theta_len != n || channels.h_ru.cols() != n {
        return Err(MetricsError::Shape(format!(
            "theta has {theta_len} entries, channels have N={n}"
        )));
    }
    if w.rank() != 2 || w.rows() != m || w.cols() != k || channels.k() != k {
        return Err(MetricsError::Shape(format!(
            "precoder {:?} vs M={m}, K={} (channels) / {k} (weights)",
            w.shape(),
            channels.k()
        )));
    }
    Ok(())
}

/// Rows `h_RU_k^H diag(theta) H_BR`, as a `K × M` matrix.
pub fn effective_channel(
    state: &SystemState,
    channels: &ChannelSet,
) -> Result<ComplexTensor, MetricsError> {
    check_shapes(state.theta.len(), &state.w, channels, state.params.k())?;
    Ok(effective_channel_raw(&state.theta, channels))
}

fn effective_channel_raw(theta: &[Complex64], channels: &ChannelSet) -> ComplexTensor {
    let (n, m, k) = (channels.n(), channels.m(), channels.k());
    let mut g = ComplexTensor::zeros(&[k, m]);
    for user in 0..k {
        for ant in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for e in 0..n {
                acc += channels.h_ru.at(user, e).conj() * theta[e] * channels.h_br.at(e, ant);
            }
            g.set(user, ant, acc);
        }
    }
    g
}

/// `|g_k w_j|^2` for all user pairs.
fn link_powers(g: &ComplexTensor, w: &ComplexTensor) -> Vec<Vec<f64>> {
    let (k, m) = (g.rows(), g.cols());
    (0..k)
        .map(|user| {
            (0..w.cols())
                .map(|j| {
                    (0..m)
                        .map(|a| g.at(user, a) * w.at(a, j))
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .collect()
        })
        .collect()
}

fn sinr_from_powers(powers: &[Vec<f64>], sigma2: f64, user: usize) -> f64 {
    let interference: f64 = powers[user]
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != user)
        .map(|(_, p)| p)
        .sum();
    powers[user][user] / (sigma2 + interference)
}

/// SINR of user `k` (zero-based).
pub fn sinr(state: &SystemState, channels: &ChannelSet, k: usize) -> Result<f64, MetricsError> {
    let g = effective_channel(state, channels)?;
    if k >= channels.k() {
        return Err(MetricsError::UserIndex {
            index: k,
            k: channels.k(),
        });
    }
    Ok(sinr_from_powers(
        &link_powers(&g, &state.w),
        state.params.sigma2,
        k,
    ))
}

/// Weighted sum rate `Σ c_k log2(1 + γ_k)` in bits/s/Hz.
pub fn wsr(state: &SystemState, channels: &ChannelSet) -> Result<f64, MetricsError> {
    let g = effective_channel(state, channels)?;
    let powers = link_powers(&g, &state.w);
    Ok(state
        .params
        .weights
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c * sinr_from_powers(&powers, state.params.sigma2, k).ln_1p() / std::f64::consts::LN_2
        })
        .sum())
}

/// Training loss, the negated weighted sum rate.
pub fn loss(state: &SystemState, channels: &ChannelSet) -> Result<f64, MetricsError> {
    Ok(-wsr(state, channels)?)
}

/// Records the weighted sum rate on `tape` as a real scalar node.
///
/// `theta` is an `N × 1` node and `w` an `M × K` node. Neither is required to
/// be feasible, so intermediate inner-loop iterates can be evaluated too.
pub fn wsr_graph(
    tape: &mut Tape,
    theta: NodeId,
    w: NodeId,
    channels: &ChannelSet,
    params: &SystemParams,
) -> Result<NodeId, MetricsError> {
    let k = params.k();
    let theta_len = tape.value(theta).len();
    check_shapes(theta_len, tape.value(w), channels, k)?;

    let h_ru_conj = tape.leaf(channels.h_ru.conj());
    let h_br = tape.leaf(channels.h_br.clone());
    let theta_col = tape.reshape(theta, &[theta_len, 1])?;
    let phases = tape.diag(theta_col)?;
    let reflected = tape.matmul(h_ru_conj, phases)?;
    let g = tape.matmul(reflected, h_br)?;
    let links = tape.matmul(g, w)?;
    let powers = tape.abs2(links)?;
    let signal = tape.diag_part(powers)?;
    let mut off_diagonal = ComplexTensor::filled(&[k, k], Complex64::new(1.0, 0.0));
    for j in 0..k {
        off_diagonal.set(j, j, Complex64::new(0.0, 0.0));
    }
    let mask = tape.leaf(off_diagonal);
    let cross = tape.mul(powers, mask)?;
    let ones = tape.leaf(ComplexTensor::filled(&[k, 1], Complex64::new(1.0, 0.0)));
    let interference = tape.matmul(cross, ones)?;
    let noise = tape.leaf(ComplexTensor::filled(
        &[k, 1],
        Complex64::new(params.sigma2, 0.0),
    ));
    let denom = tape.add(interference, noise)?;
    let gamma = tape.div(signal, denom)?;
    let rates = tape.log2_1p(gamma)?;
    let c = tape.leaf(ComplexTensor::from_real(&[k, 1], &params.weights)?);
    let weighted = tape.mul(c, rates)?;
    let total_rate = tape.sum(weighted)?;
    Ok(tape.re(total_rate)?)
}

/// Rate and its gradients with respect to `theta` and `W`.
#[derive(Debug, Clone)]
pub struct RateGradients {
    pub wsr: f64,
    /// `N × 1`.
    pub theta: ComplexTensor,
    /// `M × K`.
    pub w: ComplexTensor,
}

/// Evaluates the weighted sum rate and `∇_θ R`, `∇_W R` at the given point.
pub fn wsr_gradients(
    theta: &ComplexTensor,
    w: &ComplexTensor,
    channels: &ChannelSet,
    params: &SystemParams,
) -> Result<RateGradients, MetricsError> {
    let mut tape = Tape::new();
    let t = tape.leaf(theta.clone());
    let wn = tape.leaf(w.clone());
    let rate = wsr_graph(&mut tape, t, wn, channels, params)?;
    let mut grads = tape.backward(rate)?;
    Ok(RateGradients {
        wsr: tape.value(rate).data()[0].re,
        theta: grads.take(t).expect("leaf"),
        w: grads.take(wn).expect("leaf"),
    })
}
