//! Finite-difference verification of the rate and meta-loss gradients on a
//! configured instance.

use num_complex::Complex64;

use crate::cdiff::{grad_check, grad_check_scaled, CdiffError, ComplexTensor, NodeId, Tape};
use crate::channel::ChannelSet;
use crate::gamn::{
    build_epoch, DetachedInputs, EpochContext, GamnError, HyperParams, Initialization,
};
use crate::metrics::{self, SystemParams};
use crate::nets::{self, Activation, Mlp, MlpNodes, PhaseLearner};

/// Names of the checked gradients, in report order.
pub const GRADIENT_NAMES: [&str; 4] = ["grad_theta_R", "grad_W_R", "grad_xP_L", "grad_xPR_L"];

/// Largest relative error of one gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientError {
    pub name: &'static str,
    pub max_rel_error: f64,
}

fn lift(e: GamnError) -> CdiffError {
    match e {
        GamnError::Cdiff(c) => c,
        other => CdiffError::Domain {
            op: "epoch",
            detail: other.to_string(),
        },
    }
}

/// Registers `net` with the parameter at `slot` replaced by the node `x`.
fn nodes_with(tape: &mut Tape, net: &Mlp, slot: usize, x: NodeId) -> MlpNodes {
    let ids: Vec<NodeId> = net
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i == slot {
                x
            } else {
                tape.leaf((*p).clone())
            }
        })
        .collect();
    MlpNodes {
        w1: ids[0],
        b1: ids[1],
        w2: ids[2],
        b2: ids[3],
    }
}

/// Steps for a `rows × inputs.len()` weight matrix: entry `(i, j)` is scaled by
/// `1 / |x_j|` so every perturbation moves the layer output by a comparable
/// amount.
fn weight_steps(rows: usize, inputs: &[f64]) -> Vec<f64> {
    let per_column: Vec<f64> = inputs
        .iter()
        .map(|&x| if x > 0.0 { (1.0 / x).min(1e12) } else { 1.0 })
        .collect();
    (0..rows).flat_map(|_| per_column.iter().copied()).collect()
}

/// Shrinks the steps of row `i` of a first-layer parameter so that no
/// perturbation moves hidden unit `i` across its activation kink.
///
/// Perturbing entry `(i, j)` by `s` moves pre-activation `i` by `s |x_j|`
/// (`x_j = 1` for the bias); central differences are only meaningful while
/// that stays below the distance to the kink.
fn keep_off_kinks(
    steps: &mut [f64],
    param: &ComplexTensor,
    inputs: &[f64],
    margins: &[f64],
    eps: f64,
) {
    let cols = param.cols();
    for (idx, step) in steps.iter_mut().enumerate() {
        let moved = eps * (1.0 + param.data()[idx].norm()) * *step * inputs[idx % cols];
        let limit = 0.5 * margins[idx / cols];
        if limit > 0.0 && moved > limit {
            *step *= limit / moved;
        }
    }
}

/// Checks `∇_θ R`, `∇_W R`, `∇_{x_P} L` and `∇_{x_PR} L` against central
/// differences with step `eps`.
///
/// The point is the random initialisation and freshly initialised complex
/// learners that a GAMN run with `seed` would start from. The meta-loss is
/// one outer epoch. Its learner inputs are captured at the base point and
/// held fixed while the weights are perturbed, matching the detached inputs
/// used in training. Weight entries are stepped in proportion to the inverse
/// magnitude of the layer input they multiply (see [`grad_check_scaled`]);
/// with realistic pathloss the learner inputs are tiny and a uniform step
/// would be lost in rounding. First-layer steps are also capped at half the
/// distance of their hidden unit from the activation kink.
pub fn check_gradients(
    channels: &ChannelSet,
    system: &SystemParams,
    hyper: &HyperParams,
    seed: u64,
    eps: f64,
) -> Result<[GradientError; 4], GamnError> {
    hyper.validate()?;
    system.validate()?;
    let (n, m, k) = (channels.n(), channels.m(), channels.k());
    let init = Initialization::draw(seed, n, m, k, system.power)?;

    let theta_err = grad_check(
        |tape, t| {
            let w = tape.leaf(init.w.clone());
            metrics::wsr_graph(tape, t, w, channels, system).map_err(|e| lift(e.into()))
        },
        &init.theta,
        eps,
    )?;
    let w_err = grad_check(
        |tape, w| {
            let t = tape.leaf(init.theta.clone());
            metrics::wsr_graph(tape, t, w, channels, system).map_err(|e| lift(e.into()))
        },
        &init.w,
        eps,
    )?;

    let phase = PhaseLearner::Complex(Mlp::complex_phase(init.phase_seed, n, hyper.hidden));
    let precoder = Mlp::precoder(init.precoder_seed, m, k, hyper.hidden);
    let ctx = EpochContext {
        channels,
        system,
        euler: hyper.euler,
        n_phase: hyper.n_phase,
        n_precoder: hyper.n_precoder,
    };
    let frozen: DetachedInputs = {
        let mut tape = Tape::new();
        let pn = phase.net().register(&mut tape);
        let qn = precoder.register(&mut tape);
        build_epoch(
            &mut tape,
            &ctx,
            &init.theta,
            &init.w,
            &phase,
            &pn,
            &precoder,
            &qn,
            None,
        )?
        .detached
    };

    // Largest magnitude of each layer input entry over the inner steps, and
    // the smallest distance of each hidden pre-activation from its kink.
    let layer_scales =
        |net: &Mlp, inputs: Vec<ComplexTensor>| -> Result<[Vec<f64>; 3], GamnError> {
            let mut first = vec![0.0_f64; net.input_len()];
            let mut second = vec![0.0_f64; net.hidden()];
            let mut margin = vec![f64::INFINITY; net.hidden()];
            for x in &inputs {
                let mut pre = net.w1.matmul(x)?;
                pre.add_assign(&net.b1);
                for (d, z) in margin.iter_mut().zip(pre.data()) {
                    *d = d.min(match net.activation {
                        Activation::CRelu => z.re.abs().min(z.im.abs()),
                        Activation::Relu => z.re.abs(),
                    });
                }
                let hidden = pre.map(|z| match net.activation {
                    Activation::CRelu => Complex64::new(z.re.max(0.0), z.im.max(0.0)),
                    Activation::Relu => Complex64::new(z.re.max(0.0), 0.0),
                });
                for (s, v) in first.iter_mut().zip(x.data()) {
                    *s = s.max(v.norm());
                }
                for (s, v) in second.iter_mut().zip(hidden.data()) {
                    *s = s.max(v.norm());
                }
            }
            Ok([first, second, margin])
        };
    let phase_scales = layer_scales(phase.net(), frozen.phase.clone())?;
    let precoder_scales = layer_scales(
        &precoder,
        frozen
            .precoder
            .iter()
            .map(|g| {
                ComplexTensor::column(
                    nets::flatten(g)
                        .into_iter()
                        .map(|v| Complex64::new(v, 0.0))
                        .collect(),
                )
            })
            .collect(),
    )?;

    let meta_err = |phase_side: bool| -> Result<f64, GamnError> {
        let target: &Mlp = if phase_side { phase.net() } else { &precoder };
        let scales = if phase_side {
            &phase_scales
        } else {
            &precoder_scales
        };
        let mut worst = 0.0_f64;
        for (slot, param) in target.params().into_iter().enumerate() {
            let param: &ComplexTensor = param;
            let mut steps = match slot {
                0 => weight_steps(param.rows(), &scales[0]),
                2 => weight_steps(param.rows(), &scales[1]),
                _ => vec![1.0; param.len()],
            };
            match slot {
                0 => keep_off_kinks(&mut steps, param, &scales[0], &scales[2], eps),
                1 => keep_off_kinks(&mut steps, param, &[1.0], &scales[2], eps),
                _ => {}
            }
            let err = grad_check_scaled(
                |tape, x| {
                    let (pn, qn) = if phase_side {
                        let pn = nodes_with(tape, phase.net(), slot, x);
                        (pn, precoder.register(tape))
                    } else {
                        let pn = phase.net().register(tape);
                        (pn, nodes_with(tape, &precoder, slot, x))
                    };
                    build_epoch(
                        tape,
                        &ctx,
                        &init.theta,
                        &init.w,
                        &phase,
                        &pn,
                        &precoder,
                        &qn,
                        Some(&frozen),
                    )
                    .map(|g| g.loss)
                    .map_err(lift)
                },
                param,
                &steps,
                eps,
            )?;
            worst = worst.max(err);
        }
        Ok(worst)
    };

    let errors = [theta_err, w_err, meta_err(true)?, meta_err(false)?];
    Ok(std::array::from_fn(|i| GradientError {
        name: GRADIENT_NAMES[i],
        max_rel_error: errors[i],
    }))
}
