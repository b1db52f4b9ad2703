use num_complex::Complex64;

use super::{CdiffError, ComplexTensor, NodeId, Tape};

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` records a real scalar loss on a fresh tape given the leaf holding
/// `point`. Real and imaginary parts of every entry are perturbed separately by
/// `eps * (1 + |entry|)`. The returned value is the largest per-component
/// relative error, where each component's error is measured against
/// `max(|ad|, |fd|, 1e-5 * s)` and `s` is the largest gradient component seen.
/// The floor keeps components that are zero up to rounding from dominating.
pub fn grad_check<F>(build: F, point: &ComplexTensor, eps: f64) -> Result<f64, CdiffError>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId, CdiffError>,
{
    grad_check_scaled(build, point, &vec![1.0; point.len()], eps)
}

/// [`grad_check`] with the step of entry `i` multiplied by `step_scale[i]`.
///
/// Rescaling one coordinate leaves its relative error unchanged, so this is
/// the same test with better conditioning when the loss is much less
/// sensitive to some entries than to others (for instance weights multiplying
/// a tiny input).
pub fn grad_check_scaled<F>(
    build: F,
    point: &ComplexTensor,
    step_scale: &[f64],
    eps: f64,
) -> Result<f64, CdiffError>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId, CdiffError>,
{
    if !(1e-8..=1e-3).contains(&eps) {
        return Err(CdiffError::Domain {
            op: "grad_check",
            detail: format!("eps {eps} outside [1e-8, 1e-3]"),
        });
    }
    if step_scale.len() != point.len() || step_scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(CdiffError::Domain {
            op: "grad_check",
            detail: format!(
                "need {} positive finite step scales, got {}",
                point.len(),
                step_scale.len()
            ),
        });
    }
    let analytic = {
        let mut tape = Tape::new();
        let x = tape.leaf(point.clone());
        let loss = build(&mut tape, x)?;
        tape.backward(loss)?
            .take(x)
            .expect("leaf gradient is always present")
    };

    let eval = |p: ComplexTensor| -> Result<f64, CdiffError> {
        let mut tape = Tape::new();
        let x = tape.leaf(p);
        let loss = build(&mut tape, x)?;
        Ok(tape.value(loss).data()[0].re)
    };

    let mut pairs = Vec::with_capacity(2 * point.len());
    for i in 0..point.len() {
        let entry = point.data()[i];
        let step = eps * (1.0 + entry.norm()) * step_scale[i];
        for (dir, ad) in [
            (Complex64::new(step, 0.0), analytic.data()[i].re),
            (Complex64::new(0.0, step), analytic.data()[i].im),
        ] {
            let mut plus = point.clone();
            plus.data_mut()[i] += dir;
            let mut minus = point.clone();
            minus.data_mut()[i] -= dir;
            let fd = (eval(plus)? - eval(minus)?) / (2.0 * step);
            pairs.push((ad, fd));
        }
    }

    let scale = pairs
        .iter()
        .fold(0.0_f64, |s, &(a, f)| s.max(a.abs()).max(f.abs()));
    let floor = (1e-5 * scale).max(f64::MIN_POSITIVE);
    Ok(pairs.iter().fold(0.0_f64, |worst, &(a, f)| {
        let denom = a.abs().max(f.abs()).max(floor);
        worst.max((a - f).abs() / denom)
    }))
}
