//! Complex-circle product, power sphere and Euclidean space, with Riemannian
//! Adam on top.
//!
//! Points and tangent vectors are [`ComplexTensor`]s. Tangency is measured
//! with the real inner product `Re Σ conj(u) v`, which is the Euclidean inner
//! product of the real parameterisation.

use num_complex::Complex64;
use thiserror::Error;

use crate::cdiff::ComplexTensor;

/// Tolerance used when checking that an input point lies on its manifold.
pub const POINT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("expected shape {expected:?}, got {got:?}")]
    Shape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("point is off the manifold: {0}")]
    OffManifold(String),
    #[error("degenerate retraction: x + v vanishes {0}")]
    DegenerateRetraction(String),
    #[error("optimizer state does not match the point")]
    StateMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Manifold {
    /// `N` unit-modulus complex numbers, stored as an `N × 1` column.
    CircleProduct(usize),
    /// `M × K` complex matrices with `trace(W^H W) = power`.
    PowerSphere { m: usize, k: usize, power: f64 },
    /// Unconstrained tensors with this many entries.
    Euclidean(usize),
}

impl Manifold {
    fn expected_len(&self) -> usize {
        match *self {
            Manifold::CircleProduct(n) => n,
            Manifold::PowerSphere { m, k, .. } => m * k,
            Manifold::Euclidean(d) => d,
        }
    }

    fn check_shape(&self, x: &ComplexTensor) -> Result<(), ManifoldError> {
        let ok = match *self {
            Manifold::PowerSphere { m, k, .. } => x.shape() == [m, k],
            _ => x.len() == self.expected_len(),
        };
        if ok {
            Ok(())
        } else {
            let expected = match *self {
                Manifold::PowerSphere { m, k, .. } => vec![m, k],
                Manifold::CircleProduct(n) => vec![n, 1],
                Manifold::Euclidean(d) => vec![d],
            };
            Err(ManifoldError::Shape {
                expected,
                got: x.shape().to_vec(),
            })
        }
    }

    /// Verifies shape and the manifold constraint to within `tol`.
    pub fn check_point(&self, x: &ComplexTensor, tol: f64) -> Result<(), ManifoldError> {
        self.check_shape(x)?;
        match *self {
            Manifold::CircleProduct(_) => {
                if let Some((i, z)) = x
                    .data()
                    .iter()
                    .enumerate()
                    .find(|(_, z)| !((z.norm() - 1.0).abs() <= tol))
                {
                    return Err(ManifoldError::OffManifold(format!(
                        "entry {i} has modulus {}",
                        z.norm()
                    )));
                }
            }
            Manifold::PowerSphere { power, .. } => {
                let used = x.norm_sqr();
                if !((used - power).abs() <= tol * power) {
                    return Err(ManifoldError::OffManifold(format!(
                        "trace(W^H W) = {used}, expected {power}"
                    )));
                }
            }
            Manifold::Euclidean(_) => {}
        }
        Ok(())
    }

    /// Real inner product of two tangent vectors.
    pub fn inner(&self, u: &ComplexTensor, v: &ComplexTensor) -> f64 {
        u.real_inner(v)
    }

    /// Riemannian gradient: the ambient gradient `g` projected onto the
    /// tangent space at `x`.
    pub fn tangent_project(
        &self,
        x: &ComplexTensor,
        g: &ComplexTensor,
    ) -> Result<ComplexTensor, ManifoldError> {
        self.check_point(x, POINT_TOL)?;
        if g.len() != x.len() {
            return Err(ManifoldError::Shape {
                expected: x.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        Ok(self.project_unchecked(x, g))
    }

    fn project_unchecked(&self, x: &ComplexTensor, g: &ComplexTensor) -> ComplexTensor {
        match *self {
            Manifold::CircleProduct(_) => {
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xn, &gn)| gn - xn * (xn.conj() * gn).re)
                    .collect();
                ComplexTensor::new(x.shape().to_vec(), data).expect("same shape")
            }
            Manifold::PowerSphere { .. } => {
                let coef = x.real_inner(g) / x.norm_sqr();
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xn, &gn)| gn - xn * coef)
                    .collect();
                ComplexTensor::new(x.shape().to_vec(), data).expect("same shape")
            }
            Manifold::Euclidean(_) => {
                ComplexTensor::new(x.shape().to_vec(), g.data().to_vec()).expect("same length")
            }
        }
    }

    /// Maps `x + v` back onto the manifold by normalisation.
    ///
    /// `v` need not be tangent; any displacement is accepted.
    pub fn retract(
        &self,
        x: &ComplexTensor,
        v: &ComplexTensor,
    ) -> Result<ComplexTensor, ManifoldError> {
        self.check_shape(x)?;
        if v.len() != x.len() {
            return Err(ManifoldError::Shape {
                expected: x.shape().to_vec(),
                got: v.shape().to_vec(),
            });
        }
        let sum = ComplexTensor::new(
            x.shape().to_vec(),
            x.data().iter().zip(v.data()).map(|(a, b)| a + b).collect(),
        )
        .expect("same shape");
        self.normalize(&sum)
    }

    /// Nearest-point map from ambient space onto the manifold.
    pub fn normalize(&self, y: &ComplexTensor) -> Result<ComplexTensor, ManifoldError> {
        self.check_shape(y)?;
        match *self {
            Manifold::CircleProduct(_) => {
                if let Some(i) = y.data().iter().position(|z| z.norm_sqr() == 0.0) {
                    return Err(ManifoldError::DegenerateRetraction(format!("at entry {i}")));
                }
                Ok(y.map(|z| z / z.norm()))
            }
            Manifold::PowerSphere { power, .. } => {
                let norm = y.norm();
                if norm == 0.0 {
                    return Err(ManifoldError::DegenerateRetraction("on the sphere".into()));
                }
                Ok(y.scaled(Complex64::new(power.sqrt() / norm, 0.0)))
            }
            Manifold::Euclidean(_) => Ok(y.clone()),
        }
    }

    /// Number of second-moment accumulators: one per circle entry, one for
    /// the whole sphere, one per Euclidean coordinate.
    fn moment_len(&self) -> usize {
        match *self {
            Manifold::PowerSphere { .. } => 1,
            _ => self.expected_len(),
        }
    }

    /// One Riemannian Adam step minimising a function with ambient gradient
    /// `g` at `x`. On [`Manifold::Euclidean`] this is exactly Adam.
    pub fn radam_step(
        &self,
        x: &ComplexTensor,
        g: &ComplexTensor,
        state: &mut RadamState,
        lr: f64,
    ) -> Result<ComplexTensor, ManifoldError> {
        if state.m.len() != x.len() || state.v.len() != self.moment_len() {
            return Err(ManifoldError::StateMismatch);
        }
        let rgrad = self.tangent_project(x, g)?;
        state.step += 1;
        let (b1, b2) = (state.beta1, state.beta2);
        for (m, r) in state.m.data_mut().iter_mut().zip(rgrad.data()) {
            *m = *m * b1 + r * (1.0 - b1);
        }
        match self {
            Manifold::PowerSphere { .. } => {
                state.v[0] = b2 * state.v[0] + (1.0 - b2) * rgrad.norm_sqr();
            }
            _ => {
                for (v, r) in state.v.iter_mut().zip(rgrad.data()) {
                    *v = b2 * *v + (1.0 - b2) * r.norm_sqr();
                }
            }
        }
        let t = state.step as i32;
        let m_corr = 1.0 - b1.powi(t);
        let v_corr = 1.0 - b2.powi(t);
        let shared = matches!(self, Manifold::PowerSphere { .. });
        let step: Vec<Complex64> = state
            .m
            .data()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let v = if shared { state.v[0] } else { state.v[i] };
                let denom = (v / v_corr).sqrt() + state.eps;
                -(m / m_corr) * (lr / denom)
            })
            .collect();
        let step = ComplexTensor::new(x.shape().to_vec(), step).expect("same shape");
        let next = self.retract(x, &step)?;
        if !matches!(self, Manifold::Euclidean(_)) {
            state.m = self.project_unchecked(&next, &state.m);
        }
        Ok(next)
    }
}

/// First/second moment buffers of Riemannian Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct RadamState {
    pub m: ComplexTensor,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl RadamState {
    /// Fresh state with the usual Adam constants (0.9, 0.999, 1e-8).
    pub fn new(manifold: &Manifold, shape: &[usize]) -> Self {
        Self::with_constants(manifold, shape, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(
        manifold: &Manifold,
        shape: &[usize],
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Self {
        Self {
            m: ComplexTensor::zeros(shape),
            v: vec![0.0; manifold.moment_len()],
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }
}
