use std::collections::HashMap;
use std::f64::consts::LN_2;

use num_complex::Complex64;

use super::{CdiffError, ComplexTensor};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation tag of a tape node.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Input value; gradients stop here.
    Leaf,
    Matmul,
    /// Conjugate transpose.
    Adjoint,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    /// Multiplication by a constant complex scalar.
    Scale(Complex64),
    Conj,
    /// `|z|^2` entrywise.
    Abs2,
    Re,
    Im,
    /// Sum of all entries into a scalar.
    Sum,
    /// Base-2 logarithm of a strictly positive real input.
    Log2,
    /// `log2(1 + x)` of a real input `x > -1`, accurate for small `x`.
    Log2OnePlus,
    Reshape(Vec<usize>),
    /// Entrywise `z / |z|`.
    UnitNormalize,
    /// `radius * z / ||z||` over the whole tensor.
    SphereNormalize(f64),
    /// Entrywise `exp(i z)`.
    ExpI,
    /// `max(Re z, 0) + i max(Im z, 0)`.
    CRelu,
    /// `max(Re z, 0)`; the imaginary part is dropped.
    Relu,
    /// Column vector to square diagonal matrix.
    Diag,
    /// Diagonal of a square matrix as a column vector.
    DiagPart,
    SliceRows {
        start: usize,
        len: usize,
    },
    ConcatRows,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul => "matmul",
            Op::Adjoint => "adjoint",
            Op::Transpose => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Scale(_) => "scale",
            Op::Conj => "conj",
            Op::Abs2 => "abs2",
            Op::Re => "re",
            Op::Im => "im",
            Op::Sum => "sum",
            Op::Log2 => "log2",
            Op::Log2OnePlus => "log2_1p",
            Op::Reshape(_) => "reshape",
            Op::UnitNormalize => "unit_normalize",
            Op::SphereNormalize(_) => "sphere_normalize",
            Op::ExpI => "exp_i",
            Op::CRelu => "crelu",
            Op::Relu => "relu",
            Op::Diag => "diag",
            Op::DiagPart => "diag_part",
            Op::SliceRows { .. } => "slice_rows",
            Op::ConcatRows => "concat_rows",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Op::Leaf => 0,
            Op::Matmul | Op::Add | Op::Sub | Op::Mul | Op::Div | Op::ConcatRows => 2,
            _ => 1,
        }
    }
}

/// One recorded operation with its cached forward value.
#[derive(Debug, Clone)]
pub struct TapeNode {
    pub op: Op,
    pub parents: Vec<NodeId>,
    pub value: ComplexTensor,
}

/// Define-by-run reverse-mode tape over complex tensors.
///
/// Gradients follow the convention `g = 2 ∂f/∂z̄` for a real scalar `f`, so
/// `Re g = ∂f/∂Re z` and `Im g = ∂f/∂Im z`.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

/// Gradients of a real scalar loss with respect to every leaf on the tape.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    grads: HashMap<NodeId, ComplexTensor>,
}

impl GradientMap {
    pub fn get(&self, id: NodeId) -> Option<&ComplexTensor> {
        self.grads.get(&id)
    }

    /// Removes and returns the gradient of `id`.
    pub fn take(&mut self, id: NodeId) -> Option<ComplexTensor> {
        self.grads.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn same_shape(op: &'static str, a: &ComplexTensor, b: &ComplexTensor) -> Result<(), CdiffError> {
    if a.shape() != b.shape() {
        return Err(CdiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn require_rank2(op: &'static str, a: &ComplexTensor) -> Result<(), CdiffError> {
    if a.rank() != 2 {
        return Err(CdiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: vec![],
        });
    }
    Ok(())
}

fn is_column(a: &ComplexTensor) -> bool {
    a.rank() == 1 || (a.rank() == 2 && a.cols() == 1)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TapeNode {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &ComplexTensor {
        &self.nodes[id.0].value
    }

    /// Records an input value.
    pub fn leaf(&mut self, value: ComplexTensor) -> NodeId {
        self.push(Op::Leaf, Vec::new(), value)
    }

    /// Copies the value of `id` into a fresh leaf, cutting gradient flow.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let value = self.value(id).clone();
        self.leaf(value)
    }

    fn push(&mut self, op: Op, parents: Vec<NodeId>, value: ComplexTensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(TapeNode { op, parents, value });
        id
    }

    /// Evaluates `op` on the given inputs and appends the result to the tape.
    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId, CdiffError> {
        if op == Op::Leaf || inputs.len() != op.arity() {
            return Err(CdiffError::Arity {
                op: op.name(),
                expected: op.arity(),
                got: inputs.len(),
            });
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(CdiffError::UnknownNode(bad.0));
        }
        let value = self.evaluate(&op, inputs)?;
        Ok(self.push(op, inputs.to_vec(), value))
    }

    fn evaluate(&self, op: &Op, inputs: &[NodeId]) -> Result<ComplexTensor, CdiffError> {
        let a = self.value(inputs[0]);
        let name = op.name();
        let out = match op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::Matmul => {
                let b = self.value(inputs[1]);
                require_rank2(name, a)?;
                a.matmul(b)?
            }
            Op::Adjoint => {
                require_rank2(name, a)?;
                a.adjoint()
            }
            Op::Transpose => {
                require_rank2(name, a)?;
                a.transpose()
            }
            Op::Add | Op::Sub | Op::Mul | Op::Div => {
                let b = self.value(inputs[1]);
                same_shape(name, a, b)?;
                match op {
                    Op::Add => a.zip_map(b, |x, y| x + y),
                    Op::Sub => a.zip_map(b, |x, y| x - y),
                    Op::Mul => a.zip_map(b, |x, y| x * y),
                    _ => {
                        if b.data().iter().any(|z| z.norm_sqr() == 0.0) {
                            return Err(CdiffError::Domain {
                                op: name,
                                detail: "division by zero".into(),
                            });
                        }
                        a.zip_map(b, |x, y| x / y)
                    }
                }
            }
            Op::Scale(c) => a.scaled(*c),
            Op::Conj => a.conj(),
            Op::Abs2 => a.map(|z| Complex64::new(z.norm_sqr(), 0.0)),
            Op::Re => a.map(|z| Complex64::new(z.re, 0.0)),
            Op::Im => a.map(|z| Complex64::new(z.im, 0.0)),
            Op::Sum => ComplexTensor::scalar(a.data().iter().sum()),
            Op::Log2 => {
                if let Some(z) = a
                    .data()
                    .iter()
                    .find(|z| !(z.re > 0.0) || z.im.abs() > 1e-12 * (1.0 + z.re.abs()))
                {
                    return Err(CdiffError::Domain {
                        op: name,
                        detail: format!("log2 needs a strictly positive real input, got {z}"),
                    });
                }
                a.map(|z| Complex64::new(z.re.log2(), 0.0))
            }
            Op::Log2OnePlus => {
                if let Some(z) = a
                    .data()
                    .iter()
                    .find(|z| !(z.re > -1.0) || z.im.abs() > 1e-12 * (1.0 + z.re.abs()))
                {
                    return Err(CdiffError::Domain {
                        op: name,
                        detail: format!("log2(1 + x) needs a real input above -1, got {z}"),
                    });
                }
                a.map(|z| Complex64::new(z.re.ln_1p() / LN_2, 0.0))
            }
            Op::Reshape(shape) => {
                let expected: usize = shape.iter().product();
                if expected != a.len() {
                    return Err(CdiffError::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: shape.clone(),
                    });
                }
                a.reshaped(shape)?
            }
            Op::UnitNormalize => {
                if a.data().iter().any(|z| z.norm_sqr() == 0.0) {
                    return Err(CdiffError::Domain {
                        op: name,
                        detail: "zero entry has no direction".into(),
                    });
                }
                a.map(|z| z / z.norm())
            }
            Op::SphereNormalize(radius) => {
                let norm = a.norm();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(CdiffError::Domain {
                        op: name,
                        detail: format!("cannot normalise a tensor of norm {norm}"),
                    });
                }
                a.scaled(Complex64::new(radius / norm, 0.0))
            }
            Op::ExpI => a.map(|z| (I * z).exp()),
            Op::CRelu => a.map(|z| Complex64::new(z.re.max(0.0), z.im.max(0.0))),
            Op::Relu => a.map(|z| Complex64::new(z.re.max(0.0), 0.0)),
            Op::Diag => {
                if !is_column(a) {
                    return Err(CdiffError::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: vec![a.len(), 1],
                    });
                }
                let n = a.len();
                let mut out = ComplexTensor::zeros(&[n, n]);
                for (i, &z) in a.data().iter().enumerate() {
                    out.set(i, i, z);
                }
                out
            }
            Op::DiagPart => {
                if a.rank() != 2 || a.rows() != a.cols() {
                    return Err(CdiffError::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: vec![a.rows(), a.rows()],
                    });
                }
                ComplexTensor::column((0..a.rows()).map(|i| a.at(i, i)).collect())
            }
            Op::SliceRows { start, len } => {
                require_rank2(name, a)?;
                if start + len > a.rows() {
                    return Err(CdiffError::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: vec![start + len, a.cols()],
                    });
                }
                let c = a.cols();
                ComplexTensor::new(
                    vec![*len, c],
                    a.data()[start * c..(start + len) * c].to_vec(),
                )?
            }
            Op::ConcatRows => {
                let b = self.value(inputs[1]);
                require_rank2(name, a)?;
                if b.rank() != 2 || a.cols() != b.cols() {
                    return Err(CdiffError::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: b.shape().to_vec(),
                    });
                }
                let mut data = a.data().to_vec();
                data.extend_from_slice(b.data());
                ComplexTensor::new(vec![a.rows() + b.rows(), a.cols()], data)?
            }
        };
        Ok(out)
    }

    /// Reverse sweep from a real scalar `loss`.
    ///
    /// Every leaf on the tape receives an entry; leaves the loss does not depend
    /// on get zeros. The tape itself is not modified.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap, CdiffError> {
        let value = self.value(loss);
        if value.len() != 1 {
            return Err(CdiffError::NotScalar(value.shape().to_vec()));
        }
        let l = value.data()[0];
        if l.im.abs() > 1e-9 * (1.0 + l.re.abs()) {
            return Err(CdiffError::NonRealLoss(l.im));
        }

        let mut grads: Vec<Option<ComplexTensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(ComplexTensor::filled(
            value.shape(),
            Complex64::new(1.0, 0.0),
        ));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if node.op == Op::Leaf {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let contributions = self.local_backward(node, &g);
            for (parent, contribution) in node.parents.iter().zip(contributions) {
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let mut out = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.op != Op::Leaf {
                continue;
            }
            let g = grads
                .get_mut(idx)
                .and_then(Option::take)
                .unwrap_or_else(|| ComplexTensor::zeros(node.value.shape()));
            out.insert(NodeId(idx), g);
        }
        Ok(GradientMap { grads: out })
    }

    /// Pulls the output gradient `g` back to each parent of `node`.
    fn local_backward(&self, node: &TapeNode, g: &ComplexTensor) -> Vec<ComplexTensor> {
        let parent = |i: usize| self.value(node.parents[i]);
        let y = &node.value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Matmul => {
                let (a, b) = (parent(0), parent(1));
                // Shapes were validated on the forward pass.
                let ga = g.matmul(&b.adjoint()).expect("matmul shapes");
                let gb = a.adjoint().matmul(g).expect("matmul shapes");
                vec![ga, gb]
            }
            Op::Adjoint => vec![g.adjoint()],
            Op::Transpose => vec![g.transpose()],
            Op::Add => vec![g.clone(), g.clone()],
            Op::Sub => vec![g.clone(), g.scaled(Complex64::new(-1.0, 0.0))],
            Op::Mul => {
                let (a, b) = (parent(0), parent(1));
                vec![
                    g.zip_map(b, |gy, bz| gy * bz.conj()),
                    g.zip_map(a, |gy, az| gy * az.conj()),
                ]
            }
            Op::Div => {
                let (a, b) = (parent(0), parent(1));
                let ga = g.zip_map(b, |gy, bz| gy * bz.inv().conj());
                let mut gb = g.clone();
                for ((o, az), bz) in gb.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
                    *o *= (-az / (bz * bz)).conj();
                }
                vec![ga, gb]
            }
            Op::Scale(c) => vec![g.scaled(c.conj())],
            Op::Conj => vec![g.conj()],
            Op::Abs2 => vec![g.zip_map(parent(0), |gy, z| z * (2.0 * gy.re))],
            Op::Re => vec![g.map(|gy| Complex64::new(gy.re, 0.0))],
            Op::Im => vec![g.map(|gy| Complex64::new(0.0, gy.re))],
            Op::Sum => vec![ComplexTensor::filled(parent(0).shape(), g.data()[0])],
            Op::Log2 => vec![g.zip_map(parent(0), |gy, z| gy * (z * LN_2).inv().conj())],
            Op::Log2OnePlus => {
                vec![g.zip_map(parent(0), |gy, z| gy * ((z + 1.0) * LN_2).inv().conj())]
            }
            Op::Reshape(_) => vec![g.reshaped(parent(0).shape()).expect("reshape back")],
            Op::UnitNormalize => vec![g.zip_map(parent(0), |gy, z| {
                let r = z.norm();
                gy.conj() * (-(z * z) / (2.0 * r * r * r)) + gy / (2.0 * r)
            })],
            Op::SphereNormalize(radius) => {
                let z = parent(0);
                let s = z.norm_sqr();
                let sq = s.sqrt();
                let along: f64 = z.real_inner(g);
                vec![g.zip_map(z, |gy, zz| (gy - zz * (along / s)) * (radius / sq))]
            }
            Op::ExpI => vec![g.zip_map(y, |gy, yy| gy * (I * yy).conj())],
            Op::CRelu => vec![g.zip_map(parent(0), |gy, z| {
                Complex64::new(
                    if z.re > 0.0 { gy.re } else { 0.0 },
                    if z.im > 0.0 { gy.im } else { 0.0 },
                )
            })],
            Op::Relu => vec![g.zip_map(parent(0), |gy, z| {
                Complex64::new(if z.re > 0.0 { gy.re } else { 0.0 }, 0.0)
            })],
            Op::Diag => {
                let n = parent(0).len();
                let data = (0..n).map(|i| g.at(i, i)).collect();
                vec![ComplexTensor::new(parent(0).shape().to_vec(), data).expect("diag shape")]
            }
            Op::DiagPart => {
                let n = parent(0).rows();
                let mut out = ComplexTensor::zeros(&[n, n]);
                for i in 0..n {
                    out.set(i, i, g.data()[i]);
                }
                vec![out]
            }
            Op::SliceRows { start, .. } => {
                let a = parent(0);
                let mut out = ComplexTensor::zeros(a.shape());
                let c = a.cols();
                out.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                vec![out]
            }
            Op::ConcatRows => {
                let (a, b) = (parent(0), parent(1));
                let split = a.len();
                let ga = ComplexTensor::new(a.shape().to_vec(), g.data()[..split].to_vec())
                    .expect("concat split");
                let gb = ComplexTensor::new(b.shape().to_vec(), g.data()[split..].to_vec())
                    .expect("concat split");
                vec![ga, gb]
            }
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Matmul, &[a, b])
    }

    pub fn adjoint(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Adjoint, &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Transpose, &[a])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Div, &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, factor: Complex64) -> Result<NodeId, CdiffError> {
        self.apply(Op::Scale(factor), &[a])
    }

    pub fn conj(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Conj, &[a])
    }

    pub fn abs2(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Abs2, &[a])
    }

    pub fn re(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Re, &[a])
    }

    pub fn im(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Im, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Sum, &[a])
    }

    pub fn log2(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Log2, &[a])
    }

    pub fn log2_1p(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Log2OnePlus, &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, CdiffError> {
        self.apply(Op::Reshape(shape.to_vec()), &[a])
    }

    pub fn unit_normalize(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::UnitNormalize, &[a])
    }

    pub fn sphere_normalize(&mut self, a: NodeId, radius: f64) -> Result<NodeId, CdiffError> {
        self.apply(Op::SphereNormalize(radius), &[a])
    }

    pub fn exp_i(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::ExpI, &[a])
    }

    pub fn crelu(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::CRelu, &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Relu, &[a])
    }

    pub fn diag(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::Diag, &[a])
    }

    pub fn diag_part(&mut self, a: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::DiagPart, &[a])
    }

    pub fn slice_rows(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, CdiffError> {
        self.apply(Op::SliceRows { start, len }, &[a])
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, CdiffError> {
        self.apply(Op::ConcatRows, &[a, b])
    }
}
