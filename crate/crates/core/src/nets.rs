//! Phase-learner and precoder-learner networks.
//!
//! Both learners are single-hidden-layer perceptrons `W2 σ(W1 x + b1) + b2`.
//! The phase learner is complex-valued and maps `∇_θ R` to a phase update of
//! the same length. The precoder learner is real-valued and works on the
//! stacked real/imaginary parts of `∇_W R`. A real-valued phase learner over
//! stacked parts is also provided for ablation.
//!
//! Real-valued networks share the complex storage with zero imaginary parts;
//! their outputs pass through `Re` so those parts never carry gradient.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cdiff::{CdiffError, ComplexTensor, NodeId, Tape};

/// Hidden-layer width used throughout.
pub const DEFAULT_HIDDEN: usize = 200;

#[derive(Debug, Error)]
pub enum NetsError {
    #[error("input has shape {got:?}, network expects {expected:?}")]
    Shape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Cdiff(#[from] CdiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// ReLU on real and imaginary parts separately.
    CRelu,
    /// ReLU on the real part; the imaginary part is dropped.
    Relu,
}

/// Whether parameters carry imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamDomain {
    Complex,
    Real,
}

/// Parameters `x_P` / `x_PR` of a one-hidden-layer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `hidden × input`
    pub w1: ComplexTensor,
    /// `hidden × 1`
    pub b1: ComplexTensor,
    /// `output × hidden`
    pub w2: ComplexTensor,
    /// `output × 1`
    pub b2: ComplexTensor,
    pub activation: Activation,
    pub domain: ParamDomain,
}

/// Tape handles of an [`Mlp`]'s parameters.
#[derive(Debug, Clone, Copy)]
pub struct MlpNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

impl MlpNodes {
    pub fn as_array(&self) -> [NodeId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

fn uniform_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    bound: f64,
    domain: ParamDomain,
) -> ComplexTensor {
    let data = (0..rows * cols)
        .map(|_| match domain {
            ParamDomain::Real => Complex64::new(rng.random_range(-bound..=bound), 0.0),
            ParamDomain::Complex => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Complex64::new(
                    rng.random_range(-bound..=bound) * s,
                    rng.random_range(-bound..=bound) * s,
                )
            }
        })
        .collect();
    ComplexTensor::matrix(rows, cols, data).expect("sized")
}

impl Mlp {
    /// Glorot-uniform initialisation, deterministic per seed.
    ///
    /// Each layer draws from `U(±sqrt(6 / (fan_in + fan_out)))`, biases
    /// included. Complex parameters draw both parts from that law scaled by
    /// `1/sqrt(2)`.
    pub fn init(
        seed: u64,
        input: usize,
        hidden: usize,
        output: usize,
        domain: ParamDomain,
        activation: Activation,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = (6.0 / (input + hidden) as f64).sqrt();
        let bound2 = (6.0 / (hidden + output) as f64).sqrt();
        let w1 = uniform_matrix(&mut rng, hidden, input, bound1, domain);
        let b1 = uniform_matrix(&mut rng, hidden, 1, bound1, domain);
        let w2 = uniform_matrix(&mut rng, output, hidden, bound2, domain);
        let b2 = uniform_matrix(&mut rng, output, 1, bound2, domain);
        Self {
            w1,
            b1,
            w2,
            b2,
            activation,
            domain,
        }
    }

    /// Complex phase learner for `N` RIS elements.
    pub fn complex_phase(seed: u64, n: usize, hidden: usize) -> Self {
        Self::init(seed, n, hidden, n, ParamDomain::Complex, Activation::CRelu)
    }

    /// Real phase learner over `[Re; Im]` of an `N`-vector.
    pub fn real_phase(seed: u64, n: usize, hidden: usize) -> Self {
        Self::init(
            seed,
            2 * n,
            hidden,
            2 * n,
            ParamDomain::Real,
            Activation::Relu,
        )
    }

    /// Real precoder learner for an `M × K` precoder.
    pub fn precoder(seed: u64, m: usize, k: usize, hidden: usize) -> Self {
        let d = 2 * m * k;
        Self::init(seed, d, hidden, d, ParamDomain::Real, Activation::Relu)
    }

    pub fn input_len(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_len(&self) -> usize {
        self.w2.rows()
    }

    pub fn params(&self) -> [&ComplexTensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut ComplexTensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Zeroes the output layer so the network's output is identically zero.
    pub fn zero_output_layer(&mut self) {
        self.w2 = ComplexTensor::zeros(self.w2.shape());
        self.b2 = ComplexTensor::zeros(self.b2.shape());
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Records the parameters as leaves.
    pub fn register(&self, tape: &mut Tape) -> MlpNodes {
        MlpNodes {
            w1: tape.leaf(self.w1.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
        }
    }

    /// Records `W2 σ(W1 x + b1) + b2` for an input column `x`.
    pub fn forward_graph(
        &self,
        tape: &mut Tape,
        nodes: &MlpNodes,
        input: NodeId,
    ) -> Result<NodeId, NetsError> {
        mlp_graph(tape, nodes, self.activation, self.domain, input)
    }

    /// Stable fingerprint of all parameter bits.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw f64 bits
        let mut h: u64 = 0xcbf29ce484222325;
        for p in self.params() {
            for z in p.data() {
                for bits in [z.re.to_bits(), z.im.to_bits()] {
                    for byte in bits.to_le_bytes() {
                        h ^= u64::from(byte);
                        h = h.wrapping_mul(0x100000001b3);
                    }
                }
            }
        }
        h
    }
}

/// Records a perceptron forward pass given parameter handles.
pub fn mlp_graph(
    tape: &mut Tape,
    nodes: &MlpNodes,
    activation: Activation,
    domain: ParamDomain,
    input: NodeId,
) -> Result<NodeId, NetsError> {
    let expected = tape.value(nodes.w1).cols();
    let got = tape.value(input).shape().to_vec();
    if got != [expected, 1] {
        return Err(NetsError::Shape {
            expected: vec![expected, 1],
            got,
        });
    }
    let lin = tape.matmul(nodes.w1, input)?;
    let pre = tape.add(lin, nodes.b1)?;
    let hidden = match activation {
        Activation::CRelu => tape.crelu(pre)?,
        Activation::Relu => tape.relu(pre)?,
    };
    let lin2 = tape.matmul(nodes.w2, hidden)?;
    let out = tape.add(lin2, nodes.b2)?;
    Ok(match domain {
        ParamDomain::Complex => out,
        ParamDomain::Real => tape.re(out)?,
    })
}

/// Records the real `2MK × 1` vector `[Re vec(X); Im vec(X)]` of an `M × K`
/// node, with `vec` in column-major order.
pub fn flatten_graph(tape: &mut Tape, x: NodeId) -> Result<NodeId, NetsError> {
    let len = tape.value(x).len();
    let t = tape.transpose(x)?;
    let v = tape.reshape(t, &[len, 1])?;
    let re = tape.re(v)?;
    let im = tape.im(v)?;
    Ok(tape.concat_rows(re, im)?)
}

/// Inverse of [`flatten_graph`]: a real `2MK × 1` node back to complex `M × K`.
pub fn unflatten_graph(
    tape: &mut Tape,
    y: NodeId,
    m: usize,
    k: usize,
) -> Result<NodeId, NetsError> {
    let d = m * k;
    let got = tape.value(y).shape().to_vec();
    if got != [2 * d, 1] {
        return Err(NetsError::Shape {
            expected: vec![2 * d, 1],
            got,
        });
    }
    let re_part = tape.slice_rows(y, 0, d)?;
    let im_part = tape.slice_rows(y, d, d)?;
    let re = tape.re(re_part)?;
    let im_real = tape.re(im_part)?;
    let im = tape.scale(im_real, Complex64::new(0.0, 1.0))?;
    let z = tape.add(re, im)?;
    let kt = tape.reshape(z, &[k, m])?;
    Ok(tape.transpose(kt)?)
}

/// Plain-value flattening, `[Re vec(X); Im vec(X)]` column-major.
pub fn flatten(x: &ComplexTensor) -> Vec<f64> {
    let v = x.vec_column_major();
    v.iter()
        .map(|z| z.re)
        .chain(v.iter().map(|z| z.im))
        .collect()
}

/// Inverse of [`flatten`].
pub fn unflatten(values: &[f64], m: usize, k: usize) -> Result<ComplexTensor, NetsError> {
    let d = m * k;
    if values.len() != 2 * d {
        return Err(NetsError::Shape {
            expected: vec![2 * d],
            got: vec![values.len()],
        });
    }
    let mut out = ComplexTensor::zeros(&[m, k]);
    for col in 0..k {
        for row in 0..m {
            let idx = col * m + row;
            out.set(row, col, Complex64::new(values[idx], values[d + idx]));
        }
    }
    Ok(out)
}

/// Which parameterisation the phase learner uses.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseLearner {
    /// Complex weights acting on `∇_θ R` directly.
    Complex(Mlp),
    /// Real weights acting on `[Re ∇_θ R; Im ∇_θ R]`.
    Real(Mlp),
}

impl PhaseLearner {
    pub fn net(&self) -> &Mlp {
        match self {
            PhaseLearner::Complex(net) | PhaseLearner::Real(net) => net,
        }
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        match self {
            PhaseLearner::Complex(net) | PhaseLearner::Real(net) => net,
        }
    }

    /// Records the phase update `Δθ` (`N × 1`) for a detached gradient input.
    pub fn delta_graph(
        &self,
        tape: &mut Tape,
        nodes: &MlpNodes,
        grad_theta: NodeId,
    ) -> Result<NodeId, NetsError> {
        match self {
            PhaseLearner::Complex(net) => net.forward_graph(tape, nodes, grad_theta),
            PhaseLearner::Real(net) => {
                let n = tape.value(grad_theta).len();
                let col = tape.reshape(grad_theta, &[n, 1])?;
                let flat = flatten_graph(tape, col)?;
                let out = net.forward_graph(tape, nodes, flat)?;
                unflatten_graph(tape, out, n, 1)
            }
        }
    }
}

/// Phase update for a gradient input, evaluated on a private tape.
pub fn pl_forward(
    learner: &PhaseLearner,
    grad_theta: &ComplexTensor,
) -> Result<ComplexTensor, NetsError> {
    let mut tape = Tape::new();
    let nodes = learner.net().register(&mut tape);
    let input = tape.leaf(grad_theta.clone());
    let out = learner.delta_graph(&mut tape, &nodes, input)?;
    Ok(tape.value(out).clone())
}

/// Records the precoder update `ΔW` (`M × K`) for a detached gradient input.
pub fn precoder_delta_graph(
    net: &Mlp,
    tape: &mut Tape,
    nodes: &MlpNodes,
    grad_w: NodeId,
) -> Result<NodeId, NetsError> {
    let shape = tape.value(grad_w).shape().to_vec();
    if shape.len() != 2 || 2 * shape[0] * shape[1] != net.input_len() {
        return Err(NetsError::Shape {
            expected: vec![net.input_len() / 2],
            got: shape,
        });
    }
    let flat = flatten_graph(tape, grad_w)?;
    let out = net.forward_graph(tape, nodes, flat)?;
    unflatten_graph(tape, out, shape[0], shape[1])
}

/// Precoder update for a gradient input, evaluated on a private tape. The
/// caller applies `W + h ΔW`.
pub fn prl_forward(net: &Mlp, grad_w: &ComplexTensor) -> Result<ComplexTensor, NetsError> {
    let mut tape = Tape::new();
    let nodes = net.register(&mut tape);
    let input = tape.leaf(grad_w.clone());
    let out = precoder_delta_graph(net, &mut tape, &nodes, input)?;
    Ok(tape.value(out).clone())
}

/// Network role stored in a checkpoint header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    ComplexPhase = 0,
    Precoder = 1,
    RealPhase = 2,
}

/// Fixed 16-byte checkpoint header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u16,
    pub n: u16,
    pub m: u16,
    pub k: u16,
    pub hidden: u16,
    pub kind: NetKind,
}

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GAMN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Writes a parameter checkpoint.
///
/// Layout, little-endian: magic `GAMN`, then `u16` version, N, M, K, hidden
/// width and network kind (0 complex phase, 1 precoder, 2 real phase). The
/// body is `f64` values for W1, b1, W2, b2 in that order, each row-major;
/// complex networks store `re, im` pairs, real networks store the real part
/// only.
pub fn write_checkpoint<W: Write>(
    net: &Mlp,
    kind: NetKind,
    dims: (usize, usize, usize),
    mut out: W,
) -> Result<(), NetsError> {
    let to_u16 = |v: usize, name: &str| {
        u16::try_from(v)
            .map_err(|_| NetsError::Checkpoint(format!("{name}={v} does not fit in u16")))
    };
    let (n, m, k) = dims;
    out.write_all(&CHECKPOINT_MAGIC)?;
    for v in [
        CHECKPOINT_VERSION,
        to_u16(n, "N")?,
        to_u16(m, "M")?,
        to_u16(k, "K")?,
        to_u16(net.hidden(), "hidden")?,
        kind as u16,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for p in net.params() {
        for z in p.data() {
            out.write_all(&z.re.to_le_bytes())?;
            if net.domain == ParamDomain::Complex {
                out.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(CheckpointHeader, Mlp), NetsError> {
    let mut head = [0u8; 16];
    input.read_exact(&mut head)?;
    if head[..4] != CHECKPOINT_MAGIC {
        return Err(NetsError::Checkpoint("bad magic".into()));
    }
    let field = |i: usize| u16::from_le_bytes([head[4 + 2 * i], head[5 + 2 * i]]);
    let version = field(0);
    if version != CHECKPOINT_VERSION {
        return Err(NetsError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let kind = match field(5) {
        0 => NetKind::ComplexPhase,
        1 => NetKind::Precoder,
        2 => NetKind::RealPhase,
        other => {
            return Err(NetsError::Checkpoint(format!(
                "unknown network kind {other}"
            )))
        }
    };
    let header = CheckpointHeader {
        version,
        n: field(1),
        m: field(2),
        k: field(3),
        hidden: field(4),
        kind,
    };
    let (n, m, k, hidden) = (
        header.n as usize,
        header.m as usize,
        header.k as usize,
        header.hidden as usize,
    );
    let (mut net, width) = match kind {
        NetKind::ComplexPhase => (Mlp::complex_phase(0, n, hidden), n),
        NetKind::RealPhase => (Mlp::real_phase(0, n, hidden), 2 * n),
        NetKind::Precoder => (Mlp::precoder(0, m, k, hidden), 2 * m * k),
    };
    debug_assert_eq!(net.input_len(), width);
    let complex = net.domain == ParamDomain::Complex;
    let mut buf = [0u8; 8];
    for p in net.params_mut() {
        for z in p.data_mut() {
            input.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf);
            let im = if complex {
                input.read_exact(&mut buf)?;
                f64::from_le_bytes(buf)
            } else {
                0.0
            };
            *z = Complex64::new(re, im);
        }
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(NetsError::Checkpoint(format!(
            "{} trailing bytes",
            rest.len()
        )));
    }
    Ok((header, net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdiff::grad_check;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_tensor(seed: u64, shape: &[usize]) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        ComplexTensor::new(
            shape.to_vec(),
            (0..n)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn crelu_definition() {
        let mut tape = Tape::new();
        let z = tape.leaf(ComplexTensor::scalar(c(-1.0, 2.0)));
        let y = tape.crelu(z).unwrap();
        assert_eq!(tape.value(y).data()[0], c(0.0, 2.0));
    }

    #[test]
    fn zero_networks_output_zero() {
        let mut pl = Mlp::complex_phase(1, 4, 16);
        pl.zero_output_layer();
        let out = pl_forward(&PhaseLearner::Complex(pl), &random_tensor(2, &[4, 1])).unwrap();
        assert!(out.data().iter().all(|z| *z == c(0.0, 0.0)));

        let mut prl = Mlp::precoder(3, 2, 3, 16);
        prl.zero_output_layer();
        let out = prl_forward(&prl, &random_tensor(4, &[2, 3])).unwrap();
        assert_eq!(out.shape(), &[2, 3]);
        assert!(out.data().iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn flatten_round_trip() {
        for seed in 0..100 {
            let x = random_tensor(seed, &[3, 2]);
            let back = unflatten(&flatten(&x), 3, 2).unwrap();
            assert_eq!(back, x);
        }
    }

    #[test]
    fn flatten_graph_matches_plain() {
        let x = random_tensor(9, &[2, 3]);
        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let f = flatten_graph(&mut tape, xn).unwrap();
        let got: Vec<f64> = tape.value(f).data().iter().map(|z| z.re).collect();
        assert_eq!(got, flatten(&x));
        let u = unflatten_graph(&mut tape, f, 2, 3).unwrap();
        assert_eq!(tape.value(u), &x);
    }

    #[test]
    fn single_neuron_path() {
        // M = K = 1, hidden 1: W1 picks Re, W2 writes it back to Re, biases 0
        let mut net = Mlp::precoder(0, 1, 1, 1);
        net.w1 = ComplexTensor::from_real(&[1, 2], &[1.0, 0.0]).unwrap();
        net.b1 = ComplexTensor::zeros(&[1, 1]);
        net.w2 = ComplexTensor::from_real(&[2, 1], &[1.0, 0.0]).unwrap();
        net.b2 = ComplexTensor::zeros(&[2, 1]);
        for g in [c(0.7, -0.3), c(-0.4, 2.0)] {
            let grad = ComplexTensor::matrix(1, 1, vec![g]).unwrap();
            let out = prl_forward(&net, &grad).unwrap();
            assert_eq!(out.data()[0], c(g.re.max(0.0), 0.0));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let pl = PhaseLearner::Complex(Mlp::complex_phase(1, 4, 8));
        assert!(matches!(
            pl_forward(&pl, &random_tensor(1, &[5, 1])),
            Err(NetsError::Shape { .. })
        ));
        let prl = Mlp::precoder(1, 2, 2, 8);
        assert!(matches!(
            prl_forward(&prl, &random_tensor(1, &[3, 2])),
            Err(NetsError::Shape { .. })
        ));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::complex_phase(5, 6, 20);
        let b = Mlp::complex_phase(5, 6, 20);
        assert_eq!(a, b);
        assert_ne!(a, Mlp::complex_phase(6, 6, 20));
        let bound1 = (6.0 / 26.0f64).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        for z in a.w1.data().iter().chain(a.b1.data()) {
            assert!(z.re.abs() <= bound1 && z.im.abs() <= bound1);
        }
        let r = Mlp::precoder(5, 2, 2, 20);
        let bound = (6.0 / 28.0f64).sqrt();
        assert!(r.is_finite());
        for p in r.params() {
            for z in p.data() {
                assert!(z.re.abs() <= bound && z.im == 0.0);
            }
        }
    }

    #[test]
    fn init_sample_mean_near_zero() {
        // 200 x 500 + ... entries, well over 1e5 draws
        let net = Mlp::init(17, 500, 200, 500, ParamDomain::Real, Activation::Relu);
        let values: Vec<f64> = net.w1.data().iter().map(|z| z.re).collect();
        let n = values.len() as f64;
        let bound = (6.0 / 700.0f64).sqrt();
        let std = bound / 3f64.sqrt();
        let mean = values.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * std / n.sqrt(), "{mean}");
    }

    #[test]
    fn complex_param_gradients_pass_grad_check() {
        let pl = Mlp::complex_phase(21, 4, 12);
        let input = random_tensor(22, &[4, 1]);
        for which in 0..4 {
            let point = pl.params()[which].clone();
            let f = |tape: &mut Tape, x: NodeId| -> Result<NodeId, CdiffError> {
                let mut nodes = pl.register(tape);
                match which {
                    0 => nodes.w1 = x,
                    1 => nodes.b1 = x,
                    2 => nodes.w2 = x,
                    _ => nodes.b2 = x,
                }
                let inp = tape.leaf(input.clone());
                let out =
                    mlp_graph(tape, &nodes, pl.activation, pl.domain, inp).map_err(
                        |e| match e {
                            NetsError::Cdiff(c) => c,
                            other => panic!("{other}"),
                        },
                    )?;
                let sq = tape.abs2(out)?;
                let s = tape.sum(sq)?;
                tape.re(s)
            };
            let err = grad_check(f, &point, 1e-5).unwrap();
            assert!(err < 1e-5, "param {which}: {err}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let pl = Mlp::complex_phase(3, 5, 7);
        let mut buf = Vec::new();
        write_checkpoint(&pl, NetKind::ComplexPhase, (5, 2, 2), &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 2 * (7 * 5 + 7 + 5 * 7 + 5));
        let (header, back) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(header.kind, NetKind::ComplexPhase);
        assert_eq!((header.n, header.m, header.k, header.hidden), (5, 2, 2, 7));
        assert_eq!(back, pl);

        let prl = Mlp::precoder(4, 2, 3, 9);
        let mut buf = Vec::new();
        write_checkpoint(&prl, NetKind::Precoder, (5, 2, 3), &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * (9 * 12 + 9 + 12 * 9 + 12));
        let (_, back) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, prl);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let mut buf = b"NOPE".to_vec();
        buf.extend_from_slice(&[0u8; 12]);
        assert!(read_checkpoint(buf.as_slice()).is_err());
        let prl = Mlp::precoder(4, 1, 1, 2);
        let mut buf = Vec::new();
        write_checkpoint(&prl, NetKind::Precoder, (1, 1, 1), &mut buf).unwrap();
        buf.push(0);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
