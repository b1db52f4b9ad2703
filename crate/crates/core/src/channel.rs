//! Seeded Rician-fading channel realizations for the BS → RIS → user link.
//!
//! Both hops combine a line-of-sight component built from uniform linear array
//! steering vectors and an i.i.d. CN(0, 1) scattered component, each scaled by
//! its own pathloss amplitude:
//!
//! ```text
//! H = L_los sqrt(κ/(1+κ)) H_los + L_nlos sqrt(1/(1+κ)) H_nlos
//! ```
//!
//! All arrays are aligned with the y axis. Angles are measured from the +x
//! axis, so the steering phase of a direction `(dx, dy)` uses `sin = dy / d`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::cdiff::ComplexTensor;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("pathloss model is only valid for distance >= 1 m, got {0} m")]
    TooClose(f64),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid rician parameters: {0}")]
    Rician(String),
    #[error("dimensions must be at least 1, got N={n} M={m} K={k}")]
    Dimensions { n: usize, m: usize, k: usize },
    #[error("channel dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 2-D position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Angle from the +x axis of the direction `self → to`.
    pub fn angle_to(self, to: Point2) -> f64 {
        (to.y - self.y).atan2(to.x - self.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_pos: Point2,
    pub ris_pos: Point2,
    pub user_center: Point2,
    pub user_radius: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Element spacing in wavelengths, shared by the BS and RIS arrays.
    pub antenna_spacing: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs_pos: Point2::new(0.0, 10.0),
            ris_pos: Point2::new(100.0, 0.0),
            user_center: Point2::new(100.0, 15.0),
            user_radius: 5.0,
            carrier_freq: 28e9,
            antenna_spacing: 0.5,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("user_radius", self.user_radius),
            ("carrier_freq", self.carrier_freq),
            ("antenna_spacing", self.antenna_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ChannelError::Geometry(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Log-distance pathloss `a + b log10(d) + c log10(f_GHz)` in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossModel {
    pub intercept_db: f64,
    pub distance_slope: f64,
    pub freq_slope: f64,
}

impl PathlossModel {
    pub const LOS: Self = Self {
        intercept_db: 28.0,
        distance_slope: 22.0,
        freq_slope: 20.0,
    };
    pub const NLOS: Self = Self {
        intercept_db: 32.4,
        distance_slope: 23.1,
        freq_slope: 20.0,
    };

    pub fn loss_db(&self, distance: f64, freq_hz: f64) -> Result<f64, ChannelError> {
        if !(distance >= 1.0) {
            return Err(ChannelError::TooClose(distance));
        }
        Ok(self.intercept_db
            + self.distance_slope * distance.log10()
            + self.freq_slope * (freq_hz / 1e9).log10())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RicianParams {
    pub kappa_br: f64,
    pub kappa_ru: f64,
    pub los: PathlossModel,
    pub nlos: PathlossModel,
}

impl Default for RicianParams {
    fn default() -> Self {
        Self {
            kappa_br: 10.0,
            kappa_ru: 10.0,
            los: PathlossModel::LOS,
            nlos: PathlossModel::NLOS,
        }
    }
}

impl RicianParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, k) in [("kappa_br", self.kappa_br), ("kappa_ru", self.kappa_ru)] {
            if !(k >= 0.0) {
                return Err(ChannelError::Rician(format!(
                    "{name} must be >= 0, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS → RIS, `N × M`.
    pub h_br: ComplexTensor,
    /// RIS → users, `K × N`; row `k` is the transpose of user `k`'s channel.
    pub h_ru: ComplexTensor,
    pub user_positions: Vec<Point2>,
    pub seed: u64,
}

impl ChannelSet {
    /// RIS elements.
    pub fn n(&self) -> usize {
        self.h_br.rows()
    }

    /// BS antennas.
    pub fn m(&self) -> usize {
        self.h_br.cols()
    }

    /// Users.
    pub fn k(&self) -> usize {
        self.h_ru.rows()
    }
}

/// Uniform linear array response: entry `n` is `exp(i 2π spacing n sin(angle))`.
pub fn steering_vector(angle: f64, count: usize, spacing: f64) -> Vec<Complex64> {
    let phase = 2.0 * PI * spacing * angle.sin();
    (0..count)
        .map(|n| Complex64::from_polar(1.0, phase * n as f64))
        .collect()
}

/// Pathloss in dB under the default LoS/NLoS constants.
pub fn pathloss_db(distance: f64, los: bool, freq_hz: f64) -> Result<f64, ChannelError> {
    let model = if los {
        PathlossModel::LOS
    } else {
        PathlossModel::NLOS
    };
    model.loss_db(distance, freq_hz)
}

/// Linear amplitude gain `sqrt(10^(-PL/10))`.
pub fn db_to_amplitude(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 20.0)
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws a realization. Same inputs give bit-identical output.
pub fn generate(
    seed: u64,
    geometry: &Geometry,
    rician: &RicianParams,
    n: usize,
    m: usize,
    k: usize,
) -> Result<ChannelSet, ChannelError> {
    if n == 0 || m == 0 || k == 0 {
        return Err(ChannelError::Dimensions { n, m, k });
    }
    geometry.validate()?;
    rician.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freq = geometry.carrier_freq;
    let spacing = geometry.antenna_spacing;

    let user_positions: Vec<Point2> = (0..k)
        .map(|_| {
            let r = geometry.user_radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            Point2::new(
                geometry.user_center.x + r * phi.cos(),
                geometry.user_center.y + r * phi.sin(),
            )
        })
        .collect();

    let weights = |kappa: f64| -> (f64, f64) {
        if kappa.is_infinite() {
            (1.0, 0.0)
        } else {
            ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
        }
    };

    // BS -> RIS
    let d_br = geometry.bs_pos.distance(geometry.ris_pos);
    let los_amp = db_to_amplitude(rician.los.loss_db(d_br, freq)?);
    let nlos_amp = db_to_amplitude(rician.nlos.loss_db(d_br, freq)?);
    let (w_los, w_nlos) = weights(rician.kappa_br);
    let arrival = steering_vector(geometry.ris_pos.angle_to(geometry.bs_pos), n, spacing);
    let departure = steering_vector(geometry.bs_pos.angle_to(geometry.ris_pos), m, spacing);
    let mut h_br = Vec::with_capacity(n * m);
    for a in &arrival {
        for d in &departure {
            let los = a * d.conj();
            let nlos = complex_gaussian(&mut rng);
            h_br.push(los * (los_amp * w_los) + nlos * (nlos_amp * w_nlos));
        }
    }

    // RIS -> users
    let (w_los, w_nlos) = weights(rician.kappa_ru);
    let mut h_ru = Vec::with_capacity(k * n);
    for user in &user_positions {
        let d = geometry.ris_pos.distance(*user);
        let los_amp = db_to_amplitude(rician.los.loss_db(d, freq)?);
        let nlos_amp = db_to_amplitude(rician.nlos.loss_db(d, freq)?);
        let steer = steering_vector(geometry.ris_pos.angle_to(*user), n, spacing);
        for s in steer {
            let nlos = complex_gaussian(&mut rng);
            h_ru.push(s * (los_amp * w_los) + nlos * (nlos_amp * w_nlos));
        }
    }

    Ok(ChannelSet {
        h_br: ComplexTensor::matrix(n, m, h_br).expect("N x M"),
        h_ru: ComplexTensor::matrix(k, n, h_ru).expect("K x N"),
        user_positions,
        seed,
    })
}

/// Writes the plain-text dump: a `N M K seed` header, then the rows of `H_BR`
/// followed by the rows of `H_RU`, each row as space-separated `re im` pairs
/// at 17 significant digits.
pub fn write_dump<W: Write>(channels: &ChannelSet, mut out: W) -> Result<(), ChannelError> {
    writeln!(
        out,
        "{} {} {} {}",
        channels.n(),
        channels.m(),
        channels.k(),
        channels.seed
    )?;
    for mat in [&channels.h_br, &channels.h_ru] {
        for i in 0..mat.rows() {
            let mut line = String::new();
            for j in 0..mat.cols() {
                let z = mat.at(i, j);
                if j > 0 {
                    line.push(' ');
                }
                write!(line, "{:.16e} {:.16e}", z.re, z.im).expect("write to string");
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Reads a dump written by [`write_dump`]. User positions are not stored and
/// come back empty.
pub fn read_dump<R: BufRead>(input: R) -> Result<ChannelSet, ChannelError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| ChannelError::Format("empty file".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(ChannelError::Format(format!("bad header `{header}`")));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| ChannelError::Format(format!("header field `{s}`: {e}")))
    };
    let (n, m, k) = (
        parse_usize(fields[0])?,
        parse_usize(fields[1])?,
        parse_usize(fields[2])?,
    );
    let seed = fields[3]
        .parse::<u64>()
        .map_err(|e| ChannelError::Format(format!("seed `{}`: {e}", fields[3])))?;

    let mut read_matrix = |rows: usize, cols: usize| -> Result<ComplexTensor, ChannelError> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| ChannelError::Format(format!("missing row {r}")))??;
            let values = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| ChannelError::Format(format!("value `{s}`: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != 2 * cols {
                return Err(ChannelError::Format(format!(
                    "row {r} has {} values, expected {}",
                    values.len(),
                    2 * cols
                )));
            }
            data.extend(values.chunks(2).map(|p| Complex64::new(p[0], p[1])));
        }
        Ok(ComplexTensor::matrix(rows, cols, data).expect("sized above"))
    };
    let h_br = read_matrix(n, m)?;
    let h_ru = read_matrix(k, n)?;
    Ok(ChannelSet {
        h_br,
        h_ru,
        user_positions: Vec::new(),
        seed,
    })
}
