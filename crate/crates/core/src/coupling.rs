//! Impedance-domain model of transmit arrays.
//!
//! Port currents follow from the generalized Ohm's law `i = (Z_T + Z_G)^{-1} v`.
//! For a single-fed parasitic array only element 0 is driven; the remaining
//! ports are terminated by tunable loads and the diagonal network becomes
//! `X = diag(z_s, x_1, ..., x_{n-1})`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, DEFAULT_CONDITION_CAP};
use crate::special::sine_cosine_integrals;
use crate::text;

/// Self impedance of a resonant half-wave dipole (Ohm).
pub const HALF_WAVE_SELF_IMPEDANCE: Complex64 = Complex64::new(73.0, 42.5);

/// Value reported for a perfect match instead of `-inf` dB.
pub const RETURN_LOSS_FLOOR_DB: f64 = -300.0;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Mutual-impedance matrix `Z_T` of a transmit array. Element 0 is the fed
/// element of a parasitic array.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    z: CMat,
}

impl CouplingMatrix {
    /// Validates squareness, reciprocity and positive radiation resistance.
    pub fn new(z: CMat) -> Result<Self> {
        if !z.is_square() || z.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "coupling matrix must be square and non-empty, got {}x{}",
                z.nrows(),
                z.ncols()
            )));
        }
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("coupling matrix has non-finite entries".into()));
        }
        let scale = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let n = z.nrows();
        for i in 0..n {
            if z[(i, i)].re <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry {i} has non-positive resistance {}",
                    z[(i, i)].re
                )));
            }
            for j in (i + 1)..n {
                if (z[(i, j)] - z[(j, i)]).norm() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::InvalidInput(format!(
                        "coupling matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { z })
    }

    /// Ideal uncoupled array `z_c I`.
    pub fn uncoupled(n_t: usize, z_c: Complex64) -> Result<Self> {
        Self::new(CMat::from_diagonal_element(n_t, n_t, z_c))
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::new(text::parse_matrix(s)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&s)
    }

    pub fn to_text(&self) -> String {
        text::write_matrix(&self.z)
    }

    pub fn n_t(&self) -> usize {
        self.z.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.z
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.z[(i, j)]
    }
}

/// Hardware limits on loads, source impedance and feed mismatch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    /// Largest admissible return loss (dB).
    pub return_loss_max: f64,
}

impl Default for ConstraintBox {
    fn default() -> Self {
        Self {
            re_min: -500.0,
            re_max: 500.0,
            im_min: -500.0,
            im_max: 500.0,
            return_loss_max: -10.0,
        }
    }
}

impl ConstraintBox {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max, self.return_loss_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.re_min > self.re_max || self.im_min > self.im_max {
            return Err(Error::InvalidInput(format!("invalid constraint box {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (self.re_min..=self.re_max).contains(&z.re) && (self.im_min..=self.im_max).contains(&z.im)
    }

    pub fn clip(&self, z: Complex64) -> Complex64 {
        Complex64::new(
            z.re.clamp(self.re_min, self.re_max),
            z.im.clamp(self.im_min, self.im_max),
        )
    }

    /// Total distance (Ohm, L1 over real and imaginary parts) outside the box.
    pub fn violation(&self, z: Complex64) -> f64 {
        let over = |v: f64, lo: f64, hi: f64| (lo - v).max(0.0) + (v - hi).max(0.0);
        over(z.re, self.re_min, self.re_max) + over(z.im, self.im_min, self.im_max)
    }
}

/// Diagonal termination network of a single-fed parasitic array.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadConfig {
    /// Source (matching) impedance on the fed element.
    pub z_s: Complex64,
    /// Loads on parasitic elements 1..n_t.
    pub parasitic_loads: Vec<Complex64>,
}

impl LoadConfig {
    pub fn new(z_s: Complex64, parasitic_loads: Vec<Complex64>) -> Self {
        Self { z_s, parasitic_loads }
    }

    /// The full diagonal `[z_s, x_1, ..., x_{n-1}]`.
    pub fn diagonal(&self) -> Vec<Complex64> {
        std::iter::once(self.z_s)
            .chain(self.parasitic_loads.iter().copied())
            .collect()
    }

    pub fn within(&self, bounds: &ConstraintBox) -> bool {
        self.diagonal().iter().all(|&z| bounds.contains(z))
    }
}

/// Ideal array with common self impedance `z_c` fed by sources of resistance `r_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub z_c: Complex64,
    pub r_0: f64,
}

impl SourceConfig {
    pub fn new(z_c: Complex64, r_0: f64) -> Result<Self> {
        if z_c.re <= 0.0 || r_0 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "need Re(z_c) > 0 and r_0 > 0, got z_c = {z_c}, r_0 = {r_0}"
            )));
        }
        Ok(Self { z_c, r_0 })
    }

    /// Feed voltages producing the currents `target` on the ideal array.
    pub fn feed_voltages(&self, target: &CVec) -> CVec {
        target * (self.z_c + self.r_0)
    }
}

fn network(z_t: &CouplingMatrix, diagonal: &[Complex64]) -> Result<CMat> {
    if diagonal.len() != z_t.n_t() {
        return Err(Error::InvalidInput(format!(
            "termination has {} entries for a {}-element array",
            diagonal.len(),
            z_t.n_t()
        )));
    }
    let mut a = z_t.z.clone();
    for (i, &d) in diagonal.iter().enumerate() {
        a[(i, i)] += d;
    }
    Ok(a)
}

/// Port currents `(Z_T + Z_G)^{-1} v` for a fully driven array.
pub fn port_currents_general(z_t: &CouplingMatrix, z_g: &[Complex64], v: &CVec) -> Result<CVec> {
    let a = network(z_t, z_g)?;
    linalg::solve_checked(&a, v, DEFAULT_CONDITION_CAP)
}

/// Port currents of a single-fed array driven by `v_s` on element 0.
pub fn port_currents_espar(z_t: &CouplingMatrix, loads: &LoadConfig, v_s: Complex64) -> Result<CVec> {
    let a = network(z_t, &loads.diagonal())?;
    let mut v = CVec::zeros(z_t.n_t());
    v[0] = v_s;
    linalg::solve_checked(&a, &v, DEFAULT_CONDITION_CAP)
}

/// Impedance seen at the feed port: the Schur complement of the loaded
/// parasitic block.
pub fn input_impedance(z_t: &CouplingMatrix, parasitic_loads: &[Complex64]) -> Result<Complex64> {
    let n = z_t.n_t();
    if parasitic_loads.len() + 1 != n {
        return Err(Error::InvalidInput(format!(
            "{} parasitic loads for a {n}-element array",
            parasitic_loads.len()
        )));
    }
    let z = &z_t.z;
    if n == 1 {
        return Ok(z[(0, 0)]);
    }
    let mut block = z.view((1, 1), (n - 1, n - 1)).into_owned();
    for (i, &x) in parasitic_loads.iter().enumerate() {
        block[(i, i)] += x;
    }
    let col = z.view((1, 0), (n - 1, 1)).column(0).into_owned();
    let row = z.view((0, 1), (1, n - 1)).into_owned();
    let y = linalg::solve_checked(&block, &col, DEFAULT_CONDITION_CAP)?;
    Ok(z[(0, 0)] - (row * y)[(0, 0)])
}

/// Reflection coefficient at the feed, `(z_in - conj(z_s)) / (z_in + z_s)`.
pub fn reflection_coefficient(z_in: Complex64, z_s: Complex64) -> Result<Complex64> {
    let den = z_in + z_s;
    if den.norm() <= 1e-12 * (z_in.norm() + z_s.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateMatch);
    }
    Ok((z_in - z_s.conj()) / den)
}

/// Return loss `10 log10 |rho|^2` in dB, floored at [`RETURN_LOSS_FLOOR_DB`].
pub fn return_loss_db(z_in: Complex64, z_s: Complex64) -> Result<f64> {
    let rho = reflection_coefficient(z_in, z_s)?;
    let db = 10.0 * rho.norm_sqr().log10();
    Ok(if db.is_nan() || db < RETURN_LOSS_FLOOR_DB {
        RETURN_LOSS_FLOOR_DB
    } else {
        db
    })
}

/// Mutual impedance between two parallel side-by-side half-wave dipoles at
/// distance `d` (wavelengths), by the induced-EMF method.
pub fn half_wave_mutual_impedance(spacing_wavelengths: f64) -> Complex64 {
    let k = 2.0 * PI;
    let l = 0.5;
    let d = spacing_wavelengths;
    let r = (d * d + l * l).sqrt();
    let u0 = k * d;
    let u1 = k * (r + l);
    let u2 = k * (r - l);
    let (si0, ci0) = sine_cosine_integrals(u0);
    let (si1, ci1) = sine_cosine_integrals(u1);
    let (si2, ci2) = sine_cosine_integrals(u2);
    // eta / (4 pi) with eta = 120 pi
    let c = 30.0;
    Complex64::new(
        c * (2.0 * ci0 - ci1 - ci2),
        -c * (2.0 * si0 - si1 - si2),
    )
}

/// Coupling matrix of a uniform linear array of parallel half-wave dipoles.
pub fn analytic_dipole_coupling(
    n_t: usize,
    spacing_wavelengths: f64,
    self_impedance: Complex64,
) -> Result<CouplingMatrix> {
    if n_t == 0 || !(spacing_wavelengths.is_finite() && spacing_wavelengths > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need n_t >= 1 and a positive spacing, got n_t = {n_t}, spacing = {spacing_wavelengths}"
        )));
    }
    let mutual: Vec<Complex64> = (1..n_t)
        .map(|m| half_wave_mutual_impedance(m as f64 * spacing_wavelengths))
        .collect();
    let z = CMat::from_fn(n_t, n_t, |i, j| {
        if i == j {
            self_impedance
        } else {
            mutual[i.abs_diff(j) - 1]
        }
    });
    CouplingMatrix::new(z)
}
