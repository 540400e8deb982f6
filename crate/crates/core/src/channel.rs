//! Random multiuser channel realizations.
//!
//! Links are i.i.d. circularly-symmetric complex Gaussian with unit variance.
//! A parasitic-array transmitter sees its columns mixed by the transmit-side
//! correlation, `H_hat = H (R^{1/2})^T`.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded through
//! `SeedableRng::seed_from_u64`; Monte-Carlo trial `t` uses seed
//! `base_seed + t`.

use nalgebra::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, PSD_TOLERANCE};
use crate::special::bessel_j0;

/// Generator used for every random draw in the crate.
pub type SimRng = ChaCha8Rng;

pub fn trial_rng(base_seed: u64, trial: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(base_seed.wrapping_add(trial))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrayKind {
    #[serde(rename = "ula")]
    IdealUla,
    Espar,
}

impl ArrayKind {
    pub fn label(self) -> &'static str {
        match self {
            ArrayKind::IdealUla => "ula",
            ArrayKind::Espar => "espar",
        }
    }
}

impl std::str::FromStr for ArrayKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "ula" => Ok(ArrayKind::IdealUla),
            "espar" => Ok(ArrayKind::Espar),
            other => Err(format!("unknown array kind `{other}`; valid: ula, espar")),
        }
    }
}

/// Transmit-side spatial correlation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorrelationModel {
    /// `[R]_ij = rho^|i-j|`
    Exponential { rho: f64 },
    /// `[R]_ij = J0(2 pi d |i-j|)` for element spacing `d` wavelengths.
    Jakes,
}

/// Correlation matrix of an `n_t`-element linear array.
pub fn correlation_matrix(n_t: usize, spacing_wavelengths: f64, model: CorrelationModel) -> Result<CMat> {
    if n_t == 0 {
        return Err(Error::InvalidInput("correlation matrix needs n_t >= 1".into()));
    }
    let r = match model {
        CorrelationModel::Exponential { rho } => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidInput(format!("exponential rho must be in [0, 1), got {rho}")));
            }
            CMat::from_fn(n_t, n_t, |i, j| Complex::new(rho.powi(i.abs_diff(j) as i32), 0.0))
        }
        CorrelationModel::Jakes => {
            if !(spacing_wavelengths.is_finite() && spacing_wavelengths >= 0.0) {
                return Err(Error::InvalidInput(format!("invalid spacing {spacing_wavelengths}")));
            }
            let taps: Vec<f64> = (0..n_t)
                .map(|m| bessel_j0(2.0 * std::f64::consts::PI * spacing_wavelengths * m as f64))
                .collect();
            CMat::from_fn(n_t, n_t, |i, j| {
                if i == j {
                    Complex::new(1.0, 0.0)
                } else {
                    Complex::new(taps[i.abs_diff(j)], 0.0)
                }
            })
        }
    };
    check_correlation(&r)?;
    Ok(r)
}

fn check_correlation(r: &CMat) -> Result<()> {
    if !r.is_square() {
        return Err(Error::InvalidInput("correlation matrix must be square".into()));
    }
    if (r - r.adjoint()).norm() > 1e-12 * r.norm().max(1.0) {
        return Err(Error::InvalidInput("correlation matrix must be Hermitian".into()));
    }
    if r.diagonal().iter().any(|d| (d - Complex::new(1.0, 0.0)).norm() > 1e-12) {
        return Err(Error::InvalidInput("correlation matrix must have unit diagonal".into()));
    }
    let (values, _) = linalg::hermitian_eigen(r);
    let min = values[0];
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// One `n_r x n_t` matrix of i.i.d. CN(0, 1) entries.
pub fn draw_iid_channel<R: Rng + ?Sized>(n_r: usize, n_t: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // Column-major fill order is part of the reproducibility contract.
    CMat::from_fn(n_r, n_t, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(s * re, s * im)
    })
}

/// Channel seen through a transmitter of the given array kind.
pub fn effective_channel(h: &CMat, kind: ArrayKind, r: &CMat) -> Result<CMat> {
    match kind {
        ArrayKind::IdealUla => Ok(h.clone()),
        ArrayKind::Espar => {
            if r.nrows() != h.ncols() {
                return Err(Error::InvalidInput(format!(
                    "correlation is {}x{} but the channel has {} columns",
                    r.nrows(),
                    r.ncols(),
                    h.ncols()
                )));
            }
            let root = linalg::hermitian_sqrt(r)?;
            Ok(h * root.transpose())
        }
    }
}

/// Antenna counts, array kinds and transmit correlations of a K-pair system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTopology {
    n_t: Vec<usize>,
    n_r: Vec<usize>,
    kinds: Vec<ArrayKind>,
    correlation: Vec<CMat>,
    root_t: Vec<CMat>,
}

impl SystemTopology {
    /// `correlation[k]` is ignored (replaced by identity) for ideal arrays.
    pub fn new(n_t: Vec<usize>, n_r: Vec<usize>, kinds: Vec<ArrayKind>, correlation: Vec<CMat>) -> Result<Self> {
        let k = n_t.len();
        if k < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 user pairs, got {k}")));
        }
        if n_r.len() != k || kinds.len() != k || correlation.len() != k {
            return Err(Error::InvalidInput("per-user vectors must all have length K".into()));
        }
        if n_t.iter().chain(&n_r).any(|&n| n == 0) {
            return Err(Error::InvalidInput("antenna counts must be >= 1".into()));
        }
        let mut corr = Vec::with_capacity(k);
        let mut root_t = Vec::with_capacity(k);
        for (i, r) in correlation.into_iter().enumerate() {
            let r = match kinds[i] {
                ArrayKind::IdealUla => CMat::identity(n_t[i], n_t[i]),
                ArrayKind::Espar => {
                    if r.nrows() != n_t[i] {
                        return Err(Error::InvalidInput(format!(
                            "correlation of TX {} is {}x{}, expected {}x{}",
                            i + 1,
                            r.nrows(),
                            r.ncols(),
                            n_t[i],
                            n_t[i]
                        )));
                    }
                    check_correlation(&r)?;
                    r
                }
            };
            root_t.push(linalg::hermitian_sqrt(&r)?.transpose());
            corr.push(r);
        }
        Ok(Self {
            n_t,
            n_r,
            kinds,
            correlation: corr,
            root_t,
        })
    }

    /// `k` pairs with `n x n` links, all ideal arrays.
    pub fn uniform(k: usize, n: usize) -> Result<Self> {
        Self::new(
            vec![n; k],
            vec![n; k],
            vec![ArrayKind::IdealUla; k],
            vec![CMat::identity(n, n); k],
        )
    }

    /// Copy with transmitter `tx` switched to `kind` using correlation `r`.
    pub fn with_array(&self, tx: usize, kind: ArrayKind, r: CMat) -> Result<Self> {
        let mut kinds = self.kinds.clone();
        let mut corr = self.correlation.clone();
        kinds[tx] = kind;
        corr[tx] = r;
        Self::new(self.n_t.clone(), self.n_r.clone(), kinds, corr)
    }

    pub fn k_users(&self) -> usize {
        self.n_t.len()
    }

    pub fn n_t(&self, k: usize) -> usize {
        self.n_t[k]
    }

    pub fn n_r(&self, k: usize) -> usize {
        self.n_r[k]
    }

    pub fn kind(&self, k: usize) -> ArrayKind {
        self.kinds[k]
    }

    pub fn correlation(&self, k: usize) -> &CMat {
        &self.correlation[k]
    }
}

/// All `K^2` channel matrices of one realization; `get(k, l)` is RX `k` <- TX `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    k: usize,
    h: Vec<CMat>,
}

impl ChannelSet {
    /// Builds a set from row-major `links[k][l]`.
    pub fn from_links(links: Vec<Vec<CMat>>) -> Result<Self> {
        let k = links.len();
        if k == 0 || links.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidInput("channel set must be K x K".into()));
        }
        for rx in 0..k {
            for tx in 0..k {
                let m = &links[rx][tx];
                if m.nrows() != links[rx][0].nrows() || m.ncols() != links[0][tx].ncols() {
                    return Err(Error::InvalidInput(format!(
                        "inconsistent dimensions at link ({}, {})",
                        rx + 1,
                        tx + 1
                    )));
                }
            }
        }
        Ok(Self {
            k,
            h: links.into_iter().flatten().collect(),
        })
    }

    pub fn k_users(&self) -> usize {
        self.k
    }

    pub fn get(&self, rx: usize, tx: usize) -> &CMat {
        &self.h[rx * self.k + tx]
    }

    pub fn get_mut(&mut self, rx: usize, tx: usize) -> &mut CMat {
        &mut self.h[rx * self.k + tx]
    }

    pub fn n_r(&self, rx: usize) -> usize {
        self.get(rx, 0).nrows()
    }

    pub fn n_t(&self, tx: usize) -> usize {
        self.get(0, tx).ncols()
    }

    /// Applies each transmitter's array transform to these (raw) links.
    pub fn effective(&self, topology: &SystemTopology) -> ChannelSet {
        let mut out = self.clone();
        for rx in 0..self.k {
            for tx in 0..self.k {
                if topology.kind(tx) == ArrayKind::Espar {
                    *out.get_mut(rx, tx) = self.get(rx, tx) * &topology.root_t[tx];
                }
            }
        }
        out
    }
}

/// Raw i.i.d. links for a topology, drawn RX-major then TX.
pub fn draw_raw_channels<R: Rng + ?Sized>(topology: &SystemTopology, rng: &mut R) -> ChannelSet {
    let k = topology.k_users();
    let h = (0..k)
        .flat_map(|rx| (0..k).map(move |tx| (rx, tx)))
        .map(|(rx, tx)| draw_iid_channel(topology.n_r(rx), topology.n_t(tx), rng))
        .collect();
    ChannelSet { k, h }
}

/// One effective channel realization for a topology.
pub fn draw_channel_set<R: Rng + ?Sized>(topology: &SystemTopology, rng: &mut R) -> ChannelSet {
    draw_raw_channels(topology, rng).effective(topology)
}
