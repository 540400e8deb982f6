//! Transmit precoders and receive filters for single-stream links.
//!
//! * closed-form interference alignment for the 3-user 2x2 system, where
//!   transmitter 2 may be a parasitic array seen through `(R^{1/2})^T`;
//! * the alternating max-SINR algorithm for any number of users.

use rand::Rng;

use crate::channel::{draw_iid_channel, ChannelSet};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, DEFAULT_CONDITION_CAP};

/// Unit-norm transmit beamformer (one stream).
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder(CVec);

/// Unit-norm receive combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveFilter(CVec);

macro_rules! unit_vector {
    ($name:ident) => {
        impl $name {
            /// Normalizes `v`; fails on a zero or non-finite vector.
            pub fn new(v: CVec) -> Result<Self> {
                linalg::normalized(&v)
                    .map(Self)
                    .ok_or_else(|| Error::InvalidInput(concat!(stringify!($name), " of zero norm").into()))
            }

            pub fn vector(&self) -> &CVec {
                &self.0
            }

            pub fn into_vector(self) -> CVec {
                self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }
    };
}

unit_vector!(Precoder);
unit_vector!(ReceiveFilter);

/// Iteration limits and system parameters of the max-SINR algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSinrConfig {
    pub max_iterations: usize,
    /// Stop once the stacked precoders move less than this (Frobenius).
    pub convergence_tol: f64,
    /// Transmit power per transmitter (linear).
    pub power: f64,
    pub noise_vars: Vec<f64>,
}

impl MaxSinrConfig {
    pub fn new(power: f64, noise_vars: Vec<f64>) -> Self {
        Self {
            max_iterations: 100,
            convergence_tol: 1e-6,
            power,
            noise_vars,
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.max_iterations == 0 || self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 || self.power.is_nan() || self.power <= 0.0 {
            return Err(Error::InvalidInput(format!("invalid max-SINR config {self:?}")));
        }
        if self.noise_vars.len() != k || self.noise_vars.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "need {k} strictly positive noise variances, got {:?}",
                self.noise_vars
            )));
        }
        Ok(())
    }
}

fn inverse_2x2(channels: &ChannelSet, rx: usize, tx: usize) -> Result<CMat> {
    linalg::inverse_checked(channels.get(rx, tx), DEFAULT_CONDITION_CAP).map_err(|_| Error::SingularChannel {
        link: format!("H[{},{}]", rx + 1, tx + 1),
    })
}

/// Eigenvector of a 2x2 matrix for its largest-magnitude eigenvalue.
///
/// Ties in magnitude go to the larger real part. A scalar matrix has every
/// vector as eigenvector and yields `e_1`. The result has unit norm and a
/// real positive first non-negligible entry.
pub fn dominant_eigenvector_2x2(a: &CMat) -> Result<CVec> {
    if a.shape() != (2, 2) {
        return Err(Error::InvalidInput(format!("expected 2x2, got {:?}", a.shape())));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::DegenerateEigen("non-finite matrix entries".into()));
    }
    let scale = a.norm();
    let e1 = CVec::from_vec(vec![linalg::c(1.0, 0.0), linalg::c(0.0, 0.0)]);
    if scale == 0.0 {
        return Ok(e1);
    }
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let tol = 1e-14 * scale;
    if q.norm() <= tol && r.norm() <= tol && (p - s).norm() <= tol {
        return Ok(e1);
    }
    let half_trace = (p + s) * 0.5;
    let disc = (half_trace * half_trace - (p * s - q * r)).sqrt();
    let (l1, l2) = (half_trace + disc, half_trace - disc);
    let (m1, m2) = (l1.norm(), l2.norm());
    let lambda = if (m1 - m2).abs() > 1e-12 * scale {
        if m1 > m2 {
            l1
        } else {
            l2
        }
    } else if l1.re >= l2.re {
        l1
    } else {
        l2
    };
    let v1 = CVec::from_vec(vec![q, lambda - p]);
    let v2 = CVec::from_vec(vec![lambda - s, r]);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    let v = linalg::normalized(&v).ok_or_else(|| Error::DegenerateEigen("null eigenvector".into()))?;
    Ok(linalg::fix_phase(&v))
}

fn unit_with_phase(v: CVec) -> Result<Precoder> {
    let p = Precoder::new(v)?;
    Ok(Precoder(linalg::fix_phase(&p.0)))
}

/// Closed-form aligned precoders of the 3-user 2x2 system.
///
/// `raw` holds the uncorrelated links `H_{k,l}`; `r2` is the transmit
/// correlation of TX 2 (identity for an ideal array). The returned `f_2`
/// is pre-compensated so that the effective links `H_{k,2} (R_2^{1/2})^T`
/// see the aligned direction.
pub fn ia_closed_form_3user(raw: &ChannelSet, r2: &CMat) -> Result<[Precoder; 3]> {
    if raw.k_users() != 3 || (0..3).any(|i| raw.n_r(i) != 2 || raw.n_t(i) != 2) || r2.shape() != (2, 2) {
        return Err(Error::InvalidInput(
            "closed-form alignment needs 3 users with 2x2 links".into(),
        ));
    }
    let inv31 = inverse_2x2(raw, 2, 0)?;
    let inv12 = inverse_2x2(raw, 0, 1)?;
    let inv23 = inverse_2x2(raw, 1, 2)?;
    let inv32 = inverse_2x2(raw, 2, 1)?;
    let product = &inv31 * raw.get(2, 1) * &inv12 * raw.get(0, 2) * &inv23 * raw.get(1, 0);
    let f1 = dominant_eigenvector_2x2(&product)?;

    let root_t = linalg::hermitian_sqrt(r2)?.transpose();
    let root_t_inv = linalg::inverse_checked(&root_t, DEFAULT_CONDITION_CAP).map_err(|_| Error::SingularChannel {
        link: "R_2^{1/2}".into(),
    })?;
    let f2 = root_t_inv * inv32 * raw.get(2, 0) * &f1;
    let f3 = inv23 * raw.get(1, 0) * &f1;
    Ok([unit_with_phase(f1)?, unit_with_phase(f2)?, unit_with_phase(f3)?])
}

/// Interference vectors `H_{k,l} f_l`, `l != k`, at receiver `k`.
pub fn interference_vectors(channels: &ChannelSet, precoders: &[Precoder], k: usize) -> Vec<CVec> {
    (0..channels.k_users())
        .filter(|&l| l != k)
        .map(|l| channels.get(k, l) * precoders[l].vector())
        .collect()
}

/// Interference covariance `sum_{l != k} H_{k,l} f_l f_l^H H_{k,l}^H` (unit power).
fn interference_gram(channels: &ChannelSet, precoders: &[Precoder], k: usize) -> CMat {
    let n = channels.n_r(k);
    interference_vectors(channels, precoders, k)
        .iter()
        .fold(CMat::zeros(n, n), |acc, w| acc + w * w.adjoint())
}

/// Unit filter orthogonal to the interference subspace at receiver `k`,
/// chosen to keep as much of the desired signal as possible.
pub fn receive_filter_zero_forcing(channels: &ChannelSet, precoders: &[Precoder], k: usize) -> Result<ReceiveFilter> {
    let gram = interference_gram(channels, precoders, k);
    let (values, vectors) = linalg::hermitian_eigen(&gram);
    let top = values.last().copied().unwrap_or(0.0);
    let complement: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] <= 1e-12 * top)
        .collect();
    if complement.is_empty() {
        return Err(Error::RankError { receiver: k });
    }
    let basis = CMat::from_columns(&complement.iter().map(|&i| vectors.column(i)).collect::<Vec<_>>());
    let desired = channels.get(k, k) * precoders[k].vector();
    let projected = &basis * (basis.adjoint() * &desired);
    let u = linalg::normalized(&projected).unwrap_or_else(|| basis.column(0).into_owned());
    Ok(ReceiveFilter(linalg::fix_phase(&u)))
}

/// Unit filter minimizing interference power; equals the zero-forcing
/// filter whenever the interference is rank deficient.
pub fn receive_filter_min_leakage(channels: &ChannelSet, precoders: &[Precoder], k: usize) -> ReceiveFilter {
    let gram = interference_gram(channels, precoders, k);
    let (_, vectors) = linalg::hermitian_eigen(&gram);
    ReceiveFilter(linalg::fix_phase(&vectors.column(0).into_owned()))
}

/// Post-filter SINR of stream `k`.
pub fn sinr_of_stream(
    channels: &ChannelSet,
    precoders: &[Precoder],
    filters: &[ReceiveFilter],
    k: usize,
    power: f64,
    noise_var: f64,
) -> f64 {
    let u = filters[k].vector();
    let gain = |l: usize| (u.adjoint() * (channels.get(k, l) * precoders[l].vector()))[(0, 0)].norm_sqr();
    let interference: f64 = (0..channels.k_users()).filter(|&l| l != k).map(gain).sum();
    power * gain(k) / (power * interference + noise_var * u.norm_squared())
}

/// Output of [`max_sinr_iterate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSinrOutput {
    pub precoders: Vec<Precoder>,
    pub filters: Vec<ReceiveFilter>,
    pub iterations: usize,
}

/// SINR of one stream just before and after its receive-filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterStep {
    pub iteration: usize,
    pub stream: usize,
    pub sinr_before: f64,
    pub sinr_after: f64,
}

fn e1(n: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[0] = linalg::c(1.0, 0.0);
    v
}

fn forward_filters(channels: &ChannelSet, f: &[Precoder], cfg: &MaxSinrConfig) -> Result<Vec<ReceiveFilter>> {
    let k_users = channels.k_users();
    (0..k_users)
        .map(|k| {
            let n = channels.n_r(k);
            let mut b = CMat::identity(n, n).scale(cfg.noise_vars[k]);
            b += interference_gram(channels, f, k).scale(cfg.power);
            let rhs = channels.get(k, k) * f[k].vector();
            let u = linalg::solve_checked(&b, &rhs, f64::INFINITY)?;
            ReceiveFilter::new(u).or_else(|_| ReceiveFilter::new(e1(n)))
        })
        .collect()
}

fn backward_precoders(channels: &ChannelSet, u: &[ReceiveFilter], cfg: &MaxSinrConfig) -> Result<Vec<Precoder>> {
    let k_users = channels.k_users();
    (0..k_users)
        .map(|k| {
            let n = channels.n_t(k);
            let mut c = CMat::identity(n, n).scale(cfg.noise_vars[k]);
            for l in (0..k_users).filter(|&l| l != k) {
                let g = channels.get(l, k).adjoint() * u[l].vector();
                c += (&g * g.adjoint()).scale(cfg.power);
            }
            let rhs = channels.get(k, k).adjoint() * u[k].vector();
            let f = linalg::solve_checked(&c, &rhs, f64::INFINITY)?;
            Precoder::new(f).or_else(|_| Precoder::new(e1(n)))
        })
        .collect()
}

/// Alternating max-SINR optimization of precoders and receive filters.
pub fn max_sinr_iterate<R: Rng + ?Sized>(channels: &ChannelSet, cfg: &MaxSinrConfig, rng: &mut R) -> Result<MaxSinrOutput> {
    max_sinr_run(channels, cfg, rng, &mut |_| {})
}

/// Same as [`max_sinr_iterate`], also returning every filter-update step.
pub fn max_sinr_trace<R: Rng + ?Sized>(
    channels: &ChannelSet,
    cfg: &MaxSinrConfig,
    rng: &mut R,
) -> Result<(MaxSinrOutput, Vec<FilterStep>)> {
    let mut steps = Vec::new();
    let out = max_sinr_run(channels, cfg, rng, &mut |s| steps.push(s))?;
    Ok((out, steps))
}

fn max_sinr_run<R: Rng + ?Sized>(
    channels: &ChannelSet,
    cfg: &MaxSinrConfig,
    rng: &mut R,
    observe: &mut dyn FnMut(FilterStep),
) -> Result<MaxSinrOutput> {
    let k_users = channels.k_users();
    cfg.validate(k_users)?;
    let mut f: Vec<Precoder> = (0..k_users)
        .map(|k| Precoder::new(draw_iid_channel(channels.n_t(k), 1, rng).column(0).into_owned()))
        .collect::<Result<_>>()?;
    let mut u: Option<Vec<ReceiveFilter>> = None;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let new_u = forward_filters(channels, &f, cfg)?;
        if let Some(old) = &u {
            for k in 0..k_users {
                let before = sinr_of_stream(channels, &f, old, k, cfg.power, cfg.noise_vars[k]);
                let after = sinr_of_stream(channels, &f, &new_u, k, cfg.power, cfg.noise_vars[k]);
                observe(FilterStep {
                    iteration: iterations,
                    stream: k,
                    sinr_before: before,
                    sinr_after: after,
                });
            }
        }
        let new_f = backward_precoders(channels, &new_u, cfg)?;
        let delta: f64 = f
            .iter()
            .zip(&new_f)
            .map(|(a, b)| (a.vector() - b.vector()).norm_squared())
            .sum::<f64>()
            .sqrt();
        f = new_f;
        u = Some(new_u);
        if delta < cfg.convergence_tol {
            break;
        }
    }
    let filters = forward_filters(channels, &f, cfg)?;
    Ok(MaxSinrOutput {
        precoders: f,
        filters,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_raw_channels, trial_rng, SystemTopology};
    use crate::linalg::c;

    fn identity_set(k: usize) -> ChannelSet {
        ChannelSet::from_links(vec![vec![CMat::identity(2, 2); k]; k]).unwrap()
    }

    fn random_set(seed: u64) -> ChannelSet {
        draw_raw_channels(&SystemTopology::uniform(3, 2).unwrap(), &mut trial_rng(seed, 0))
    }

    #[test]
    fn identity_channels_pick_e1() {
        let f = ia_closed_form_3user(&identity_set(3), &CMat::identity(2, 2)).unwrap();
        let e1 = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        for p in &f {
            assert_eq!(p.vector(), &e1);
        }
    }

    #[test]
    fn eigen_2x2_matches_definition() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 2.0), c(-0.5, 0.1), c(3.0, -1.0), c(0.2, 0.0)]);
        let v = dominant_eigenvector_2x2(&a).unwrap();
        let av = &a * &v;
        let lambda = av[0] / v[0];
        assert!((av - &v * lambda).norm() < 1e-13);
        // the other eigenvalue is trace - lambda; lambda must dominate
        let other = a[(0, 0)] + a[(1, 1)] - lambda;
        assert!(lambda.norm() >= other.norm());
        assert!(v[0].im == 0.0 && v[0].re > 0.0);
    }

    #[test]
    fn eigen_tie_breaks_on_real_part() {
        // eigenvalues +1 and -1 with eigenvectors e1, e2
        let a = CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let v = dominant_eigenvector_2x2(&a).unwrap();
        assert!((v - CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)])).norm() < 1e-15);
    }

    #[test]
    fn alignment_on_random_channels() {
        for seed in 0..50 {
            let raw = random_set(seed);
            let f = ia_closed_form_3user(&raw, &CMat::identity(2, 2)).unwrap();
            for k in 0..3 {
                let w = interference_vectors(&raw, &f, k);
                assert!(linalg::normalized_det2(&w[0], &w[1]) < 1e-10);
                let u = receive_filter_zero_forcing(&raw, &f, k).unwrap();
                for wi in &w {
                    assert!((u.vector().adjoint() * wi)[(0, 0)].norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn alignment_survives_scaled_cross_link() {
        let mut raw = random_set(77);
        *raw.get_mut(0, 2) *= c(-2.5, 0.7);
        let f = ia_closed_form_3user(&raw, &CMat::identity(2, 2)).unwrap();
        for k in 0..3 {
            let w = interference_vectors(&raw, &f, k);
            assert!(linalg::normalized_det2(&w[0], &w[1]) < 1e-10);
        }
    }

    #[test]
    fn singular_link_is_reported() {
        let mut raw = random_set(3);
        *raw.get_mut(2, 0) = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert!(matches!(
            ia_closed_form_3user(&raw, &CMat::identity(2, 2)),
            Err(Error::SingularChannel { .. })
        ));
    }

    #[test]
    fn zf_simple_and_rank_error() {
        let e1 = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let e2 = CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let set = identity_set(3);
        let f = vec![
            Precoder::new(e2.clone()).unwrap(),
            Precoder::new(e1.clone()).unwrap(),
            Precoder::new(e1.clone()).unwrap(),
        ];
        let u = receive_filter_zero_forcing(&set, &f, 0).unwrap();
        assert!((u.vector()[0]).norm() < 1e-15 && (u.vector()[1].norm() - 1.0).abs() < 1e-15);
        let f = vec![Precoder::new(e1.clone()).unwrap(), Precoder::new(e1).unwrap(), Precoder::new(e2).unwrap()];
        assert_eq!(receive_filter_zero_forcing(&set, &f, 0), Err(Error::RankError { receiver: 0 }));
    }

    #[test]
    fn sinr_trivial_values() {
        let one = ChannelSet::from_links(vec![vec![CMat::identity(1, 1)]]).unwrap();
        let f = vec![Precoder::new(CVec::from_element(1, c(1.0, 0.0))).unwrap()];
        let u = vec![ReceiveFilter::new(CVec::from_element(1, c(1.0, 0.0))).unwrap()];
        assert_eq!(sinr_of_stream(&one, &f, &u, 0, 1.0, 1.0), 1.0);
        assert_eq!(sinr_of_stream(&one, &f, &u, 0, 2.0, 1.0), 2.0);
    }

    #[test]
    fn sinr_brute_force() {
        let set = random_set(8);
        let mut rng = trial_rng(8, 99);
        let f: Vec<Precoder> = (0..3).map(|_| Precoder::new(draw_iid_channel(2, 1, &mut rng).column(0).into_owned()).unwrap()).collect();
        let u: Vec<ReceiveFilter> = (0..3).map(|_| ReceiveFilter::new(draw_iid_channel(2, 1, &mut rng).column(0).into_owned()).unwrap()).collect();
        let (p, s2) = (3.7, 0.4);
        for k in 0..3 {
            let mut sig = 0.0;
            let mut int = 0.0;
            for (l, fl) in f.iter().enumerate() {
                let h = set.get(k, l);
                let mut acc = c(0.0, 0.0);
                for i in 0..2 {
                    for j in 0..2 {
                        acc += u[k].vector()[i].conj() * h[(i, j)] * fl.vector()[j];
                    }
                }
                if l == k {
                    sig = acc.norm_sqr();
                } else {
                    int += acc.norm_sqr();
                }
            }
            let expect = p * sig / (p * int + s2);
            assert!((sinr_of_stream(&set, &f, &u, k, p, s2) - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn zero_cross_links_give_singular_vectors() {
        let raw = random_set(12);
        let mut set = raw.clone();
        for k in 0..3 {
            for l in 0..3 {
                if k != l {
                    *set.get_mut(k, l) = CMat::zeros(2, 2);
                }
            }
        }
        let mut cfg = MaxSinrConfig::new(10.0, vec![1.0; 3]);
        cfg.max_iterations = 2000;
        cfg.convergence_tol = 1e-12;
        let out = max_sinr_iterate(&set, &cfg, &mut trial_rng(1, 0)).unwrap();
        for k in 0..3 {
            let (_, v) = linalg::dominant_right_singular(set.get(k, k));
            let overlap = (v.adjoint() * out.precoders[k].vector())[(0, 0)].norm();
            assert!((overlap - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn filter_updates_never_lose_sinr() {
        for seed in 0..10 {
            let set = random_set(seed + 100);
            let cfg = MaxSinrConfig::new(100.0, vec![1.0; 3]);
            let (out, steps) = max_sinr_trace(&set, &cfg, &mut trial_rng(seed, 1)).unwrap();
            assert!(!steps.is_empty() || out.iterations == 1);
            for s in steps {
                assert!(s.sinr_after >= s.sinr_before * (1.0 - 1e-12) - 1e-12, "{s:?}");
            }
            for v in out.precoders.iter().map(|p| p.vector()).chain(out.filters.iter().map(|u| u.vector())) {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_sinr_is_deterministic() {
        let set = random_set(5);
        let cfg = MaxSinrConfig::new(10.0, vec![1.0; 3]);
        let a = max_sinr_iterate(&set, &cfg, &mut trial_rng(5, 0)).unwrap();
        let b = max_sinr_iterate(&set, &cfg, &mut trial_rng(5, 0)).unwrap();
        assert_eq!(a, b);
    }
}
