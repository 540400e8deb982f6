//! Monte-Carlo performance evaluation.
//!
//! Rates use Gaussian signalling with an optimal receiver:
//! `log2 det(I + P H_kk f_k f_k^H H_kk^H Q_k^{-1})`, where `Q_k` is the
//! interference-plus-noise covariance at receiver `k`.

use nalgebra::Cholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_raw_channels, trial_rng, ArrayKind, ChannelSet, SimRng, SystemTopology};
use crate::coupling::{ConstraintBox, CouplingMatrix};
use crate::error::{Error, Result};
use crate::espar::{self, EsparSolution};
use crate::genetic::GaConfig;
use crate::linalg::{self, CMat, CVec};
use crate::precoding::{self, MaxSinrConfig, Precoder, ReceiveFilter};

/// Precoding technique under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecoderKind {
    #[serde(rename = "ia-closed-form")]
    IaClosedForm,
    #[serde(rename = "max-sinr")]
    MaxSinr,
}

impl PrecoderKind {
    pub const VARIANTS: [&'static str; 2] = ["ia-closed-form", "max-sinr"];

    pub fn label(self) -> &'static str {
        match self {
            PrecoderKind::IaClosedForm => "ia-closed-form",
            PrecoderKind::MaxSinr => "max-sinr",
        }
    }
}

impl std::str::FromStr for PrecoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "ia-closed-form" => Ok(PrecoderKind::IaClosedForm),
            "max-sinr" => Ok(PrecoderKind::MaxSinr),
            other => Err(format!(
                "unknown precoder `{other}`; valid: {}",
                Self::VARIANTS.join(", ")
            )),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn interference_plus_noise(channels: &ChannelSet, precoders: &[Precoder], k: usize, power: f64, noise_var: f64) -> CMat {
    let n = channels.n_r(k);
    let mut q = CMat::identity(n, n).scale(noise_var);
    for w in precoding::interference_vectors(channels, precoders, k) {
        q += (&w * w.adjoint()).scale(power);
    }
    q
}

/// Achievable rate of user `k` (bits/s/Hz).
pub fn user_rate(channels: &ChannelSet, precoders: &[Precoder], k: usize, power: f64, noise_var: f64) -> f64 {
    let q = interference_plus_noise(channels, precoders, k, power, noise_var);
    let chol = Cholesky::new(q.clone()).expect("interference-plus-noise covariance must be positive definite");
    let h = channels.get(k, k) * precoders[k].vector();
    let qinv_h = chol.solve(&h);
    let quad = (h.adjoint() * &qinv_h)[(0, 0)].re;
    let rate = (power * quad).ln_1p() / std::f64::consts::LN_2;
    if cfg!(debug_assertions) {
        let n = q.nrows();
        let m = CMat::identity(n, n) + (&h * qinv_h.adjoint()).scale(power);
        // Q^{-1} is Hermitian, so h (Q^{-1} h)^H = h h^H Q^{-1}.
        let det_form = m.determinant().re.log2();
        debug_assert!(
            (det_form - rate).abs() <= 1e-8 * rate.abs().max(1.0),
            "log-det {det_form} vs rank-one {rate}"
        );
    }
    rate.max(0.0)
}

/// Rate of an isolated link with beamformer `f`.
pub fn single_link_rate(h: &CMat, f: &Precoder, power: f64, noise_var: f64) -> f64 {
    let g = (h * f.vector()).norm_squared();
    (power * g / noise_var).ln_1p() / std::f64::consts::LN_2
}

/// Interference power remaining after filter `u_k`.
pub fn interference_leakage(
    channels: &ChannelSet,
    precoders: &[Precoder],
    filters: &[ReceiveFilter],
    k: usize,
    power: f64,
) -> f64 {
    let u = filters[k].vector();
    precoding::interference_vectors(channels, precoders, k)
        .iter()
        .map(|w| (u.adjoint() * w)[(0, 0)].norm_sqr())
        .sum::<f64>()
        * power
}

/// Leakage with the best single receive direction: `P * lambda_min(sum w w^H)`.
pub fn min_leakage(channels: &ChannelSet, precoders: &[Precoder], k: usize, power: f64) -> f64 {
    let u = precoding::receive_filter_min_leakage(channels, precoders, k);
    let mut filters = vec![u.clone(); channels.k_users()];
    filters[k] = u;
    interference_leakage(channels, precoders, &filters, k, power)
}

/// Aggregated statistics at one transmit power.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub power_db: f64,
    pub sum_rate: f64,
    pub per_user_rates: Vec<f64>,
    /// Ergodic rate of the parasitic-capable link operated alone.
    pub single_link_rate: f64,
    pub mean_leakage: f64,
    pub max_leakage: f64,
    pub mean_residual: f64,
    pub residual_p95: f64,
    pub feasibility_rate: f64,
    pub trials: usize,
}

/// Least-squares slope of sum rate against `log2 P`.
pub fn dof_slope(points: &[SweepPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.power_db / 10.0 * std::f64::consts::LOG2_10).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.sum_rate).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: 1,
        });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Everything needed to run one Monte-Carlo power sweep.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Topology with the transmitter under test already set to `IdealUla`
    /// or `Espar`.
    pub topology: SystemTopology,
    /// Index of the transmitter whose array kind is being compared.
    pub espar_tx: usize,
    pub precoder: PrecoderKind,
    pub power_db: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub noise_vars: Vec<f64>,
    pub constraints: ConstraintBox,
    pub coupling: CouplingMatrix,
    pub optimizer: GaConfig,
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.topology.k_users();
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if self.power_db.is_empty() || self.power_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("power grid must be non-empty and finite".into()));
        }
        if self.espar_tx >= k || self.noise_vars.len() != k || self.noise_vars.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::InvalidInput("invalid transmitter index or noise variances".into()));
        }
        if self.topology.kind(self.espar_tx) == ArrayKind::Espar && self.coupling.n_t() != self.topology.n_t(self.espar_tx) {
            return Err(Error::InvalidInput(format!(
                "coupling matrix has {} elements, TX {} has {}",
                self.coupling.n_t(),
                self.espar_tx + 1,
                self.topology.n_t(self.espar_tx)
            )));
        }
        if self.precoder == PrecoderKind::IaClosedForm
            && (k != 3 || (0..3).any(|i| self.topology.n_t(i) != 2 || self.topology.n_r(i) != 2))
        {
            return Err(Error::InvalidInput("closed-form alignment needs 3 users with 2x2 links".into()));
        }
        self.constraints.validate()?;
        self.optimizer.validate()
    }

    fn is_espar(&self) -> bool {
        self.topology.kind(self.espar_tx) == ArrayKind::Espar
    }

    /// Optimizer stream, independent of the channel stream so ULA and ESPAR
    /// runs share channels.
    fn optimizer_rng(&self, trial: usize, stage: u64) -> SimRng {
        let mix = stage.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        trial_rng(self.base_seed ^ mix, trial as u64)
    }
}

#[derive(Debug, Clone)]
struct TrialPoint {
    rates: Vec<f64>,
    single_link: f64,
    leakage: f64,
    residual: Option<f64>,
    feasible: Option<bool>,
}

/// Replaces the precoder of the parasitic transmitter by the direction it
/// can actually radiate.
fn realize(spec: &ExperimentSpec, f: &Precoder, rng: &mut SimRng) -> Result<(Precoder, EsparSolution)> {
    let sol = espar::solve_for_precoder_d1(&spec.coupling, f, &spec.constraints, &spec.optimizer, rng)?;
    let realized = sol.beam(&spec.coupling)?.direction()?;
    Ok((realized, sol))
}

fn run_trial(spec: &ExperimentSpec, trial: usize, powers: &[f64]) -> Result<Vec<TrialPoint>> {
    let k_users = spec.topology.k_users();
    let tx = spec.espar_tx;
    let mut rng = trial_rng(spec.base_seed, trial as u64);
    let raw = draw_raw_channels(&spec.topology, &mut rng);
    let eff = raw.effective(&spec.topology);

    // Isolated link: dominant right singular vector of the effective channel.
    let (_, v) = linalg::dominant_right_singular(eff.get(tx, tx));
    let mut single = Precoder::new(v)?;
    if spec.is_espar() {
        single = realize(spec, &single, &mut spec.optimizer_rng(trial, 0))?.0;
    }

    let mut fixed: Option<(Vec<Precoder>, Option<EsparSolution>)> = None;
    if spec.precoder == PrecoderKind::IaClosedForm {
        let r = spec.topology.correlation(tx).clone();
        let ia = precoding::ia_closed_form_3user(&raw, &r)?;
        let mut f = ia.to_vec();
        let mut sol = None;
        if spec.is_espar() {
            let (p, s) = realize(spec, &f[tx], &mut spec.optimizer_rng(trial, 1))?;
            f[tx] = p;
            sol = Some(s);
        }
        fixed = Some((f, sol));
    }

    powers
        .iter()
        .map(|&p_db| {
            let power = db_to_linear(p_db);
            let (f, sol) = match &fixed {
                Some((f, sol)) => (f.clone(), sol.clone()),
                None => {
                    let mut cfg = MaxSinrConfig::new(power, spec.noise_vars.clone());
                    cfg.max_iterations = spec.max_iterations;
                    cfg.convergence_tol = spec.convergence_tol;
                    let mut init = rng.clone();
                    let out = precoding::max_sinr_iterate(&eff, &cfg, &mut init)?;
                    let mut f = out.precoders;
                    let mut sol = None;
                    if spec.is_espar() {
                        let (p, s) = realize(spec, &f[tx], &mut spec.optimizer_rng(trial, p_db.to_bits().wrapping_add(2)))?;
                        f[tx] = p;
                        sol = Some(s);
                    }
                    (f, sol)
                }
            };
            let rates = (0..k_users)
                .map(|k| user_rate(&eff, &f, k, power, spec.noise_vars[k]))
                .collect();
            let leakage = (0..k_users).map(|k| min_leakage(&eff, &f, k, power)).sum::<f64>() / k_users as f64;
            Ok(TrialPoint {
                rates,
                single_link: single_link_rate(eff.get(tx, tx), &single, power, spec.noise_vars[tx]),
                leakage,
                residual: sol.as_ref().map(|s| s.residual),
                feasible: sol.as_ref().map(|s| s.feasible),
            })
        })
        .collect()
}

fn aggregate(power_db: f64, trials: &[&TrialPoint]) -> SweepPoint {
    let n = trials.len();
    let k = trials[0].rates.len();
    let per_user_rates: Vec<f64> = (0..k)
        .map(|u| trials.iter().map(|t| t.rates[u]).sum::<f64>() / n as f64)
        .collect();
    let mut residuals: Vec<f64> = trials.iter().filter_map(|t| t.residual).collect();
    residuals.sort_by(f64::total_cmp);
    let feasible: Vec<bool> = trials.iter().filter_map(|t| t.feasible).collect();
    let (mean_residual, residual_p95) = if residuals.is_empty() {
        (0.0, 0.0)
    } else {
        let idx = ((0.95 * residuals.len() as f64).ceil() as usize).clamp(1, residuals.len()) - 1;
        (residuals.iter().sum::<f64>() / residuals.len() as f64, residuals[idx])
    };
    SweepPoint {
        power_db,
        sum_rate: per_user_rates.iter().sum(),
        per_user_rates,
        single_link_rate: trials.iter().map(|t| t.single_link).sum::<f64>() / n as f64,
        mean_leakage: trials.iter().map(|t| t.leakage).sum::<f64>() / n as f64,
        max_leakage: trials.iter().map(|t| t.leakage).fold(0.0, f64::max),
        mean_residual,
        residual_p95,
        feasibility_rate: if feasible.is_empty() {
            1.0
        } else {
            feasible.iter().filter(|&&b| b).count() as f64 / feasible.len() as f64
        },
        trials: n,
    }
}

/// Runs the whole power grid. Trials execute on the current rayon pool and
/// are reduced in trial order, so the output does not depend on the pool size.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let per_trial: Vec<Vec<TrialPoint>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, t, &spec.power_db))
        .collect::<Result<_>>()?;
    Ok(spec
        .power_db
        .iter()
        .enumerate()
        .map(|(pi, &p)| {
            let column: Vec<&TrialPoint> = per_trial.iter().map(|t| &t[pi]).collect();
            aggregate(p, &column)
        })
        .collect())
}

/// Ergodic statistics at a single transmit power (dB).
pub fn ergodic_sum_rate(spec: &ExperimentSpec, power_db: f64) -> Result<SweepPoint> {
    let mut single = spec.clone();
    single.power_db = vec![power_db];
    Ok(run_experiment(&single)?.remove(0))
}

/// Rate of user `k` after a zero-forcing receive filter (interference-free
/// SISO rate when interference is aligned).
pub fn zero_forced_rate(channels: &ChannelSet, precoders: &[Precoder], k: usize, power: f64, noise_var: f64) -> Result<f64> {
    let u = precoding::receive_filter_zero_forcing(channels, precoders, k)?;
    let g: CVec = channels.get(k, k) * precoders[k].vector();
    let s = (u.vector().adjoint() * g)[(0, 0)].norm_sqr();
    Ok((power * s / noise_var).ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_iid_channel, CorrelationModel};
    use crate::coupling::{analytic_dipole_coupling, HALF_WAVE_SELF_IMPEDANCE};
    use crate::linalg::c;

    fn e(i: usize) -> Precoder {
        let mut v = CVec::zeros(2);
        v[i] = c(1.0, 0.0);
        Precoder::new(v).unwrap()
    }

    fn isolated(k: usize, seed: u64) -> ChannelSet {
        let mut rng = trial_rng(seed, 0);
        let links = (0..k)
            .map(|rx| {
                (0..k)
                    .map(|tx| if rx == tx { draw_iid_channel(2, 2, &mut rng) } else { CMat::zeros(2, 2) })
                    .collect()
            })
            .collect();
        ChannelSet::from_links(links).unwrap()
    }

    #[test]
    fn unit_link_one_bit() {
        let set = ChannelSet::from_links(vec![
            vec![CMat::identity(2, 2), CMat::zeros(2, 2)],
            vec![CMat::zeros(2, 2), CMat::identity(2, 2)],
        ])
        .unwrap();
        assert!((user_rate(&set, &[e(0), e(0)], 0, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interference_free_rank_one_lemma() {
        let set = isolated(3, 2);
        let f = [e(0), e(1), e(0)];
        for k in 0..3 {
            let g = (set.get(k, k) * f[k].vector()).norm_squared();
            let expect = (1.0 + 5.0 * g / 0.5).log2();
            assert!((user_rate(&set, &f, k, 5.0, 0.5) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn aligned_rate_equals_zero_forced_rate() {
        let top = SystemTopology::uniform(3, 2).unwrap();
        for seed in 0..20 {
            let raw = draw_raw_channels(&top, &mut trial_rng(seed, 0));
            let f = precoding::ia_closed_form_3user(&raw, &CMat::identity(2, 2)).unwrap();
            for k in 0..3 {
                // aligned interference is rank one; with huge interference power the
                // optimal receiver converges to the zero-forcing one
                let r = user_rate(&raw, &f, k, 10.0, 1.0);
                let zf = zero_forced_rate(&raw, &f, k, 10.0, 1.0).unwrap();
                assert!(r >= zf - 1e-9);
                let q = interference_plus_noise(&raw, &f, k, 10.0, 1.0);
                let (vals, _) = linalg::hermitian_eigen(&q);
                assert!((vals[0] - 1.0).abs() < 1e-8, "noise-only direction must remain");
            }
        }
    }

    #[test]
    fn leakage_formula() {
        let top = SystemTopology::uniform(3, 2).unwrap();
        let set = draw_raw_channels(&top, &mut trial_rng(31, 0));
        let mut rng = trial_rng(31, 1);
        let f: Vec<Precoder> = (0..3).map(|_| Precoder::new(draw_iid_channel(2, 1, &mut rng).column(0).into_owned()).unwrap()).collect();
        let u: Vec<ReceiveFilter> = (0..3).map(|_| ReceiveFilter::new(draw_iid_channel(2, 1, &mut rng).column(0).into_owned()).unwrap()).collect();
        for k in 0..3 {
            let direct: f64 = (0..3)
                .filter(|&l| l != k)
                .map(|l| {
                    let h = set.get(k, l);
                    let (u, f) = (u[k].vector(), f[l].vector());
                    let mut acc = c(0.0, 0.0);
                    for i in 0..2 {
                        for j in 0..2 {
                            acc += u[i].conj() * h[(i, j)] * f[j];
                        }
                    }
                    acc.norm_sqr()
                })
                .sum();
            assert!((interference_leakage(&set, &f, &u, k, 2.0) - 2.0 * direct).abs() < 1e-12);
        }
        // orthogonal toy: interference along e1, filter e2
        let eye = ChannelSet::from_links(vec![vec![CMat::identity(2, 2); 2]; 2]).unwrap();
        let filt = [ReceiveFilter::new(e(1).into_vector()).unwrap(), ReceiveFilter::new(e(1).into_vector()).unwrap()];
        assert_eq!(interference_leakage(&eye, &[e(1), e(0)], &filt, 0, 3.0), 0.0);
    }

    fn point(db: f64, rate: f64) -> SweepPoint {
        SweepPoint {
            power_db: db,
            sum_rate: rate,
            per_user_rates: vec![rate],
            single_link_rate: 0.0,
            mean_leakage: 0.0,
            max_leakage: 0.0,
            mean_residual: 0.0,
            residual_p95: 0.0,
            feasibility_rate: 1.0,
            trials: 1,
        }
    }

    #[test]
    fn slope_of_synthetic_points() {
        let pts: Vec<SweepPoint> = [20.0, 30.0, 40.0]
            .iter()
            .map(|&db| point(db, 3.0 * (db_to_linear(db)).log2() + 1.7))
            .collect();
        assert!((dof_slope(&pts).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(dof_slope(&pts[..1]), Err(Error::InsufficientPoints { needed: 2, got: 1 }));
    }

    fn spec(kind: ArrayKind, precoder: PrecoderKind, trials: usize) -> ExperimentSpec {
        let r = crate::channel::correlation_matrix(2, 0.14, CorrelationModel::Jakes).unwrap();
        ExperimentSpec {
            topology: SystemTopology::uniform(3, 2).unwrap().with_array(1, kind, r).unwrap(),
            espar_tx: 1,
            precoder,
            power_db: vec![0.0, 20.0],
            trials,
            base_seed: 7,
            noise_vars: vec![1.0; 3],
            constraints: ConstraintBox::default(),
            coupling: analytic_dipole_coupling(2, 0.14, HALF_WAVE_SELF_IMPEDANCE).unwrap(),
            optimizer: GaConfig::default(),
            max_iterations: 100,
            convergence_tol: 1e-6,
        }
    }

    #[test]
    fn experiment_is_reproducible() {
        let s = spec(ArrayKind::Espar, PrecoderKind::MaxSinr, 3);
        assert_eq!(run_experiment(&s).unwrap(), run_experiment(&s).unwrap());
        let one = ergodic_sum_rate(&s, 20.0).unwrap();
        assert_eq!(one, run_experiment(&s).unwrap()[1]);
    }

    #[test]
    fn vanishing_power_vanishing_rate() {
        let mut s = spec(ArrayKind::IdealUla, PrecoderKind::IaClosedForm, 20);
        s.power_db = vec![-60.0];
        let p = run_experiment(&s).unwrap().remove(0);
        assert!(p.sum_rate < 1e-4 && p.sum_rate >= 0.0);
        assert_eq!(p.sum_rate, p.per_user_rates.iter().sum::<f64>());
    }

    #[test]
    fn fixed_precoder_rates_grow_with_power() {
        let s = spec(ArrayKind::Espar, PrecoderKind::IaClosedForm, 30);
        for t in 0..30 {
            let pts = run_trial(&s, t, &[0.0, 10.0, 20.0, 30.0]).unwrap();
            for w in pts.windows(2) {
                let a: f64 = w[0].rates.iter().sum();
                let b: f64 = w[1].rates.iter().sum();
                assert!(b >= a - 1e-12);
            }
        }
    }
}
