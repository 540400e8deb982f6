//! Load synthesis for single-fed parasitic arrays.
//!
//! The array radiates the current vector `b(X) v_s`, where the beam vector
//! `b(X)` is the first column of `(Z_T + X)^{-1}`. A desired precoder `f` is
//! reached when `b(X)` points along `f`; the leftover complex scale is folded
//! into the feed voltage, `v_s = gamma s`.
//!
//! The solver first tries the exact loads, `x_n = -[Z_T f]_n / f_n`, with the
//! source conjugate-matched to the resulting input impedance. When those
//! violate the hardware box, the return-loss limit, or the positive input
//! resistance condition, a genetic algorithm minimizes the beam mismatch
//! with penalties for each violated constraint.

use num_complex::Complex64;
use rand::Rng;

use crate::coupling::{self, ConstraintBox, CouplingMatrix, LoadConfig};
use crate::error::{Error, Result};
use crate::genetic::{self, GaConfig, GaResult};
use crate::linalg::{self, CVec, DEFAULT_CONDITION_CAP};
use crate::precoding::Precoder;

/// Margin for strict positivity of the input resistance.
const REALIZABILITY_MARGIN: f64 = 1e-12;

/// First column of `(Z_T + X)^{-1}`: the port currents for a unit feed.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamVector(pub CVec);

impl BeamVector {
    pub fn vector(&self) -> &CVec {
        &self.0
    }

    /// Unit-norm direction of the radiated currents.
    pub fn direction(&self) -> Result<Precoder> {
        Precoder::new(self.0.clone())
    }
}

pub fn beam_vector(z_t: &CouplingMatrix, loads: &LoadConfig) -> Result<BeamVector> {
    coupling::port_currents_espar(z_t, loads, Complex64::new(1.0, 0.0)).map(BeamVector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    ClosedForm,
    Optimized,
}

/// Physical settings realizing a precoder, plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EsparSolution {
    pub loads: LoadConfig,
    /// Feed voltage per unit symbol: `v_s = voltage_scale * s`.
    pub voltage_scale: Complex64,
    /// `|| f - voltage_scale * b(X) ||^2`.
    pub residual: f64,
    /// Angle-based mismatch `sqrt(1 - |<b/|b|, f/|f|>|^2)`.
    pub chordal_distance: f64,
    pub input_impedance: Complex64,
    pub return_loss_db: f64,
    pub method: SolveMethod,
    pub feasible: bool,
    /// Best-objective trace of the optimizer (empty for closed form).
    pub history: Vec<f64>,
}

impl EsparSolution {
    pub fn beam(&self, z_t: &CouplingMatrix) -> Result<BeamVector> {
        beam_vector(z_t, &self.loads)
    }
}

/// Exact feed voltage and loads for a desired current vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormLoads {
    pub v_s: Complex64,
    pub loads: LoadConfig,
}

fn check_target(z_t: &CouplingMatrix, target: &CVec) -> Result<()> {
    if target.len() != z_t.n_t() {
        return Err(Error::InvalidInput(format!(
            "target has {} entries for a {}-element array",
            target.len(),
            z_t.n_t()
        )));
    }
    if target.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("target has non-finite entries".into()));
    }
    Ok(())
}

fn is_negligible(z: Complex64, target: &CVec) -> bool {
    z.norm() <= 1e-12 * target.norm()
}

/// Parasitic loads (and the feed voltage for source impedance `z_s`) that
/// make the array carry exactly the currents `target`.
pub fn loads_closed_form_general(z_t: &CouplingMatrix, target: &CVec, z_s: Complex64) -> Result<ClosedFormLoads> {
    check_target(z_t, target)?;
    let zi = z_t.matrix() * target;
    let mut parasitic = Vec::with_capacity(z_t.n_t().saturating_sub(1));
    for n in 1..z_t.n_t() {
        if is_negligible(target[n], target) {
            return Err(Error::ZeroTargetEntry { port: n });
        }
        parasitic.push(-zi[n] / target[n]);
    }
    Ok(ClosedFormLoads {
        v_s: zi[0] + z_s * target[0],
        loads: LoadConfig::new(z_s, parasitic),
    })
}

/// Whether the fed element can deliver `target`: the input resistance it
/// implies, `Re([Z_T target]_0 / target_0)`, must be strictly positive.
pub fn realizability_condition(z_t: &CouplingMatrix, target: &CVec) -> Result<bool> {
    check_target(z_t, target)?;
    if is_negligible(target[0], target) {
        return Err(Error::ZeroTargetEntry { port: 0 });
    }
    let zi = z_t.matrix() * target;
    Ok((zi[0] / target[0]).re > REALIZABILITY_MARGIN)
}

/// Least-squares scale `gamma` and residual `|| target - gamma b ||^2`.
pub fn fit_scale(target: &CVec, b: &CVec) -> (Complex64, f64) {
    let nb = b.norm_squared();
    if nb == 0.0 || !nb.is_finite() {
        return (Complex64::new(0.0, 0.0), target.norm_squared());
    }
    let gamma = (b.adjoint() * target)[(0, 0)] / nb;
    let residual = (target - b * gamma).norm_squared();
    (gamma, residual)
}

fn chordal(target: &CVec, b: &CVec) -> f64 {
    let (nt, nb) = (target.norm(), b.norm());
    if nt == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let overlap = (b.adjoint() * target)[(0, 0)].norm() / (nt * nb);
    (1.0 - overlap * overlap).max(0.0).sqrt()
}

struct Assessment {
    beam: CVec,
    z_in: Complex64,
    return_loss: Option<f64>,
    penalty: f64,
}

/// Beam, input impedance and constraint violations of one load setting.
fn assess(z_t: &CouplingMatrix, loads: &LoadConfig, bounds: &ConstraintBox) -> Result<Assessment> {
    let beam = beam_vector(z_t, loads)?.0;
    // Circuit identity v_s = (z_s + z_in) i_0 at unit feed.
    if beam[0].norm() == 0.0 {
        return Err(Error::SingularNetwork { condition: f64::INFINITY });
    }
    let z_in = Complex64::new(1.0, 0.0) / beam[0] - loads.z_s;
    let return_loss = coupling::return_loss_db(z_in, loads.z_s).ok();
    let box_violation: f64 = loads.diagonal().iter().map(|&z| bounds.violation(z)).sum();
    let rl_violation = match return_loss {
        Some(rl) => (rl - bounds.return_loss_max).max(0.0),
        None => 1e3,
    };
    let realizability_violation = (REALIZABILITY_MARGIN - z_in.re).max(0.0);
    Ok(Assessment {
        beam,
        z_in,
        return_loss,
        penalty: box_violation + rl_violation + realizability_violation,
    })
}

fn is_feasible(a: &Assessment, loads: &LoadConfig, bounds: &ConstraintBox) -> bool {
    loads.within(bounds)
        && a.z_in.re > REALIZABILITY_MARGIN
        && a.return_loss.is_some_and(|rl| rl <= bounds.return_loss_max)
}

fn genes_to_loads(genes: &[f64]) -> LoadConfig {
    let n_par = genes.len() / 2 - 1;
    let parasitic = (0..n_par).map(|i| Complex64::new(genes[2 * i], genes[2 * i + 1])).collect();
    LoadConfig::new(Complex64::new(genes[2 * n_par], genes[2 * n_par + 1]), parasitic)
}

fn loads_to_genes(loads: &LoadConfig) -> Vec<f64> {
    loads
        .parasitic_loads
        .iter()
        .chain(std::iter::once(&loads.z_s))
        .flat_map(|z| [z.re, z.im])
        .collect()
}

/// Smallest source resistance the optimizer may choose (Ohm).
pub const MIN_SOURCE_RESISTANCE: f64 = 1e-3;

fn source_box(bounds: &ConstraintBox) -> ConstraintBox {
    ConstraintBox {
        re_min: bounds.re_min.max(MIN_SOURCE_RESISTANCE).min(bounds.re_max),
        ..*bounds
    }
}

/// Conjugate match of the source to the loaded array, clipped to the box.
fn matched(z_t: &CouplingMatrix, parasitic: Vec<Complex64>, bounds: &ConstraintBox) -> LoadConfig {
    let sb = source_box(bounds);
    let z_s = coupling::input_impedance(z_t, &parasitic)
        .map(|z| sb.clip(z.conj()))
        .unwrap_or_else(|_| sb.clip(Complex64::new(50.0, 0.0)));
    LoadConfig::new(z_s, parasitic)
}

fn finish(
    z_t: &CouplingMatrix,
    target: &CVec,
    loads: LoadConfig,
    bounds: &ConstraintBox,
    method: SolveMethod,
    history: Vec<f64>,
) -> Result<EsparSolution> {
    let a = assess(z_t, &loads, bounds)?;
    let (gamma, residual) = fit_scale(target, &a.beam);
    let z_in = coupling::input_impedance(z_t, &loads.parasitic_loads).unwrap_or(a.z_in);
    Ok(EsparSolution {
        feasible: is_feasible(&a, &loads, bounds),
        voltage_scale: gamma,
        residual,
        chordal_distance: chordal(target, &a.beam),
        input_impedance: z_in,
        return_loss_db: a.return_loss.unwrap_or(f64::INFINITY),
        loads,
        method,
        history,
    })
}

fn try_closed_form(z_t: &CouplingMatrix, target: &CVec, bounds: &ConstraintBox) -> Option<EsparSolution> {
    if !realizability_condition(z_t, target).ok()? {
        return None;
    }
    let exact = loads_closed_form_general(z_t, target, Complex64::new(0.0, 0.0)).ok()?;
    let z_in = coupling::input_impedance(z_t, &exact.loads.parasitic_loads).ok()?;
    let loads = LoadConfig::new(z_in.conj(), exact.loads.parasitic_loads);
    let sol = finish(z_t, target, loads, bounds, SolveMethod::ClosedForm, Vec::new()).ok()?;
    sol.feasible.then_some(sol)
}

/// Realizes an arbitrary current vector (any norm); with `target = F s` this
/// is the per-symbol formulation for multi-stream precoders.
pub fn solve_for_target<R: Rng + ?Sized>(
    z_t: &CouplingMatrix,
    target: &CVec,
    bounds: &ConstraintBox,
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<EsparSolution> {
    check_target(z_t, target)?;
    bounds.validate()?;
    if z_t.n_t() < 2 {
        return Err(Error::InvalidInput("a parasitic array needs at least 2 elements".into()));
    }
    if let Some(sol) = try_closed_form(z_t, target, bounds) {
        return Ok(sol);
    }

    let n_par = z_t.n_t() - 1;
    let mut gene_bounds = Vec::with_capacity(2 * n_par + 2);
    for b in std::iter::repeat_n(*bounds, n_par).chain(std::iter::once(source_box(bounds))) {
        gene_bounds.push((b.re_min, b.re_max));
        gene_bounds.push((b.im_min, b.im_max));
    }

    let mut seeds = Vec::new();
    if let Ok(exact) = loads_closed_form_general(z_t, target, Complex64::new(0.0, 0.0)) {
        let clipped = exact.loads.parasitic_loads.iter().map(|&z| bounds.clip(z)).collect();
        seeds.push(loads_to_genes(&matched(z_t, clipped, bounds)));
    }
    while seeds.len() < cfg.population {
        let parasitic = (0..n_par)
            .map(|_| {
                Complex64::new(
                    bounds.re_min + (bounds.re_max - bounds.re_min) * rng.random::<f64>(),
                    bounds.im_min + (bounds.im_max - bounds.im_min) * rng.random::<f64>(),
                )
            })
            .collect();
        seeds.push(loads_to_genes(&matched(z_t, parasitic, bounds)));
    }

    let objective = |genes: &[f64]| {
        let loads = genes_to_loads(genes);
        match assess(z_t, &loads, bounds) {
            Ok(a) => fit_scale(target, &a.beam).1 + cfg.penalty_weight * a.penalty,
            Err(_) => f64::INFINITY,
        }
    };
    let GaResult { best, history, .. } = genetic::minimize(objective, &gene_bounds, &seeds, cfg, rng)?;
    finish(z_t, target, genes_to_loads(&best), bounds, SolveMethod::Optimized, history)
        .map_err(|e| Error::OptimizerFailed(format!("best individual is not evaluable: {e}")))
}

/// Loads and feed scaling that steer the array along a single-stream precoder.
pub fn solve_for_precoder_d1<R: Rng + ?Sized>(
    z_t: &CouplingMatrix,
    f: &Precoder,
    bounds: &ConstraintBox,
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<EsparSolution> {
    solve_for_target(z_t, f.vector(), bounds, cfg, rng)
}

/// Per-symbol realization of `F s` for multi-stream precoding.
pub fn solve_per_symbol<R: Rng + ?Sized>(
    z_t: &CouplingMatrix,
    precoder: &linalg::CMat,
    symbols: &CVec,
    bounds: &ConstraintBox,
    cfg: &GaConfig,
    rng: &mut R,
) -> Result<EsparSolution> {
    if precoder.ncols() != symbols.len() {
        return Err(Error::InvalidInput("precoder columns must match the symbol count".into()));
    }
    solve_for_target(z_t, &(precoder * symbols), bounds, cfg, rng)
}

/// Explicit-inverse variant of [`beam_vector`], used to cross-check the solve.
pub fn beam_vector_by_inverse(z_t: &CouplingMatrix, loads: &LoadConfig) -> Result<BeamVector> {
    let mut a = z_t.matrix().clone();
    for (i, d) in loads.diagonal().into_iter().enumerate() {
        a[(i, i)] += d;
    }
    let inv = linalg::inverse_checked(&a, DEFAULT_CONDITION_CAP)?;
    Ok(BeamVector(inv.column(0).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_iid_channel, trial_rng};
    use crate::coupling::{analytic_dipole_coupling, HALF_WAVE_SELF_IMPEDANCE};
    use crate::linalg::{c, CMat};
    use proptest::prelude::*;

    fn dipoles() -> CouplingMatrix {
        analytic_dipole_coupling(2, 0.14, HALF_WAVE_SELF_IMPEDANCE).unwrap()
    }

    fn random_network(n: usize, seed: u64) -> CouplingMatrix {
        let mut rng = trial_rng(seed, 0);
        let a = draw_iid_channel(n, n, &mut rng).scale(20.0);
        let mut z = &a + a.transpose();
        for i in 0..n {
            z[(i, i)] += c(80.0, 10.0);
        }
        CouplingMatrix::new(z).unwrap()
    }

    #[test]
    fn closed_form_round_trip() {
        let zt = dipoles();
        let target = CVec::from_vec(vec![c(0.6, 0.1), c(0.3, -0.7)]);
        let sol = loads_closed_form_general(&zt, &target, c(50.0, 0.0)).unwrap();
        let i = coupling::port_currents_espar(&zt, &sol.loads, sol.v_s).unwrap();
        assert!((i - &target).norm() < 1e-10 * target.norm());
    }

    #[test]
    fn closed_form_recovers_known_loads() {
        let zt = random_network(3, 4);
        let known = LoadConfig::new(c(50.0, 0.0), vec![c(-30.0, 120.0), c(15.0, -60.0)]);
        let target = beam_vector(&zt, &known).unwrap().0 * c(0.3, -2.0);
        let sol = loads_closed_form_general(&zt, &target, known.z_s).unwrap();
        for (a, b) in sol.loads.parasitic_loads.iter().zip(&known.parasitic_loads) {
            assert!((a - b).norm() < 1e-9 * b.norm());
        }
    }

    #[test]
    fn zero_parasitic_target() {
        let target = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(
            loads_closed_form_general(&dipoles(), &target, c(50.0, 0.0)),
            Err(Error::ZeroTargetEntry { port: 1 })
        );
    }

    #[test]
    fn realizability_cases() {
        let diag = CouplingMatrix::uncoupled(2, c(73.0, 42.5)).unwrap();
        let t = CVec::from_vec(vec![c(0.2, -1.0), c(5.0, 3.0)]);
        assert!(realizability_condition(&diag, &t).unwrap());
        // Re(50 + (-80) * 1) < 0
        let zt = CouplingMatrix::new(CMat::from_row_slice(2, 2, &[c(50.0, 0.0), c(-80.0, 0.0), c(-80.0, 0.0), c(50.0, 0.0)]))
            .unwrap();
        let t = CVec::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(!realizability_condition(&zt, &t).unwrap());
        let z0 = CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(realizability_condition(&zt, &z0), Err(Error::ZeroTargetEntry { port: 0 }));
    }

    #[test]
    fn beam_vector_two_ways() {
        let zt = random_network(4, 9);
        let loads = LoadConfig::new(c(40.0, 5.0), vec![c(-10.0, 30.0), c(100.0, -50.0), c(0.0, 200.0)]);
        let a = beam_vector(&zt, &loads).unwrap();
        let b = beam_vector_by_inverse(&zt, &loads).unwrap();
        assert!((a.0.clone() - b.0).norm() < 1e-12 * a.0.norm());
        let i = coupling::port_currents_espar(&zt, &loads, c(1.0, 0.0)).unwrap();
        assert_eq!(a.0, i);
    }

    #[test]
    fn feasible_target_solved_exactly() {
        let zt = dipoles();
        let bounds = ConstraintBox::default();
        let x0 = LoadConfig::new(c(60.0, -20.0), vec![c(-40.0, 90.0)]);
        let f = beam_vector(&zt, &x0).unwrap().direction().unwrap();
        let sol = solve_for_precoder_d1(&zt, &f, &bounds, &GaConfig::default(), &mut trial_rng(0, 0)).unwrap();
        assert_eq!(sol.method, SolveMethod::ClosedForm);
        assert!(sol.feasible && sol.residual < 1e-10);
        assert!((sol.loads.parasitic_loads[0] - x0.parasitic_loads[0]).norm() < 1e-8);
        assert_eq!(sol.return_loss_db, coupling::RETURN_LOSS_FLOOR_DB);
    }

    #[test]
    fn all_power_on_fed_element_needs_optimizer() {
        let zt = dipoles();
        let bounds = ConstraintBox::default();
        let f = Precoder::new(CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])).unwrap();
        let sol = solve_for_precoder_d1(&zt, &f, &bounds, &GaConfig::default(), &mut trial_rng(3, 0)).unwrap();
        assert_eq!(sol.method, SolveMethod::Optimized);
        assert!(sol.residual > 0.0);
        assert!(sol.loads.within(&bounds));
        // the parasitic current shrinks as |x_1| grows, so the load runs to the box edge
        let x = sol.loads.parasitic_loads[0];
        assert!(x.re.abs().max(x.im.abs()) > 450.0, "{x}");
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn infeasible_target_is_best_effort() {
        let zt = CouplingMatrix::new(CMat::from_row_slice(2, 2, &[c(50.0, 0.0), c(-80.0, 0.0), c(-80.0, 0.0), c(50.0, 0.0)]))
            .unwrap();
        let f = Precoder::new(CVec::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)])).unwrap();
        let bounds = ConstraintBox::default();
        let sol = solve_for_precoder_d1(&zt, &f, &bounds, &GaConfig::default(), &mut trial_rng(4, 0)).unwrap();
        assert_eq!(sol.method, SolveMethod::Optimized);
        if sol.feasible {
            assert!(sol.loads.within(&bounds) && sol.return_loss_db <= -10.0 && sol.input_impedance.re > 0.0);
        }
        let b = sol.beam(&zt).unwrap();
        assert!(((f.vector() - b.0 * sol.voltage_scale).norm_squared() - sol.residual).abs() < 1e-10);
    }

    #[test]
    fn per_symbol_matches_direct_target() {
        let zt = dipoles();
        let f = CMat::from_row_slice(2, 1, &[c(0.6, 0.0), c(0.8, 0.0)]);
        let s = CVec::from_element(1, c(0.0, 2.0));
        let a = solve_per_symbol(&zt, &f, &s, &ConstraintBox::default(), &GaConfig::default(), &mut trial_rng(0, 0)).unwrap();
        let b = solve_for_target(&zt, &(&f * &s), &ConstraintBox::default(), &GaConfig::default(), &mut trial_rng(0, 0)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn loads_do_not_depend_on_symbol(re in -3.0f64..3.0, im in -3.0f64..3.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
            prop_assume!(re.hypot(im) > 1e-3);
            let zt = dipoles();
            let f = CVec::from_vec(vec![c(0.7, 0.1), c(a, b + 0.05)]);
            prop_assume!(f[1].norm() > 1e-3);
            let scaled = &f * c(re, im);
            let x = loads_closed_form_general(&zt, &f, c(0.0, 0.0)).unwrap().loads.parasitic_loads;
            let y = loads_closed_form_general(&zt, &scaled, c(0.0, 0.0)).unwrap().loads.parasitic_loads;
            prop_assert!((x[0] - y[0]).norm() <= 1e-9 * x[0].norm().max(1.0));
            prop_assert_eq!(
                realizability_condition(&zt, &f).unwrap(),
                realizability_condition(&zt, &scaled).unwrap()
            );
        }
    }
}
