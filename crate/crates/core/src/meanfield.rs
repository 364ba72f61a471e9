//! The interaction-scaling limit: the modified Vlasov equation whose pair
//! coefficient carries the freely evolved initial pair correlation, its
//! iterated-integral series on the convergence horizon, and empirical
//! trace-norm convergence ladders against the scaled kinetic equation.
//!
//! The scaling family is realized exactly as F₁⁰(ε) = f₁⁰/ε, so every
//! observed distance is purely dynamical. Ladder studies assert
//! monotonicity only; no rate is claimed.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::correlations::CorrelationFamily;
use crate::dynamics::{DynError, GeneratorKind, HamiltonianSpec, System};
use crate::hierarchy::{
    self, HierarchyError, InitialDatum, SeriesDiagnostics, SeriesSum, SeriesTruncation,
};
use crate::integrate;
use crate::op::{C64, Label, LabeledOperator, OpError};

#[derive(Debug, Error)]
pub enum MeanfieldError {
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Corr(#[from] crate::correlations::CorrError),
    #[error("scaling ladder must be strictly decreasing positive values")]
    BadLadder,
    #[error("outside convergence horizon: |t| = {t:.4} ≥ t0 = {t0:.4}")]
    OutsideHorizon { t: f64, t0: f64 },
}

/// Decreasing ε ladder plus the limiting one-particle operator f₁⁰; the
/// scaled initial data are F₁⁰(ε) = f₁⁰/ε by construction.
#[derive(Debug, Clone)]
pub struct ScaledFamily {
    eps_ladder: Vec<f64>,
    f1_limit: LabeledOperator,
}

impl ScaledFamily {
    pub fn new(eps_ladder: Vec<f64>, f1_limit: LabeledOperator) -> Result<Self, MeanfieldError> {
        if eps_ladder.is_empty()
            || eps_ladder.iter().any(|&e| !(e > 0.0))
            || eps_ladder.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(MeanfieldError::BadLadder);
        }
        Ok(Self {
            eps_ladder,
            f1_limit,
        })
    }

    pub fn eps_ladder(&self) -> &[f64] {
        &self.eps_ladder
    }

    pub fn f1_limit(&self) -> &LabeledOperator {
        &self.f1_limit
    }

    pub fn scaled_initial(&self, epsilon: f64) -> LabeledOperator {
        self.f1_limit.scale_re(1.0 / epsilon)
    }
}

/// Convergence horizon t₀ = (2 ‖Φ‖ ‖f₁⁰‖)⁻¹ of the iteration series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonT0 {
    pub t0: f64,
}

pub fn horizon(potential: &LabeledOperator, f1_limit: &LabeledOperator) -> HorizonT0 {
    HorizonT0 {
        t0: 1.0 / (2.0 * potential.operator_norm() * f1_limit.trace_norm()),
    }
}

/// One-particle state of the limit equation.
#[derive(Debug, Clone)]
pub struct VlasovState {
    pub t: f64,
    pub f1: LabeledOperator,
}

/// Right-hand side of the modified Vlasov equation:
/// −N(1) f₁ + Tr₂ (−N_int(1,2)) [U_f(t) g₂ U_f(t)†] f₁⊗f₁,
/// where U_f(t) is the free pair propagation — the coefficient is the
/// freely evolved initial pair correlation. The coefficient acts through
/// the symmetric product ½(C X + X C†): for chaos this is the plain Vlasov
/// right-hand side, and for Hermitian coefficients it keeps the flow
/// Hermiticity-preserving, which a one-sided product would break at second
/// collision order. The interaction scaling of `sys` plays no role here;
/// only its kinetic and potential parts enter.
pub fn vlasov_rhs(
    sys: &System,
    corr: &CorrelationFamily,
    t: f64,
    f1: &LabeledOperator,
) -> Result<LabeledOperator, MeanfieldError> {
    let f1 = f1.relabeled(&[1])?;
    let free = sys.generator(GeneratorKind::Free(1), &f1)?;
    let prod = f1.tensor(&f1.relabeled(&[2])?)?;
    let coeff = evolved_pair_correlation(sys, corr, t)?.embed(&[1, 2])?;
    let seeded = coeff
        .matmul(&prod)?
        .add(&prod.matmul(&coeff.dagger())?)?
        .scale_re(0.5);
    let collision = sys
        .generator(GeneratorKind::Interaction(1, 2), &seeded)?
        .partial_trace(&[1])?;
    Ok(free.add(&collision)?)
}

/// U_f(t) g₂ U_f(t)† on labels (1, 2): the initial pair correlation carried
/// along the free flow.
pub fn evolved_pair_correlation(
    sys: &System,
    corr: &CorrelationFamily,
    t: f64,
) -> Result<LabeledOperator, MeanfieldError> {
    let g2 = corr.full(2)?;
    let u = sys.free_unitary(t, 1).tensor(&sys.free_unitary(t, 2))?;
    Ok(g2.conjugated_by(&u)?)
}

/// Freely evolved s-particle initial correlation Π G₁(−t) g_s Π G₁(t).
pub fn evolved_correlation(
    sys: &System,
    corr: &CorrelationFamily,
    t: f64,
    s: usize,
) -> Result<LabeledOperator, MeanfieldError> {
    let g = corr.full(s)?;
    let mut u = sys.free_unitary(t, 1);
    for i in 2..=s {
        u = u.tensor(&sys.free_unitary(t, i as Label))?;
    }
    Ok(g.conjugated_by(&u)?)
}

#[derive(Debug, Clone)]
pub struct VlasovPoint {
    pub t: f64,
    pub f1: LabeledOperator,
    pub trace: C64,
    pub trace_norm: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct VlasovTrajectory {
    pub points: Vec<VlasovPoint>,
}

impl VlasovTrajectory {
    pub fn last(&self) -> &VlasovPoint {
        self.points.last().expect("trajectory has points")
    }
}

/// Integrate the limit equation with the classic 4-stage scheme; the
/// time-dependent coefficient groups are evaluated at the stage times.
pub fn vlasov_integrate(
    sys: &System,
    corr: &CorrelationFamily,
    f1_0: &LabeledOperator,
    t_end: f64,
    steps: usize,
) -> Result<VlasovTrajectory, MeanfieldError> {
    assert!(steps >= 1 && t_end > 0.0);
    let h = t_end / steps as f64;
    let mut rhs_err: Option<MeanfieldError> = None;
    let raw = {
        let rhs = |t: f64, f1: &LabeledOperator| match vlasov_rhs(sys, corr, t, f1) {
            Ok(x) => x,
            Err(e) => {
                if rhs_err.is_none() {
                    rhs_err = Some(e);
                }
                f1.zeros_like()
            }
        };
        integrate::rk4_solve(rhs, 0.0, &f1_0.relabeled(&[1])?, h, steps)
    };
    if let Some(e) = rhs_err {
        return Err(e);
    }
    let points = raw
        .into_iter()
        .map(|(t, f1)| VlasovPoint {
            t,
            trace: f1.trace(),
            trace_norm: f1.trace_norm(),
            min_eigenvalue: f1.min_eigenvalue(),
            f1,
        })
        .collect();
    Ok(VlasovTrajectory { points })
}

/// 8-point Gauss-Legendre nodes and weights on [−1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// 16-point rule, used as the node-doubled convergence self-check.
const GL16: [(f64, f64); 16] = [
    (-0.989_400_934_991_649_9, 0.027_152_459_411_754_1),
    (-0.944_575_023_073_232_6, 0.062_253_523_938_647_9),
    (-0.865_631_202_387_831_8, 0.095_158_511_682_492_8),
    (-0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (-0.617_876_244_402_643_8, 0.149_595_988_816_576_7),
    (-0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (-0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (-0.095_012_509_837_637_4, 0.189_450_610_455_068_5),
    (0.095_012_509_837_637_4, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_8, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_8, 0.095_158_511_682_492_8),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_9),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_1),
];

/// Nodes of the fixed Gauss rule mapped to [0, upper].
fn mapped_nodes(upper: f64, double: bool) -> Vec<(f64, f64)> {
    let table: &[(f64, f64)] = if double { &GL16 } else { &GL8 };
    table
        .iter()
        .map(|&(x, w)| (0.5 * upper * (x + 1.0), 0.5 * upper * w))
        .collect()
}

/// Iteration-series solution of the limit equation, truncated at `n_max`,
/// each term a nested fixed-node quadrature over the ordered simplex
/// 0 ≤ t_n ≤ … ≤ t₁ ≤ t. Only defined strictly inside the horizon.
pub fn vlasov_series(
    sys: &System,
    corr: &CorrelationFamily,
    f1_0: &LabeledOperator,
    t: f64,
    n_max: usize,
    double_nodes: bool,
) -> Result<SeriesSum, MeanfieldError> {
    let t0 = horizon(sys.spec().potential(), f1_0).t0;
    if t.abs() >= t0 {
        return Err(MeanfieldError::OutsideHorizon { t: t.abs(), t0 });
    }
    let mut total = f1_0.relabeled(&[1])?.zeros_like();
    let mut term_norms = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let term = if n == 0 {
            sys.free_evolve(t, 1, &f1_0.relabeled(&[1])?)?
        } else {
            let mut times = vec![0.0; n + 1];
            times[0] = t;
            let mut acc = f1_0.relabeled(&[1])?.zeros_like();
            simplex_quadrature(
                sys,
                corr,
                f1_0,
                n,
                1,
                &mut times,
                1.0,
                double_nodes,
                &mut acc,
            )?;
            acc
        };
        term_norms.push(term.trace_norm());
        total = total.add(&term)?;
    }
    let tail = hierarchy::tail_estimate(&term_norms);
    Ok(SeriesSum {
        op: total,
        diag: SeriesDiagnostics {
            term_norms,
            tail_estimate: tail,
            warnings: Vec::new(),
        },
    })
}

/// Recursive nested quadrature: level k integrates t_k over [0, t_{k−1}].
#[allow(clippy::too_many_arguments)]
fn simplex_quadrature(
    sys: &System,
    corr: &CorrelationFamily,
    f1_0: &LabeledOperator,
    n: usize,
    level: usize,
    times: &mut Vec<f64>,
    weight: f64,
    double_nodes: bool,
    acc: &mut LabeledOperator,
) -> Result<(), MeanfieldError> {
    for (node, w) in mapped_nodes(times[level - 1], double_nodes) {
        times[level] = node;
        if level == n {
            let value = iteration_integrand(sys, corr, f1_0, n, times)?;
            *acc = acc.add(&value.scale_re(weight * w))?;
        } else {
            simplex_quadrature(
                sys,
                corr,
                f1_0,
                n,
                level + 1,
                times,
                weight * w,
                double_nodes,
                acc,
            )?;
        }
    }
    Ok(())
}

/// The integrand of the n-th iteration term at fixed times
/// (t = t₀ ≥ t₁ ≥ … ≥ t_n): alternating free flows of the growing particle
/// set and pair-interaction generators, seeded by g_{1+n} Π f₁⁰ and traced
/// to particle 1.
fn iteration_integrand(
    sys: &System,
    corr: &CorrelationFamily,
    f1_0: &LabeledOperator,
    n: usize,
    times: &[f64],
) -> Result<LabeledOperator, MeanfieldError> {
    let prod = hierarchy::product_state(f1_0, n + 1)?;
    let g = corr.full(n + 1)?;
    let mut m = prod.left_mul_embedded(g)?;
    for j in 1..=(n + 1) as Label {
        m = sys.free_evolve(times[n], j, &m)?;
    }
    for k in (1..=n).rev() {
        let mut kicked = m.zeros_like();
        for i in 1..=k as Label {
            kicked =
                kicked.add(&sys.generator(GeneratorKind::Interaction(i, (k + 1) as Label), &m)?)?;
        }
        m = kicked;
        let gap = times[k - 1] - times[k];
        for j in 1..=k as Label {
            m = sys.free_evolve(gap, j, &m)?;
        }
    }
    Ok(m.partial_trace(&[1])?)
}

/// A-priori allowance for the closure defect between the iteration series
/// and the integrated limit equation on correlated data. The initial
/// correlation enters the series once, innermost; the integrated equation
/// re-applies its freely evolved pair part at every collision. The
/// mismatch is a second-collision-order commutator, identically absent for
/// chaos, bounded by 4 (2‖Φ‖t)² ‖ĝ‖_max ‖f₁⁰‖³.
pub fn closure_defect_allowance(
    potential: &LabeledOperator,
    corr: &CorrelationFamily,
    f1_0: &LabeledOperator,
    t: f64,
) -> f64 {
    let mut ghat_max: f64 = 0.0;
    for n in 2..=corr.supplied_max() {
        if let Ok(ghat) = corr.connected(n) {
            ghat_max = ghat_max.max(ghat.operator_norm());
        }
    }
    let phi = potential.operator_norm();
    let f = f1_0.trace_norm();
    4.0 * (2.0 * phi * t).powi(2) * ghat_max * f.powi(3)
}

/// Growth envelope (t/t₀)ⁿ ‖f₁⁰‖ ‖g‖_max bounding the n-th iteration term.
pub fn iteration_envelope(
    potential: &LabeledOperator,
    corr: &CorrelationFamily,
    f1_0: &LabeledOperator,
    t: f64,
    n: usize,
) -> f64 {
    let t0 = horizon(potential, f1_0).t0;
    (t / t0).powi(n as i32) * f1_0.trace_norm() * corr.op_norm_bound()
}

/// One row of a scaling-ladder study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub t: f64,
    pub distance: f64,
    pub tail_estimate: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].distance < w[0].distance)
    }

    /// Ratios of successive distances, recorded (not asserted) as the
    /// observed convergence slope.
    pub fn successive_ratios(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[1].distance / w[0].distance)
            .collect()
    }
}

/// Shared settings of a ladder study.
#[derive(Debug, Clone, Copy)]
pub struct LadderConfig {
    pub t: f64,
    pub trunc: SeriesTruncation,
    pub vlasov_steps: usize,
}

/// ‖ε F₁(t) − f₁(t)‖ per ladder rung: the kinetic solution series run at
/// each ε with F₁⁰ = f₁⁰/ε against one shared limit trajectory.
pub fn convergence_study(
    spec: &HamiltonianSpec,
    corr: &CorrelationFamily,
    family: &ScaledFamily,
    cfg: &LadderConfig,
) -> Result<ConvergenceTable, MeanfieldError> {
    let base = System::new(spec.with_epsilon(0.0)?)?;
    let limit = vlasov_integrate(&base, corr, family.f1_limit(), cfg.t, cfg.vlasov_steps)?;
    let f1_limit_t = &limit.last().f1;

    let rows: Result<Vec<ConvergenceRow>, MeanfieldError> = family
        .eps_ladder()
        .par_iter()
        .map(|&epsilon| {
            let started = Instant::now();
            let sys = System::new(spec.with_epsilon(epsilon)?)?;
            let datum = InitialDatum::new(family.scaled_initial(epsilon), corr.clone())?;
            let scaled = hierarchy::gke_series(&sys, &datum, cfg.t, cfg.trunc)?;
            let distance = scaled.op.scale_re(epsilon).sub(f1_limit_t)?.trace_norm();
            Ok(ConvergenceRow {
                epsilon,
                t: cfg.t,
                distance,
                tail_estimate: epsilon * scaled.diag.tail_estimate,
                runtime_ms: started.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect();
    Ok(ConvergenceTable { rows: rows? })
}

/// Propagation of initial correlations: per rung,
/// ‖ε^s F_s(t | F₁(t)) − [ΠG₁(−t)] g_s [ΠG₁(t)] Π f₁(t)‖ for the marginal
/// functional of the scaled kinetic solution against the freely evolved
/// initial correlation times the limit product.
pub fn correlation_propagation_study(
    spec: &HamiltonianSpec,
    corr: &CorrelationFamily,
    family: &ScaledFamily,
    s: usize,
    cfg: &LadderConfig,
) -> Result<ConvergenceTable, MeanfieldError> {
    assert!(s >= 2, "correlation propagation needs s ≥ 2");
    let base = System::new(spec.with_epsilon(0.0)?)?;
    let limit = vlasov_integrate(&base, corr, family.f1_limit(), cfg.t, cfg.vlasov_steps)?;
    let limit_object = chaos_limit_object(&base, corr, cfg.t, s, &limit.last().f1)?;

    let rows: Result<Vec<ConvergenceRow>, MeanfieldError> = family
        .eps_ladder()
        .par_iter()
        .map(|&epsilon| {
            let started = Instant::now();
            let sys = System::new(spec.with_epsilon(epsilon)?)?;
            let datum = InitialDatum::new(family.scaled_initial(epsilon), corr.clone())?;
            let f1 = hierarchy::gke_series(&sys, &datum, cfg.t, cfg.trunc)?;
            let functional =
                hierarchy::marginal_functional(&sys, corr, &f1.op, cfg.t, s, cfg.trunc)?;
            let distance = functional
                .op
                .scale_re(epsilon.powi(s as i32))
                .sub(&limit_object)?
                .trace_norm();
            Ok(ConvergenceRow {
                epsilon,
                t: cfg.t,
                distance,
                tail_estimate: epsilon.powi(s as i32) * functional.diag.tail_estimate,
                runtime_ms: started.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect();
    Ok(ConvergenceTable { rows: rows? })
}

/// The limit object of correlation propagation:
/// [ΠG₁(−t)] g_s [ΠG₁(t)] · Π_{j≤s} f₁(t,j). For chaos it reduces to the
/// plain product Π f₁(t).
pub fn chaos_limit_object(
    sys: &System,
    corr: &CorrelationFamily,
    t: f64,
    s: usize,
    f1_t: &LabeledOperator,
) -> Result<LabeledOperator, MeanfieldError> {
    let coeff = evolved_correlation(sys, corr, t, s)?;
    let prod = hierarchy::product_state(f1_t, s)?;
    Ok(prod.left_mul_embedded(&coeff)?)
}
