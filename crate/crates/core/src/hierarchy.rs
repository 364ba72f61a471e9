//! Marginal-hierarchy solution series with correlated initial data, the
//! generalized kinetic equation for the one-particle operator, and the
//! marginal functionals expressing every higher marginal through it.
//!
//! The solution series for F_s(t) sums, over the number n of added
//! particles, partial traces of cumulant-evolved initial products
//! g_{s+n} · ΠF₁⁰ weighted by 1/n!. The one-particle equation replaces the
//! hierarchy coupling by a collision-integral series whose coefficients are
//! the generated evolution operators; its solution series is the s = 1
//! specialization. Each truncated sum carries per-term trace norms, a
//! geometric tail estimate, and the convergence-radius warnings quoted from
//! the underlying theory (sufficient, far from necessary at desk scale —
//! they warn, never fail).

use thiserror::Error;

use crate::comb::ClusteredSet;
use crate::correlations::{CorrError, CorrelationFamily};
use crate::dynamics::expansion::{self, cumulant_apply_on};
use crate::dynamics::{DynError, GeneratorKind, System};
use crate::integrate;
use crate::op::{C64, Label, LabeledOperator, OpError};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Comb(#[from] crate::comb::CombError),
    #[error("initial one-particle operator must live on label 1")]
    BadInitialLabels,
    #[error("initial one-particle operator must be Hermitian positive; min eigenvalue {0:.3e}")]
    InitialNotPositive(f64),
    #[error("marginal order s must be ≥ 1")]
    BadOrder,
    #[error("equivalence check needs s ≥ 2, got {0}")]
    EquivalenceNeedsPair(usize),
    #[error(
        "integration step too large at t = {t:.3}: series defect {defect:.3e} exceeds budget {budget:.3e}"
    )]
    StepTooLarge { t: f64, defect: f64, budget: f64 },
}

/// ‖F₁⁰‖ radius under which the hierarchy solution series is guaranteed to
/// converge.
pub fn radius_hierarchy_series() -> f64 {
    (-1.0_f64).exp()
}

/// ‖F₁(t)‖ radius for the collision-integral series.
pub fn radius_collision_series() -> f64 {
    (-8.0_f64).exp()
}

/// ‖F₁⁰‖ radius for the kinetic-equation solution series.
pub fn radius_kinetic_series() -> f64 {
    (-10.0_f64).exp() / (1.0 + (-9.0_f64).exp())
}

/// ‖F₁(t)‖ radius for the marginal functional of order s.
pub fn radius_functional(s: usize) -> f64 {
    (-(3.0 * s as f64 + 2.0)).exp()
}

/// Which sufficient convergence condition a warning refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarningKind {
    HierarchySeries,
    CollisionSeries,
    KineticSeries,
    Functional { s: usize },
    VlasovHorizon,
}

/// A breached sufficient-convergence condition. Informational: the series
/// radii are conservative and desk-scale runs routinely exceed them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceWarning {
    pub kind: WarningKind,
    pub value: f64,
    pub threshold: f64,
}

impl std::fmt::Display for ConvergenceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.kind {
            WarningKind::HierarchySeries => "hierarchy series: initial norm".to_string(),
            WarningKind::CollisionSeries => "collision series: one-particle norm".to_string(),
            WarningKind::KineticSeries => "kinetic solution series: initial norm".to_string(),
            WarningKind::Functional { s } => format!("order-{s} functional: one-particle norm"),
            WarningKind::VlasovHorizon => "iteration series horizon: t".to_string(),
        };
        write!(
            f,
            "{what} = {:.6e} is not below the sufficient radius {:.6e}",
            self.value, self.threshold
        )
    }
}

fn check_radius(kind: WarningKind, value: f64, threshold: f64) -> Vec<ConvergenceWarning> {
    if value >= threshold {
        vec![ConvergenceWarning {
            kind,
            value,
            threshold,
        }]
    } else {
        Vec::new()
    }
}

/// Truncation order for every series in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesTruncation {
    pub n_max: usize,
}

/// Per-term trace norms, geometric tail estimate, and radius warnings of a
/// truncated series.
#[derive(Debug, Clone, Default)]
pub struct SeriesDiagnostics {
    pub term_norms: Vec<f64>,
    pub tail_estimate: f64,
    pub warnings: Vec<ConvergenceWarning>,
}

/// A truncated series value together with its diagnostics.
#[derive(Debug, Clone)]
pub struct SeriesSum {
    pub op: LabeledOperator,
    pub diag: SeriesDiagnostics,
}

/// Geometric tail |a_N| r/(1−r) with r the last ratio clamped to [0, 0.9];
/// no estimate (0) when fewer than two terms exist.
pub fn tail_estimate(term_norms: &[f64]) -> f64 {
    if term_norms.len() < 2 {
        return 0.0;
    }
    let a_last = term_norms[term_norms.len() - 1];
    let a_prev = term_norms[term_norms.len() - 2];
    let r = if a_prev > 0.0 {
        (a_last / a_prev).clamp(0.0, 0.9)
    } else {
        0.0
    };
    a_last * r / (1.0 - r)
}

/// One-particle initial operator F₁⁰ plus the initial correlation family.
#[derive(Debug, Clone)]
pub struct InitialDatum {
    f1_0: LabeledOperator,
    correlations: CorrelationFamily,
}

impl InitialDatum {
    pub fn new(
        f1_0: LabeledOperator,
        correlations: CorrelationFamily,
    ) -> Result<Self, HierarchyError> {
        if f1_0.labels() != [1] || f1_0.dim() != correlations.dim() {
            return Err(HierarchyError::BadInitialLabels);
        }
        if f1_0.hermiticity_deviation() > 1e-10 {
            return Err(HierarchyError::InitialNotPositive(f64::NAN));
        }
        let min = f1_0.min_eigenvalue();
        if min < -1e-12 {
            return Err(HierarchyError::InitialNotPositive(min));
        }
        Ok(Self { f1_0, correlations })
    }

    pub fn f1_0(&self) -> &LabeledOperator {
        &self.f1_0
    }

    pub fn correlations(&self) -> &CorrelationFamily {
        &self.correlations
    }

    pub fn initial_norm(&self) -> f64 {
        self.f1_0.trace_norm()
    }
}

/// Marginals F_1..F_{s_max} at one instant.
#[derive(Debug, Clone)]
pub struct MarginalSequence {
    pub s_max: usize,
    pub ops: Vec<LabeledOperator>,
}

/// Product ⊗_{i=1..k} f placed on labels 1..k.
pub fn product_state(f1: &LabeledOperator, k: usize) -> Result<LabeledOperator, HierarchyError> {
    let mut prod = f1.relabeled(&[1])?;
    for i in 2..=k {
        prod = prod.tensor(&f1.relabeled(&[i as Label])?)?;
    }
    Ok(prod)
}

/// Initial marginals F_s(0) = g_s · ΠF₁⁰ for s = 1..s_max.
pub fn initial_marginals(
    datum: &InitialDatum,
    s_max: usize,
) -> Result<MarginalSequence, HierarchyError> {
    if s_max < 1 {
        return Err(HierarchyError::BadOrder);
    }
    let mut ops = Vec::with_capacity(s_max);
    for s in 1..=s_max {
        let prod = product_state(&datum.f1_0, s)?;
        let g = datum.correlations.full(s)?;
        ops.push(prod.left_mul_embedded(g)?);
    }
    Ok(MarginalSequence { s_max, ops })
}

/// Solution series for the s-particle marginal at time t:
/// Σ_n (1/n!) Tr_{s+1..s+n} 𝔄_{1+n}(−t) [g_{s+n} ΠF₁⁰].
pub fn bbgky_series(
    sys: &System,
    datum: &InitialDatum,
    t: f64,
    s: usize,
    trunc: SeriesTruncation,
) -> Result<SeriesSum, HierarchyError> {
    if s < 1 {
        return Err(HierarchyError::BadOrder);
    }
    let warnings = check_radius(
        WarningKind::HierarchySeries,
        datum.initial_norm(),
        radius_hierarchy_series(),
    );
    series_core(sys, datum, t, s, trunc, warnings)
}

/// Global solution series of the generalized kinetic equation; the s = 1
/// specialization with its own convergence radius.
pub fn gke_series(
    sys: &System,
    datum: &InitialDatum,
    t: f64,
    trunc: SeriesTruncation,
) -> Result<SeriesSum, HierarchyError> {
    let warnings = check_radius(
        WarningKind::KineticSeries,
        datum.initial_norm(),
        radius_kinetic_series(),
    );
    series_core(sys, datum, t, 1, trunc, warnings)
}

fn series_core(
    sys: &System,
    datum: &InitialDatum,
    t: f64,
    s: usize,
    trunc: SeriesTruncation,
    warnings: Vec<ConvergenceWarning>,
) -> Result<SeriesSum, HierarchyError> {
    let corr = &datum.correlations;
    let keep: Vec<Label> = (1..=s as Label).collect();
    let mut total = product_state(&datum.f1_0, s)?.zeros_like();
    let mut term_norms = Vec::with_capacity(trunc.n_max + 1);
    for n in 0..=trunc.n_max {
        let added: Vec<Label> = ((s + 1) as Label..=(s + n) as Label).collect();
        let prod = product_state(&datum.f1_0, s + n)?;
        let g = corr.full(s + n)?;
        let seeded = prod.left_mul_embedded(g)?;
        let set = ClusteredSet::cluster_with_singles(keep.clone(), &added)?;
        let evolved = cumulant_apply_on(sys, t, &set, &seeded)?;
        let term = evolved
            .partial_trace(&keep)?
            .scale_re(1.0 / crate::comb::factorial(n) as f64);
        term_norms.push(term.trace_norm());
        total = total.add(&term)?;
    }
    let tail = tail_estimate(&term_norms);
    Ok(SeriesSum {
        op: total,
        diag: SeriesDiagnostics {
            term_norms,
            tail_estimate: tail,
            warnings,
        },
    })
}

/// Collision integral of the generalized kinetic equation at time t for a
/// given one-particle operator:
/// ε Tr₂ (−N_int(1,2)) Σ_n (1/n!) Tr_{3..n+2} 𝔊_{1+n}(t) ΠF₁(t).
pub fn collision_integral(
    sys: &System,
    corr: &CorrelationFamily,
    f1_t: &LabeledOperator,
    t: f64,
    trunc: SeriesTruncation,
) -> Result<SeriesSum, HierarchyError> {
    let warnings = check_radius(
        WarningKind::CollisionSeries,
        f1_t.trace_norm(),
        radius_collision_series(),
    );
    let mut total = f1_t.relabeled(&[1])?.zeros_like();
    let mut term_norms = Vec::with_capacity(trunc.n_max + 1);
    for n in 0..=trunc.n_max {
        let prod = product_state(f1_t, n + 2)?;
        let gexp = expansion::generated_expansion(2, n);
        let applied = gexp.apply(sys, corr, t, &prod)?;
        let pair = applied
            .partial_trace(&[1, 2])?
            .scale_re(1.0 / crate::comb::factorial(n) as f64);
        let kicked = sys.generator(GeneratorKind::Interaction(1, 2), &pair)?;
        let term = kicked.partial_trace(&[1])?.scale_re(sys.epsilon());
        term_norms.push(term.trace_norm());
        total = total.add(&term)?;
    }
    let tail = tail_estimate(&term_norms);
    Ok(SeriesSum {
        op: total,
        diag: SeriesDiagnostics {
            term_norms,
            tail_estimate: tail,
            warnings,
        },
    })
}

/// Marginal functional F_s(t | F₁(t)) =
/// Σ_n (1/n!) Tr_{s+1..s+n} 𝔊_{1+n}(t) ΠF₁(t).
pub fn marginal_functional(
    sys: &System,
    corr: &CorrelationFamily,
    f1_t: &LabeledOperator,
    t: f64,
    s: usize,
    trunc: SeriesTruncation,
) -> Result<SeriesSum, HierarchyError> {
    if s < 1 {
        return Err(HierarchyError::BadOrder);
    }
    let warnings = check_radius(
        WarningKind::Functional { s },
        f1_t.trace_norm(),
        radius_functional(s),
    );
    let keep: Vec<Label> = (1..=s as Label).collect();
    let mut total = product_state(f1_t, s)?.zeros_like();
    let mut term_norms = Vec::with_capacity(trunc.n_max + 1);
    for n in 0..=trunc.n_max {
        let prod = product_state(f1_t, s + n)?;
        let gexp = expansion::generated_expansion(s, n);
        let applied = gexp.apply(sys, corr, t, &prod)?;
        let term = applied
            .partial_trace(&keep)?
            .scale_re(1.0 / crate::comb::factorial(n) as f64);
        term_norms.push(term.trace_norm());
        total = total.add(&term)?;
    }
    let tail = tail_estimate(&term_norms);
    Ok(SeriesSum {
        op: total,
        diag: SeriesDiagnostics {
            term_norms,
            tail_estimate: tail,
            warnings,
        },
    })
}

/// One recorded point of a kinetic-equation trajectory.
#[derive(Debug, Clone)]
pub struct GkePoint {
    pub t: f64,
    pub f1: LabeledOperator,
    /// Trace-norm distance to the solution series at the same time.
    pub defect_vs_series: f64,
    pub trace: C64,
    pub trace_norm: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct GkeTrajectory {
    pub points: Vec<GkePoint>,
    pub series_tail_max: f64,
    pub warnings: Vec<ConvergenceWarning>,
}

/// Integrate the generalized kinetic equation dF₁/dt = −N(1)F₁ + collision
/// with the classic 4-stage scheme over a uniform grid, recording at every
/// grid point the defect against the solution series. Errors out when the
/// defect exceeds `defect_budget` (step too large for the requested
/// accuracy).
pub fn gke_integrate(
    sys: &System,
    datum: &InitialDatum,
    t_end: f64,
    steps: usize,
    trunc: SeriesTruncation,
    defect_budget: Option<f64>,
) -> Result<GkeTrajectory, HierarchyError> {
    assert!(steps >= 1 && t_end > 0.0);
    let h = t_end / steps as f64;
    let corr = datum.correlations().clone();
    let mut rhs_err: Option<HierarchyError> = None;
    let trajectory = {
        let rhs = |t: f64, f1: &LabeledOperator| -> LabeledOperator {
            let free = match sys.generator(GeneratorKind::Free(1), f1) {
                Ok(x) => x,
                Err(e) => {
                    if rhs_err.is_none() {
                        rhs_err = Some(e.into());
                    }
                    return f1.zeros_like();
                }
            };
            match collision_integral(sys, &corr, f1, t, trunc) {
                Ok(coll) => free.add(&coll.op).expect("matching labels"),
                Err(e) => {
                    if rhs_err.is_none() {
                        rhs_err = Some(e);
                    }
                    f1.zeros_like()
                }
            }
        };
        integrate::rk4_solve(rhs, 0.0, &datum.f1_0.relabeled(&[1])?, h, steps)
    };
    if let Some(e) = rhs_err {
        return Err(e);
    }

    let mut points = Vec::with_capacity(trajectory.len());
    let mut series_tail_max: f64 = 0.0;
    let mut warnings = check_radius(
        WarningKind::KineticSeries,
        datum.initial_norm(),
        radius_kinetic_series(),
    );
    let mut norm_peak: f64 = 0.0;
    for (t, f1) in trajectory {
        let series = gke_series(sys, datum, t, trunc)?;
        let defect = f1.sub(&series.op)?.trace_norm();
        series_tail_max = series_tail_max.max(series.diag.tail_estimate);
        if let Some(budget) = defect_budget {
            if defect > budget {
                return Err(HierarchyError::StepTooLarge { t, defect, budget });
            }
        }
        norm_peak = norm_peak.max(f1.trace_norm());
        points.push(GkePoint {
            t,
            trace: f1.trace(),
            trace_norm: f1.trace_norm(),
            min_eigenvalue: f1.min_eigenvalue(),
            defect_vs_series: defect,
            f1,
        });
    }
    warnings.extend(check_radius(
        WarningKind::CollisionSeries,
        norm_peak,
        radius_collision_series(),
    ));
    Ok(GkeTrajectory {
        points,
        series_tail_max,
        warnings,
    })
}

/// Residual of the equivalence between the hierarchy series and the
/// kinetic-equation description.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub residual: f64,
    pub hierarchy_tail: f64,
    pub functional_tail: f64,
    /// Functional-side amplification of the F₁-series tail.
    pub f1_tail_propagated: f64,
}

impl EquivalenceReport {
    pub fn combined_tail(&self) -> f64 {
        self.hierarchy_tail + self.functional_tail + self.f1_tail_propagated
    }

    pub fn within_tails(&self) -> bool {
        self.residual <= self.combined_tail()
    }
}

/// ‖F_s(t) − F_s(t | F₁(t))‖ with F_s from the hierarchy series and the
/// functional fed by the kinetic solution series, plus the tail bookkeeping
/// that bounds it.
pub fn equivalence_residual(
    sys: &System,
    datum: &InitialDatum,
    t: f64,
    s: usize,
    trunc: SeriesTruncation,
) -> Result<EquivalenceReport, HierarchyError> {
    if s < 2 {
        return Err(HierarchyError::EquivalenceNeedsPair(s));
    }
    let direct = bbgky_series(sys, datum, t, s, trunc)?;
    let f1 = gke_series(sys, datum, t, trunc)?;
    let functional = marginal_functional(sys, datum.correlations(), &f1.op, t, s, trunc)?;
    let residual = direct.op.sub(&functional.op)?.trace_norm();

    // The functional is multilinear of degree s+n in F₁; perturbing F₁ by
    // its own series tail perturbs term n by ≈ (s+n)·‖term‖·tail/‖F₁‖.
    let f1_norm = f1.op.trace_norm().max(f64::MIN_POSITIVE);
    let sensitivity: f64 = functional
        .diag
        .term_norms
        .iter()
        .enumerate()
        .map(|(n, a)| a * (s + n) as f64)
        .sum::<f64>()
        / f1_norm;
    Ok(EquivalenceReport {
        residual,
        hierarchy_tail: direct.diag.tail_estimate,
        functional_tail: functional.diag.tail_estimate,
        f1_tail_propagated: sensitivity * f1.diag.tail_estimate,
    })
}

/// Centered-difference check of the first hierarchy equation: the time
/// derivative of the one-particle series against −N(1)F₁ + ε Tr₂(−N_int)F₂,
/// both marginals taken from the series. O(h²) + truncation tails.
pub fn hierarchy_defect(
    sys: &System,
    datum: &InitialDatum,
    t: f64,
    h: f64,
    trunc: SeriesTruncation,
) -> Result<f64, HierarchyError> {
    let plus = bbgky_series(sys, datum, t + h, 1, trunc)?.op;
    let minus = bbgky_series(sys, datum, t - h, 1, trunc)?.op;
    let derivative = plus.sub(&minus)?.scale_re(1.0 / (2.0 * h));

    let f1 = bbgky_series(sys, datum, t, 1, trunc)?.op;
    let f2 = bbgky_series(sys, datum, t, 2, trunc)?.op;
    let free = sys.generator(GeneratorKind::Free(1), &f1)?;
    let coupled = sys
        .generator(GeneratorKind::Interaction(1, 2), &f2)?
        .partial_trace(&[1])?
        .scale_re(sys.epsilon());
    let rhs = free.add(&coupled)?;
    Ok(derivative.sub(&rhs)?.trace_norm())
}
