//! Experiment dispatch: one validated scenario in, one report out.
//!
//! Five experiment kinds: the operator-identity suite, the
//! hierarchy-vs-kinetic-equation equivalence run, the two scaling-ladder
//! studies, and the continuum solver runs. Every check lands in the report
//! as a named residual with its tolerance; exit policy is decided by the
//! caller from `Report::passed`.

use std::collections::BTreeMap;
use std::time::Instant;

use thiserror::Error;

use crate::comb::{self, ClusteredSet};
use crate::continuum::{
    self, ContinuumError, CouplingKernel, Grid1D, KernelSchedule, PairKernel, SplitStep,
    WaveFunction,
};
use crate::correlations::CorrelationFamily;
use crate::dynamics::expansion::{
    self, cumulant_apply, cumulant_inverse_residual, kce_residual, CumulantOrder,
};
use crate::dynamics::{DynError, System};
use crate::hierarchy::{self, HierarchyError, InitialDatum, SeriesTruncation};
use crate::meanfield::{self, LadderConfig, MeanfieldError};
use crate::op::{C64, Label, LabeledOperator, OpError, Propagator};
use crate::probe;
use crate::report::{CheckResult, Report, ReportBody, ReportError, Table, Timing};
use crate::scenario::{
    ContinuumRun, Experiment, KernelChoice, Scenario, ScenarioError, WaveProfile,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Meanfield(#[from] MeanfieldError),
    #[error(transparent)]
    Continuum(#[from] ContinuumError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Corr(#[from] crate::correlations::CorrError),
    #[error(transparent)]
    Comb(#[from] comb::CombError),
}

/// Run the scenario's experiment and collect the report.
pub fn run_scenario(scn: &Scenario) -> Result<Report, RunError> {
    let started = Instant::now();
    let mut report = Report {
        body: ReportBody {
            scenario_name: scn.name.clone(),
            scenario_hash: scn.hash().to_string(),
            experiment: scn.experiment.to_string(),
            checks: Vec::new(),
            warnings: Vec::new(),
            tables: BTreeMap::new(),
            scalars: BTreeMap::new(),
        },
        timing: Timing::default(),
    };
    match scn.experiment {
        Experiment::Identities => run_identities(scn, &mut report)?,
        Experiment::HierarchyEquivalence => run_equivalence(scn, &mut report)?,
        Experiment::MeanfieldLadder => run_meanfield_ladder(scn, &mut report)?,
        Experiment::CorrelationPropagation => run_correlation_propagation(scn, &mut report)?,
        Experiment::Continuum => run_continuum(scn, &mut report)?,
    }
    report.timing.total_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

fn push_warnings(report: &mut Report, warnings: &[hierarchy::ConvergenceWarning]) {
    for w in warnings {
        let line = w.to_string();
        if !report.body.warnings.contains(&line) {
            report.body.warnings.push(line);
        }
    }
}

// ───────────────────────── identities ─────────────────────────

fn run_identities(scn: &Scenario, report: &mut Report) -> Result<(), RunError> {
    let sys = scn.system();
    let corr = scn.correlation_family();
    let datum = scn.initial_datum().expect("validated");
    let t = scn.t_end;
    let mut checks: Vec<CheckResult> = Vec::new();
    let checks = &mut checks;

    // exact combinatorial identities
    let mut mobius_defect = 0.0;
    for m in 1..=6 {
        let total: i64 = comb::raw_partitions(m)
            .iter()
            .map(|p| comb::mobius_coefficient(p.len()))
            .sum();
        mobius_defect += (total - i64::from(m == 1)).abs() as f64;
    }
    checks.push(CheckResult::bounded("mobius-orthogonality", mobius_defect, 0.0));

    let bell = [1u64, 1, 2, 5, 15, 52];
    let bell_defect: f64 = bell
        .iter()
        .enumerate()
        .map(|(n, &b)| (comb::bell_number(n) as i64 - b as i64).abs() as f64)
        .sum();
    checks.push(CheckResult::bounded("partition-counts", bell_defect, 0.0));

    // cumulant vanishing at t = 0 up to three added particles
    let mut vanish: f64 = 0.0;
    for (s, n) in [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2)] {
        let labels: Vec<Label> = (1..=(s + n) as Label).collect();
        let probes = probe::probe_set(scn.dim(), &labels, scn.seed ^ 0x11);
        for p in probes.iter().take(4) {
            let out = cumulant_apply(&sys, &CumulantOrder { s, n, t: 0.0 }, p)?;
            vanish = vanish.max(out.trace_norm() / p.trace_norm().max(1.0));
        }
    }
    checks.push(CheckResult::bounded("cumulant-vanishing-t0", vanish, 1e-12));

    // inverse cluster identity up to four particles
    let mut inversion: f64 = 0.0;
    let sets = [
        ClusteredSet::cluster_with_singles(vec![1], &[2])?,
        ClusteredSet::cluster_with_singles(vec![1], &[2, 3])?,
        ClusteredSet::cluster_with_singles(vec![1, 2], &[3])?,
        ClusteredSet::cluster_with_singles(vec![1, 2], &[3, 4])?,
        ClusteredSet::singles(&[1, 2, 3, 4])?,
    ];
    for set in &sets {
        let mut labels = set.declusterize();
        labels.sort_unstable();
        let probes = probe::probe_set(scn.dim(), &labels, scn.seed ^ 0x22);
        inversion = inversion.max(cumulant_inverse_residual(&sys, t, set, &probes[..4])?);
    }
    checks.push(CheckResult::bounded("cluster-inversion", inversion, 1e-10));

    // kinetic cluster expansion residual
    let mut kce: f64 = 0.0;
    for s in 1..=2usize {
        for n in 0..=2usize {
            let labels: Vec<Label> = (1..=(s + n) as Label).collect();
            let probes = probe::probe_set(scn.dim(), &labels, scn.seed ^ 0x33);
            for &tt in &[0.1, 0.5] {
                kce = kce.max(kce_residual(&sys, &corr, tt, s, n, &probes[..3])?);
            }
        }
    }
    checks.push(CheckResult::bounded("kce-residual", kce, 1e-9));

    // closed form against the recurrence
    let mut closed: f64 = 0.0;
    for n in 0..=2usize {
        let labels: Vec<Label> = (1..=(1 + n) as Label).collect();
        let probes = probe::probe_set(scn.dim(), &labels, scn.seed ^ 0x44);
        let rec = expansion::generated_expansion(1, n);
        let direct = expansion::generated_expansion_closed(1, n)?;
        for p in probes.iter().take(3) {
            let a = rec.apply(&sys, &corr, t, p)?;
            let b = direct.apply(&sys, &corr, t, p)?;
            closed = closed.max(a.sub(&b)?.trace_norm());
        }
    }
    // two-particle cluster: compare as traced functionals of product states
    {
        let f1 = datum.f1_0().relabeled(&[1])?;
        let prod = hierarchy::product_state(&f1, 4)?;
        let rec = expansion::generated_expansion(2, 2)
            .apply(&sys, &corr, t, &prod)?
            .partial_trace(&[1, 2])?;
        let direct = expansion::generated_expansion_closed(2, 2)?
            .apply(&sys, &corr, t, &prod)?
            .partial_trace(&[1, 2])?;
        let scale = rec.trace_norm().max(1e-30);
        closed = closed.max(rec.sub(&direct)?.trace_norm() / scale);
    }
    checks.push(CheckResult::bounded(
        "generated-recurrence-vs-closed",
        closed,
        1e-10,
    ));

    // propagation primitives
    let mut unitarity: f64 = 0.0;
    let mut semigroup: f64 = 0.0;
    for n in 1..=3usize {
        let labels: Vec<Label> = (1..=n as Label).collect();
        let ham = sys.hamiltonian_on(&labels)?;
        let prop = Propagator::new(&ham)?;
        let u = prop.unitary(t);
        let id = LabeledOperator::identity(scn.dim(), &labels);
        unitarity = unitarity.max(u.dagger().matmul(&u)?.sub(&id)?.operator_norm());
        let split = prop.unitary(0.3 * t).matmul(&prop.unitary(0.7 * t))?;
        semigroup = semigroup.max(split.sub(&u)?.trace_norm());
    }
    checks.push(CheckResult::bounded("propagator-unitarity", unitarity, 1e-11));
    checks.push(CheckResult::bounded("semigroup-law", semigroup, 1e-11));

    let mut rng = probe::seeded(scn.seed ^ 0x55);
    let f = probe::random_operator(scn.dim(), &[1, 2], &mut rng);
    let u = sys.propagator(2).unitary(t);
    let invariance = (f.conjugated_by(&u)?.trace_norm() - f.trace_norm()).abs();
    checks.push(CheckResult::bounded(
        "trace-norm-unitary-invariance",
        invariance,
        1e-10,
    ));

    let g = probe::random_operator(scn.dim(), &[2], &mut rng);
    let lhs = g.embed(&[1, 2])?.matmul(&f)?.trace();
    let rhs = g.matmul(&f.partial_trace(&[2])?)?.trace();
    checks.push(CheckResult::bounded(
        "embed-trace-adjointness",
        (lhs - rhs).norm(),
        1e-12,
    ));

    let a = probe::random_operator(scn.dim(), &[1], &mut rng);
    let b = probe::random_operator(scn.dim(), &[2], &mut rng);
    let factorized = a
        .tensor(&b)?
        .partial_trace(&[1])?
        .sub(&a.scale(b.trace()))?
        .trace_norm();
    checks.push(CheckResult::bounded(
        "tensor-partial-trace-factorization",
        factorized,
        1e-13,
    ));

    let rho = probe::random_density(scn.dim(), &[1, 2], &mut rng);
    let drop = (rho.min_eigenvalue() - rho.conjugated_by(&u)?.min_eigenvalue()).max(0.0);
    checks.push(CheckResult::bounded("conjugation-positivity", drop, 1e-11));

    // the solution series at t = 0 must reproduce the initial data
    let init = hierarchy::initial_marginals(&datum, scn.s_max)?;
    let mut reproduction: f64 = 0.0;
    let mut series_warnings = Vec::new();
    for s in 1..=scn.s_max {
        let series = hierarchy::bbgky_series(&sys, &datum, 0.0, s, scn.trunc)?;
        series_warnings.extend(series.diag.warnings);
        reproduction = reproduction.max(series.op.sub(&init.ops[s - 1])?.trace_norm());
    }
    checks.push(CheckResult::bounded(
        "initial-data-reproduction",
        reproduction,
        1e-12,
    ));

    report.body.checks.append(checks);
    push_warnings(report, &series_warnings);
    Ok(())
}

// ───────────────────── hierarchy equivalence ─────────────────────

fn run_equivalence(scn: &Scenario, report: &mut Report) -> Result<(), RunError> {
    let sys = scn.system();
    let corr = scn.correlation_family();
    let datum = scn.initial_datum().expect("validated");

    // solution series at t = 0 against the initial data
    let init = hierarchy::initial_marginals(&datum, scn.s_max)?;
    let mut t0: f64 = 0.0;
    for s in 1..=scn.s_max {
        let series = hierarchy::bbgky_series(&sys, &datum, 0.0, s, scn.trunc)?;
        push_warnings(report, &series.diag.warnings);
        t0 = t0.max(series.op.sub(&init.ops[s - 1])?.trace_norm());
    }
    report
        .body
        .checks
        .push(CheckResult::bounded("t0-consistency", t0, 1e-12));

    // integrate the kinetic equation and track the series
    let traj = hierarchy::gke_integrate(&sys, &datum, scn.t_end, scn.steps, scn.trunc, None)?;
    push_warnings(report, &traj.warnings);
    let trace0 = traj.points[0].trace;
    let drift = traj
        .points
        .iter()
        .map(|p| (p.trace - trace0).norm())
        .fold(0.0, f64::max);
    report
        .body
        .checks
        .push(CheckResult::bounded("trace-conservation", drift, 1e-10));

    let max_defect = traj
        .points
        .iter()
        .map(|p| p.defect_vs_series)
        .fold(0.0, f64::max);
    report.body.checks.push(CheckResult::bounded(
        "series-integration-defect",
        max_defect,
        traj.series_tail_max + scn.defect_budget,
    ));
    report
        .body
        .scalars
        .insert("series_tail_max".into(), traj.series_tail_max);

    let min_eig = traj
        .points
        .iter()
        .map(|p| p.min_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    report.body.checks.push(CheckResult::bounded(
        "positivity-within-tail",
        (-min_eig).max(0.0),
        traj.series_tail_max + 1e-10,
    ));

    let table = Table {
        columns: vec![
            "t".into(),
            "trace".into(),
            "trace_norm".into(),
            "min_eig".into(),
        ],
        rows: traj
            .points
            .iter()
            .map(|p| vec![p.t, p.trace.re, p.trace_norm, p.min_eigenvalue])
            .collect(),
    };
    report.body.tables.insert("trajectory".into(), table);

    // Hermiticity and symmetry of the evolved marginals
    let mut hermiticity: f64 = 0.0;
    let mut asymmetry: f64 = 0.0;
    for s in 1..=scn.s_max.min(3) {
        let series = hierarchy::bbgky_series(&sys, &datum, scn.t_end, s, scn.trunc)?;
        hermiticity = hermiticity.max(series.op.sub(&series.op.dagger())?.trace_norm());
        asymmetry = asymmetry.max(series.op.symmetry_report().max_deviation);
    }
    report
        .body
        .checks
        .push(CheckResult::bounded("hermiticity", hermiticity, 1e-10));
    report
        .body
        .checks
        .push(CheckResult::bounded("permutation-symmetry", asymmetry, 1e-10));

    // equivalence of the two descriptions
    let mut worst_ratio: f64 = 0.0;
    let mut residual_at_end = 0.0;
    for &tt in &[scn.t_end / 2.0, scn.t_end] {
        for s in 2..=scn.s_max.min(3) {
            let eq = hierarchy::equivalence_residual(&sys, &datum, tt, s, scn.trunc)?;
            let bound = eq.combined_tail().max(1e-14);
            worst_ratio = worst_ratio.max(eq.residual / bound);
            if s == 2 && tt == scn.t_end {
                residual_at_end = eq.residual;
                report
                    .body
                    .scalars
                    .insert("equivalence_residual".into(), eq.residual);
                report
                    .body
                    .scalars
                    .insert("equivalence_combined_tail".into(), eq.combined_tail());
            }
        }
    }
    report.body.checks.push(CheckResult::bounded(
        "equivalence-within-tails",
        worst_ratio,
        1.0,
    ));

    if scn.trunc.n_max >= 2 {
        let low = hierarchy::equivalence_residual(
            &sys,
            &datum,
            scn.t_end,
            2,
            SeriesTruncation {
                n_max: scn.trunc.n_max - 1,
            },
        )?;
        report.body.checks.push(CheckResult::flagged(
            "equivalence-order-improvement",
            residual_at_end < low.residual,
            residual_at_end / low.residual.max(1e-300),
            format!(
                "n_max {} → {}: residual {:.3e} → {:.3e}",
                scn.trunc.n_max - 1,
                scn.trunc.n_max,
                low.residual,
                residual_at_end
            ),
        ));
    }

    // first hierarchy equation by centered differences: the defect must
    // shrink like h²
    let h = 1e-2;
    let d1 = hierarchy::hierarchy_defect(&sys, &datum, scn.t_end / 2.0, h, scn.trunc)?;
    let d2 = hierarchy::hierarchy_defect(&sys, &datum, scn.t_end / 2.0, h / 2.0, scn.trunc)?;
    let ratio = d1 / d2.max(1e-300);
    report.body.checks.push(CheckResult::flagged(
        "hierarchy-finite-difference",
        (2.8..=5.5).contains(&ratio),
        ratio,
        format!("defect {d1:.3e} → {d2:.3e} under h → h/2"),
    ));
    Ok(())
}

// ───────────────────── scaling ladders ─────────────────────

fn ladder_config(scn: &Scenario) -> LadderConfig {
    LadderConfig {
        t: scn.t_end,
        trunc: scn.trunc,
        vlasov_steps: scn.steps,
    }
}

fn run_meanfield_ladder(scn: &Scenario, report: &mut Report) -> Result<(), RunError> {
    let corr = scn.correlation_family();
    let family = scn.scaled_family().expect("validated");
    let exact_scaling = family
        .scaled_initial(family.eps_ladder()[0])
        .scale_re(family.eps_ladder()[0])
        .sub(family.f1_limit())?
        .trace_norm();
    report.body.checks.push(CheckResult::bounded(
        "exact-scaling-family",
        exact_scaling,
        1e-15,
    ));

    let t0 = meanfield::horizon(scn.spec.potential(), family.f1_limit()).t0;
    report.body.scalars.insert("horizon_t0".into(), t0);
    if scn.t_end >= t0 {
        report.body.warnings.push(
            hierarchy::ConvergenceWarning {
                kind: hierarchy::WarningKind::VlasovHorizon,
                value: scn.t_end,
                threshold: t0,
            }
            .to_string(),
        );
    }

    let table = meanfield::convergence_study(&scn.spec, &corr, &family, &ladder_config(scn))?;
    report.body.checks.push(CheckResult::flagged(
        "ladder-monotone-decrease",
        table.strictly_decreasing(),
        table.rows.last().map(|r| r.distance).unwrap_or(f64::NAN),
        format!(
            "distances {:?}",
            table.rows.iter().map(|r| r.distance).collect::<Vec<_>>()
        ),
    ));
    for (i, ratio) in table.successive_ratios().iter().enumerate() {
        report
            .body
            .scalars
            .insert(format!("distance_ratio_{i}"), *ratio);
    }
    report.insert_convergence_table("convergence", &table);
    Ok(())
}

fn run_correlation_propagation(scn: &Scenario, report: &mut Report) -> Result<(), RunError> {
    let corr = scn.correlation_family();
    let family = scn.scaled_family().expect("validated");
    let s = scn.s_max.min(2).max(2);
    let cfg = ladder_config(scn);

    let table = meanfield::correlation_propagation_study(&scn.spec, &corr, &family, s, &cfg)?;
    report.body.checks.push(CheckResult::flagged(
        "propagation-monotone-decrease",
        table.strictly_decreasing(),
        table.rows.last().map(|r| r.distance).unwrap_or(f64::NAN),
        format!(
            "distances {:?}",
            table.rows.iter().map(|r| r.distance).collect::<Vec<_>>()
        ),
    ));

    if corr.is_chaos() {
        // control: the limit object must reduce to the plain product
        let base = System::new(scn.spec.with_epsilon(0.0)?)?;
        let limit =
            meanfield::vlasov_integrate(&base, &corr, family.f1_limit(), cfg.t, cfg.vlasov_steps)?;
        let object = meanfield::chaos_limit_object(&base, &corr, cfg.t, s, &limit.last().f1)?;
        let product = hierarchy::product_state(&limit.last().f1, s)?;
        report.body.checks.push(CheckResult::bounded(
            "chaos-control-product-reduction",
            object.sub(&product)?.trace_norm(),
            1e-12,
        ));
    }
    report.insert_convergence_table("convergence", &table);
    Ok(())
}

// ───────────────────── continuum ─────────────────────

fn build_profile(grid: Grid1D, profile: &WaveProfile) -> WaveFunction {
    match profile {
        WaveProfile::PlaneWave { mode } => {
            let k = 2.0 * std::f64::consts::PI * *mode as f64 / grid.len();
            let a = (1.0 / grid.len()).sqrt();
            WaveFunction::from_fn(grid, |x| C64::from_polar(a, k * x))
        }
        WaveProfile::Gaussian { sigma } => {
            let center = grid.len() / 2.0;
            WaveFunction::from_fn(grid, |x| {
                C64::new((-(x - center) * (x - center) / (4.0 * sigma * sigma)).exp(), 0.0)
            })
            .normalized()
        }
    }
}

fn build_kernel(grid: Grid1D, choice: &KernelChoice) -> PairKernel {
    match choice {
        KernelChoice::Delta { strength } => PairKernel::delta_indicator(grid).scaled(*strength),
        KernelChoice::Identity { strength } => PairKernel::identity(grid).scaled(*strength),
        KernelChoice::Projector { sigma, strength } => {
            let center = grid.len() / 2.0;
            let s2 = 2.0 * sigma * sigma;
            PairKernel::projector(grid, |x, y| {
                C64::new(
                    (-((x - center) * (x - center) + (y - center) * (y - center)) / s2).exp(),
                    0.0,
                )
            })
            .scaled(*strength)
        }
    }
}

fn trajectory_table(rows: &[continuum::ContinuumRow]) -> Table {
    Table {
        columns: vec![
            "t".into(),
            "mass".into(),
            "energy".into(),
            "max_psi".into(),
        ],
        rows: rows
            .iter()
            .map(|r| vec![r.t, r.mass, r.energy, r.max_abs])
            .collect(),
    }
}

fn max_step_mass_drift(rows: &[continuum::ContinuumRow]) -> f64 {
    rows.windows(2)
        .map(|w| (w[1].mass - w[0].mass).abs())
        .fold(0.0, f64::max)
}

fn run_continuum(scn: &Scenario, report: &mut Report) -> Result<(), RunError> {
    let cfg = scn.continuum.as_ref().expect("validated");
    let grid = Grid1D::new(cfg.length, cfg.grid_points)?;
    let psi0 = build_profile(grid, &cfg.profile);

    match cfg.run {
        ContinuumRun::NlsPlaneWave => {
            let traj = continuum::nls_solve(grid, &psi0, cfg.dt, cfg.steps, cfg.snapshot_every)?;
            report.body.checks.push(CheckResult::bounded(
                "mass-conservation-per-step",
                max_step_mass_drift(&traj.rows),
                1e-12,
            ));
            let e0 = traj.rows[0].energy;
            let drift = traj
                .rows
                .iter()
                .map(|r| (r.energy - e0).abs())
                .fold(0.0, f64::max);
            report
                .body
                .checks
                .push(CheckResult::bounded("energy-drift", drift, 1e-8));

            if let WaveProfile::PlaneWave { mode } = cfg.profile {
                let t = cfg.dt * cfg.steps as f64;
                let k = 2.0 * std::f64::consts::PI * mode as f64 / grid.len();
                let amp2 = 1.0 / grid.len();
                let omega = 0.5 * k * k + amp2;
                let mut err: f64 = 0.0;
                for j in 0..grid.size() {
                    let exact = C64::from_polar(amp2.sqrt(), k * grid.point(j) - omega * t);
                    err = err.max((traj.final_state.psi[j] - exact).norm());
                }
                report
                    .body
                    .checks
                    .push(CheckResult::bounded("plane-wave-phase-error", err, 1e-8));
            }
            report
                .body
                .tables
                .insert("trajectory".into(), trajectory_table(&traj.rows));
        }
        ContinuumRun::GpDeltaReduction => {
            let kernel = CouplingKernel::new(build_kernel(grid, &cfg.kernel));
            let reduction_err = |dt: f64, steps: usize| -> Result<f64, RunError> {
                let nls = continuum::nls_solve(grid, &psi0, dt, steps, None)?;
                let gp = continuum::gp_solve(
                    grid,
                    &psi0,
                    dt,
                    steps,
                    &kernel,
                    KernelSchedule::Frozen,
                    None,
                )?;
                Ok(nls
                    .final_state
                    .psi
                    .iter()
                    .zip(&gp.final_state.psi)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max))
            };
            let coarse = reduction_err(cfg.dt, cfg.steps)?;
            let fine = reduction_err(cfg.dt / 2.0, cfg.steps * 2)?;
            let ratio = coarse / fine.max(1e-300);
            report.body.checks.push(CheckResult::flagged(
                "delta-reduction-second-order",
                (3.2..=4.8).contains(&ratio),
                ratio,
                format!("deviation {coarse:.3e} → {fine:.3e} under dt → dt/2"),
            ));
            report
                .body
                .scalars
                .insert("delta_reduction_error".into(), coarse);

            let traj = continuum::nls_solve(grid, &psi0, cfg.dt, cfg.steps, cfg.snapshot_every)?;
            report.body.checks.push(CheckResult::bounded(
                "mass-conservation-per-step",
                max_step_mass_drift(&traj.rows),
                1e-12,
            ));
            report
                .body
                .tables
                .insert("trajectory".into(), trajectory_table(&traj.rows));
        }
        ContinuumRun::Gp => {
            let kernel = CouplingKernel::new(build_kernel(grid, &cfg.kernel));
            let traj = continuum::gp_solve(
                grid,
                &psi0,
                cfg.dt,
                cfg.steps,
                &kernel,
                KernelSchedule::FreeEvolved,
                cfg.snapshot_every,
            )?;
            report.body.checks.push(CheckResult::flagged(
                "finite-amplitudes",
                traj.final_state.is_finite(),
                traj.final_state.max_abs(),
                String::new(),
            ));
            report
                .body
                .scalars
                .insert("final_mass".into(), traj.final_state.mass());
            report
                .body
                .tables
                .insert("trajectory".into(), trajectory_table(&traj.rows));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures;

    fn run_fixture(file: crate::scenario::ScenarioFile) -> Report {
        let scn = Scenario::from_file(file).unwrap();
        run_scenario(&scn).unwrap()
    }

    #[test]
    fn identity_suite_passes_on_standard_data() {
        let report = run_fixture(fixtures::standard_large());
        for check in &report.body.checks {
            assert!(check.passed, "{}", check.line());
        }
    }

    #[test]
    fn equivalence_run_passes_on_chaos() {
        let report = run_fixture(fixtures::chaos());
        for check in &report.body.checks {
            assert!(check.passed, "{}", check.line());
        }
        assert!(report.body.tables.contains_key("trajectory"));
    }

    #[test]
    fn report_bodies_are_deterministic() {
        let a = run_fixture(fixtures::standard_large());
        let b = run_fixture(fixtures::standard_large());
        assert_eq!(a.body_json(), b.body_json());
    }

    #[test]
    fn continuum_nls_fixture_passes() {
        let report = run_fixture(fixtures::continuum_nls());
        for check in &report.body.checks {
            assert!(check.passed, "{}", check.line());
        }
        let table = &report.body.tables["trajectory"];
        assert_eq!(table.columns, vec!["t", "mass", "energy", "max_psi"]);
    }
}
