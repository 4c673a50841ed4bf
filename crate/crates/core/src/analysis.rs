//! Guaranteed-cost analysis of an uncertain closed loop.
//!
//! Small gain (norm-bounded Δ): with `s = 1/τ²` the certificate
//! `[[F^†P + PF + (s/γ²)E^†E + R, 2PJE^†], [2EJP, -sI]] ⪯ -εI`, `P ⪰ εI`
//! is jointly affine in `(P, s)` and the bound `Tr(PD) + δs` is minimised.
//!
//! Popov (positive-bounded Δ): for fixed `θ ≥ 0`,
//! `[[PF + F^†P + R, -2iPJE^† + E^† + θF^†E^†], [2iEJP + E + θEF, -γI]] ⪯ -εI`
//! with bound `Tr(PD) + popov_offset(θ)`, scanned over a θ grid.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, I};
use crate::lmi::{self, AffineConstraint, LmiProgram, SdpSolution, SolveStatus, DEFAULT_MARGIN};
use crate::parallel::{self, Execution};
use crate::qmodel::{j_matrix, popov_offset, DoubledMatrix, HermitianDoubledBasis, UncertainSystem, UncertaintyClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SmallGain,
    Popov,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SmallGain => "smallgain",
            Method::Popov => "popov",
        }
    }

    pub fn uncertainty_class(self) -> UncertaintyClass {
        match self {
            Method::SmallGain => UncertaintyClass::NormBound,
            Method::Popov => UncertaintyClass::PositiveBound,
        }
    }
}

/// Default θ grid `0, 0.05, …, 1`.
pub fn default_theta_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub margin: f64,
    pub execution: Execution,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutcome {
    pub method: Method,
    pub feasible: bool,
    pub p: Option<DoubledMatrix>,
    /// `s = 1/τ²` for small gain, θ for Popov.
    pub s_or_theta: f64,
    /// `f64::INFINITY` when infeasible.
    pub bound: f64,
    pub solver: SdpSolution,
}

pub(crate) fn check_cost_matrix(r: &CMat, n: usize) -> Result<()> {
    if r.shape() != (2 * n, 2 * n) {
        return Err(Error::DimensionMismatch(format!(
            "R is {:?}, expected {}x{}",
            r.shape(),
            2 * n,
            2 * n
        )));
    }
    let dev = linalg::hermitian_deviation(r);
    if dev > 1e-10 {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

fn require_class(sys: &UncertainSystem, method: Method) -> Result<()> {
    if sys.class() != method.uncertainty_class() {
        return Err(Error::Unsupported(format!(
            "{} analysis needs {:?} uncertainty, system has {:?}",
            method.as_str(),
            method.uncertainty_class(),
            sys.class()
        )));
    }
    Ok(())
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be finite and >= 0, got {theta}")));
    }
    Ok(())
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty theta grid".into()));
    }
    grid.iter().try_for_each(|&t| check_theta(t))
}

fn compose_p(basis: &HermitianDoubledBasis, x: &[f64]) -> (DoubledMatrix, CMat) {
    let p = basis.compose(&x[..basis.len()]);
    let full = p.assemble();
    (p, full)
}

/// Variables: the `n² + n(n+1)` parameters of `P`, then `s`.
pub fn assemble_smallgain_analysis(sys: &UncertainSystem, r: &CMat, margin: f64) -> Result<LmiProgram> {
    require_class(sys, Method::SmallGain)?;
    let n = sys.modes();
    check_cost_matrix(r, n)?;
    let f = sys.require_hurwitz()?;
    let d = sys.noise();
    let e = sys.e().assemble();
    let j = j_matrix(n);
    let mp = 2 * sys.perturbation_channels();
    let basis = HermitianDoubledBasis::new(n);
    let kp = basis.len();
    let k = kp + 1;
    let gamma2 = sys.gamma() * sys.gamma();
    let ete = e.adjoint() * &e;
    let je = &j * e.adjoint();

    let mut objective: Vec<f64> = basis.elements().iter().map(|b| linalg::trace_re(&(b * &d))).collect();
    objective.push(sys.delta());
    let mut prog = LmiProgram::new(k).with_objective(objective)?.with_margin(margin)?;

    let main = AffineConstraint::from_affine(k, true, |x| {
        let (_, p) = compose_p(&basis, x);
        let s = x[kp];
        let top = f.adjoint() * &p + &p * &f + ete.scale(s / gamma2) + r;
        let off = (&p * &je).scale(2.0);
        linalg::hermitian_block(
            &[2 * n, mp],
            vec![(0, 0, top), (1, 0, off.adjoint()), (1, 1, linalg::eye(mp).scale(-s))],
        )
    })?;
    prog.add_constraint(main)?;
    prog.add_constraint(AffineConstraint::from_affine(k, true, |x| {
        compose_p(&basis, x).1.map(|z| -z)
    })?)?;
    prog.set_bounds(kp, margin, lmi::DEFAULT_VAR_BOUND)?;
    Ok(prog)
}

pub fn analyze_smallgain(sys: &UncertainSystem, r: &CMat) -> Result<AnalysisOutcome> {
    analyze_smallgain_with(sys, r, &Settings::default())
}

pub fn analyze_smallgain_with(sys: &UncertainSystem, r: &CMat, settings: &Settings) -> Result<AnalysisOutcome> {
    let prog = assemble_smallgain_analysis(sys, r, settings.margin)?;
    let sol = lmi::solve(&prog)?;
    let kp = prog.num_vars() - 1;
    if !sol.status.is_success() {
        return Ok(infeasible(Method::SmallGain, f64::NAN, sol));
    }
    let basis = HermitianDoubledBasis::new(sys.modes());
    let (p, pf) = compose_p(&basis, &sol.x);
    let s = sol.x[kp];
    let bound = linalg::trace_re(&(pf * sys.noise())) + sys.delta() * s;
    Ok(AnalysisOutcome {
        method: Method::SmallGain,
        feasible: true,
        p: Some(p),
        s_or_theta: s,
        bound,
        solver: sol,
    })
}

fn infeasible(method: Method, s_or_theta: f64, solver: SdpSolution) -> AnalysisOutcome {
    AnalysisOutcome {
        method,
        feasible: false,
        p: None,
        s_or_theta,
        bound: f64::INFINITY,
        solver,
    }
}

/// Variables: the parameters of `P` only.
pub fn assemble_popov_analysis(sys: &UncertainSystem, r: &CMat, theta: f64, margin: f64) -> Result<LmiProgram> {
    require_class(sys, Method::Popov)?;
    check_theta(theta)?;
    let n = sys.modes();
    check_cost_matrix(r, n)?;
    let f = sys.require_hurwitz()?;
    let d = sys.noise();
    let e = sys.e().assemble();
    let j = j_matrix(n);
    let mp = 2 * sys.perturbation_channels();
    let basis = HermitianDoubledBasis::new(n);
    let k = basis.len();
    let ej = &e * &j;
    let lower_const = &e + (&e * &f).scale(theta);

    let objective = basis.elements().iter().map(|b| linalg::trace_re(&(b * &d))).collect();
    let mut prog = LmiProgram::new(k).with_objective(objective)?.with_margin(margin)?;
    let main = AffineConstraint::from_affine(k, true, |x| {
        let (_, p) = compose_p(&basis, x);
        let top = &p * &f + f.adjoint() * &p + r;
        let lower = (&ej * &p).map(|z| z * I * 2.0) + &lower_const;
        linalg::hermitian_block(
            &[2 * n, mp],
            vec![(0, 0, top), (1, 0, lower), (1, 1, linalg::eye(mp).scale(-sys.gamma()))],
        )
    })?;
    prog.add_constraint(main)?;
    prog.add_constraint(AffineConstraint::from_affine(k, true, |x| {
        compose_p(&basis, x).1.map(|z| -z)
    })?)?;
    Ok(prog)
}

/// Popov analysis at a single θ.
pub fn popov_analysis_at(sys: &UncertainSystem, r: &CMat, theta: f64, margin: f64) -> Result<AnalysisOutcome> {
    let prog = assemble_popov_analysis(sys, r, theta, margin)?;
    let sol = lmi::solve(&prog)?;
    if !sol.status.is_success() {
        return Ok(infeasible(Method::Popov, theta, sol));
    }
    let basis = HermitianDoubledBasis::new(sys.modes());
    let (p, pf) = compose_p(&basis, &sol.x);
    let bound = linalg::trace_re(&(pf * sys.noise())) + popov_offset(sys, theta);
    Ok(AnalysisOutcome {
        method: Method::Popov,
        feasible: true,
        p: Some(p),
        s_or_theta: theta,
        bound,
        solver: sol,
    })
}

pub(crate) fn failed_solution(num_vars: usize) -> SdpSolution {
    SdpSolution {
        status: SolveStatus::NumericalFailure,
        x: vec![f64::NAN; num_vars],
        objective_value: f64::NAN,
        max_constraint_eig: f64::NAN,
        iterations: 0,
    }
}

/// One outcome per grid point, in grid order. Solver failures at a point
/// are reported as infeasible points with status `NumericalFailure`.
pub fn popov_analysis_curve(
    sys: &UncertainSystem,
    r: &CMat,
    grid: &[f64],
    settings: &Settings,
) -> Result<Vec<AnalysisOutcome>> {
    check_grid(grid)?;
    // surface structural errors once rather than per point
    assemble_popov_analysis(sys, r, grid[0], settings.margin)?;
    let k = HermitianDoubledBasis::new(sys.modes()).len();
    let outcomes = parallel::map_indexed(settings.execution, grid.len(), |i| {
        popov_analysis_at(sys, r, grid[i], settings.margin)
    });
    outcomes
        .into_iter()
        .zip(grid)
        .map(|(o, &theta)| match o {
            Ok(o) => Ok(o),
            Err(Error::NumericalFailure(_)) => Ok(infeasible(Method::Popov, theta, failed_solution(k))),
            Err(e) => Err(e),
        })
        .collect()
}

/// Smallest bound over the grid; ties go to the smaller θ.
pub(crate) fn select_best<T, B, Th>(items: Vec<T>, bound: B, theta: Th) -> Option<T>
where
    B: Fn(&T) -> f64,
    Th: Fn(&T) -> f64,
{
    items.into_iter().fold(None, |best, item| match best {
        None => Some(item),
        Some(b) => {
            let (bb, ib) = (bound(&b), bound(&item));
            if ib < bb || (ib == bb && theta(&item) < theta(&b)) {
                Some(item)
            } else {
                Some(b)
            }
        }
    })
}

pub fn analyze_popov(sys: &UncertainSystem, r: &CMat, grid: &[f64]) -> Result<AnalysisOutcome> {
    analyze_popov_with(sys, r, grid, &Settings::default())
}

pub fn analyze_popov_with(
    sys: &UncertainSystem,
    r: &CMat,
    grid: &[f64],
    settings: &Settings,
) -> Result<AnalysisOutcome> {
    let curve = popov_analysis_curve(sys, r, grid, settings)?;
    if curve.iter().all(|o| o.solver.status == SolveStatus::NumericalFailure) {
        return Err(Error::NumericalFailure("solver failed at every theta".into()));
    }
    let feasible: Vec<AnalysisOutcome> = curve.iter().filter(|o| o.feasible).cloned().collect();
    if feasible.is_empty() {
        let first = curve.into_iter().next().expect("grid is non-empty");
        return Ok(first);
    }
    Ok(select_best(feasible, |o| o.bound, |o| o.s_or_theta).expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{lyapunov_cost, ClosedLoop};
    use crate::qmodel::{dpa_fixture, DoubledKind};

    fn eye2() -> CMat {
        linalg::eye(2)
    }

    #[test]
    fn smallgain_program_shape() {
        let fx = dpa_fixture(4.5).unwrap();
        let prog = assemble_smallgain_analysis(&fx.system, &eye2(), DEFAULT_MARGIN).unwrap();
        assert_eq!(prog.num_vars(), 4);
        let dims: Vec<usize> = prog.constraints().iter().map(|c| c.dim()).collect();
        assert_eq!(dims, vec![4, 2]);
        // Tr(P D) with D = diag(4.5, 0): only the X1 diagonal parameter is weighted
        let expected = [4.5, 0.0, 0.0, 0.0];
        assert!(prog.objective().iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn lossless_cavity_is_not_hurwitz() {
        let fx = dpa_fixture(0.0).unwrap();
        assert!(matches!(
            assemble_smallgain_analysis(&fx.system, &eye2(), DEFAULT_MARGIN),
            Err(Error::NotHurwitz(_))
        ));
    }

    #[test]
    fn zero_e_decouples() {
        let fx = dpa_fixture(4.5).unwrap();
        let sys = fx.system.with_e(DoubledMatrix::zeros(1, DoubledKind::Hermitian)).unwrap();
        let prog = assemble_smallgain_analysis(&sys, &eye2(), DEFAULT_MARGIN).unwrap();
        let c = &prog.constraints()[0];
        let x = [0.3, 0.1, -0.2, 0.7];
        let g = c.evaluate(&x);
        assert_eq!(linalg::max_abs(&g.view((0, 2), (2, 2)).into_owned()), 0.0);
        assert!((g[(2, 2)].re + 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_e_bound_is_nominal_cost() {
        let fx = dpa_fixture(6.0).unwrap();
        let sys = fx.system.with_e(DoubledMatrix::zeros(1, DoubledKind::Hermitian)).unwrap();
        let out = analyze_smallgain(&sys, &eye2()).unwrap();
        assert!(out.feasible);
        let exact = lyapunov_cost(&ClosedLoop::new(sys.drift(), sys.noise(), eye2()).unwrap()).unwrap();
        assert!(((out.bound - exact) / exact).abs() < 1e-4, "{} vs {exact}", out.bound);
    }

    #[test]
    fn wrong_class_is_rejected() {
        let fx = dpa_fixture(4.5).unwrap();
        assert!(matches!(
            assemble_popov_analysis(&fx.system, &eye2(), 0.1, DEFAULT_MARGIN),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn popov_theta_zero_off_diagonal() {
        let fx = dpa_fixture(3.8).unwrap();
        let sys = fx.system_for(UncertaintyClass::PositiveBound);
        let prog = assemble_popov_analysis(&sys, &eye2(), 0.0, DEFAULT_MARGIN).unwrap();
        assert_eq!(prog.num_vars(), 3);
        assert_eq!(prog.constraints()[0].dim(), 4);
        // at P = 0 the lower-left block is E
        let g = prog.constraints()[0].evaluate(&[0.0, 0.0, 0.0]);
        assert!(linalg::max_abs_diff(&g.view((2, 0), (2, 2)).into_owned(), &eye2()) < 1e-15);
    }

    #[test]
    fn popov_grid_and_singleton() {
        let fx = dpa_fixture(4.5).unwrap();
        let sys = fx.system_for(UncertaintyClass::PositiveBound);
        let coarse = [0.0, 0.5, 1.0];
        let out = analyze_popov(&sys, &eye2(), &coarse).unwrap();
        assert!(out.feasible && out.bound.is_finite());
        let finer = [0.0, 0.25, 0.5, 0.75, 1.0];
        let out2 = analyze_popov(&sys, &eye2(), &finer).unwrap();
        assert!(out2.bound <= out.bound);
        let zero = analyze_popov(&sys, &eye2(), &[0.0]).unwrap();
        let p = zero.p.unwrap().assemble();
        assert!((zero.bound - linalg::trace_re(&(p * sys.noise()))).abs() < 1e-12);
        assert!(analyze_popov(&sys, &eye2(), &[]).is_err());
        assert!(analyze_popov(&sys, &eye2(), &[-0.1]).is_err());
    }

    #[test]
    fn tie_break_prefers_smaller_theta() {
        let items = vec![(0.2, 1.0), (0.1, 1.0), (0.3, 2.0)];
        let best = select_best(items, |t| t.1, |t| t.0).unwrap();
        assert_eq!(best, (0.1, 1.0));
    }
}
