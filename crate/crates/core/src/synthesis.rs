//! Coherent guaranteed-cost controller synthesis with `Q = qI`, `Y = Kq`.
//!
//! Small gain, variables `(q, Y, t = τ², ξ)`:
//! `[[A + 4t JE^†EJ, Y, qR½, qE^†], [Y, -I/ρ, 0, 0], [qR½, 0, -I, 0], [qE, 0, 0, -γ²t I]] ⪯ -εI`
//! with `A = qF^† + Fq + iYJ - iJY`, and the bound `ξ ≥ Tr(D)/q + δ/t`
//! written as `[[-ξ, √δ, √Tr D], [√δ, -t, 0], [√Tr D, 0, -q]] ⪯ 0`.
//!
//! Popov, variables `(q, Y, ξ')` for fixed θ:
//! `[[A, B^†, Y, qR½], [B, -γI, 0, 0], [Y, 0, -I/ρ, 0], [qR½, 0, 0, -I]] ⪯ -εI`
//! with `A = Fq + qF^† - iJY + iYJ`, `B = 2iEJ + Eq + θEFq - iθEJY`, and
//! `[[-ξ', √Tr D], [√Tr D, -q]] ⪯ 0`; the bound is `ξ' + popov_offset(θ)`.

use nalgebra::Complex;

use crate::analysis::{check_grid, check_theta, failed_solution, select_best, Method, Settings};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, I};
use crate::lmi::{self, AffineConstraint, LmiProgram, SdpSolution, SolveStatus, DEFAULT_VAR_BOUND};
use crate::parallel;
use crate::qmodel::{
    j_matrix, popov_offset, CostSpec, DoubledMatrix, HermitianDoubledBasis, UncertainSystem,
};

/// Closed-loop drift `F - iJK` must have spectral abscissa at most this.
pub const CLOSED_LOOP_MARGIN: f64 = -1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    pub method: Method,
    pub feasible: bool,
    pub q: Option<f64>,
    pub y: Option<DoubledMatrix>,
    /// `τ²` (small gain only).
    pub t: Option<f64>,
    /// θ (Popov only).
    pub theta: Option<f64>,
    pub k: Option<DoubledMatrix>,
    /// `f64::INFINITY` when infeasible.
    pub bound: f64,
    pub solver: SdpSolution,
}

/// How `Y` enters the program.
#[derive(Debug, Clone)]
enum Gain<'a> {
    /// Free doubled-Hermitian parameters.
    Free,
    /// `Y = q K` for a given controller.
    Fixed(&'a DoubledMatrix),
}

fn require_class(sys: &UncertainSystem, method: Method) -> Result<()> {
    if sys.class() != method.uncertainty_class() {
        return Err(Error::Unsupported(format!(
            "{} synthesis needs {:?} uncertainty, system has {:?}",
            method.as_str(),
            method.uncertainty_class(),
            sys.class()
        )));
    }
    Ok(())
}

fn check_cost(sys: &UncertainSystem, cost: &CostSpec) -> Result<CMat> {
    let n = sys.modes();
    if cost.r().shape() != (2 * n, 2 * n) {
        return Err(Error::DimensionMismatch(format!(
            "R is {:?}, expected {}x{}",
            cost.r().shape(),
            2 * n,
            2 * n
        )));
    }
    let lam = linalg::lambda_min(cost.r());
    if lam <= 0.0 {
        return Err(Error::NonPositiveR(lam));
    }
    Ok(linalg::hermitian_sqrt(cost.r()))
}

fn check_gain(sys: &UncertainSystem, gain: &Gain) -> Result<()> {
    if let Gain::Fixed(k) = gain {
        let n = sys.modes();
        if k.shape() != (2 * n, 2 * n) {
            return Err(Error::DimensionMismatch(format!("K is {:?}, expected {}x{}", k.shape(), 2 * n, 2 * n)));
        }
        k.as_hermitian()?;
    }
    Ok(())
}

/// Variable layout shared by both programs: `q`, then the `Y` parameters
/// (absent when `K` is fixed), then the method's own scalars.
struct Layout<'a> {
    basis: HermitianDoubledBasis,
    gain: Gain<'a>,
}

impl Layout<'_> {
    fn gain_vars(&self) -> usize {
        match self.gain {
            Gain::Free => self.basis.len(),
            Gain::Fixed(_) => 0,
        }
    }

    fn y(&self, x: &[f64]) -> CMat {
        match self.gain {
            Gain::Free => self.basis.compose(&x[1..1 + self.basis.len()]).assemble(),
            Gain::Fixed(k) => k.assemble().scale(x[0]),
        }
    }
}

fn one(z: f64) -> CMat {
    CMat::from_element(1, 1, Complex::new(z, 0.0))
}

fn positive_bound(prog: &mut LmiProgram, var: usize, margin: f64) -> Result<()> {
    prog.set_bounds(var, margin, DEFAULT_VAR_BOUND)
}

fn assemble_smallgain<'a>(
    sys: &UncertainSystem,
    cost: &CostSpec,
    gain: Gain<'a>,
    margin: f64,
) -> Result<(LmiProgram, Layout<'a>)> {
    require_class(sys, Method::SmallGain)?;
    check_gain(sys, &gain)?;
    let r_half = check_cost(sys, cost)?;
    let n = sys.modes();
    let f = sys.drift();
    let j = j_matrix(n);
    let e = sys.e().assemble();
    let mp = 2 * sys.perturbation_channels();
    let layout = Layout {
        basis: HermitianDoubledBasis::new(n),
        gain,
    };
    let ky = layout.gain_vars();
    let (it, ixi) = (1 + ky, 2 + ky);
    let k = 3 + ky;
    let jeej = &j * e.adjoint() * &e * &j;
    let gamma2 = sys.gamma() * sys.gamma();
    let rho = cost.rho();

    let mut objective = vec![0.0; k];
    objective[ixi] = 1.0;
    let mut prog = LmiProgram::new(k).with_objective(objective)?.with_margin(margin)?;

    let main = AffineConstraint::from_affine(k, true, |x| {
        let (q, t) = (x[0], x[it]);
        let y = layout.y(x);
        let a = f.adjoint().scale(q) + f.scale(q) + (&y * &j - &j * &y).map(|z| z * I);
        linalg::hermitian_block(
            &[2 * n, 2 * n, 2 * n, mp],
            vec![
                (0, 0, a + jeej.scale(4.0 * t)),
                (1, 0, y),
                (1, 1, linalg::eye(2 * n).scale(-1.0 / rho)),
                (2, 0, r_half.scale(q)),
                (2, 2, linalg::eye(2 * n).scale(-1.0)),
                (3, 0, e.scale(q)),
                (3, 3, linalg::eye(mp).scale(-gamma2 * t)),
            ],
        )
    })?;
    prog.add_constraint(main)?;

    let sqrt_delta = sys.delta().sqrt();
    let sqrt_trd = linalg::trace_re(&sys.noise()).max(0.0).sqrt();
    let obj = AffineConstraint::from_affine(k, false, |x| {
        linalg::hermitian_block(
            &[1, 1, 1],
            vec![
                (0, 0, one(-x[ixi])),
                (1, 0, one(sqrt_delta)),
                (1, 1, one(-x[it])),
                (2, 0, one(sqrt_trd)),
                (2, 1, one(0.0)),
                (2, 2, one(-x[0])),
            ],
        )
    })?;
    prog.add_constraint(obj)?;
    positive_bound(&mut prog, 0, margin)?;
    positive_bound(&mut prog, it, margin)?;
    Ok((prog, layout))
}

/// Variables `(q, Y parameters, t, ξ)`.
pub fn assemble_smallgain_synthesis(sys: &UncertainSystem, cost: &CostSpec, margin: f64) -> Result<LmiProgram> {
    assemble_smallgain(sys, cost, Gain::Free, margin).map(|(p, _)| p)
}

/// Variables `(q, t, ξ)` with `Y = qK` for the given `K`.
pub fn assemble_smallgain_fixed(
    sys: &UncertainSystem,
    cost: &CostSpec,
    k: &DoubledMatrix,
    margin: f64,
) -> Result<LmiProgram> {
    assemble_smallgain(sys, cost, Gain::Fixed(k), margin).map(|(p, _)| p)
}

fn assemble_popov<'a>(
    sys: &UncertainSystem,
    cost: &CostSpec,
    theta: f64,
    gain: Gain<'a>,
    margin: f64,
) -> Result<(LmiProgram, Layout<'a>)> {
    require_class(sys, Method::Popov)?;
    check_theta(theta)?;
    check_gain(sys, &gain)?;
    let r_half = check_cost(sys, cost)?;
    let n = sys.modes();
    let f = sys.drift();
    let j = j_matrix(n);
    let e = sys.e().assemble();
    let mp = 2 * sys.perturbation_channels();
    let layout = Layout {
        basis: HermitianDoubledBasis::new(n),
        gain,
    };
    let ky = layout.gain_vars();
    let ixi = 1 + ky;
    let k = 2 + ky;
    let ej = &e * &j;
    let b_const = ej.map(|z| z * I * 2.0);
    let b_q = &e + (&e * &f).scale(theta);
    let rho = cost.rho();

    let mut objective = vec![0.0; k];
    objective[ixi] = 1.0;
    let mut prog = LmiProgram::new(k).with_objective(objective)?.with_margin(margin)?;

    let main = AffineConstraint::from_affine(k, true, |x| {
        let q = x[0];
        let y = layout.y(x);
        let a = f.scale(q) + f.adjoint().scale(q) + (&y * &j - &j * &y).map(|z| z * I);
        let b = &b_const + b_q.scale(q) - (&ej * &y).map(|z| z * I * theta);
        linalg::hermitian_block(
            &[2 * n, mp, 2 * n, 2 * n],
            vec![
                (0, 0, a),
                (1, 0, b),
                (1, 1, linalg::eye(mp).scale(-sys.gamma())),
                (2, 0, y),
                (2, 2, linalg::eye(2 * n).scale(-1.0 / rho)),
                (3, 0, r_half.scale(q)),
                (3, 3, linalg::eye(2 * n).scale(-1.0)),
            ],
        )
    })?;
    prog.add_constraint(main)?;

    let sqrt_trd = linalg::trace_re(&sys.noise()).max(0.0).sqrt();
    let obj = AffineConstraint::from_affine(k, false, |x| {
        linalg::hermitian_block(
            &[1, 1],
            vec![(0, 0, one(-x[ixi])), (1, 0, one(sqrt_trd)), (1, 1, one(-x[0]))],
        )
    })?;
    prog.add_constraint(obj)?;
    positive_bound(&mut prog, 0, margin)?;
    Ok((prog, layout))
}

/// Variables `(q, Y parameters, ξ')`.
pub fn assemble_popov_synthesis(sys: &UncertainSystem, cost: &CostSpec, theta: f64, margin: f64) -> Result<LmiProgram> {
    assemble_popov(sys, cost, theta, Gain::Free, margin).map(|(p, _)| p)
}

/// Variables `(q, ξ')` with `Y = qK` for the given `K`.
pub fn assemble_popov_fixed(
    sys: &UncertainSystem,
    cost: &CostSpec,
    theta: f64,
    k: &DoubledMatrix,
    margin: f64,
) -> Result<LmiProgram> {
    assemble_popov(sys, cost, theta, Gain::Fixed(k), margin).map(|(p, _)| p)
}

fn infeasible(method: Method, theta: Option<f64>, solver: SdpSolution) -> SynthesisOutcome {
    SynthesisOutcome {
        method,
        feasible: false,
        q: None,
        y: None,
        t: None,
        theta,
        k: None,
        bound: f64::INFINITY,
        solver,
    }
}

/// `F - iJK`.
pub fn closed_loop_nominal(sys: &UncertainSystem, k: &DoubledMatrix) -> CMat {
    let j = j_matrix(sys.modes());
    sys.drift() - (j * k.assemble()).map(|z| z * I)
}

fn extract(layout: &Layout, x: &[f64]) -> (f64, DoubledMatrix, DoubledMatrix) {
    let q = x[0];
    match layout.gain {
        Gain::Free => {
            let params = &x[1..1 + layout.basis.len()];
            let y = layout.basis.compose(params);
            let k = layout.basis.compose(&params.iter().map(|v| v / q).collect::<Vec<_>>());
            (q, y, k)
        }
        Gain::Fixed(k) => (q, k.scale(q), k.clone()),
    }
}

fn finish(
    sys: &UncertainSystem,
    method: Method,
    layout: &Layout,
    sol: SdpSolution,
    t: Option<f64>,
    theta: Option<f64>,
    bound: f64,
) -> Result<SynthesisOutcome> {
    let (q, y, k) = extract(layout, &sol.x);
    let abscissa = linalg::spectral_abscissa(&closed_loop_nominal(sys, &k));
    if abscissa > CLOSED_LOOP_MARGIN {
        return Err(Error::NotHurwitz(abscissa));
    }
    Ok(SynthesisOutcome {
        method,
        feasible: true,
        q: Some(q),
        y: Some(y),
        t,
        theta,
        k: Some(k),
        bound,
        solver: sol,
    })
}

fn run_smallgain(sys: &UncertainSystem, cost: &CostSpec, gain: Gain, margin: f64) -> Result<SynthesisOutcome> {
    let (prog, layout) = assemble_smallgain(sys, cost, gain, margin)?;
    let sol = lmi::solve(&prog)?;
    if !sol.status.is_success() {
        return Ok(infeasible(Method::SmallGain, None, sol));
    }
    let k = prog.num_vars();
    let (t, xi) = (sol.x[k - 2], sol.x[k - 1]);
    finish(sys, Method::SmallGain, &layout, sol, Some(t), None, xi)
}

pub fn synth_smallgain(sys: &UncertainSystem, cost: &CostSpec) -> Result<SynthesisOutcome> {
    synth_smallgain_with(sys, cost, &Settings::default())
}

pub fn synth_smallgain_with(sys: &UncertainSystem, cost: &CostSpec, settings: &Settings) -> Result<SynthesisOutcome> {
    run_smallgain(sys, cost, Gain::Free, settings.margin)
}

/// Feasibility and bound of the small-gain program for a given controller.
pub fn check_smallgain_controller(
    sys: &UncertainSystem,
    cost: &CostSpec,
    k: &DoubledMatrix,
    margin: f64,
) -> Result<SynthesisOutcome> {
    run_smallgain(sys, cost, Gain::Fixed(k), margin)
}

fn run_popov(sys: &UncertainSystem, cost: &CostSpec, theta: f64, gain: Gain, margin: f64) -> Result<SynthesisOutcome> {
    let (prog, layout) = assemble_popov(sys, cost, theta, gain, margin)?;
    let sol = lmi::solve(&prog)?;
    if !sol.status.is_success() {
        return Ok(infeasible(Method::Popov, Some(theta), sol));
    }
    let xi = sol.x[prog.num_vars() - 1];
    let bound = xi + popov_offset(sys, theta);
    finish(sys, Method::Popov, &layout, sol, None, Some(theta), bound)
}

/// Popov synthesis at a single θ.
pub fn synth_popov_at(sys: &UncertainSystem, cost: &CostSpec, theta: f64, margin: f64) -> Result<SynthesisOutcome> {
    run_popov(sys, cost, theta, Gain::Free, margin)
}

pub fn check_popov_controller(
    sys: &UncertainSystem,
    cost: &CostSpec,
    theta: f64,
    k: &DoubledMatrix,
    margin: f64,
) -> Result<SynthesisOutcome> {
    run_popov(sys, cost, theta, Gain::Fixed(k), margin)
}

/// One outcome per grid point, in grid order; solver failures become
/// infeasible points with status `NumericalFailure`.
pub fn popov_synthesis_curve(
    sys: &UncertainSystem,
    cost: &CostSpec,
    grid: &[f64],
    settings: &Settings,
) -> Result<Vec<SynthesisOutcome>> {
    check_grid(grid)?;
    let probe = assemble_popov_synthesis(sys, cost, grid[0], settings.margin)?;
    let k = probe.num_vars();
    let outcomes = parallel::map_indexed(settings.execution, grid.len(), |i| {
        synth_popov_at(sys, cost, grid[i], settings.margin)
    });
    outcomes
        .into_iter()
        .zip(grid)
        .map(|(o, &theta)| match o {
            Ok(o) => Ok(o),
            Err(Error::NumericalFailure(_)) | Err(Error::NotHurwitz(_)) => {
                Ok(infeasible(Method::Popov, Some(theta), failed_solution(k)))
            }
            Err(e) => Err(e),
        })
        .collect()
}

pub fn synth_popov(sys: &UncertainSystem, cost: &CostSpec, grid: &[f64]) -> Result<SynthesisOutcome> {
    synth_popov_with(sys, cost, grid, &Settings::default())
}

pub fn synth_popov_with(
    sys: &UncertainSystem,
    cost: &CostSpec,
    grid: &[f64],
    settings: &Settings,
) -> Result<SynthesisOutcome> {
    let curve = popov_synthesis_curve(sys, cost, grid, settings)?;
    if curve.iter().all(|o| o.solver.status == SolveStatus::NumericalFailure) {
        return Err(Error::NumericalFailure("solver failed at every theta".into()));
    }
    let feasible: Vec<SynthesisOutcome> = curve.iter().filter(|o| o.feasible).cloned().collect();
    if feasible.is_empty() {
        return Ok(curve.into_iter().next().expect("grid is non-empty"));
    }
    Ok(select_best(feasible, |o| o.bound, |o| o.theta.unwrap_or(0.0)).expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::DEFAULT_MARGIN;
    use crate::qmodel::{dpa_fixture, DoubledKind, UncertaintyClass};

    fn defaults() -> CostSpec {
        CostSpec::identity(1, 0.1).unwrap()
    }

    #[test]
    fn smallgain_program_shape() {
        let fx = dpa_fixture(4.5).unwrap();
        let prog = assemble_smallgain_synthesis(&fx.system, &defaults(), DEFAULT_MARGIN).unwrap();
        assert_eq!(prog.num_vars(), 6);
        let dims: Vec<usize> = prog.constraints().iter().map(|c| c.dim()).collect();
        assert_eq!(dims, vec![8, 3]);
        assert!(!prog.constraints()[1].is_strict());
        // δ = 0: the √δ entries are exact zeros
        let g0 = prog.constraints()[1].constant();
        assert_eq!(g0[(1, 0)].re, 0.0);
        assert!((g0[(2, 0)].re - 4.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn popov_program_shape_and_theta_zero() {
        let fx = dpa_fixture(3.8).unwrap();
        let sys = fx.system_for(UncertaintyClass::PositiveBound);
        let prog = assemble_popov_synthesis(&sys, &defaults(), 0.1, DEFAULT_MARGIN).unwrap();
        assert_eq!(prog.num_vars(), 5);
        let dims: Vec<usize> = prog.constraints().iter().map(|c| c.dim()).collect();
        assert_eq!(dims, vec![8, 2]);
        // θ = 0, Y = 0, q = 1: B = 2iEJ + E
        let p0 = assemble_popov_synthesis(&sys, &defaults(), 0.0, DEFAULT_MARGIN).unwrap();
        let g = p0.constraints()[0].evaluate(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        let j = j_matrix(1);
        let expected = j.map(|z| z * I * 2.0) + linalg::eye(2);
        assert!(linalg::max_abs_diff(&g.view((2, 0), (2, 2)).into_owned(), &expected) < 1e-15);
    }

    #[test]
    fn fixed_zero_gain_gives_nominal_block() {
        let fx = dpa_fixture(4.5).unwrap();
        let sys = fx.system_for(UncertaintyClass::PositiveBound);
        let zero = DoubledMatrix::zeros(1, DoubledKind::Hermitian);
        let prog = assemble_popov_fixed(&sys, &defaults(), 0.3, &zero, DEFAULT_MARGIN).unwrap();
        assert_eq!(prog.num_vars(), 2);
        let g = prog.constraints()[0].evaluate(&[2.0, 0.0]);
        let f = sys.drift();
        let a = (&f + f.adjoint()).scale(2.0);
        assert!(linalg::max_abs_diff(&g.view((0, 0), (2, 2)).into_owned(), &a) < 1e-14);
    }

    #[test]
    fn non_positive_r_is_rejected() {
        let fx = dpa_fixture(4.5).unwrap();
        let r = linalg::from_real_rows(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let cost = CostSpec::new(r, 0.1).unwrap();
        assert!(assemble_smallgain_synthesis(&fx.system, &cost, DEFAULT_MARGIN).is_ok());
        let bad = CostSpec::identity(2, 0.1).unwrap();
        assert!(matches!(
            assemble_smallgain_synthesis(&fx.system, &bad, DEFAULT_MARGIN),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn smallgain_synthesis_at_4_5() {
        let fx = dpa_fixture(4.5).unwrap();
        let out = synth_smallgain(&fx.system, &defaults()).unwrap();
        assert!(out.feasible);
        let (q, t) = (out.q.unwrap(), out.t.unwrap());
        let k = out.k.as_ref().unwrap();
        let qk = k.assemble().scale(q);
        let y = out.y.as_ref().unwrap().assemble();
        assert!(linalg::max_abs_diff(&qk, &y) <= 1e-9 * linalg::max_abs(&k.assemble()).max(1.0));
        assert!(linalg::spectral_abscissa(&closed_loop_nominal(&fx.system, k)) <= CLOSED_LOOP_MARGIN);
        let recomputed = 4.5 / q + fx.system.delta() / t;
        assert!(((out.bound - recomputed) / out.bound).abs() < 1e-6);
    }

    #[test]
    fn smallgain_synthesis_infeasible_at_3_8() {
        let fx = dpa_fixture(3.8).unwrap();
        let out = synth_smallgain(&fx.system, &defaults()).unwrap();
        assert!(!out.feasible);
        assert!(out.bound.is_infinite());
    }
}
