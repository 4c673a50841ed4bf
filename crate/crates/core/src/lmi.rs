//! Affine Hermitian matrix inequalities and a dense barrier-method engine.
//!
//! A program is `minimize c^T x` subject to
//! `G0 + Σ x_i G_i ⪯ -ε I` for every strict constraint (`⪯ 0` for
//! non-strict ones) and `lo_i < x_i < hi_i`. Complex constraints are mapped
//! to real symmetric ones with [`real_embed`] and solved in two phases:
//!
//! 1. minimize a scalar slack `u` with `G(x) + εI ⪯ uI`; stop as soon as
//!    `u < 0`, declare infeasible if the slack minimum stays `≥ 0`;
//! 2. path-following on `t c^T x - Σ log det(-(G(x) + εI))` with the
//!    barrier weight growing ×10 per outer step.
//!
//! Every reported point is re-checked by [`certify`], which evaluates the
//! complex constraints directly with a Hermitian eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

pub const DEFAULT_MARGIN: f64 = 1e-6;
pub const DEFAULT_VAR_BOUND: f64 = 1e6;
/// Absolute Hermitian tolerance for constraint coefficients.
pub const COEFF_HERMITIAN_TOL: f64 = 1e-12;

/// `G0 + Σ x_i G_i`, required `⪯ -εI` (strict) or `⪯ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    constant: CMat,
    coeffs: Vec<CMat>,
    strict: bool,
}

impl AffineConstraint {
    /// Coefficients must be Hermitian and share one dimension. They are
    /// symmetrised after the check so round-off does not leak into the solver.
    pub fn new(constant: CMat, coeffs: Vec<CMat>, strict: bool) -> Result<Self> {
        let dim = constant.nrows();
        for (idx, g) in std::iter::once(&constant).chain(coeffs.iter()).enumerate() {
            if g.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!(
                    "coefficient {idx} has shape {:?}, expected {dim}x{dim}",
                    g.shape()
                )));
            }
            let dev = linalg::hermitian_deviation(g);
            if dev > COEFF_HERMITIAN_TOL * (1.0 + linalg::max_abs(g)) {
                return Err(Error::NotHermitian(dev));
            }
        }
        Ok(Self {
            constant: linalg::hermitian_part(&constant),
            coeffs: coeffs.iter().map(linalg::hermitian_part).collect(),
            strict,
        })
    }

    /// Builds the constraint from an affine map `x ↦ G(x)` by probing it at
    /// the origin and at each unit vector.
    pub fn from_affine<F>(num_vars: usize, strict: bool, g: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> CMat,
    {
        let mut x = vec![0.0; num_vars];
        let constant = g(&x);
        let mut coeffs = Vec::with_capacity(num_vars);
        for i in 0..num_vars {
            x[i] = 1.0;
            coeffs.push(g(&x) - &constant);
            x[i] = 0.0;
        }
        Self::new(constant, coeffs, strict)
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn constant(&self) -> &CMat {
        &self.constant
    }

    pub fn coeffs(&self) -> &[CMat] {
        &self.coeffs
    }

    pub fn evaluate(&self, x: &[f64]) -> CMat {
        let mut out = self.constant.clone();
        for (g, &xi) in self.coeffs.iter().zip(x) {
            if xi != 0.0 {
                out += g.map(|z| z * xi);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProgram {
    num_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<AffineConstraint>,
    var_bounds: Vec<(f64, f64)>,
    margin: f64,
}

impl LmiProgram {
    /// A feasibility program in `num_vars` variables with default bounds
    /// `[-1e6, 1e6]` and margin `1e-6`.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            var_bounds: vec![(-DEFAULT_VAR_BOUND, DEFAULT_VAR_BOUND); num_vars],
            margin: DEFAULT_MARGIN,
        }
    }

    pub fn with_objective(mut self, c: Vec<f64>) -> Result<Self> {
        if c.len() != self.num_vars {
            return Err(Error::DimensionMismatch(format!(
                "objective has {} entries for {} variables",
                c.len(),
                self.num_vars
            )));
        }
        self.objective = c;
        Ok(self)
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::InvalidArgument(format!("margin must be positive, got {margin}")));
        }
        self.margin = margin;
        Ok(self)
    }

    pub fn add_constraint(&mut self, c: AffineConstraint) -> Result<()> {
        if c.coeffs.len() != self.num_vars {
            return Err(Error::DimensionMismatch(format!(
                "constraint has {} coefficients for {} variables",
                c.coeffs.len(),
                self.num_vars
            )));
        }
        self.constraints.push(c);
        Ok(())
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> Result<()> {
        if var >= self.num_vars || !(lo < hi) {
            return Err(Error::InvalidArgument(format!("bad bounds [{lo}, {hi}] for variable {var}")));
        }
        self.var_bounds[var] = (lo, hi);
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[AffineConstraint] {
        &self.constraints
    }

    pub fn var_bounds(&self) -> &[(f64, f64)] {
        &self.var_bounds
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    fn shift(&self, c: &AffineConstraint) -> f64 {
        if c.strict {
            self.margin
        } else {
            0.0
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }

    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// `max_j λ_max(G_j(x) + ε_j I)`; certified points have this `≤ ε/2`.
    pub max_constraint_eig: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once the barrier duality measure `m/t` drops below this.
    pub duality_tol: f64,
    /// Newton decrement stop inside each centering step.
    pub newton_tol: f64,
    pub barrier_growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            duality_tol: 1e-8,
            newton_tol: 1e-10,
            barrier_growth: 10.0,
        }
    }
}

/// `[[Re H, -Im H], [Im H, Re H]]`.
pub fn real_embed(h: &CMat) -> Result<DMatrix<f64>> {
    let dev = linalg::hermitian_deviation(h);
    if dev > COEFF_HERMITIAN_TOL * (1.0 + linalg::max_abs(h)) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(embed_unchecked(h))
}

fn embed_unchecked(h: &CMat) -> DMatrix<f64> {
    let d = h.nrows();
    DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let z = h[(i % d, j % d)];
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Evaluates every constraint at `x` with a complex Hermitian eigensolver.
///
/// Returns whether all of them satisfy `λ_max(G_j(x) + ε_j I) ≤ ε/2` with
/// `x` inside its box, together with the worst such eigenvalue.
pub fn certify(program: &LmiProgram, x: &[f64]) -> (bool, f64) {
    if x.len() != program.num_vars || x.iter().any(|v| !v.is_finite()) {
        return (false, f64::INFINITY);
    }
    let mut worst = f64::NEG_INFINITY;
    for c in &program.constraints {
        let shift = program.shift(c);
        let lam = linalg::lambda_max(&c.evaluate(x)) + shift;
        worst = worst.max(lam);
    }
    let in_box = x
        .iter()
        .zip(&program.var_bounds)
        .all(|(&v, &(lo, hi))| v >= lo && v <= hi);
    (in_box && worst <= 0.5 * program.margin, worst)
}

pub fn solve(program: &LmiProgram) -> Result<SdpSolution> {
    solve_with(program, &SolverOptions::default())
}

pub fn solve_with(program: &LmiProgram, opts: &SolverOptions) -> Result<SdpSolution> {
    let k = program.num_vars;
    let mut budget = Budget {
        used: 0,
        cap: opts.max_iterations,
    };

    // S_j(x) = -(G0 + εI) - Σ x_i G_i ≻ 0, embedded as real symmetric.
    let blocks: Vec<Block> = program
        .constraints
        .iter()
        .map(|c| {
            let shift = program.shift(c);
            let mut s0 = embed_unchecked(&c.constant).map(|v| -v);
            for i in 0..s0.nrows() {
                s0[(i, i)] -= shift;
            }
            let derivs = c.coeffs.iter().map(|g| embed_unchecked(g).map(|v| -v)).collect();
            Block { s0, derivs }
        })
        .collect();

    // Phase 1 in (x, u): S_j + uI ≻ 0, minimize u, with u > -1.
    let x0: Vec<f64> = program.var_bounds.iter().map(|&(lo, hi)| interior_start(lo, hi)).collect();
    let worst = blocks
        .iter()
        .map(|b| -min_eig_sym(&b.eval(&x0)))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z0 = x0.clone();
    if blocks.is_empty() || worst < 0.0 {
        // x0 is already strictly feasible
    } else {
        let u0 = worst + 1.0;
        let phase1_blocks: Vec<Block> = blocks
            .iter()
            .map(|b| {
                let mut derivs = b.derivs.clone();
                derivs.push(DMatrix::identity(b.s0.nrows(), b.s0.nrows()));
                Block { s0: b.s0.clone(), derivs }
            })
            .collect();
        let mut bounds = program.var_bounds.clone();
        bounds.push((-1.0, f64::INFINITY));
        let mut c1 = vec![0.0; k];
        c1.push(1.0);
        let problem = Barrier {
            blocks: &phase1_blocks,
            bounds: &bounds,
            objective: &c1,
        };
        let mut z = x0.clone();
        z.push(u0);
        let found = path_follow(&problem, &mut z, opts, &mut budget, |z| z[k] < 0.0)?;
        if !found && z[k] >= 0.0 {
            return Ok(SdpSolution {
                status: SolveStatus::Infeasible,
                objective_value: program.objective_value(&z[..k]),
                max_constraint_eig: certify(program, &z[..k]).1,
                x: z[..k].to_vec(),
                iterations: budget.used,
            });
        }
        z.truncate(k);
        z0 = z;
    }

    // Phase 2.
    let problem = Barrier {
        blocks: &blocks,
        bounds: &program.var_bounds,
        objective: &program.objective,
    };
    let feasibility_only = program.objective.iter().all(|&c| c == 0.0);
    let mut x = z0;
    let status = if feasibility_only {
        centre(&problem, &mut x, 0.0, opts, &mut budget)?;
        SolveStatus::Feasible
    } else {
        path_follow(&problem, &mut x, opts, &mut budget, |_| false)?;
        SolveStatus::Optimal
    };

    let (ok, worst) = certify(program, &x);
    if !ok {
        return Err(Error::NumericalFailure(format!(
            "solver point failed certification (worst eigenvalue {worst:.3e})"
        )));
    }
    Ok(SdpSolution {
        status,
        objective_value: program.objective_value(&x),
        x,
        max_constraint_eig: worst,
        iterations: budget.used,
    })
}

fn interior_start(lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let inset = (0.5 * width).min(1.0);
    0.0f64.clamp(lo + inset, hi - inset)
}

struct Budget {
    used: usize,
    cap: usize,
}

impl Budget {
    fn tick(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.cap {
            return Err(Error::NumericalFailure(format!(
                "iteration cap of {} Newton steps reached",
                self.cap
            )));
        }
        Ok(())
    }
}

/// Slack matrix `S(z) = s0 + Σ z_i derivs_i` of one constraint.
struct Block {
    s0: DMatrix<f64>,
    derivs: Vec<DMatrix<f64>>,
}

impl Block {
    fn eval(&self, z: &[f64]) -> DMatrix<f64> {
        let mut s = self.s0.clone();
        for (d, &zi) in self.derivs.iter().zip(z) {
            if zi != 0.0 {
                s += d * zi;
            }
        }
        s
    }
}

fn min_eig_sym(s: &DMatrix<f64>) -> f64 {
    let sym = (s + s.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

struct Barrier<'a> {
    blocks: &'a [Block],
    bounds: &'a [(f64, f64)],
    objective: &'a [f64],
}

impl Barrier<'_> {
    /// Barrier degree: real block dimensions plus one per finite bound.
    fn degree(&self) -> f64 {
        let blocks: usize = self.blocks.iter().map(|b| b.s0.nrows()).sum();
        let bounds: usize = self
            .bounds
            .iter()
            .map(|&(lo, hi)| lo.is_finite() as usize + hi.is_finite() as usize)
            .sum();
        (blocks + bounds) as f64
    }

    /// `t c^T z + φ(z)`, or `None` outside the domain.
    fn value(&self, z: &[f64], t: f64) -> Option<f64> {
        let mut v = t * dot(self.objective, z);
        for (&zi, &(lo, hi)) in z.iter().zip(self.bounds) {
            if lo.is_finite() {
                if zi <= lo {
                    return None;
                }
                v -= (zi - lo).ln();
            }
            if hi.is_finite() {
                if zi >= hi {
                    return None;
                }
                v -= (hi - zi).ln();
            }
        }
        for b in self.blocks {
            let chol = b.eval(z).cholesky()?;
            let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            if !logdet.is_finite() {
                return None;
            }
            v -= logdet;
        }
        Some(v)
    }

    /// Gradient and Hessian of the barrier objective at a domain point.
    fn derivatives(&self, z: &[f64], t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let k = z.len();
        let mut g = DVector::from_iterator(k, self.objective.iter().map(|c| t * c));
        let mut h = DMatrix::<f64>::zeros(k, k);
        for (i, (&zi, &(lo, hi))) in z.iter().zip(self.bounds).enumerate() {
            if lo.is_finite() {
                let d = zi - lo;
                g[i] -= 1.0 / d;
                h[(i, i)] += 1.0 / (d * d);
            }
            if hi.is_finite() {
                let d = hi - zi;
                g[i] += 1.0 / d;
                h[(i, i)] += 1.0 / (d * d);
            }
        }
        for b in self.blocks {
            let chol = b.eval(z).cholesky()?;
            let l = chol.l();
            // W_i = L^{-1} A_i L^{-T}
            let w: Vec<DMatrix<f64>> = b
                .derivs
                .iter()
                .map(|a| {
                    let left = l.solve_lower_triangular(a).expect("non-singular factor");
                    let full = l
                        .solve_lower_triangular(&left.transpose())
                        .expect("non-singular factor");
                    (&full + full.transpose()) * 0.5
                })
                .collect();
            for i in 0..k {
                g[i] -= w[i].trace();
                for j in 0..=i {
                    let v = w[i].dot(&w[j]);
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        Some((g, h))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton centering at barrier weight `t`. Returns early with `true` once
/// `stop(z)` holds.
fn centre_until(
    problem: &Barrier,
    z: &mut Vec<f64>,
    t: f64,
    opts: &SolverOptions,
    budget: &mut Budget,
    stop: &dyn Fn(&[f64]) -> bool,
) -> Result<bool> {
    loop {
        if stop(z) {
            return Ok(true);
        }
        let (g, h) = problem
            .derivatives(z, t)
            .ok_or_else(|| Error::NumericalFailure("iterate left the barrier domain".into()))?;
        let step = newton_step(&g, h)?;
        let decrement = -g.dot(&step);
        if decrement * 0.5 <= opts.newton_tol {
            return Ok(false);
        }
        budget.tick()?;
        let f0 = problem
            .value(z, t)
            .ok_or_else(|| Error::NumericalFailure("iterate left the barrier domain".into()))?;
        let slope = g.dot(&step);
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-14 {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(zi, di)| zi + alpha * di).collect();
            if let Some(f1) = problem.value(&trial, t) {
                if f1 <= f0 + 0.25 * alpha * slope || (f1 - f0).abs() <= 1e-13 * f0.abs().max(1.0) {
                    *z = trial;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            // no representable progress left at this barrier weight
            return Ok(false);
        }
    }
}

fn centre(problem: &Barrier, z: &mut Vec<f64>, t: f64, opts: &SolverOptions, budget: &mut Budget) -> Result<()> {
    centre_until(problem, z, t, opts, budget, &|_| false).map(|_| ())
}

/// Outer barrier loop. Returns `true` if `stop` fired.
fn path_follow(
    problem: &Barrier,
    z: &mut Vec<f64>,
    opts: &SolverOptions,
    budget: &mut Budget,
    stop: impl Fn(&[f64]) -> bool,
) -> Result<bool> {
    let m = problem.degree();
    let mut t = 1.0;
    loop {
        if centre_until(problem, z, t, opts, budget, &stop)? {
            return Ok(true);
        }
        if m / t <= opts.duality_tol {
            return Ok(false);
        }
        t *= opts.barrier_growth;
    }
}

fn newton_step(g: &DVector<f64>, h: DMatrix<f64>) -> Result<DVector<f64>> {
    let rhs = -g;
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    // regularise a numerically indefinite Hessian
    let scale = h.diagonal().iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut reg = 1e-14 * scale;
    for _ in 0..20 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(chol) = hr.cholesky() {
            return Ok(chol.solve(&rhs));
        }
        reg *= 100.0;
    }
    Err(Error::NumericalFailure("Newton system is not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real_rows, from_rows, real};

    fn scalar(v: f64) -> CMat {
        from_real_rows(1, 1, &[v])
    }

    fn scalar_program() -> LmiProgram {
        let mut p = LmiProgram::new(1).with_objective(vec![1.0]).unwrap();
        p.add_constraint(AffineConstraint::new(scalar(0.0), vec![scalar(1.0)], true).unwrap())
            .unwrap();
        p.set_bounds(0, -10.0, 10.0).unwrap();
        p
    }

    #[test]
    fn embedding_of_pauli_y() {
        let h = from_rows(2, 2, &[real(0.0), c(0.0, -1.0), c(0.0, 1.0), real(0.0)]);
        let e = real_embed(&h).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0., 0., 0., 1., 0., 0., -1., 0., 0., -1., 0., 0., 1., 0., 0., 0.],
        );
        assert_eq!(e, expected);
        assert_eq!(real_embed(&linalg::eye(2)).unwrap(), DMatrix::<f64>::identity(4, 4));
        let bad = from_rows(1, 1, &[c(0.0, 1.0)]);
        assert!(matches!(real_embed(&bad), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn bound_active_scalar_minimum() {
        let p = scalar_program();
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] + 10.0).abs() < 1e-6, "x = {}", sol.x[0]);
        let (ok, worst) = certify(&p, &[-10.0]);
        assert!(ok);
        assert!((worst - (-10.0 + 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn certify_flags_violation() {
        let p = scalar_program();
        let (ok, worst) = certify(&p, &[1.0]);
        assert!(!ok);
        assert!(worst > 0.0);
    }

    #[test]
    fn two_by_two_feasible() {
        let mut p = LmiProgram::new(1);
        p.add_constraint(
            AffineConstraint::new(
                from_real_rows(2, 2, &[0.0, 1.0, 1.0, 0.0]),
                vec![linalg::eye(2)],
                true,
            )
            .unwrap(),
        )
        .unwrap();
        p.set_bounds(0, -10.0, 10.0).unwrap();
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!(sol.x[0] < -1.0 - 1e-6);
        assert!(certify(&p, &sol.x).0);
    }

    #[test]
    fn two_by_two_infeasible() {
        let mut p = LmiProgram::new(1);
        p.add_constraint(
            AffineConstraint::new(
                from_real_rows(2, 2, &[0.0, 2.0, 2.0, 0.0]),
                vec![from_real_rows(2, 2, &[1.0, 0.0, 0.0, -1.0])],
                false,
            )
            .unwrap(),
        )
        .unwrap();
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn constraint_validation() {
        let nh = from_real_rows(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            AffineConstraint::new(nh, vec![], true),
            Err(Error::NotHermitian(_))
        ));
        assert!(AffineConstraint::new(linalg::eye(2), vec![linalg::eye(3)], true).is_err());
        let mut p = LmiProgram::new(2);
        let c1 = AffineConstraint::new(scalar(0.0), vec![scalar(1.0)], true).unwrap();
        assert!(p.add_constraint(c1).is_err());
        assert!(p.set_bounds(0, 1.0, 1.0).is_err());
        assert!(LmiProgram::new(1).with_margin(0.0).is_err());
    }

    #[test]
    fn affine_probe_matches_explicit_coefficients() {
        let g1 = from_real_rows(2, 2, &[1.0, 2.0, 2.0, 0.0]);
        let c = AffineConstraint::from_affine(2, true, |x| {
            linalg::eye(2).scale(3.0) + g1.scale(x[0]) - linalg::eye(2).scale(x[1])
        })
        .unwrap();
        assert!(linalg::max_abs_diff(c.constant(), &linalg::eye(2).scale(3.0)) < 1e-15);
        assert!(linalg::max_abs_diff(&c.coeffs()[0], &g1) < 1e-15);
        assert!(linalg::max_abs_diff(&c.evaluate(&[0.5, 2.0]), &(linalg::eye(2) + g1.scale(0.5))) < 1e-15);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let p = scalar_program();
        let opts = SolverOptions {
            max_iterations: 2,
            ..SolverOptions::default()
        };
        assert!(matches!(solve_with(&p, &opts), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn complex_constraint_optimum() {
        // minimize x s.t. [[-x, i], [-i, -x]] ⪯ -εI  (eigenvalues -x ± 1) → x = 1 + ε
        let mut p = LmiProgram::new(1).with_objective(vec![1.0]).unwrap();
        let g0 = from_rows(2, 2, &[real(0.0), c(0.0, 1.0), c(0.0, -1.0), real(0.0)]);
        p.add_constraint(AffineConstraint::new(g0, vec![linalg::eye(2).map(|z| -z)], true).unwrap())
            .unwrap();
        let sol = solve(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - (1.0 + 1e-6)).abs() < 1e-7, "x = {}", sol.x[0]);
    }
}
