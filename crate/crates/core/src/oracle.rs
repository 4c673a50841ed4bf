//! Exact steady-state cost of a perturbed closed loop.
//!
//! For a Hurwitz drift `F_cl` the second moments `Σ` (with
//! `⟨x^† A x⟩ = Tr(A Σ)`) relax to the solution of
//! `F_cl Σ + Σ F_cl^† + D = 0`, and the time-averaged cost is `Tr(R Σ)`.
//! Guaranteed-cost bounds are checked against this value over sampled
//! admissible perturbations `Δ`.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::parallel::{self, Execution};
use crate::qmodel::{
    delta_membership, j_matrix, CostSpec, DoubledKind, DoubledMatrix, UncertainSystem, UncertaintyClass,
    HURWITZ_TOL,
};

pub const DEFAULT_SAMPLES: usize = 200;
pub const DEFAULT_SEED: u64 = 42;
/// A sample counts as a violation when its cost exceeds the bound by more than this.
pub const VIOLATION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    drift: CMat,
    noise: CMat,
    cost: CMat,
}

impl ClosedLoop {
    pub fn new(drift: CMat, noise: CMat, cost: CMat) -> Result<Self> {
        let d = drift.nrows();
        if !drift.is_square() || noise.shape() != (d, d) || cost.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "drift {:?}, noise {:?}, cost {:?}",
                drift.shape(),
                noise.shape(),
                cost.shape()
            )));
        }
        for m in [&noise, &cost] {
            let dev = linalg::hermitian_deviation(m);
            if dev > 1e-10 {
                return Err(Error::NotHermitian(dev));
            }
        }
        let min_noise = linalg::lambda_min(&noise);
        if min_noise < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "noise matrix must be PSD (min eigenvalue {min_noise:.3e})"
            )));
        }
        Ok(Self { drift, noise, cost })
    }

    pub fn drift(&self) -> &CMat {
        &self.drift
    }

    pub fn noise(&self) -> &CMat {
        &self.noise
    }

    pub fn cost(&self) -> &CMat {
        &self.cost
    }
}

/// `-iJ(M + E^†ΔE + K) - ½ J N^† J N`.
pub fn closed_loop_drift(sys: &UncertainSystem, delta: &DoubledMatrix, k: &DoubledMatrix) -> Result<CMat> {
    let n = sys.modes();
    let mp = sys.perturbation_channels();
    if delta.shape() != (2 * mp, 2 * mp) {
        return Err(Error::DimensionMismatch(format!(
            "Δ is {:?}, expected {}x{}",
            delta.shape(),
            2 * mp,
            2 * mp
        )));
    }
    if k.shape() != (2 * n, 2 * n) {
        return Err(Error::DimensionMismatch(format!(
            "K is {:?}, expected {}x{}",
            k.shape(),
            2 * n,
            2 * n
        )));
    }
    let e = sys.e().assemble();
    let hamiltonian = sys.m().assemble() + e.adjoint() * delta.assemble() * &e + k.assemble();
    let j = j_matrix(n);
    let jc = j_matrix(sys.coupling().channels());
    let nd = sys.coupling().doubled();
    let damping = (&j * nd.adjoint() * &jc * &nd).scale(0.5);
    Ok((&j * hamiltonian).map(|z| z * Complex::new(0.0, -1.0)) - damping)
}

/// Solves `F Σ + Σ F^† + D = 0` by vectorisation:
/// `(I ⊗ F + F̄ ⊗ I) vec Σ = -vec D`.
pub fn steady_state_covariance(cl: &ClosedLoop) -> Result<CMat> {
    let f = &cl.drift;
    let abscissa = linalg::spectral_abscissa(f);
    if abscissa >= HURWITZ_TOL {
        return Err(Error::NotHurwitz(abscissa));
    }
    let d = f.nrows();
    let id = linalg::eye(d);
    let op = id.kronecker(f) + f.conjugate().kronecker(&id);
    let rhs = CMat::from_iterator(d * d, 1, cl.noise.iter().map(|z| -z));
    let vec_sigma = op
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned(f64::INFINITY))?;
    let sigma = linalg::hermitian_part(&CMat::from_iterator(d, d, vec_sigma.iter().copied()));
    let residual = linalg::max_abs(&(f * &sigma + &sigma * f.adjoint() + &cl.noise));
    if residual > 1e-8 * linalg::max_abs(&cl.noise).max(1.0) {
        return Err(Error::IllConditioned(residual));
    }
    let min_eig = linalg::lambda_min(&sigma);
    if min_eig < -1e-8 {
        return Err(Error::IllConditioned(min_eig));
    }
    Ok(sigma)
}

/// Steady-state cost `Tr(R Σ)`.
pub fn lyapunov_cost(cl: &ClosedLoop) -> Result<f64> {
    let sigma = steady_state_covariance(cl)?;
    let tr = (&cl.cost * sigma).trace();
    if tr.im.abs() > 1e-10 * tr.re.abs().max(1.0) {
        return Err(Error::IllConditioned(tr.im.abs()));
    }
    Ok(tr.re)
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Complex::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

fn hermitian_from_full(m: &CMat) -> DoubledMatrix {
    let n = m.nrows() / 2;
    let x1 = linalg::hermitian_part(&m.view((0, 0), (n, n)).into_owned());
    let x2r = m.view((0, n), (n, n)).into_owned();
    let x2 = (&x2r + x2r.transpose()).scale(0.5);
    DoubledMatrix::validate(x1, x2, DoubledKind::Hermitian).expect("projected blocks are Hermitian doubled")
}

/// One admissible perturbation for `channels` perturbation channels,
/// drawn from stream `index` of the seeded generator.
///
/// NormBound: structured Hermitian Δ with Gaussian blocks, rescaled so that
/// `‖Δ‖ = u·2/γ`. PositiveBound: `Δ = G^†G` for a structured Gaussian `G`,
/// rescaled so that `λ_max = u·4/γ`. In both cases `u ~ U[0, 1]`.
pub fn sample_delta_indexed(
    class: UncertaintyClass,
    gamma: f64,
    channels: usize,
    seed: u64,
    index: u64,
) -> DoubledMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let u: f64 = rng.random();
    let a1 = normal_matrix(&mut rng, channels, channels);
    let a2 = normal_matrix(&mut rng, channels, channels);
    match class {
        UncertaintyClass::NormBound => {
            let x1 = linalg::hermitian_part(&a1);
            let x2 = (&a2 + a2.transpose()).scale(0.5);
            let raw = DoubledMatrix::validate(x1, x2, DoubledKind::Hermitian).expect("structured by construction");
            let ev = linalg::hermitian_eigenvalues(&raw.assemble());
            let norm = ev[0].abs().max(ev[ev.len() - 1].abs());
            if norm == 0.0 {
                return DoubledMatrix::zeros(channels, DoubledKind::Hermitian);
            }
            raw.scale(u * (2.0 / gamma) / norm)
        }
        UncertaintyClass::PositiveBound => {
            let g = DoubledMatrix::validate(a1, a2, DoubledKind::General)
                .expect("structured by construction")
                .assemble();
            let full = g.adjoint() * g;
            let lam = linalg::lambda_max(&full);
            if lam <= 0.0 {
                return DoubledMatrix::zeros(channels, DoubledKind::Hermitian);
            }
            hermitian_from_full(&full).scale(u * (4.0 / gamma) / lam)
        }
    }
}

pub fn sample_delta(class: UncertaintyClass, gamma: f64, channels: usize, seed: u64) -> DoubledMatrix {
    sample_delta_indexed(class, gamma, channels, seed, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `cost - bound` over stable samples.
    pub worst_margin: f64,
    pub unstable_samples: usize,
    pub seed: u64,
    /// Largest oracle cost seen over stable samples.
    pub worst_cost: f64,
}

impl VerificationReport {
    pub fn is_sound(&self) -> bool {
        self.violations == 0 && self.unstable_samples == 0
    }
}

/// The fixed perturbations every verification run includes: the example
/// `Δ = [[1, 0.5i], [-0.5i, 1]]` (when it fits and is admissible) and `Δ = 0`.
pub fn fixed_deltas(sys: &UncertainSystem) -> Vec<DoubledMatrix> {
    let mp = sys.perturbation_channels();
    let mut out = Vec::new();
    if mp == 1 {
        let example = DoubledMatrix::validate(
            CMat::from_element(1, 1, Complex::new(1.0, 0.0)),
            CMat::from_element(1, 1, Complex::new(0.0, 0.5)),
            DoubledKind::Hermitian,
        )
        .expect("example Δ is Hermitian doubled");
        if delta_membership(&example, sys.class(), sys.gamma()) {
            out.push(example);
        }
    }
    out.push(DoubledMatrix::zeros(mp, DoubledKind::Hermitian));
    out
}

enum SampleResult {
    Unstable,
    Cost(f64),
}

/// Checks `bound` against the oracle cost over the fixed perturbations plus
/// `num_samples` random admissible ones. With a controller `K` the cost
/// matrix is `R + ρK²`, otherwise `R`.
pub fn verify_bound(
    sys: &UncertainSystem,
    k: Option<&DoubledMatrix>,
    cost: &CostSpec,
    bound: f64,
    num_samples: usize,
    seed: u64,
) -> VerificationReport {
    verify_bound_with(Execution::default(), sys, k, cost, bound, num_samples, seed)
}

pub fn verify_bound_with(
    exec: Execution,
    sys: &UncertainSystem,
    k: Option<&DoubledMatrix>,
    cost: &CostSpec,
    bound: f64,
    num_samples: usize,
    seed: u64,
) -> VerificationReport {
    let n = sys.modes();
    let zero_k = DoubledMatrix::zeros(n, DoubledKind::Hermitian);
    let k = k.unwrap_or(&zero_k);
    let kf = k.assemble();
    let r_cost = cost.r() + (&kf * &kf).scale(cost.rho());
    let noise = sys.noise();
    let fixed = fixed_deltas(sys);
    let total = fixed.len() + num_samples;

    let results = parallel::map_indexed(exec, total, |i| {
        let delta = if i < fixed.len() {
            fixed[i].clone()
        } else {
            sample_delta_indexed(
                sys.class(),
                sys.gamma(),
                sys.perturbation_channels(),
                seed,
                (i - fixed.len()) as u64,
            )
        };
        let drift = closed_loop_drift(sys, &delta, k).expect("dimensions validated");
        let cl = ClosedLoop::new(drift, noise.clone(), r_cost.clone()).expect("validated inputs");
        match lyapunov_cost(&cl) {
            Ok(c) => SampleResult::Cost(c),
            Err(_) => SampleResult::Unstable,
        }
    });

    let mut report = VerificationReport {
        samples: total,
        violations: 0,
        worst_margin: f64::NEG_INFINITY,
        unstable_samples: 0,
        seed,
        worst_cost: f64::NEG_INFINITY,
    };
    for r in results {
        match r {
            SampleResult::Unstable => report.unstable_samples += 1,
            SampleResult::Cost(c) => {
                let margin = c - bound;
                if margin > VIOLATION_SLACK {
                    report.violations += 1;
                }
                report.worst_margin = report.worst_margin.max(margin);
                report.worst_cost = report.worst_cost.max(c);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_rows, max_abs_diff};
    use crate::qmodel::{compute_f, dpa_fixture};

    /// Brute-force oracle for the 2×2 real symmetric case: the three
    /// unknowns (s1, s2, s3) of Σ solve a dense 3×3 system, eliminated here
    /// by Cramer's rule.
    fn cost_2x2_real(f: [[f64; 2]; 2], d: [f64; 3], r: [f64; 3]) -> f64 {
        // rows: (1,1), (1,2), (2,2) entries of FΣ + ΣF^T + D = 0
        let a = [
            [2.0 * f[0][0], 2.0 * f[0][1], 0.0],
            [f[1][0], f[0][0] + f[1][1], f[0][1]],
            [0.0, 2.0 * f[1][0], 2.0 * f[1][1]],
        ];
        let b = [-d[0], -d[1], -d[2]];
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let det = det3(a);
        let s: Vec<f64> = (0..3)
            .map(|col| {
                let mut m = a;
                for row in 0..3 {
                    m[row][col] = b[row];
                }
                det3(m) / det
            })
            .collect();
        r[0] * s[0] + 2.0 * r[1] * s[1] + r[2] * s[2]
    }

    #[test]
    fn stable_identity_loop() {
        let cl = ClosedLoop::new(
            linalg::eye(2).map(|z| -z),
            linalg::eye(2).scale(2.0),
            linalg::eye(2),
        )
        .unwrap();
        let sigma = steady_state_covariance(&cl).unwrap();
        assert!(max_abs_diff(&sigma, &linalg::eye(2)) < 1e-14);
        assert!((lyapunov_cost(&cl).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hand_derived_closed_loop_cost() {
        let brute = cost_2x2_real([[-2.25, 0.5], [0.5, -2.25]], [4.5, 0.0, 0.0], [1.0, 0.0, 1.0]);
        // s3 = 4.5/173.25, cost = 40.5 s3
        assert!((brute - 40.5 * 4.5 / 173.25).abs() < 1e-12);
        let cl = ClosedLoop::new(
            from_real_rows(2, 2, &[-2.25, 0.5, 0.5, -2.25]),
            from_real_rows(2, 2, &[4.5, 0.0, 0.0, 0.0]),
            linalg::eye(2),
        )
        .unwrap();
        let cost = lyapunov_cost(&cl).unwrap();
        assert!((cost - brute).abs() < 1e-12);
        assert!((cost - 1.0519).abs() < 1e-3);
    }

    #[test]
    fn zero_noise_zero_cost_and_linearity() {
        let f = from_real_rows(2, 2, &[-1.0, 3.0, -0.2, -0.7]);
        let cl0 = ClosedLoop::new(f.clone(), linalg::zeros(2, 2), linalg::eye(2)).unwrap();
        assert_eq!(lyapunov_cost(&cl0).unwrap(), 0.0);
        let d = from_real_rows(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let c1 = lyapunov_cost(&ClosedLoop::new(f.clone(), d.clone(), linalg::eye(2)).unwrap()).unwrap();
        let c2 = lyapunov_cost(&ClosedLoop::new(f, d.scale(2.0), linalg::eye(2)).unwrap()).unwrap();
        assert!((c2 - 2.0 * c1).abs() <= 1e-10 * c1.abs());
    }

    #[test]
    fn unstable_loop_is_rejected() {
        let cl = ClosedLoop::new(linalg::eye(2), linalg::eye(2), linalg::eye(2)).unwrap();
        assert!(matches!(lyapunov_cost(&cl), Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn dpa_drifts() {
        let fx = dpa_fixture(4.5).unwrap();
        let zero = DoubledMatrix::zeros(1, DoubledKind::Hermitian);
        let f_cl = closed_loop_drift(&fx.system, &fx.delta, &fx.k_example).unwrap();
        assert!(max_abs_diff(&f_cl, &from_real_rows(2, 2, &[-2.25, 0.5, 0.5, -2.25])) < 1e-14);
        let f_open = closed_loop_drift(&fx.system, &fx.delta, &zero).unwrap();
        assert!(max_abs_diff(&f_open, &from_real_rows(2, 2, &[-2.25, 1.0, 1.0, -2.25])) < 1e-14);
        let nominal = closed_loop_drift(&fx.system, &zero, &zero).unwrap();
        let f = compute_f(fx.system.m(), fx.system.coupling()).unwrap();
        assert!(max_abs_diff(&nominal, &f) < 1e-15);
        let bad = DoubledMatrix::zeros(2, DoubledKind::Hermitian);
        assert!(closed_loop_drift(&fx.system, &bad, &zero).is_err());
    }

    #[test]
    fn samples_are_admissible_and_deterministic() {
        for class in [UncertaintyClass::NormBound, UncertaintyClass::PositiveBound] {
            let gamma = class.example_gamma();
            for i in 0..200 {
                let d = sample_delta_indexed(class, gamma, 2, 7, i);
                assert!(delta_membership(&d, class, gamma), "{class:?} sample {i}");
            }
        }
        let a = sample_delta(UncertaintyClass::NormBound, 1.0, 1, 42);
        let b = sample_delta(UncertaintyClass::NormBound, 1.0, 1, 42);
        assert_eq!(a, b);
        let p = sample_delta(UncertaintyClass::PositiveBound, 2.0, 1, 42);
        let ev = linalg::hermitian_eigenvalues(&p.assemble());
        assert!(ev[0] >= -1e-12 && ev[1] <= 2.0 + 1e-12);
    }

    #[test]
    fn false_bound_is_caught() {
        let fx = dpa_fixture(6.0).unwrap();
        let cost = CostSpec::identity(1, 0.1).unwrap();
        let report = verify_bound(&fx.system, None, &cost, -1.0, 20, 42);
        assert!(report.violations > 0);
        assert_eq!(report.samples, 22);
        assert!(!report.is_sound());
    }
}
