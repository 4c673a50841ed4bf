//! Single-mode controller realization with a static Bogoliubov squeezer.
//!
//! Feeding the cavity output through
//! `B = [[cosh r e^{iα}, sinh r e^{iβ}], [sinh r e^{-iβ}, cosh r e^{-iα}]]`
//! and back in with coupling `κ̃` adds
//! `-(κ̃/(2 - 2cosh r cos α)) [[i cosh r sin α, sinh r e^{iβ}], [sinh r e^{-iβ}, -i cosh r sin α]]`
//! to the drift. Realizing `K` means matching this to `-iJK`.
//!
//! `(r, β)` and `(-r, β + π)` give the same term; realizations are returned
//! with `sinh r ≤ 0`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, I};
use crate::qmodel::{j_matrix, DoubledMatrix};

/// `|2 - 2cosh r cos α|` below this makes `B^{-1} - I` singular.
pub const SINGULAR_TOL: f64 = 1e-12;
pub const ROUND_TRIP_TOL: f64 = 1e-9;
const SEARCH_MIN: f64 = -10.0;
const GRID_POINTS: usize = 10_000;
const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezerRealization {
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa_tilde: f64,
    pub b: CMat,
}

impl SqueezerRealization {
    pub fn new(r: f64, alpha: f64, beta: f64, kappa_tilde: f64) -> Result<Self> {
        if !(kappa_tilde > 0.0 && kappa_tilde.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa_tilde must be positive, got {kappa_tilde}")));
        }
        Ok(Self {
            r,
            alpha,
            beta,
            kappa_tilde,
            b: bogoliubov_b(r, alpha, beta),
        })
    }

    /// `|B^†JB - J|_max`.
    pub fn bogoliubov_defect(&self) -> f64 {
        let j = j_matrix(1);
        linalg::max_abs_diff(&(self.b.adjoint() * &j * &self.b), &j)
    }
}

pub fn bogoliubov_b(r: f64, alpha: f64, beta: f64) -> CMat {
    let (ch, sh) = (r.cosh(), r.sinh());
    let e = |phi: f64| c(phi.cos(), phi.sin());
    linalg::from_rows(
        2,
        2,
        &[e(alpha) * ch, e(beta) * sh, e(-beta) * sh, e(-alpha) * ch],
    )
}

fn term(r: f64, alpha: f64, beta: f64, kappa_tilde: f64) -> Result<CMat> {
    let (ch, sh) = (r.cosh(), r.sinh());
    let den = 2.0 - 2.0 * ch * alpha.cos();
    if den.abs() < SINGULAR_TOL {
        return Err(Error::SingularSqueezer);
    }
    let diag = I * (ch * alpha.sin());
    let off = c(beta.cos(), beta.sin()) * sh;
    let m = linalg::from_rows(2, 2, &[diag, off, off.conj(), -diag]);
    Ok(m.scale(-kappa_tilde / den))
}

pub fn realized_coupling_term(s: &SqueezerRealization) -> Result<CMat> {
    term(s.r, s.alpha, s.beta, s.kappa_tilde)
}

/// `[[-κ/2, 1], [1, -κ/2]]` plus the squeezer term: the amplifier with the
/// example perturbation in place, closed through the squeezer.
pub fn closed_loop_qsde(kappa: f64, s: &SqueezerRealization) -> Result<CMat> {
    let open = linalg::from_real_rows(2, 2, &[-kappa / 2.0, 1.0, 1.0, -kappa / 2.0]);
    Ok(open + realized_coupling_term(s)?)
}

/// Target `-iJK = [[ip, w], [w^*, -ip]]` as `(p, w)`.
fn target(k: &DoubledMatrix) -> Result<(CMat, f64, nalgebra::Complex<f64>)> {
    if k.shape() != (2, 2) {
        return Err(Error::Unsupported(format!(
            "only single-mode controllers can be realized, K is {:?}",
            k.shape()
        )));
    }
    let k = k.as_hermitian()?;
    let t = (j_matrix(1) * k.assemble()).map(|z| -z * I);
    let p = t[(0, 0)].im;
    let w = t[(0, 1)];
    Ok((t, p, w))
}

fn normalize_angle(a: f64) -> f64 {
    let x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x.abs() < 1e-15 {
        0.0
    } else {
        x
    }
}

/// For `u = sinh r < 0` and off-diagonal sign `s` (`-κ̃u/den = s`), the
/// phase α matching the diagonal, or `None` when `|sin α| > 1`.
fn alpha_for(u: f64, p: f64, s: f64) -> Option<f64> {
    let ch = (1.0 + u * u).sqrt();
    let sin_a = p * u / (s * ch);
    if sin_a.abs() > 1.0 {
        return None;
    }
    Some(sin_a.asin())
}

fn residual_g(u: f64, p: f64, s: f64, kappa_tilde: f64) -> Option<f64> {
    let alpha = alpha_for(u, p, s)?;
    let ch = (1.0 + u * u).sqrt();
    let den = 2.0 - 2.0 * ch * alpha.cos();
    if den.abs() < SINGULAR_TOL {
        return None;
    }
    Some(-kappa_tilde * u / den - s)
}

fn bisect<G: Fn(f64) -> Option<f64>>(g: G, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut glo = g(lo)?;
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm == 0.0 {
            return Some(mid);
        }
        if (gm < 0.0) == (glo < 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Finds `(r, α, β)` with `sinh r ≤ 0` such that the squeezer term with
/// coupling `kappa_tilde` equals `-iJK`.
///
/// `u = sinh r` is located by a sign-change scan of `[-10, 0)` followed by
/// bisection; spurious brackets around poles are rejected by re-evaluating
/// the full term.
pub fn solve_squeezer(k: &DoubledMatrix, kappa_tilde: f64) -> Result<SqueezerRealization> {
    if !(kappa_tilde > 0.0 && kappa_tilde.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa_tilde must be positive, got {kappa_tilde}")));
    }
    let (t, p, w) = target(k)?;
    let scale = linalg::max_abs(&t);
    if scale == 0.0 {
        return Err(Error::NoControllerNeeded);
    }
    let accept = |s: SqueezerRealization| -> Option<SqueezerRealization> {
        let realized = realized_coupling_term(&s).ok()?;
        (linalg::max_abs_diff(&realized, &t) <= ROUND_TRIP_TOL * scale.max(1.0)).then_some(s)
    };

    if w.norm() == 0.0 {
        let alpha = 2.0 * (-kappa_tilde / (2.0 * p)).atan();
        return SqueezerRealization::new(0.0, alpha, 0.0, kappa_tilde)
            .ok()
            .and_then(accept)
            .ok_or_else(|| Error::Unrealizable("diagonal-only target could not be matched".into()));
    }

    let mag = w.norm();
    // s = -|w| pairs with β = arg(w) + π, s = +|w| with β = arg(w)
    for (s, beta) in [(-mag, w.arg() + PI), (mag, w.arg())] {
        let g = |u: f64| residual_g(u, p, s, kappa_tilde);
        let step = -SEARCH_MIN / GRID_POINTS as f64;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..GRID_POINTS {
            let u = SEARCH_MIN + i as f64 * step;
            let cur = g(u).map(|v| (u, v));
            if let (Some((u0, g0)), Some((u1, g1))) = (prev, cur) {
                if (g0 < 0.0) != (g1 < 0.0) || g1 == 0.0 {
                    if let Some(root) = bisect(g, u0, u1) {
                        let alpha = alpha_for(root, p, s).expect("root lies inside the admissible range");
                        let cand = SqueezerRealization::new(root.asinh(), alpha, normalize_angle(beta), kappa_tilde)?;
                        if let Some(found) = accept(cand) {
                            return Ok(found);
                        }
                    }
                }
            }
            prev = cur;
        }
    }
    let a = 1.0 - (p / mag).powi(2);
    let limit = if a > 0.0 { 2.0 * mag * a.sqrt() } else { 0.0 };
    Err(Error::Unrealizable(format!(
        "no squeeze parameter with sinh r in [{SEARCH_MIN}, 0) realizes K at kappa_tilde = {kappa_tilde}; \
         attainable kappa_tilde lies below about {limit:.6}"
    )))
}

/// Coupling `κ̃` that realizes `K` with the given squeeze parameter
/// (`sinh r < 0`), the inverse of [`solve_squeezer`] in `κ̃`.
pub fn kappa_tilde_for(k: &DoubledMatrix, r: f64) -> Result<f64> {
    let (_, p, w) = target(k)?;
    let u = r.sinh();
    if !(u < 0.0) {
        return Err(Error::InvalidArgument(format!("need sinh r < 0, got r = {r}")));
    }
    let mag = w.norm();
    if mag == 0.0 {
        if p == 0.0 {
            return Err(Error::NoControllerNeeded);
        }
        return Err(Error::Unrealizable("diagonal-only targets need r = 0".into()));
    }
    for s in [-mag, mag] {
        if let Some(alpha) = alpha_for(u, p, s) {
            let den = 2.0 - 2.0 * (1.0 + u * u).sqrt() * alpha.cos();
            let kt = -s * den / u;
            if kt > 0.0 && den.abs() >= SINGULAR_TOL {
                return Ok(kt);
            }
        }
    }
    Err(Error::Unrealizable(format!("no positive kappa_tilde realizes K at r = {r}")))
}

/// Example squeezer `sinh r = -3/4`, `α = β = 0`, `κ̃ = 1/3`.
pub fn example_realization() -> SqueezerRealization {
    SqueezerRealization::new((-0.75f64).asinh(), 0.0, 0.0, 1.0 / 3.0).expect("valid constants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, from_real_rows, max_abs_diff, real};
    use crate::oracle::closed_loop_drift;
    use crate::qmodel::{dpa_fixture, DoubledKind};

    #[test]
    fn example_b_and_term() {
        let s = example_realization();
        assert!((s.r + 2f64.ln()).abs() < 1e-15);
        let b = from_real_rows(2, 2, &[1.25, -0.75, -0.75, 1.25]);
        assert!(max_abs_diff(&s.b, &b) < 1e-12);
        assert!(s.bogoliubov_defect() < 1e-12);
        let t = realized_coupling_term(&s).unwrap();
        assert!(max_abs_diff(&t, &from_real_rows(2, 2, &[0.0, -0.5, -0.5, 0.0])) < 1e-12);
    }

    #[test]
    fn b_at_zero_is_identity() {
        assert!(max_abs_diff(&bogoliubov_b(0.0, 0.0, 0.0), &linalg::eye(2)) < 1e-15);
        assert!(matches!(
            realized_coupling_term(&SqueezerRealization::new(0.0, 0.0, 0.0, 1.0).unwrap()),
            Err(Error::SingularSqueezer)
        ));
    }

    #[test]
    fn zero_squeeze_gives_imaginary_diagonal() {
        let s = SqueezerRealization::new(0.0, 0.7, 1.3, 0.4).unwrap();
        let t = realized_coupling_term(&s).unwrap();
        assert_eq!(t[(0, 1)].norm(), 0.0);
        assert_eq!(t[(0, 0)].re, 0.0);
        assert!(t[(0, 0)].im != 0.0);
    }

    #[test]
    fn solve_example_controller() {
        let fx = dpa_fixture(4.5).unwrap();
        let s = solve_squeezer(&fx.k_example, 1.0 / 3.0).unwrap();
        assert!(s.alpha.abs() < 1e-9 && s.beta.abs() < 1e-9);
        assert!((s.r.sinh() + 0.75).abs() < 1e-9);
        assert!((kappa_tilde_for(&fx.k_example, s.r).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn closed_form_agrees_with_search() {
        // for p = 0: κ̃ v = 2|w|(√(1+v²) - 1) gives v = (κ̃/|w|) / (1 - κ̃²/(4|w|²))
        let k = DoubledMatrix::validate(
            linalg::zeros(1, 1),
            CMat::from_element(1, 1, c(0.3, -0.8)),
            DoubledKind::Hermitian,
        )
        .unwrap();
        let mag = (0.09f64 + 0.64).sqrt();
        let kt = 0.5;
        let v = (kt / mag) / (1.0 - kt * kt / (4.0 * mag * mag));
        let s = solve_squeezer(&k, kt).unwrap();
        assert!((s.r.sinh() + v).abs() < 1e-9);
    }

    #[test]
    fn zero_controller_and_bad_inputs() {
        let zero = DoubledMatrix::zeros(1, DoubledKind::Hermitian);
        assert!(matches!(solve_squeezer(&zero, 1.0), Err(Error::NoControllerNeeded)));
        let fx = dpa_fixture(4.5).unwrap();
        assert!(solve_squeezer(&fx.k_example, 0.0).is_err());
        assert!(matches!(
            solve_squeezer(&DoubledMatrix::identity(2), 1.0),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(solve_squeezer(&fx.k_example, 5.0), Err(Error::Unrealizable(_))));
    }

    #[test]
    fn diagonal_only_target() {
        let k = DoubledMatrix::validate(
            CMat::from_element(1, 1, real(0.4)),
            linalg::zeros(1, 1),
            DoubledKind::Hermitian,
        )
        .unwrap();
        let s = solve_squeezer(&k, 0.2).unwrap();
        assert_eq!(s.r, 0.0);
    }

    #[test]
    fn realized_loop_matches_oracle_drift() {
        for kappa in [4.5, 6.0, 8.0] {
            let fx = dpa_fixture(kappa).unwrap();
            let s = solve_squeezer(&fx.k_example, 1.0 / 3.0).unwrap();
            let qsde = closed_loop_qsde(kappa, &s).unwrap();
            let oracle = closed_loop_drift(&fx.system, &fx.delta, &fx.k_example).unwrap();
            assert!(max_abs_diff(&qsde, &oracle) < 1e-10);
        }
        let qsde = closed_loop_qsde(4.5, &example_realization()).unwrap();
        let mut ev: Vec<f64> = eigenvalues(&qsde).iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 2.75).abs() < 1e-10 && (ev[1] + 1.75).abs() < 1e-10);
    }
}
