//! Doubled-form system matrices for linear quantum systems.
//!
//! A mode vector `a` is stacked with its adjoint into `[a; a^#]`; every
//! linear or quadratic object is then a structured matrix
//! `[[X1, X2], [X2^#, X1^#]]`. Hamiltonian matrices are stored without the
//! ½ prefactor of `H = ½ [a^† a^T] M [a; a^#]`, so `M`, `Δ` and `K` are
//! exactly the matrices entering `F = -iJM - ½ J N^† J N`.

use crate::error::{Error, Result};
use crate::linalg::{self, c, real, CMat};

/// Tolerance for Hermitian / symmetric / block-pattern checks.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Tolerance used by uncertainty-set membership.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Spectral abscissa at or above which a drift is treated as not Hurwitz.
pub const HURWITZ_TOL: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoubledKind {
    /// `X1 = X1^†`, `X2 = X2^T`; the assembled matrix is Hermitian.
    Hermitian,
    General,
}

/// A `2r×2c` matrix `[[X1, X2], [X2^#, X1^#]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubledMatrix {
    block1: CMat,
    block2: CMat,
    kind: DoubledKind,
}

impl DoubledMatrix {
    /// Validates the blocks and builds the doubled matrix.
    ///
    /// Hermitian kind needs square blocks with `X1 = X1^†` and `X2 = X2^T`.
    pub fn validate(x1: CMat, x2: CMat, kind: DoubledKind) -> Result<Self> {
        if x1.shape() != x2.shape() {
            return Err(Error::DimensionMismatch(format!(
                "blocks have shapes {:?} and {:?}",
                x1.shape(),
                x2.shape()
            )));
        }
        if kind == DoubledKind::Hermitian {
            if !x1.is_square() {
                return Err(Error::DimensionMismatch(format!(
                    "Hermitian doubled matrix needs square blocks, got {:?}",
                    x1.shape()
                )));
            }
            let herm = linalg::max_abs(&(&x1 - x1.adjoint()));
            if herm > STRUCTURE_TOL {
                return Err(Error::StructureViolation(format!(
                    "X1 is not Hermitian (deviation {herm:.3e})"
                )));
            }
            let sym = linalg::max_abs(&(&x2 - x2.transpose()));
            if sym > STRUCTURE_TOL {
                return Err(Error::StructureViolation(format!(
                    "X2 is not symmetric (deviation {sym:.3e})"
                )));
            }
        }
        Ok(Self {
            block1: x1,
            block2: x2,
            kind,
        })
    }

    /// Reads the blocks back out of a full matrix, checking the doubled
    /// pattern `[[X1, X2], [X2^#, X1^#]]` entrywise.
    pub fn from_full(m: &CMat, kind: DoubledKind) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows % 2 != 0 || cols % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "doubled matrix needs even dimensions, got {rows}x{cols}"
            )));
        }
        let (r, k) = (rows / 2, cols / 2);
        let x1 = m.view((0, 0), (r, k)).into_owned();
        let x2 = m.view((0, k), (r, k)).into_owned();
        let lower_left = m.view((r, 0), (r, k)).into_owned();
        let lower_right = m.view((r, k), (r, k)).into_owned();
        let dev = linalg::max_abs(&(&lower_left - x2.conjugate()))
            .max(linalg::max_abs(&(&lower_right - x1.conjugate())));
        if dev > STRUCTURE_TOL {
            return Err(Error::StructureViolation(format!(
                "block pattern broken (deviation {dev:.3e})"
            )));
        }
        Self::validate(x1, x2, kind)
    }

    pub fn zeros(n: usize, kind: DoubledKind) -> Self {
        Self {
            block1: linalg::zeros(n, n),
            block2: linalg::zeros(n, n),
            kind,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            block1: linalg::eye(n),
            block2: linalg::zeros(n, n),
            kind: DoubledKind::Hermitian,
        }
    }

    pub fn block1(&self) -> &CMat {
        &self.block1
    }

    pub fn block2(&self) -> &CMat {
        &self.block2
    }

    pub fn kind(&self) -> DoubledKind {
        self.kind
    }

    /// `(rows, cols)` of one block.
    pub fn block_shape(&self) -> (usize, usize) {
        self.block1.shape()
    }

    /// `(2r, 2c)`.
    pub fn shape(&self) -> (usize, usize) {
        let (r, k) = self.block1.shape();
        (2 * r, 2 * k)
    }

    pub fn assemble(&self) -> CMat {
        let (r, k) = self.block1.shape();
        let x1c = self.block1.conjugate();
        let x2c = self.block2.conjugate();
        linalg::block(
            &[r, r],
            &[k, k],
            &[Some(&self.block1), Some(&self.block2), Some(&x2c), Some(&x1c)],
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let kind = meet(self.kind, other.kind);
        Self::from_full(&(self.assemble() + other.assemble()), kind)
    }

    /// Product; always General kind since products of Hermitian matrices
    /// need not be Hermitian.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.shape().1 != other.shape().0 {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Self::from_full(&(self.assemble() * other.assemble()), DoubledKind::General)
    }

    pub fn adjoint(&self) -> Result<Self> {
        Self::from_full(&self.assemble().adjoint(), self.kind)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            block1: self.block1.map(|z| z * s),
            block2: self.block2.map(|z| z * s),
            kind: self.kind,
        }
    }

    /// Re-validates as Hermitian doubled.
    pub fn as_hermitian(&self) -> Result<Self> {
        Self::validate(self.block1.clone(), self.block2.clone(), DoubledKind::Hermitian)
    }
}

/// Real parameterisation of `n`-mode Hermitian doubled matrices:
/// `n` diagonal reals of `X1`, `(re, im)` pairs for the strict upper
/// triangle of `X1`, then `(re, im)` pairs for the upper triangle
/// (diagonal included) of the symmetric `X2`. That is `n² + n(n+1)` reals.
#[derive(Debug, Clone)]
pub struct HermitianDoubledBasis {
    n: usize,
    elements: Vec<CMat>,
}

impl HermitianDoubledBasis {
    pub fn new(n: usize) -> Self {
        let mut elements = Vec::with_capacity(n * n + n * (n + 1));
        let unit = |i: usize, j: usize, z: nalgebra::Complex<f64>| {
            let mut m = linalg::zeros(n, n);
            m[(i, j)] = z;
            m
        };
        let mut push = |x1: CMat, x2: CMat| {
            let d = DoubledMatrix::validate(x1, x2, DoubledKind::Hermitian)
                .expect("basis elements are Hermitian doubled");
            elements.push(d.assemble());
        };
        for i in 0..n {
            push(unit(i, i, real(1.0)), linalg::zeros(n, n));
        }
        for i in 0..n {
            for j in i + 1..n {
                push(unit(i, j, real(1.0)) + unit(j, i, real(1.0)), linalg::zeros(n, n));
                push(unit(i, j, c(0.0, 1.0)) + unit(j, i, c(0.0, -1.0)), linalg::zeros(n, n));
            }
        }
        for i in 0..n {
            for j in i..n {
                for z in [real(1.0), c(0.0, 1.0)] {
                    let mut x2 = unit(i, j, z);
                    if i != j {
                        x2[(j, i)] = z;
                    }
                    push(linalg::zeros(n, n), x2);
                }
            }
        }
        Self { n, elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Assembled `2n×2n` basis matrices.
    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    pub fn compose(&self, params: &[f64]) -> DoubledMatrix {
        assert_eq!(params.len(), self.len());
        let mut full = linalg::zeros(2 * self.n, 2 * self.n);
        for (b, &p) in self.elements.iter().zip(params) {
            full += b.map(|z| z * p);
        }
        let n = self.n;
        let x1 = linalg::hermitian_part(&full.view((0, 0), (n, n)).into_owned());
        let x2b = full.view((0, n), (n, n)).into_owned();
        let x2 = (&x2b + x2b.transpose()).scale(0.5);
        DoubledMatrix::validate(x1, x2, DoubledKind::Hermitian).expect("composition is Hermitian doubled")
    }

    /// Inverse of [`compose`](Self::compose).
    pub fn decompose(&self, m: &DoubledMatrix) -> Vec<f64> {
        let n = self.n;
        let (x1, x2) = (m.block1(), m.block2());
        let mut out = Vec::with_capacity(self.len());
        for i in 0..n {
            out.push(x1[(i, i)].re);
        }
        for i in 0..n {
            for j in i + 1..n {
                out.push(x1[(i, j)].re);
                out.push(x1[(i, j)].im);
            }
        }
        for i in 0..n {
            for j in i..n {
                out.push(x2[(i, j)].re);
                out.push(x2[(i, j)].im);
            }
        }
        out
    }
}

fn meet(a: DoubledKind, b: DoubledKind) -> DoubledKind {
    if a == DoubledKind::Hermitian && b == DoubledKind::Hermitian {
        DoubledKind::Hermitian
    } else {
        DoubledKind::General
    }
}

/// Coupling `L = [N1 N2] [a; a^#]` with `N1, N2` of shape `m×n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOperator {
    n1: CMat,
    n2: CMat,
}

impl CouplingOperator {
    pub fn new(n1: CMat, n2: CMat) -> Result<Self> {
        if n1.shape() != n2.shape() {
            return Err(Error::DimensionMismatch(format!(
                "N1 is {:?} but N2 is {:?}",
                n1.shape(),
                n2.shape()
            )));
        }
        Ok(Self { n1, n2 })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            n1: linalg::zeros(m, n),
            n2: linalg::zeros(m, n),
        }
    }

    pub fn n1(&self) -> &CMat {
        &self.n1
    }

    pub fn n2(&self) -> &CMat {
        &self.n2
    }

    pub fn channels(&self) -> usize {
        self.n1.nrows()
    }

    pub fn modes(&self) -> usize {
        self.n1.ncols()
    }

    /// `N = [[N1, N2], [N2^#, N1^#]]`, shape `2m×2n`.
    pub fn doubled(&self) -> CMat {
        DoubledMatrix {
            block1: self.n1.clone(),
            block2: self.n2.clone(),
            kind: DoubledKind::General,
        }
        .assemble()
    }

    /// `Ñ = [N1 N2]`, shape `m×2n`.
    pub fn tilde(&self) -> CMat {
        let (m, n) = self.n1.shape();
        linalg::block(&[m], &[n, n], &[Some(&self.n1), Some(&self.n2)])
    }
}

/// `J = diag(I, -I)`, size `2n`.
pub fn j_matrix(n: usize) -> CMat {
    CMat::from_fn(2 * n, 2 * n, |i, j| {
        if i != j {
            real(0.0)
        } else if i < n {
            real(1.0)
        } else {
            real(-1.0)
        }
    })
}

/// `Σ = [[0, I], [I, 0]]`, size `2n`.
pub fn sigma_matrix(n: usize) -> CMat {
    CMat::from_fn(2 * n, 2 * n, |i, j| {
        if (i < n && j == i + n) || (i >= n && j + n == i) {
            real(1.0)
        } else {
            real(0.0)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UncertaintyClass {
    /// `‖Δ‖ ≤ 2/γ` (small-gain path).
    NormBound,
    /// `0 ⪯ Δ ⪯ (4/γ) I` (Popov path).
    PositiveBound,
}

impl UncertaintyClass {
    /// The uncertainty level used for the amplifier example with this class.
    pub fn example_gamma(self) -> f64 {
        match self {
            UncertaintyClass::NormBound => 1.0,
            UncertaintyClass::PositiveBound => 2.0,
        }
    }
}

/// Nominal plant plus uncertainty description. The scattering matrix is
/// always the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainSystem {
    m: DoubledMatrix,
    coupling: CouplingOperator,
    e: DoubledMatrix,
    gamma: f64,
    delta: f64,
    class: UncertaintyClass,
}

impl UncertainSystem {
    pub fn new(
        m: DoubledMatrix,
        coupling: CouplingOperator,
        e: DoubledMatrix,
        gamma: f64,
        delta: f64,
        class: UncertaintyClass,
    ) -> Result<Self> {
        let m = m.as_hermitian()?;
        let (n, n2) = m.block_shape();
        debug_assert_eq!(n, n2);
        if n == 0 {
            return Err(Error::DimensionMismatch("system has zero modes".into()));
        }
        if coupling.modes() != n {
            return Err(Error::DimensionMismatch(format!(
                "coupling acts on {} modes, M on {n}",
                coupling.modes()
            )));
        }
        if e.block_shape().1 != n {
            return Err(Error::DimensionMismatch(format!(
                "E acts on {} modes, M on {n}",
                e.block_shape().1
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be non-negative, got {delta}")));
        }
        Ok(Self {
            m,
            coupling,
            e,
            gamma,
            delta,
            class,
        })
    }

    pub fn modes(&self) -> usize {
        self.m.block_shape().0
    }

    /// Number of perturbation channels `m'` (Δ is `2m'×2m'`).
    pub fn perturbation_channels(&self) -> usize {
        self.e.block_shape().0
    }

    pub fn m(&self) -> &DoubledMatrix {
        &self.m
    }

    pub fn coupling(&self) -> &CouplingOperator {
        &self.coupling
    }

    pub fn e(&self) -> &DoubledMatrix {
        &self.e
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn class(&self) -> UncertaintyClass {
        self.class
    }

    pub fn with_uncertainty(&self, class: UncertaintyClass, gamma: f64) -> Result<Self> {
        Self::new(self.m.clone(), self.coupling.clone(), self.e.clone(), gamma, self.delta, class)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.m.clone(), self.coupling.clone(), self.e.clone(), self.gamma, delta, self.class)
    }

    pub fn with_e(&self, e: DoubledMatrix) -> Result<Self> {
        Self::new(self.m.clone(), self.coupling.clone(), e, self.gamma, self.delta, self.class)
    }

    /// Nominal drift `F`.
    pub fn drift(&self) -> CMat {
        compute_f(&self.m, &self.coupling).expect("dimensions validated at construction")
    }

    /// Noise matrix `D`, see [`compute_d`].
    pub fn noise(&self) -> CMat {
        compute_d(&self.coupling)
    }

    /// Fails with `NotHurwitz` unless the nominal drift is strictly stable.
    pub fn require_hurwitz(&self) -> Result<CMat> {
        let f = self.drift();
        let abscissa = linalg::spectral_abscissa(&f);
        if abscissa >= HURWITZ_TOL {
            return Err(Error::NotHurwitz(abscissa));
        }
        Ok(f)
    }
}

/// Quadratic cost weights: `R ≻ 0` and the controller weighting `ρ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    r: CMat,
    rho: f64,
}

impl CostSpec {
    pub fn new(r: CMat, rho: f64) -> Result<Self> {
        let dev = linalg::hermitian_deviation(&r);
        if dev > STRUCTURE_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let min_eig = linalg::lambda_min(&r);
        if min_eig <= 0.0 {
            return Err(Error::NonPositiveR(min_eig));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        Ok(Self { r, rho })
    }

    /// `R = I_{2n}`.
    pub fn identity(n: usize, rho: f64) -> Result<Self> {
        Self::new(linalg::eye(2 * n), rho)
    }

    pub fn r(&self) -> &CMat {
        &self.r
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// `F = -iJM - ½ J N^† J N` with `N` the doubled coupling matrix.
pub fn compute_f(m: &DoubledMatrix, coupling: &CouplingOperator) -> Result<CMat> {
    let (n, _) = m.block_shape();
    if coupling.modes() != n {
        return Err(Error::DimensionMismatch(format!(
            "M has {n} modes, coupling {}",
            coupling.modes()
        )));
    }
    let j = j_matrix(n);
    let jc = j_matrix(coupling.channels());
    let nd = coupling.doubled();
    let hamiltonian = (&j * m.assemble()).map(|z| z * c(0.0, -1.0));
    let damping = (&j * nd.adjoint() * &jc * &nd).scale(0.5);
    Ok(hamiltonian - damping)
}

/// `D = J N^† diag(I, 0) N J`, so that `Tr(P D)` is the constant term of
/// the generator acting on `V = x^† P x`.
pub fn compute_d(coupling: &CouplingOperator) -> CMat {
    let n = coupling.modes();
    let m = coupling.channels();
    let j = j_matrix(n);
    let mut select = linalg::zeros(2 * m, 2 * m);
    for i in 0..m {
        select[(i, i)] = real(1.0);
    }
    let nd = coupling.doubled();
    &j * nd.adjoint() * select * nd * &j
}

/// The constant commutator `[z, L] = E J Σ Ñ^T`, shape `2m'×m`.
pub fn commutator_zl(e: &DoubledMatrix, coupling: &CouplingOperator) -> Result<CMat> {
    let n = coupling.modes();
    if e.block_shape().1 != n {
        return Err(Error::DimensionMismatch(format!(
            "E acts on {} modes, coupling on {n}",
            e.block_shape().1
        )));
    }
    Ok(e.assemble() * j_matrix(n) * sigma_matrix(n) * coupling.tilde().transpose())
}

/// Popov bound offset `(4θ/γ) Tr(Ñ^# Σ J E^† E J Σ Ñ^T)`.
pub fn popov_offset(sys: &UncertainSystem, theta: f64) -> f64 {
    let n = sys.modes();
    let j = j_matrix(n);
    let s = sigma_matrix(n);
    let nt = sys.coupling().tilde();
    let e = sys.e().assemble();
    let inner = nt.conjugate() * &s * &j * e.adjoint() * &e * &j * &s * nt.transpose();
    4.0 * theta / sys.gamma() * linalg::trace_re(&inner)
}

/// Membership of a Hermitian doubled `Δ` in the class's uncertainty set.
pub fn delta_membership(delta: &DoubledMatrix, class: UncertaintyClass, gamma: f64) -> bool {
    let full = delta.assemble();
    if linalg::hermitian_deviation(&full) > STRUCTURE_TOL {
        return false;
    }
    let ev = linalg::hermitian_eigenvalues(&full);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    match class {
        UncertaintyClass::NormBound => lo.abs().max(hi.abs()) <= 2.0 / gamma + MEMBERSHIP_TOL,
        UncertaintyClass::PositiveBound => lo >= -MEMBERSHIP_TOL && hi <= 4.0 / gamma + MEMBERSHIP_TOL,
    }
}

/// The degenerate parametric amplifier example.
#[derive(Debug, Clone)]
pub struct DpaFixture {
    pub kappa: f64,
    /// Configured for the small-gain path (`NormBound`, γ = 1, δ = 0).
    pub system: UncertainSystem,
    /// `Δ = [[1, 0.5i], [-0.5i, 1]]`.
    pub delta: DoubledMatrix,
    /// `K = [[0, -0.5i], [0.5i, 0]]`.
    pub k_example: DoubledMatrix,
}

impl DpaFixture {
    /// The same plant set up for `class` with its example γ.
    pub fn system_for(&self, class: UncertaintyClass) -> UncertainSystem {
        self.system
            .with_uncertainty(class, class.example_gamma())
            .expect("fixture values are valid")
    }
}

fn scalar(z: nalgebra::Complex<f64>) -> CMat {
    CMat::from_element(1, 1, z)
}

/// Single-mode amplifier with damping `kappa`: `M = [[-1, 0.5i], [-0.5i, -1]]`,
/// `N1 = √κ`, `N2 = 0`, `E = I`.
///
/// `kappa = 0` is accepted (a lossless cavity, whose drift is not Hurwitz).
pub fn dpa_fixture(kappa: f64) -> Result<DpaFixture> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::NonPositiveKappa(kappa));
    }
    let m = DoubledMatrix::validate(scalar(real(-1.0)), scalar(c(0.0, 0.5)), DoubledKind::Hermitian)?;
    let coupling = CouplingOperator::new(scalar(real(kappa.sqrt())), scalar(real(0.0)))?;
    let e = DoubledMatrix::identity(1);
    let system = UncertainSystem::new(m, coupling, e, 1.0, 0.0, UncertaintyClass::NormBound)?;
    let delta = DoubledMatrix::validate(scalar(real(1.0)), scalar(c(0.0, 0.5)), DoubledKind::Hermitian)?;
    let k_example = DoubledMatrix::validate(scalar(real(0.0)), scalar(c(0.0, -0.5)), DoubledKind::Hermitian)?;
    Ok(DpaFixture {
        kappa,
        system,
        delta,
        k_example,
    })
}
