//! Small dense helpers over nalgebra complex matrices.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Builds a complex matrix from real row-major data.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> CMat {
    assert_eq!(data.len(), rows * cols);
    CMat::from_fn(rows, cols, |i, j| real(data[i * cols + j]))
}

pub fn from_rows(rows: usize, cols: usize, data: &[C64]) -> CMat {
    assert_eq!(data.len(), rows * cols);
    CMat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    max_abs(&(a - b))
}

pub fn hermitian_deviation(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

/// `(m + m^†) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Ascending eigenvalues of a Hermitian matrix. Only the Hermitian part is used.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn lambda_max(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn lambda_min(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Eigenvalues of a general complex square matrix via complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    assert!(m.is_square());
    if m.nrows() == 0 {
        return Vec::new();
    }
    let schur = m.clone().schur();
    match schur.eigenvalues() {
        Some(ev) => ev.iter().copied().collect(),
        None => {
            let (_, t) = schur.unpack();
            (0..t.nrows()).map(|i| t[(i, i)]).collect()
        }
    }
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &CMat) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Principal square root of a Hermitian positive semidefinite matrix.
pub fn hermitian_sqrt(m: &CMat) -> CMat {
    let eig = hermitian_part(m).symmetric_eigen();
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| real(l.max(0.0).sqrt())),
    );
    let v = &eig.eigenvectors;
    v * CMat::from_diagonal(&d) * v.adjoint()
}

pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// Places `blocks` (row-major grid, `None` = zero) into one matrix.
pub fn block(rows: &[usize], cols: &[usize], blocks: &[Option<&CMat>]) -> CMat {
    assert_eq!(blocks.len(), rows.len() * cols.len());
    let nr: usize = rows.iter().sum();
    let nc: usize = cols.iter().sum();
    let mut out = zeros(nr, nc);
    let mut r0 = 0;
    for (bi, &h) in rows.iter().enumerate() {
        let mut c0 = 0;
        for (bj, &w) in cols.iter().enumerate() {
            if let Some(b) = blocks[bi * cols.len() + bj] {
                assert_eq!(b.shape(), (h, w), "block ({bi},{bj}) has wrong shape");
                out.view_mut((r0, c0), (h, w)).copy_from(b);
            }
            c0 += w;
        }
        r0 += h;
    }
    out
}

/// Hermitian block matrix from its lower-triangle blocks `(row, col, X)`
/// with `row >= col`; the upper triangle is filled with adjoints.
pub fn hermitian_block(sizes: &[usize], lower: Vec<(usize, usize, CMat)>) -> CMat {
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let mut out = zeros(total, total);
    for (bi, bj, x) in lower {
        assert!(bi >= bj, "only lower-triangle blocks are accepted");
        assert_eq!(x.shape(), (sizes[bi], sizes[bj]), "block ({bi},{bj}) has wrong shape");
        out.view_mut((offsets[bi], offsets[bj]), x.shape()).copy_from(&x);
        if bi != bj {
            out.view_mut((offsets[bj], offsets[bi]), (sizes[bj], sizes[bi]))
                .copy_from(&x.adjoint());
        }
    }
    out
}
