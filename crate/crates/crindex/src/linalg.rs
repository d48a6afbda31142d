//! Hermitian eigendecomposition helpers and unitary frame construction on
//! top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigendecomposition of a hermitian matrix, eigenvalues ascending and
/// eigenvector columns permuted to match. The input is symmetrized first to
/// absorb rounding skew.
pub fn eigh_ascending(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a hermitian matrix.
pub fn min_eig(m: &CMatrix) -> f64 {
    let (values, _) = eigh_ascending(m);
    values[0]
}

/// ||m - m*||_F / (1 + ||m||_F).
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm() / (1.0 + m.norm())
}

/// Scale used by relative PSD tests: max(1, largest |eigenvalue|).
pub fn eig_scale(values: &[f64]) -> f64 {
    values
        .iter()
        .fold(1.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Deterministic unitary whose last column is the given unit vector. The
/// remaining columns are the standard basis vectors, minus the one most
/// parallel to `last`, orthonormalized against it in order.
pub fn unitary_with_last_column(last: &CVector) -> CMatrix {
    let n = last.len();
    let norm = last.norm();
    assert!(norm > 0.0, "cannot build a frame around the zero vector");
    let unit = last.scale(1.0 / norm);

    let mut pivot = 0usize;
    let mut best = -1.0;
    for j in 0..n {
        let mag = unit[j].norm();
        if mag > best {
            best = mag;
            pivot = j;
        }
    }

    let mut columns: Vec<CVector> = Vec::with_capacity(n);
    for j in 0..n {
        if j == pivot {
            continue;
        }
        let mut e = CVector::zeros(n);
        e[j] = C64::new(1.0, 0.0);
        // Gram-Schmidt against the normal column and the accepted columns.
        let proj = unit.dotc(&e);
        e -= unit.scale_complex(proj);
        for col in &columns {
            let proj = col.dotc(&e);
            e -= col.scale_complex(proj);
        }
        let len = e.norm();
        assert!(len > 1e-8, "degenerate frame completion");
        columns.push(e.scale(1.0 / len));
    }

    let mut u = CMatrix::zeros(n, n);
    for (j, col) in columns.iter().enumerate() {
        u.set_column(j, col);
    }
    u.set_column(n - 1, &unit);
    u
}

trait ScaleComplex {
    fn scale_complex(&self, factor: C64) -> Self;
}

impl ScaleComplex for CVector {
    fn scale_complex(&self, factor: C64) -> CVector {
        self.map(|v| v * factor)
    }
}

/// ||u u* - I||_F, the unitarity defect.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    (u * u.adjoint() - CMatrix::identity(n, n)).norm()
}
