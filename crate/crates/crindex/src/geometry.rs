//! Boundary geometry of M = {rho = 0}: Newton projection and sampling,
//! adapted unitary frames, the Levi form with its null space, and the pair
//! (dbar_b omega, omega) restricted to the null space for the trivialization
//! induced by rho.

use crate::config::DomainSpec;
use crate::expr::{eval_expr, ExprError};
use crate::jet::{jet_lift_frame, JetError, WJet};
use crate::linalg::{
    eigh_ascending, eig_scale, hermitian_defect, unitary_with_last_column, CMatrix, CVector, C64,
};
use crate::optim::{nelder_mead, NelderMeadOptions};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("Newton projection did not converge within {iters} iterations (last |rho| = {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("gradient of rho vanished along the projection path")]
    GradientVanished,
    #[error("boundary sampler starved: found {found} points, needed at least {required}")]
    Starvation { found: usize, required: usize },
    #[error("d'Angelo forms need a non-trivial null space")]
    NullEmpty,
    #[error(transparent)]
    Eval(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// A point on M with the norm of the (1,0)-gradient of rho there.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub p: Vec<C64>,
    pub grad_norm: f64,
}

/// Unitary chart adapted to a boundary point: after w = U*(z - p) the
/// tangential first derivatives of rho vanish and the normal one is real
/// positive. The normal direction is the last coordinate.
#[derive(Debug, Clone)]
pub struct UnitaryFrame {
    pub u: CMatrix,
}

/// Levi form data in an adapted frame.
#[derive(Debug, Clone)]
pub struct LeviData {
    /// (n-1) x (n-1) hermitian matrix of tangential complex Hessian entries.
    pub levi: CMatrix,
    /// Ascending eigenvalues.
    pub eigvals: Vec<f64>,
    pub eigvecs: CMatrix,
    /// Orthonormal columns spanning the (numerically) null eigenspaces.
    pub null_basis: CMatrix,
    pub pseudoconvex: bool,
    /// Smallest retained eigenvalue sits within a factor 10 of the null cut.
    pub marginal: bool,
}

impl LeviData {
    pub fn null_dim(&self) -> usize {
        self.null_basis.ncols()
    }
}

/// The hermitian pair on the null space: `a` is the form dbar_b omega and
/// `v` the values of omega on the null basis.
#[derive(Debug, Clone)]
pub struct FormPair {
    pub v: CVector,
    pub a: CMatrix,
    pub hermitian_defect: f64,
}

// -- evaluation helpers ------------------------------------------------------

/// rho value at a point, ambient unitary applied.
pub fn rho_at(spec: &DomainSpec, q: &[C64]) -> Result<f64, ExprError> {
    match &spec.ambient_unitary {
        None => eval_expr(&spec.rho, q),
        Some(r) => {
            let rotated = apply_matrix(r, q);
            eval_expr(&spec.rho, &rotated)
        }
    }
}

fn apply_matrix(m: &CMatrix, q: &[C64]) -> Vec<C64> {
    let v = CVector::from_column_slice(q);
    (m * v).iter().copied().collect()
}

/// Jet of rho (with the ambient unitary folded in) in the chart
/// `w -> p + frame * w`.
pub fn rho_jet_framed(
    spec: &DomainSpec,
    p: &[C64],
    frame: Option<&CMatrix>,
    order: usize,
) -> Result<WJet, JetError> {
    framed_jet(spec, &spec.rho, p, frame, order)
}

/// Same chart logic for an arbitrary expression (conformal basis functions).
pub fn framed_jet(
    spec: &DomainSpec,
    expr: &crate::expr::Expr,
    p: &[C64],
    frame: Option<&CMatrix>,
    order: usize,
) -> Result<WJet, JetError> {
    match &spec.ambient_unitary {
        None => match frame {
            None => crate::jet::jet_lift(expr, p, order),
            Some(u) => jet_lift_frame(expr, p, u, order),
        },
        Some(r) => {
            let rotated = apply_matrix(r, p);
            let combined = match frame {
                None => r.clone(),
                Some(u) => r * u,
            };
            jet_lift_frame(expr, &rotated, &combined, order)
        }
    }
}

/// (1,0)-gradient of rho at q: the vector of d rho / d z_j.
fn gradient(spec: &DomainSpec, q: &[C64]) -> Result<(f64, CVector), GeomError> {
    let jet = rho_jet_framed(spec, q, None, 1)?;
    let n = spec.n;
    let mut grad = CVector::zeros(n);
    for j in 0..n {
        grad[j] = jet.wirt(&[j], &[]);
    }
    let value = crate::expr::coerce_real(jet.value())?;
    Ok((value, grad))
}

// -- projection and sampling -------------------------------------------------

/// Newton projection onto M along the real gradient of rho:
/// q <- q - rho(q) grad(q) / |grad(q)|^2 on realified coordinates.
pub fn project_to_boundary(spec: &DomainSpec, q0: &[C64]) -> Result<BoundaryPoint, GeomError> {
    let mut q = q0.to_vec();
    let max_iters = spec.max_newton_iters();
    let tol = spec.sampling.newton_tol;
    // Where rho goes flat the residual alone can accept points far from M,
    // so the estimated distance |rho| / |grad_R rho| must be small too.
    let step_tol = tol.sqrt();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let (value, grad) = gradient(spec, &q)?;
        let grad_norm = grad.norm();
        if grad_norm < 1e-12 {
            return Err(GeomError::GradientVanished);
        }
        residual = value.abs();
        let point_scale = 1.0 + q.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let distance_estimate = residual / (2.0 * grad_norm);
        if residual <= tol * (1.0 + grad_norm) && distance_estimate <= step_tol * point_scale {
            return Ok(BoundaryPoint {
                p: q,
                grad_norm,
            });
        }
        // complex form of the realified Newton step
        let scale = value / (2.0 * grad_norm * grad_norm);
        for j in 0..q.len() {
            q[j] -= grad[j].conj() * C64::new(scale, 0.0);
        }
    }
    Err(GeomError::NoConvergence {
        iters: max_iters,
        residual,
    })
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Draws uniform starts in the box, projects them onto M, de-duplicates, and
/// then runs the weak-stratum refinement when enabled. Deterministic for a
/// fixed seed.
pub fn sample_boundary(spec: &DomainSpec) -> Result<Vec<BoundaryPoint>, GeomError> {
    sample_boundary_seeded(spec, spec.sampling.seed)
}

/// Same with an explicit seed override.
pub fn sample_boundary_seeded(spec: &DomainSpec, seed: u64) -> Result<Vec<BoundaryPoint>, GeomError> {
    let count = spec.count();
    let radius = spec.sampling.box_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<BoundaryPoint> = Vec::with_capacity(count);
    let max_attempts = 40 * count;
    for _ in 0..max_attempts {
        if points.len() >= count {
            break;
        }
        let start: Vec<C64> = (0..spec.n)
            .map(|_| C64::new(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)))
            .collect();
        let projected = match project_to_boundary(spec, &start) {
            Ok(p) => p,
            Err(GeomError::NoConvergence { .. }) | Err(GeomError::GradientVanished) => continue,
            Err(GeomError::Eval(ExprError::Domain(_)))
            | Err(GeomError::Eval(ExprError::DivisionByZero)) => continue,
            Err(e) => return Err(e),
        };
        if points.iter().all(|q| dist(&q.p, &projected.p) > 1e-6) {
            points.push(projected);
        }
    }
    if points.len() * 4 < count {
        return Err(GeomError::Starvation {
            found: points.len(),
            required: count.div_ceil(4),
        });
    }
    if spec.sampling.weak_seek {
        weak_seek(spec, &mut points, seed)?;
    }
    Ok(points)
}

/// Smallest Levi eigenvalue relative to the null-cut scale at a point.
fn levi_ratio(spec: &DomainSpec, p: &BoundaryPoint) -> Result<f64, GeomError> {
    let frame = adapted_frame(spec, p)?;
    let levi = levi_data(spec, p, &frame)?;
    let scale = eig_scale(&levi.eigvals);
    Ok(levi.eigvals[0] / scale)
}

/// Hunts for degenerate boundary points. Uniform sampling cannot hit a
/// measure-zero weak stratum, so this minimizes the smallest Levi
/// eigenvalue over M with a simplex search started from the flattest
/// samples, and appends any point that lands below the null cut.
fn weak_seek(spec: &DomainSpec, points: &mut Vec<BoundaryPoint>, _seed: u64) -> Result<(), GeomError> {
    let starts = spec.sampling.weak_seek_starts as usize;
    let budget = spec.sampling.weak_seek_budget as usize;
    if starts == 0 || budget == 0 || points.is_empty() {
        return Ok(());
    }
    let cut = spec.tolerances.null_eig_rel_tol;

    let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        ranked.push((i, levi_ratio(spec, p)?));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let objective = |x: &[f64]| -> f64 {
        let q: Vec<C64> = x
            .chunks_exact(2)
            .map(|c| C64::new(c[0], c[1]))
            .collect();
        match project_to_boundary(spec, &q).and_then(|p| levi_ratio(spec, &p)) {
            Ok(r) => r,
            Err(_) => f64::INFINITY,
        }
    };

    let mut found: Vec<BoundaryPoint> = Vec::new();
    for &(idx, ratio) in ranked.iter().take(starts) {
        if ratio <= cut {
            continue; // already a weak point, nothing to refine
        }
        let start = &points[idx];
        let x0: Vec<f64> = start.p.iter().flat_map(|z| [z.re, z.im]).collect();
        let res = nelder_mead(
            objective,
            &x0,
            0.1,
            &NelderMeadOptions {
                max_evals: budget,
                f_tol: 0.0,
                x_tol: 1e-14,
            },
        );
        if res.f > cut {
            continue;
        }
        let q: Vec<C64> = res
            .x
            .chunks_exact(2)
            .map(|c| C64::new(c[0], c[1]))
            .collect();
        if let Ok(p) = project_to_boundary(spec, &q) {
            let fresh = points.iter().chain(found.iter()).all(|e| dist(&e.p, &p.p) > 1e-6);
            if fresh {
                found.push(p);
            }
        }
    }
    points.extend(found);
    Ok(())
}

// -- frames, Levi form, d'Angelo forms ----------------------------------------

/// Builds the rotation-only adapted frame at a boundary point: the last
/// column of U is the unit vector along (d rho / d zbar_j), so that in
/// w = U*(z - p) coordinates the tangential gradient vanishes and
/// d rho / d w_n (0) = |grad| > 0.
pub fn adapted_frame(spec: &DomainSpec, p: &BoundaryPoint) -> Result<UnitaryFrame, GeomError> {
    let (_, grad) = gradient(spec, &p.p)?;
    if grad.norm() < 1e-12 {
        return Err(GeomError::GradientVanished);
    }
    let antiholo = grad.map(|g| g.conj());
    Ok(UnitaryFrame {
        u: unitary_with_last_column(&antiholo),
    })
}

/// Levi matrix on the tangential (1,0)-space in the adapted frame, with its
/// eigendecomposition and null basis.
pub fn levi_data(
    spec: &DomainSpec,
    p: &BoundaryPoint,
    frame: &UnitaryFrame,
) -> Result<LeviData, GeomError> {
    let n = spec.n;
    let jet = rho_jet_framed(spec, &p.p, Some(&frame.u), 2)?;
    let mut levi = CMatrix::zeros(n - 1, n - 1);
    for j in 0..n - 1 {
        for k in 0..n - 1 {
            levi[(j, k)] = jet.wirt(&[j], &[k]);
        }
    }
    let (eigvals, eigvecs) = eigh_ascending(&levi);
    let scale = eig_scale(&eigvals);
    let max_eig = eigvals.last().copied().unwrap_or(0.0);
    let cut = spec.tolerances.null_eig_rel_tol * max_eig.max(1.0);
    let pseudoconvex = eigvals[0] >= -spec.tolerances.psd_tol * scale;
    let null_count = eigvals.iter().filter(|&&v| v <= cut).count();
    let null_basis = eigvecs.columns(0, null_count).into_owned();
    let marginal = eigvals
        .iter()
        .find(|&&v| v > cut)
        .map(|&v| v <= 10.0 * cut)
        .unwrap_or(false);
    Ok(LeviData {
        levi,
        eigvals,
        eigvecs,
        null_basis,
        pseudoconvex,
        marginal,
    })
}

/// Contracts a sesquilinear form matrix (tangential indices) with the null
/// basis: out[alpha][beta] = sum_jk N[j][alpha] F[j][k] conj(N[k][beta]).
pub fn contract_form(f: &CMatrix, null_basis: &CMatrix) -> CMatrix {
    null_basis.transpose() * f * null_basis.map(|v| v.conj())
}

/// Contracts a (1,0)-covector with the null basis.
pub fn contract_covector(v: &CVector, null_basis: &CMatrix) -> CVector {
    null_basis.transpose() * v
}

/// Evaluates the d'Angelo pair on the null space at a boundary point.
///
/// With g = d rho / d wbar_n as a function of the adapted coordinates,
/// omega has tangential coefficients g_{w_j} / g and the hermitian form is
/// -(d^2 log g / dw_j dwbar_k), both contracted with the null basis; the
/// orientation makes the form agree with the inward Hessian limit of
/// -log(-rho), so it is the one the index inequalities constrain.
pub fn dangelo_forms(
    spec: &DomainSpec,
    p: &BoundaryPoint,
    frame: &UnitaryFrame,
    levi: &LeviData,
) -> Result<FormPair, GeomError> {
    let n = spec.n;
    let r = levi.null_dim();
    if r == 0 {
        return Err(GeomError::NullEmpty);
    }
    let jet = rho_jet_framed(spec, &p.p, Some(&frame.u), 3)?;
    let g0 = jet.wirt(&[], &[n - 1]);
    if g0.norm() < 1e-300 {
        return Err(GeomError::GradientVanished);
    }
    let mut v_full = CVector::zeros(n - 1);
    let mut a_full = CMatrix::zeros(n - 1, n - 1);
    for j in 0..n - 1 {
        let g_j = jet.wirt(&[j], &[n - 1]);
        v_full[j] = g_j / g0;
        for k in 0..n - 1 {
            let g_jk = jet.wirt(&[j], &[k, n - 1]);
            let g_k = jet.wirt(&[], &[k, n - 1]);
            a_full[(j, k)] = -(g_jk * g0 - g_j * g_k) / (g0 * g0);
        }
    }
    let v = contract_covector(&v_full, &levi.null_basis);
    let a = contract_form(&a_full, &levi.null_basis);
    let defect = hermitian_defect(&a);
    let symmetrized = (&a + a.adjoint()).scale(0.5);
    Ok(FormPair {
        v,
        a: symmetrized,
        hermitian_defect: defect,
    })
}
