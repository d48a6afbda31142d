//! Per-point index thresholds from the boundary forms, their aggregation
//! into the four index estimates, the search over conformal trivializations,
//! and the independent interior/exterior plurisubharmonicity oracles.
//!
//! The per-point kernel is a rank-one semidefinite feasibility question: the
//! largest t with A - t v v* still positive semidefinite. The two index
//! families read that threshold through the maps gamma = t/(1+t) (inside)
//! and gamma = s/(s-1) (outside).

use crate::config::{DomainSpec, GammaGrid, Tolerances};
use crate::expr::ExprError;
use crate::geometry::{
    adapted_frame, contract_covector, contract_form, dangelo_forms, framed_jet, levi_data,
    rho_jet_framed, BoundaryPoint, FormPair, GeomError, LeviData, UnitaryFrame,
};
use crate::jet::{JetError, WJet};
use crate::linalg::{eigh_ascending, eig_scale, hermitian_defect, CMatrix, CVector, C64};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::parallel::par_map;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("non-pseudoconvex sample at {point:?}: smallest Levi eigenvalue {min_eig:.3e}")]
    NonPseudoconvex { point: Vec<C64>, min_eig: f64 },
    #[error("oracle gamma {gamma} outside the valid range for the {side} side")]
    GammaRange { gamma: f64, side: &'static str },
    #[error("no {side} samples found at the configured distances")]
    NoSamples { side: &'static str },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Eval(#[from] ExprError),
}

// ---------------------------------------------------------------------------
// Rank-one threshold kernel
// ---------------------------------------------------------------------------

/// Result of the rank-one feasibility scan.
#[derive(Debug, Clone, Copy)]
pub struct RankOne {
    /// sup { t >= 0 : A - t v v* >= -psd_tol }; infinity when v ~ 0,
    /// 0 when v leaves the numerical range, -1.0 when A is not PSD.
    pub t_max: f64,
    pub admissible: bool,
    pub in_range: bool,
}

/// Computes sup { t >= 0 : A - t v v* is PSD within tolerance } through the
/// tolerance pseudoinverse: t = 1 / (v* A^+ v) when A is PSD and v lies in
/// its numerical range.
pub fn rank_one_threshold(a: &CMatrix, v: &CVector, psd_tol: f64) -> RankOne {
    let r = a.nrows();
    if r == 0 {
        return RankOne {
            t_max: f64::INFINITY,
            admissible: true,
            in_range: true,
        };
    }
    let (eigvals, eigvecs) = eigh_ascending(a);
    let scale = eig_scale(&eigvals);
    if eigvals[0] < -psd_tol * scale {
        return RankOne {
            t_max: -1.0,
            admissible: false,
            in_range: false,
        };
    }
    let vnorm = v.norm();
    if vnorm <= psd_tol {
        return RankOne {
            t_max: f64::INFINITY,
            admissible: true,
            in_range: true,
        };
    }
    let cut = psd_tol * scale;
    let coeffs = eigvecs.adjoint() * v;
    let mut null_mass_sq = 0.0;
    let mut pinv_quad = 0.0;
    for (i, &lambda) in eigvals.iter().enumerate() {
        let w = coeffs[i].norm_sqr();
        if lambda <= cut {
            null_mass_sq += w;
        } else {
            pinv_quad += w / lambda;
        }
    }
    if null_mass_sq.sqrt() > psd_tol * vnorm.max(1.0) {
        return RankOne {
            t_max: 0.0,
            admissible: true,
            in_range: false,
        };
    }
    if pinv_quad <= 0.0 {
        return RankOne {
            t_max: f64::INFINITY,
            admissible: true,
            in_range: true,
        };
    }
    RankOne {
        t_max: 1.0 / pinv_quad,
        admissible: true,
        in_range: true,
    }
}

// ---------------------------------------------------------------------------
// Per-point thresholds
// ---------------------------------------------------------------------------

/// Admissible-exponent summary at one boundary point.
#[derive(Debug, Clone, Copy)]
pub struct PointThreshold {
    /// Supremal gamma in [0, 1] admissible on the inside.
    pub gamma_df: f64,
    /// Infimal gamma in [1, inf] admissible on the outside.
    pub gamma_s: f64,
    pub df_strict_ok: bool,
    pub s_strict_ok: bool,
    pub marginal: bool,
    pub null_dim: usize,
}

impl PointThreshold {
    /// Threshold at a strictly pseudoconvex point: both conditions vacuous.
    pub fn vacuous(marginal: bool) -> PointThreshold {
        PointThreshold {
            gamma_df: 1.0,
            gamma_s: 1.0,
            df_strict_ok: true,
            s_strict_ok: true,
            marginal,
            null_dim: 0,
        }
    }
}

fn min_eig_and_scale(m: &CMatrix) -> (f64, f64) {
    let (eigvals, _) = eigh_ascending(m);
    (eigvals[0], eig_scale(&eigvals))
}

/// gamma_df = t/(1+t) for the largest admissible t, with strictness flag.
pub fn df_threshold(fp: &FormPair, tol: &Tolerances) -> (f64, bool) {
    let r1 = rank_one_threshold(&fp.a, &fp.v, tol.psd_tol);
    let gamma = if !r1.admissible {
        0.0
    } else if r1.t_max.is_infinite() {
        1.0
    } else {
        r1.t_max / (1.0 + r1.t_max)
    };
    let (min_eig, scale) = min_eig_and_scale(&fp.a);
    let strict = min_eig > tol.strict_margin * scale;
    (gamma, strict)
}

/// gamma_s = s/(s-1) for the largest admissible s of the mirrored problem.
pub fn steinness_threshold(fp: &FormPair, tol: &Tolerances) -> (f64, bool) {
    let neg = -fp.a.clone();
    let r1 = rank_one_threshold(&neg, &fp.v, tol.psd_tol);
    let gamma = if !r1.admissible {
        f64::INFINITY
    } else if r1.t_max.is_infinite() {
        1.0
    } else if r1.t_max <= 1.0 {
        f64::INFINITY
    } else {
        r1.t_max / (r1.t_max - 1.0)
    };
    let (min_eig, scale) = min_eig_and_scale(&neg);
    let strict = min_eig > tol.strict_margin * scale && r1.t_max > 1.0;
    (gamma, strict)
}

/// Assembles the threshold record at one analyzed point.
pub fn point_threshold(
    forms: Option<&FormPair>,
    levi: &LeviData,
    tol: &Tolerances,
) -> PointThreshold {
    match forms {
        None => PointThreshold::vacuous(levi.marginal),
        Some(fp) => {
            let (gamma_df, df_strict_ok) = df_threshold(fp, tol);
            let (gamma_s, s_strict_ok) = steinness_threshold(fp, tol);
            PointThreshold {
                gamma_df,
                gamma_s,
                df_strict_ok,
                s_strict_ok,
                marginal: levi.marginal,
                null_dim: levi.null_dim(),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Conformal transport
// ---------------------------------------------------------------------------

/// Transports the pair to the trivialization e^u eta: omega picks up the
/// tangential gradient of u and the hermitian form loses its tangential
/// complex Hessian, both contracted with the null basis. Affine in u.
pub fn conformal_transform(fp: &FormPair, u_jet: &WJet, null_basis: &CMatrix) -> FormPair {
    let n = u_jet.n();
    let mut grad = CVector::zeros(n - 1);
    let mut hess = CMatrix::zeros(n - 1, n - 1);
    for j in 0..n - 1 {
        grad[j] = u_jet.wirt(&[j], &[]);
        for k in 0..n - 1 {
            hess[(j, k)] = u_jet.wirt(&[j], &[k]);
        }
    }
    let v = &fp.v + contract_covector(&grad, null_basis);
    let a_raw = &fp.a - contract_form(&hess, null_basis);
    let defect = hermitian_defect(&a_raw);
    FormPair {
        v,
        a: (&a_raw + a_raw.adjoint()).scale(0.5),
        hermitian_defect: defect,
    }
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// The four aggregated index estimates for one trivialization.
#[derive(Debug, Clone, Copy)]
pub struct IndexCore {
    pub df_w: f64,
    /// Weak value when every weak point is strictly feasible, else 0.
    pub df_s: f64,
    pub s_w: f64,
    /// Weak value when every weak point is strictly feasible, else infinity.
    pub s_s: f64,
    pub n_weak_points: usize,
}

pub fn aggregate_indices(thresholds: &[PointThreshold]) -> IndexCore {
    let weak: Vec<&PointThreshold> = thresholds.iter().filter(|t| t.null_dim > 0).collect();
    let n_weak_points = weak.len();
    let df_w = weak
        .iter()
        .map(|t| t.gamma_df)
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let df_w = if n_weak_points == 0 { 1.0 } else { df_w };
    let df_s = if weak.iter().all(|t| t.df_strict_ok) {
        df_w
    } else {
        0.0
    };
    let s_w = if n_weak_points == 0 {
        1.0
    } else {
        weak.iter().map(|t| t.gamma_s).fold(1.0, f64::max)
    };
    let s_s = if weak.iter().all(|t| t.s_strict_ok) {
        s_w
    } else {
        f64::INFINITY
    };
    IndexCore {
        df_w,
        df_s,
        s_w,
        s_s,
        n_weak_points,
    }
}

// ---------------------------------------------------------------------------
// Per-sample analysis cache
// ---------------------------------------------------------------------------

/// Everything the index layer needs at one boundary sample, computed once:
/// frame, Levi data, the forms on Null, and the null-contracted jets of the
/// conformal basis functions.
#[derive(Debug, Clone)]
pub struct SampleAnalysis {
    pub point: BoundaryPoint,
    pub frame: UnitaryFrame,
    pub levi: LeviData,
    pub forms: Option<FormPair>,
    pub basis_grad: Vec<CVector>,
    pub basis_hess: Vec<CMatrix>,
}

/// Analyzes all samples, aborting on the first non-pseudoconvex one.
pub fn analyze_samples(
    spec: &DomainSpec,
    samples: &[BoundaryPoint],
) -> Result<Vec<SampleAnalysis>, IndexError> {
    let results = par_map(samples, |p| analyze_one(spec, p));
    results.into_iter().collect()
}

fn analyze_one(spec: &DomainSpec, p: &BoundaryPoint) -> Result<SampleAnalysis, IndexError> {
    let frame = adapted_frame(spec, p)?;
    let levi = levi_data(spec, p, &frame)?;
    if !levi.pseudoconvex {
        return Err(IndexError::NonPseudoconvex {
            point: p.p.clone(),
            min_eig: levi.eigvals[0],
        });
    }
    let forms = if levi.null_dim() > 0 {
        Some(dangelo_forms(spec, p, &frame, &levi)?)
    } else {
        None
    };
    let (mut basis_grad, mut basis_hess) = (Vec::new(), Vec::new());
    if forms.is_some() {
        let n = spec.n;
        for expr in &spec.conformal_basis {
            let jet = framed_jet(spec, expr, &p.p, Some(&frame.u), 2)?;
            let mut grad = CVector::zeros(n - 1);
            let mut hess = CMatrix::zeros(n - 1, n - 1);
            for j in 0..n - 1 {
                grad[j] = jet.wirt(&[j], &[]);
                for k in 0..n - 1 {
                    hess[(j, k)] = jet.wirt(&[j], &[k]);
                }
            }
            basis_grad.push(contract_covector(&grad, &levi.null_basis));
            basis_hess.push(contract_form(&hess, &levi.null_basis));
        }
    }
    Ok(SampleAnalysis {
        point: p.clone(),
        frame,
        levi,
        forms,
        basis_grad,
        basis_hess,
    })
}

/// Thresholds for the trivialization e^u eta_rho with u = sum c_i basis_i.
pub fn thresholds_at(
    analyses: &[SampleAnalysis],
    coeffs: &[f64],
    tol: &Tolerances,
) -> Vec<PointThreshold> {
    par_map(analyses, |s| match &s.forms {
        None => PointThreshold::vacuous(s.levi.marginal),
        Some(fp) => {
            let mut v = fp.v.clone();
            let mut a = fp.a.clone();
            for (i, &c) in coeffs.iter().enumerate() {
                let c = C64::new(c, 0.0);
                v += s.basis_grad[i].map(|g| g * c);
                a -= s.basis_hess[i].map(|h| h * c);
            }
            let transported = FormPair {
                v,
                a: (&a + a.adjoint()).scale(0.5),
                hermitian_defect: fp.hermitian_defect,
            };
            let (gamma_df, df_strict_ok) = df_threshold(&transported, tol);
            let (gamma_s, s_strict_ok) = steinness_threshold(&transported, tol);
            PointThreshold {
                gamma_df,
                gamma_s,
                df_strict_ok,
                s_strict_ok,
                marginal: s.levi.marginal,
                null_dim: s.levi.null_dim(),
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Trivialization search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Df,
    Steinness,
}

const S_CAP: f64 = 1e6;

/// Figure of merit for one trivialization: the aggregated weak index plus a
/// small strictness bonus. Used by the search and to pick which candidate
/// each side of the report quotes.
pub fn objective_score(thresholds: &[PointThreshold], objective: Objective, tol: &Tolerances) -> f64 {
    let core = aggregate_indices(thresholds);
    objective_score_with_core(&core, thresholds, objective, tol)
}

fn objective_score_with_core(core: &IndexCore, thresholds: &[PointThreshold], objective: Objective, tol: &Tolerances) -> f64 {
    let weak: Vec<&PointThreshold> = thresholds.iter().filter(|t| t.null_dim > 0).collect();
    if weak.is_empty() {
        return match objective {
            Objective::Df => 1.0,
            Objective::Steinness => -1.0,
        };
    }
    match objective {
        Objective::Df => {
            let strict_frac = weak.iter().filter(|t| t.df_strict_ok).count() as f64
                / weak.len() as f64;
            core.df_w + tol.strict_margin * strict_frac
        }
        Objective::Steinness => {
            let strict_frac = weak.iter().filter(|t| t.s_strict_ok).count() as f64
                / weak.len() as f64;
            -core.s_w.min(S_CAP) + tol.strict_margin * strict_frac
        }
    }
}

/// Searches coefficients of u = sum c_i basis_i maximizing the aggregated
/// weak index (plus a small strictness bonus) with a seeded simplex search
/// and 8 random restarts. The zero vector is always a candidate, so the
/// result never underperforms the base trivialization.
pub fn optimize_trivialization(
    spec: &DomainSpec,
    analyses: &[SampleAnalysis],
    objective: Objective,
    budget: usize,
    seed: u64,
) -> (Vec<f64>, Vec<PointThreshold>) {
    let dim = spec.conformal_basis.len();
    let tol = &spec.tolerances;
    if dim == 0 {
        return (Vec::new(), thresholds_at(analyses, &[], tol));
    }
    let budget = budget.max(1);
    let score_of = |c: &[f64]| -> f64 {
        let ths = thresholds_at(analyses, c, tol);
        objective_score(&ths, objective, tol)
    };

    let zero = vec![0.0; dim];
    let mut best_c = zero.clone();
    let mut best_score = score_of(&zero);

    let restarts = 8usize;
    let per_restart = (budget / restarts).max(1);
    for r in 0..restarts {
        let x0 = if r == 0 {
            zero.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37 * r as u64));
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let res = nelder_mead(
            |x| -score_of(x),
            &x0,
            0.5,
            &NelderMeadOptions {
                max_evals: per_restart,
                f_tol: 1e-14,
                x_tol: 1e-12,
            },
        );
        let score = -res.f;
        if score > best_score {
            best_score = score;
            best_c = res.x;
        }
    }
    let thresholds = thresholds_at(analyses, &best_c, tol);
    (best_c, thresholds)
}

// ---------------------------------------------------------------------------
// Interior / exterior plurisubharmonicity oracles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleSide {
    Interior,
    Exterior,
}

impl OracleSide {
    pub fn name(&self) -> &'static str {
        match self {
            OracleSide::Interior => "interior",
            OracleSide::Exterior => "exterior",
        }
    }
}

/// Outcome of one plurisubharmonicity sweep at a fixed exponent.
#[derive(Debug, Clone)]
pub struct OracleVerdict {
    pub gamma: f64,
    pub side: OracleSide,
    pub all_psd: bool,
    /// Smallest Hessian eigenvalue seen at each probe distance.
    pub min_eig_by_distance: Vec<(f64, f64)>,
    /// Up to five probe points where the Hessian failed to be PSD.
    pub witnesses: Vec<Vec<C64>>,
    pub checked: usize,
}

struct ProbeResult {
    per_distance: Vec<(f64, f64)>,
    violations: Vec<Vec<C64>>,
    checked: usize,
}

fn unit_outward_normal(spec: &DomainSpec, p: &BoundaryPoint) -> Result<CVector, IndexError> {
    let jet = rho_jet_framed(spec, &p.p, None, 1)?;
    let n = spec.n;
    let mut normal = CVector::zeros(n);
    for j in 0..n {
        normal[j] = jet.wirt(&[j], &[]).conj();
    }
    let norm = normal.norm();
    if norm < 1e-12 {
        return Err(GeomError::GradientVanished.into());
    }
    Ok(normal.map(|v| v / C64::new(norm, 0.0)))
}

fn probe_hessians(
    spec: &DomainSpec,
    p: &BoundaryPoint,
    gamma: f64,
    side: OracleSide,
) -> Result<ProbeResult, IndexError> {
    let n = spec.n;
    let psd_tol = spec.tolerances.psd_tol;
    let normal = unit_outward_normal(spec, p)?;
    let mut per_distance = Vec::new();
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for &d in &spec.oracle.distances {
        let sign = match side {
            OracleSide::Interior => -d,
            OracleSide::Exterior => d,
        };
        let q: Vec<C64> = p
            .p
            .iter()
            .enumerate()
            .map(|(j, z)| z + normal[j] * C64::new(sign, 0.0))
            .collect();
        let jet = rho_jet_framed(spec, &q, None, 2)?;
        let rho = crate::expr::coerce_real(jet.value())?;
        match side {
            OracleSide::Interior if rho >= 0.0 => continue,
            OracleSide::Exterior if rho <= 0.0 => continue,
            _ => {}
        }
        checked += 1;
        let mut grad = CVector::zeros(n);
        let mut hess = CMatrix::zeros(n, n);
        for j in 0..n {
            grad[j] = jet.wirt(&[j], &[]);
            for k in 0..n {
                hess[(j, k)] = jet.wirt(&[j], &[k]);
            }
        }
        // Hessian of -(-rho)^gamma inside, rho^gamma outside.
        let (w_h, w_r) = match side {
            OracleSide::Interior => (
                gamma * (-rho).powf(gamma - 1.0),
                gamma * (1.0 - gamma) * (-rho).powf(gamma - 2.0),
            ),
            OracleSide::Exterior => (
                gamma * rho.powf(gamma - 1.0),
                gamma * (gamma - 1.0) * rho.powf(gamma - 2.0),
            ),
        };
        let rank_one = &grad * grad.adjoint();
        let f_hess = hess.scale(w_h) + rank_one.scale(w_r);
        let (eigvals, _) = eigh_ascending(&f_hess);
        let scale = eig_scale(&eigvals);
        per_distance.push((d, eigvals[0]));
        if eigvals[0] < -psd_tol * scale {
            violations.push(q);
        }
    }
    Ok(ProbeResult {
        per_distance,
        violations,
        checked,
    })
}

fn run_oracle(
    spec: &DomainSpec,
    samples: &[BoundaryPoint],
    gamma: f64,
    side: OracleSide,
) -> Result<OracleVerdict, IndexError> {
    let results = par_map(samples, |p| probe_hessians(spec, p, gamma, side));
    let mut per_distance: Vec<(f64, f64)> = spec
        .oracle
        .distances
        .iter()
        .map(|&d| (d, f64::INFINITY))
        .collect();
    let mut witnesses = Vec::new();
    let mut checked = 0usize;
    for r in results {
        let r = r?;
        checked += r.checked;
        for (d, min_eig) in r.per_distance {
            if let Some(slot) = per_distance.iter_mut().find(|(dd, _)| *dd == d) {
                slot.1 = slot.1.min(min_eig);
            }
        }
        for w in r.violations {
            if witnesses.len() < 5 {
                witnesses.push(w);
            }
        }
    }
    if checked == 0 {
        return Err(IndexError::NoSamples { side: side.name() });
    }
    per_distance.retain(|(_, v)| v.is_finite());
    let all_psd = witnesses.is_empty();
    Ok(OracleVerdict {
        gamma,
        side,
        all_psd,
        min_eig_by_distance: per_distance,
        witnesses,
        checked,
    })
}

/// Checks whether -(-rho)^gamma is plurisubharmonic at the probe points
/// inside the domain.
pub fn interior_psh_oracle(
    spec: &DomainSpec,
    samples: &[BoundaryPoint],
    gamma: f64,
) -> Result<OracleVerdict, IndexError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(IndexError::GammaRange {
            gamma,
            side: "interior",
        });
    }
    run_oracle(spec, samples, gamma, OracleSide::Interior)
}

/// Checks whether rho^gamma is plurisubharmonic at the probe points outside
/// the closure.
pub fn exterior_psh_oracle(
    spec: &DomainSpec,
    samples: &[BoundaryPoint],
    gamma: f64,
) -> Result<OracleVerdict, IndexError> {
    if !(gamma > 1.0) {
        return Err(IndexError::GammaRange {
            gamma,
            side: "exterior",
        });
    }
    run_oracle(spec, samples, gamma, OracleSide::Exterior)
}

/// Result of the exponent bisection.
#[derive(Debug, Clone, Copy)]
pub struct ExponentSearch {
    pub exponent: f64,
    /// Whether the coarse scan looked monotone; when it does not, the value
    /// comes from a conservative full scan instead of bisection.
    pub monotone: bool,
}

/// Bisects the oracle predicate over the configured gamma window. Interior:
/// largest certified gamma (0 when even the window floor fails). Exterior:
/// smallest certified gamma (infinity when even the window ceiling fails).
pub fn oracle_exponent_search(
    spec: &DomainSpec,
    samples: &[BoundaryPoint],
    side: OracleSide,
) -> Result<ExponentSearch, IndexError> {
    let grid: &GammaGrid = match side {
        OracleSide::Interior => &spec.oracle.df_grid,
        OracleSide::Exterior => &spec.oracle.s_grid,
    };
    let pass = |gamma: f64| -> Result<bool, IndexError> {
        Ok(run_oracle(spec, samples, gamma, side)?.all_psd)
    };

    const COARSE: usize = 17;
    let gammas: Vec<f64> = (0..COARSE)
        .map(|i| grid.lo + (grid.hi - grid.lo) * i as f64 / (COARSE - 1) as f64)
        .collect();
    let mut flags = Vec::with_capacity(COARSE);
    for &g in &gammas {
        flags.push(pass(g)?);
    }

    match side {
        OracleSide::Interior => {
            if !flags[0] {
                return Ok(ExponentSearch {
                    exponent: 0.0,
                    monotone: is_prefix_true(&flags),
                });
            }
            if flags.iter().all(|&f| f) {
                return Ok(ExponentSearch {
                    exponent: grid.hi,
                    monotone: true,
                });
            }
            if !is_prefix_true(&flags) {
                // conservative full scan from below
                let mut g = grid.lo;
                let mut last_ok = grid.lo;
                while g <= grid.hi {
                    if !pass(g)? {
                        break;
                    }
                    last_ok = g;
                    g += grid.bisect_tol;
                }
                return Ok(ExponentSearch {
                    exponent: last_ok,
                    monotone: false,
                });
            }
            let k = flags.iter().position(|&f| !f).unwrap();
            let (mut lo_true, mut hi_false) = (gammas[k - 1], gammas[k]);
            while hi_false - lo_true > grid.bisect_tol {
                let mid = 0.5 * (lo_true + hi_false);
                if pass(mid)? {
                    lo_true = mid;
                } else {
                    hi_false = mid;
                }
            }
            Ok(ExponentSearch {
                exponent: lo_true,
                monotone: true,
            })
        }
        OracleSide::Exterior => {
            let last = COARSE - 1;
            if !flags[last] {
                return Ok(ExponentSearch {
                    exponent: f64::INFINITY,
                    monotone: is_suffix_true(&flags),
                });
            }
            if flags.iter().all(|&f| f) {
                return Ok(ExponentSearch {
                    exponent: grid.lo,
                    monotone: true,
                });
            }
            if !is_suffix_true(&flags) {
                let mut g = grid.hi;
                let mut last_ok = grid.hi;
                while g >= grid.lo {
                    if !pass(g)? {
                        break;
                    }
                    last_ok = g;
                    g -= grid.bisect_tol;
                }
                return Ok(ExponentSearch {
                    exponent: last_ok,
                    monotone: false,
                });
            }
            let k = flags.iter().position(|&f| f).unwrap();
            let (mut lo_false, mut hi_true) = (gammas[k - 1], gammas[k]);
            while hi_true - lo_false > grid.bisect_tol {
                let mid = 0.5 * (lo_false + hi_true);
                if pass(mid)? {
                    hi_true = mid;
                } else {
                    lo_false = mid;
                }
            }
            Ok(ExponentSearch {
                exponent: hi_true,
                monotone: true,
            })
        }
    }
}

fn is_prefix_true(flags: &[bool]) -> bool {
    let k = flags.iter().position(|&f| !f).unwrap_or(flags.len());
    flags[k..].iter().all(|&f| !f)
}

fn is_suffix_true(flags: &[bool]) -> bool {
    let k = flags.iter().position(|&f| f).unwrap_or(flags.len());
    flags[k..].iter().all(|&f| f)
}

/// Infimum over interior probes of the smallest eigenvalue of the complex
/// Hessian of -log(-rho), against the Euclidean metric. Positive values
/// certify the strong Oka condition on the sampled set.
pub fn strong_oka_margin(
    spec: &DomainSpec,
    samples: &[BoundaryPoint],
) -> Result<f64, IndexError> {
    let results = par_map(samples, |p| -> Result<(f64, usize), IndexError> {
        let n = spec.n;
        let normal = unit_outward_normal(spec, p)?;
        let mut local = f64::INFINITY;
        let mut checked = 0usize;
        for &d in &spec.oracle.distances {
            let q: Vec<C64> = p
                .p
                .iter()
                .enumerate()
                .map(|(j, z)| z - normal[j] * C64::new(d, 0.0))
                .collect();
            let jet = rho_jet_framed(spec, &q, None, 2)?;
            let rho = crate::expr::coerce_real(jet.value())?;
            if rho >= 0.0 {
                continue;
            }
            checked += 1;
            let mut grad = CVector::zeros(n);
            let mut hess = CMatrix::zeros(n, n);
            for j in 0..n {
                grad[j] = jet.wirt(&[j], &[]);
                for k in 0..n {
                    hess[(j, k)] = jet.wirt(&[j], &[k]);
                }
            }
            let rank_one = &grad * grad.adjoint();
            let m = hess.scale(1.0 / -rho) + rank_one.scale(1.0 / (rho * rho));
            let (eigvals, _) = eigh_ascending(&m);
            local = local.min(eigvals[0]);
        }
        Ok((local, checked))
    });
    let mut margin = f64::INFINITY;
    let mut total = 0usize;
    for r in results {
        let (local, checked) = r?;
        margin = margin.min(local);
        total += checked;
    }
    if total == 0 {
        return Err(IndexError::NoSamples { side: "interior" });
    }
    Ok(margin)
}
