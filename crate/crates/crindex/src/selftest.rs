//! Built-in validation suites and the independent oracles they rely on:
//! nested central finite differences for Wirtinger derivatives, a random
//! generator of real-valued expressions, and a bracketing scan for the
//! rank-one threshold. The CLI `selftest` subcommand and the verification
//! test suites both run through this module.

use crate::expr::{eval_complex, Expr};
use crate::indices::{rank_one_threshold, RankOne};
use crate::jet::jet_lift;
use crate::linalg::{eigh_ascending, eig_scale, min_eig, CMatrix, CVector, C64};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Finite-difference Wirtinger derivatives
// ---------------------------------------------------------------------------

/// One derivative direction: coordinate index and whether it is the
/// antiholomorphic side.
pub type Direction = (usize, bool);

fn shift(q: &[C64], j: usize, delta: C64) -> Vec<C64> {
    let mut out = q.to_vec();
    out[j] += delta;
    out
}

fn fd_once<F>(f: &F, q: &[C64], dir: Direction, h: f64) -> Option<C64>
where
    F: Fn(&[C64]) -> Option<C64>,
{
    let (j, anti) = dir;
    let step = |h: f64| -> Option<C64> {
        let re_p = f(&shift(q, j, C64::new(h, 0.0)))?;
        let re_m = f(&shift(q, j, C64::new(-h, 0.0)))?;
        let im_p = f(&shift(q, j, C64::new(0.0, h)))?;
        let im_m = f(&shift(q, j, C64::new(0.0, -h)))?;
        let dx = (re_p - re_m) / C64::new(2.0 * h, 0.0);
        let dy = (im_p - im_m) / C64::new(2.0 * h, 0.0);
        let i = C64::new(0.0, 1.0);
        Some(if anti {
            (dx + i * dy) * C64::new(0.5, 0.0)
        } else {
            (dx - i * dy) * C64::new(0.5, 0.0)
        })
    };
    // one Richardson pass: (4 D(h/2) - D(h)) / 3
    let coarse = step(h)?;
    let fine = step(h / 2.0)?;
    Some((C64::new(4.0, 0.0) * fine - coarse) / C64::new(3.0, 0.0))
}

fn fd_nested<F>(f: &F, q: &[C64], dirs: &[Direction], h: f64) -> Option<C64>
where
    F: Fn(&[C64]) -> Option<C64>,
{
    match dirs.split_first() {
        None => f(q),
        Some((&dir, rest)) => {
            let inner = |p: &[C64]| fd_nested(f, p, rest, h);
            fd_once(&inner, q, dir, h)
        }
    }
}

/// Mixed Wirtinger derivative of an expression by nested central
/// differences with one Richardson pass. The step widens with the total
/// order to stay above the rounding floor.
pub fn wirtinger_fd(expr: &Expr, q: &[C64], dirs: &[Direction]) -> Option<C64> {
    let h = match dirs.len() {
        0 | 1 => 1e-3,
        2 => 1e-3,
        _ => 6e-3,
    };
    let f = |p: &[C64]| eval_complex(expr, p).ok();
    fd_nested(&f, q, dirs, h)
}

// ---------------------------------------------------------------------------
// Random real-valued expressions
// ---------------------------------------------------------------------------

fn random_complex_expr(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> Expr {
    if depth == 0 {
        return if rng.gen_bool(0.8) {
            Expr::Coord(rng.gen_range(0..n))
        } else {
            Expr::Const(rng.gen_range(-1.2..1.2))
        };
    }
    match rng.gen_range(0..5) {
        0 => Expr::Conj(Box::new(random_complex_expr(rng, n, depth - 1))),
        1 => Expr::Add(
            Box::new(random_complex_expr(rng, n, depth - 1)),
            Box::new(random_complex_expr(rng, n, depth - 1)),
        ),
        2 => Expr::Sub(
            Box::new(random_complex_expr(rng, n, depth - 1)),
            Box::new(random_complex_expr(rng, n, depth - 1)),
        ),
        3 => Expr::Mul(
            Box::new(random_complex_expr(rng, n, depth - 1)),
            Box::new(random_complex_expr(rng, n, depth - 1)),
        ),
        _ => Expr::Coord(rng.gen_range(0..n)),
    }
}

fn positive_expr(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> Expr {
    // abs2(w) + c with c >= 0.5 stays positive on any neighborhood
    Expr::Add(
        Box::new(Expr::Abs2(Box::new(random_complex_expr(rng, n, depth)))),
        Box::new(Expr::Const(rng.gen_range(0.5..1.5))),
    )
}

/// Random real-valued expression with every node total on C^n: log/sqrt see
/// arguments bounded away from zero and denominators likewise.
pub fn random_real_expr(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> Expr {
    if depth == 0 {
        return match rng.gen_range(0..4) {
            0 => Expr::Const(rng.gen_range(-1.2..1.2)),
            1 => Expr::Re(Box::new(Expr::Coord(rng.gen_range(0..n)))),
            2 => Expr::Im(Box::new(Expr::Coord(rng.gen_range(0..n)))),
            _ => Expr::Abs2(Box::new(Expr::Coord(rng.gen_range(0..n)))),
        };
    }
    match rng.gen_range(0..12) {
        0 => Expr::Add(
            Box::new(random_real_expr(rng, n, depth - 1)),
            Box::new(random_real_expr(rng, n, depth - 1)),
        ),
        1 => Expr::Sub(
            Box::new(random_real_expr(rng, n, depth - 1)),
            Box::new(random_real_expr(rng, n, depth - 1)),
        ),
        2 => Expr::Mul(
            Box::new(random_real_expr(rng, n, depth - 1)),
            Box::new(random_real_expr(rng, n, depth - 1)),
        ),
        3 => Expr::Re(Box::new(random_complex_expr(rng, n, depth - 1))),
        4 => Expr::Im(Box::new(random_complex_expr(rng, n, depth - 1))),
        5 => Expr::Abs2(Box::new(random_complex_expr(rng, n, depth - 1))),
        6 => Expr::Exp(Box::new(Expr::Mul(
            Box::new(Expr::Const(0.35)),
            Box::new(random_real_expr(rng, n, depth - 1)),
        ))),
        7 => Expr::Log(Box::new(positive_expr(rng, n, depth - 1))),
        8 => Expr::Sqrt(Box::new(positive_expr(rng, n, depth - 1))),
        9 => Expr::Sin(Box::new(random_real_expr(rng, n, depth - 1))),
        10 => Expr::Cos(Box::new(random_real_expr(rng, n, depth - 1))),
        _ => Expr::Div(
            Box::new(random_real_expr(rng, n, depth - 1)),
            Box::new(positive_expr(rng, n, depth - 1)),
        ),
    }
}

/// Uniform point in the polydisc-like box of the given radius.
pub fn random_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)))
        .collect()
}

/// Random unitary matrix, Gram-Schmidt on a random complex square matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    loop {
        let raw = CMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        if let Some(u) = orthonormalize(&raw) {
            return u;
        }
    }
}

fn orthonormalize(m: &CMatrix) -> Option<CMatrix> {
    let n = m.nrows();
    let mut cols: Vec<CVector> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = m.column(j).into_owned();
        for c in &cols {
            let proj = c.dotc(&v);
            v -= c.map(|x| x * proj);
        }
        let norm = v.norm();
        if norm < 1e-6 {
            return None;
        }
        cols.push(v.map(|x| x / C64::new(norm, 0.0)));
    }
    let mut u = CMatrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        u.set_column(j, c);
    }
    Some(u)
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Outcome of one validation suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub cases: usize,
    pub max_err: f64,
    pub max_reality_defect: f64,
    pub failures: Vec<String>,
}

impl SuiteOutcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn random_dirs(rng: &mut ChaCha8Rng, n: usize) -> Vec<Direction> {
    let total = rng.gen_range(1..=3);
    (0..total)
        .map(|_| (rng.gen_range(0..n), rng.gen_bool(0.5)))
        .collect()
}

/// Compares jet coefficients against nested finite differences on random
/// (expression, point, multi-index) triples and tracks the reality defect.
/// Relative error is measured against max(1, |jet|, |fd|).
pub fn jet_fd_suite(triples: usize, seed: u64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2;
    let mut outcome = SuiteOutcome {
        cases: 0,
        max_err: 0.0,
        max_reality_defect: 0.0,
        failures: Vec::new(),
    };
    let mut expr = random_real_expr(&mut rng, n, 3);
    let mut jet_cache: Option<(Vec<C64>, crate::jet::WJet)> = None;
    for case in 0..triples {
        if case % 10 == 0 {
            expr = random_real_expr(&mut rng, n, 3);
            jet_cache = None;
        }
        if case % 5 == 0 {
            jet_cache = None;
        }
        if jet_cache.is_none() {
            let q = random_point(&mut rng, n, 0.8);
            match jet_lift(&expr, &q, 3) {
                Ok(jet) => jet_cache = Some((q, jet)),
                Err(_) => {
                    // regenerate on (rare) domain issues
                    expr = random_real_expr(&mut rng, n, 3);
                    continue;
                }
            }
        }
        let (q, jet) = jet_cache.as_ref().unwrap();
        outcome.max_reality_defect = outcome.max_reality_defect.max(jet.reality_defect());

        let dirs = random_dirs(&mut rng, n);
        let mut holo = vec![0usize; n];
        let mut anti = vec![0usize; n];
        for &(j, a) in &dirs {
            if a {
                anti[j] += 1;
            } else {
                holo[j] += 1;
            }
        }
        let from_jet = jet.derivative(&holo, &anti).unwrap();
        let Some(from_fd) = wirtinger_fd(&expr, q, &dirs) else {
            continue;
        };
        outcome.cases += 1;
        let err = (from_jet - from_fd).norm() / from_jet.norm().max(from_fd.norm()).max(1.0);
        outcome.max_err = outcome.max_err.max(err);
        if err > 1e-6 {
            outcome.failures.push(format!(
                "case {case}: dirs {dirs:?}, jet {from_jet}, fd {from_fd}, err {err:.3e} for `{expr}`"
            ));
        }
    }
    if outcome.max_reality_defect > 1e-10 {
        outcome.failures.push(format!(
            "reality defect {:.3e} exceeds 1e-10",
            outcome.max_reality_defect
        ));
    }
    outcome
}

// ---------------------------------------------------------------------------
// Rank-one grid oracle
// ---------------------------------------------------------------------------

/// Independent route for the rank-one threshold: direct eigenvalue
/// feasibility with exponential bracketing plus bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridOutcome {
    Inadmissible,
    Unbounded,
    Bounded(f64),
}

pub fn rank_one_grid_oracle(a: &CMatrix, v: &CVector, psd_tol: f64) -> GridOutcome {
    let (eigvals, _) = eigh_ascending(a);
    let scale = eig_scale(&eigvals);
    let floor = -psd_tol * scale;
    let feasible = |t: f64| -> bool {
        let m = a - (v * v.adjoint()).scale(t);
        min_eig(&m) >= floor
    };
    if !feasible(0.0) {
        return GridOutcome::Inadmissible;
    }
    let mut t_ok = 0.0;
    let mut t_bad = 1.0;
    while feasible(t_bad) {
        t_ok = t_bad;
        t_bad *= 2.0;
        if t_bad > 1e12 {
            return GridOutcome::Unbounded;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (t_ok + t_bad);
        if feasible(mid) {
            t_ok = mid;
        } else {
            t_bad = mid;
        }
        if t_bad - t_ok <= 1e-9 * t_bad.max(1.0) {
            break;
        }
    }
    GridOutcome::Bounded(t_ok)
}

fn random_psd_instance(
    rng: &mut ChaCha8Rng,
    psd_tol: f64,
) -> (CMatrix, CVector) {
    let r = rng.gen_range(1..=4);
    let q = random_unitary(rng, r);
    let mut eigvals = Vec::with_capacity(r);
    let negative = rng.gen_bool(0.15);
    for i in 0..r {
        let lambda = if negative && i == 0 {
            -rng.gen_range(0.1..1.0)
        } else if rng.gen_bool(0.3) {
            0.0
        } else {
            rng.gen_range(0.1..3.0)
        };
        eigvals.push(lambda);
    }
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(
        r,
        eigvals.iter().map(|&x| C64::new(x, 0.0)),
    ));
    let a = &q * diag * q.adjoint();
    let v = match rng.gen_range(0..4) {
        // strictly inside the range
        0 => {
            let w = CVector::from_fn(r, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            &a * w
        }
        // essentially zero
        1 => CVector::from_fn(r, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
        .scale(psd_tol * 0.25),
        // substantial component along a null eigenvector, when one exists
        2 => {
            let mut v = &a * CVector::from_fn(r, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            if let Some(null_idx) = eigvals.iter().position(|&l| l == 0.0) {
                let dir = q.column(null_idx).into_owned();
                v += dir.scale(rng.gen_range(0.2..1.0));
            }
            v
        }
        _ => CVector::from_fn(r, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }),
    };
    (a, v)
}

/// Compares the pseudoinverse-based threshold against the bracketing oracle
/// on random hermitian instances.
pub fn rank_one_suite(cases: usize, seed: u64) -> SuiteOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psd_tol = 1e-9;
    let mut outcome = SuiteOutcome {
        cases: 0,
        max_err: 0.0,
        max_reality_defect: 0.0,
        failures: Vec::new(),
    };
    for case in 0..cases {
        let (a, v) = random_psd_instance(&mut rng, psd_tol);
        let fast: RankOne = rank_one_threshold(&a, &v, psd_tol);
        let slow = rank_one_grid_oracle(&a, &v, psd_tol);
        outcome.cases += 1;
        let agree = match (fast.admissible, fast.t_max, slow) {
            (false, _, GridOutcome::Inadmissible) => true,
            (true, t, GridOutcome::Unbounded) if t.is_infinite() => true,
            // a v below the zero tolerance reads as "nothing to subtract"
            // while the scan still resolves a huge finite threshold
            (true, t, GridOutcome::Bounded(g)) if t.is_infinite() => g >= 1e8,
            (true, t, GridOutcome::Bounded(g)) if t.is_finite() => {
                let err = (t - g).abs() / (1.0 + t.min(g).abs());
                outcome.max_err = outcome.max_err.max(err);
                err <= 1e-6
            }
            // an out-of-range v makes the oracle threshold a tolerance-sized
            // positive number while the formula reports exactly 0
            (true, t, GridOutcome::Bounded(g)) if t == 0.0 => {
                outcome.max_err = outcome.max_err.max(g);
                g <= 1e-5
            }
            _ => false,
        };
        if !agree {
            outcome
                .failures
                .push(format!("case {case}: formula {fast:?} vs oracle {slow:?}"));
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_defining_function;

    #[test]
    fn fd_matches_hand_derivative() {
        let e = parse_defining_function("log(abs2(z1) + 1)", 2).unwrap();
        let q = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let d = wirtinger_fd(&e, &q, &[(0, false)]).unwrap();
        assert!((d - C64::new(0.5, 0.0)).norm() < 1e-9, "{d}");
    }

    #[test]
    fn jet_fd_suite_passes_smoke() {
        let outcome = jet_fd_suite(60, 1234);
        assert!(outcome.ok(), "failures: {:?}", outcome.failures);
        assert!(outcome.cases >= 50);
    }

    #[test]
    fn rank_one_suite_passes_smoke() {
        let outcome = rank_one_suite(120, 99);
        assert!(outcome.ok(), "failures: {:?}", outcome.failures);
    }
}
