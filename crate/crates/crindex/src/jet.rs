//! Truncated Wirtinger jets.
//!
//! A jet holds every mixed derivative d^{|a|+|b|} f / dz^a dzbar^b of an
//! expression up to a total order (at most 3) at one point, propagated
//! exactly through the expression tree. Internally the 2n variables
//! (z_1..z_n, zbar_1..zbar_n) are treated as independent and coefficients
//! are stored in Taylor form (derivative divided by a! b!), so products are
//! plain truncated convolutions and elementary functions reduce to
//! univariate series composition.
//!
//! [`jet_lift_frame`] lifts through an affine chart `w -> f(p + U w)`, which
//! is how adapted boundary frames and ambient rotations are realized: the
//! coordinate nodes simply become linear jets with row `U[j][.]`.

use crate::expr::{Expr, ExprError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

pub type C64 = Complex64;

#[derive(Debug, Error)]
pub enum JetError {
    #[error("jet order {0} out of supported range 1..=3")]
    OrderOutOfRange(usize),
    #[error("derivative multi-index exceeds jet order {order}")]
    IndexOutOfOrder { order: usize },
    #[error("multi-index length {got} does not match dimension {n}")]
    IndexLength { got: usize, n: usize },
    #[error(transparent)]
    Eval(#[from] ExprError),
}

/// Shared index tables for jets of a fixed dimension and order.
#[derive(Debug)]
pub struct JetSpace {
    pub n: usize,
    pub order: usize,
    indices: Vec<Box<[u8]>>,
    position: HashMap<Box<[u8]>, usize>,
    /// (i, j, k) with index_i + index_j = index_k; drives multiplication.
    mult: Vec<(u32, u32, u32)>,
    /// Position of the mirrored index (b, a) for each (a, b).
    conj_perm: Vec<usize>,
    /// a! * b! per index, converting Taylor coefficients to derivatives.
    factorial: Vec<f64>,
}

fn enumerate_indices(m: usize, order: usize) -> Vec<Box<[u8]>> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; m];
    for d in 0..=order {
        fill(&mut out, &mut cur, 0, d as u8);
    }
    return out;

    fn fill(out: &mut Vec<Box<[u8]>>, cur: &mut Vec<u8>, slot: usize, left: u8) {
        if slot == cur.len() {
            if left == 0 {
                out.push(cur.clone().into_boxed_slice());
            }
            return;
        }
        for e in 0..=left {
            cur[slot] = e;
            fill(out, cur, slot + 1, left - e);
        }
        cur[slot] = 0;
    }
}

impl JetSpace {
    fn build(n: usize, order: usize) -> JetSpace {
        let m = 2 * n;
        let indices = enumerate_indices(m, order);
        let mut position = HashMap::with_capacity(indices.len());
        for (i, idx) in indices.iter().enumerate() {
            position.insert(idx.clone(), i);
        }
        let degree: Vec<u8> = indices
            .iter()
            .map(|idx| idx.iter().map(|&e| e as u32).sum::<u32>() as u8)
            .collect();
        let mut mult = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if (degree[i] + degree[j]) as usize > order {
                    continue;
                }
                let sum: Box<[u8]> = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
                let k = position[&sum];
                mult.push((i as u32, j as u32, k as u32));
            }
        }
        let conj_perm = indices
            .iter()
            .map(|idx| {
                let mut sw = vec![0u8; m];
                sw[..n].copy_from_slice(&idx[n..]);
                sw[n..].copy_from_slice(&idx[..n]);
                position[sw.as_slice()]
            })
            .collect();
        let factorial = indices
            .iter()
            .map(|idx| idx.iter().map(|&e| FACT[e as usize]).product())
            .collect();
        JetSpace {
            n,
            order,
            indices,
            position,
            mult,
            conj_perm,
            factorial,
        }
    }

    pub fn get(n: usize, order: usize) -> Result<Arc<JetSpace>, JetError> {
        if !(1..=3).contains(&order) {
            return Err(JetError::OrderOutOfRange(order));
        }
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        Ok(guard
            .entry((n, order))
            .or_insert_with(|| Arc::new(JetSpace::build(n, order)))
            .clone())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    fn pos_of(&self, key: &[u8]) -> Option<usize> {
        self.position.get(key).copied()
    }
}

const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

/// Truncated Wirtinger jet of a function at a point.
#[derive(Debug, Clone)]
pub struct WJet {
    space: Arc<JetSpace>,
    /// Ambient point the jet was taken at (before any frame).
    pub base_point: Vec<C64>,
    /// Taylor coefficients, one per index of the space.
    taylor: Vec<C64>,
}

impl WJet {
    fn zeroed(space: &Arc<JetSpace>, base_point: &[C64]) -> WJet {
        WJet {
            space: space.clone(),
            base_point: base_point.to_vec(),
            taylor: vec![C64::new(0.0, 0.0); space.len()],
        }
    }

    fn constant(space: &Arc<JetSpace>, base_point: &[C64], value: C64) -> WJet {
        let mut jet = WJet::zeroed(space, base_point);
        jet.taylor[0] = value;
        jet
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    /// Value of the function at the base point.
    pub fn value(&self) -> C64 {
        self.taylor[0]
    }

    /// Derivative for exponent multi-indices `a` (holomorphic) and `b`
    /// (antiholomorphic), each of length n.
    pub fn derivative(&self, a: &[usize], b: &[usize]) -> Result<C64, JetError> {
        let n = self.space.n;
        if a.len() != n || b.len() != n {
            return Err(JetError::IndexLength {
                got: a.len().max(b.len()),
                n,
            });
        }
        let total: usize = a.iter().sum::<usize>() + b.iter().sum::<usize>();
        if total > self.space.order {
            return Err(JetError::IndexOutOfOrder {
                order: self.space.order,
            });
        }
        let mut key = vec![0u8; 2 * n];
        for j in 0..n {
            key[j] = a[j] as u8;
            key[n + j] = b[j] as u8;
        }
        let pos = self
            .space
            .pos_of(&key)
            .ok_or(JetError::IndexOutOfOrder {
                order: self.space.order,
            })?;
        Ok(self.taylor[pos] * self.space.factorial[pos])
    }

    /// Derivative along listed directions, e.g. `wirt(&[0], &[1, 1])` is
    /// d^3 / dw_0 dwbar_1 dwbar_1.
    pub fn wirt(&self, holo: &[usize], anti: &[usize]) -> C64 {
        let n = self.space.n;
        let mut key = vec![0u8; 2 * n];
        for &j in holo {
            key[j] += 1;
        }
        for &k in anti {
            key[n + k] += 1;
        }
        let pos = self
            .space
            .pos_of(&key)
            .expect("direction list exceeds jet order");
        self.taylor[pos] * self.space.factorial[pos]
    }

    /// Max relative defect of the reality condition
    /// `coeff(a,b) = conj(coeff(b,a))`; ~0 for jets of real-valued functions.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &c) in self.taylor.iter().enumerate() {
            let mirrored = self.taylor[self.space.conj_perm[i]];
            let defect = (c - mirrored.conj()).norm();
            worst = worst.max(defect / (1.0 + c.norm().max(mirrored.norm())));
        }
        worst
    }

    fn assert_compatible(&self, other: &WJet) {
        assert!(
            self.space.n == other.space.n && self.space.order == other.space.order,
            "jet spaces differ"
        );
    }

    pub fn add(&self, other: &WJet) -> WJet {
        self.assert_compatible(other);
        let mut out = self.clone();
        for (t, o) in out.taylor.iter_mut().zip(other.taylor.iter()) {
            *t += o;
        }
        out
    }

    pub fn sub(&self, other: &WJet) -> WJet {
        self.assert_compatible(other);
        let mut out = self.clone();
        for (t, o) in out.taylor.iter_mut().zip(other.taylor.iter()) {
            *t -= o;
        }
        out
    }

    pub fn scale(&self, factor: C64) -> WJet {
        let mut out = self.clone();
        for t in out.taylor.iter_mut() {
            *t *= factor;
        }
        out
    }

    /// alpha * self + beta * other, coefficientwise.
    pub fn linear_combination(alpha: f64, a: &WJet, beta: f64, b: &WJet) -> WJet {
        a.assert_compatible(b);
        let mut out = a.scale(C64::new(alpha, 0.0));
        for (t, o) in out.taylor.iter_mut().zip(b.taylor.iter()) {
            *t += C64::new(beta, 0.0) * o;
        }
        out
    }

    pub fn mul(&self, other: &WJet) -> WJet {
        self.assert_compatible(other);
        let mut out = WJet::zeroed(&self.space, &self.base_point);
        for &(i, j, k) in &self.space.mult {
            out.taylor[k as usize] += self.taylor[i as usize] * other.taylor[j as usize];
        }
        out
    }

    pub fn conj(&self) -> WJet {
        let mut out = WJet::zeroed(&self.space, &self.base_point);
        for (i, &c) in self.taylor.iter().enumerate() {
            out.taylor[self.space.conj_perm[i]] = c.conj();
        }
        out
    }

    /// Composes with a univariate series: coeffs[k] = phi^(k)(g0) / k!.
    fn compose_series(&self, coeffs: &[C64]) -> WJet {
        let mut nilpotent = self.clone();
        nilpotent.taylor[0] = C64::new(0.0, 0.0);
        let mut acc = WJet::constant(&self.space, &self.base_point, coeffs[coeffs.len() - 1]);
        for k in (0..coeffs.len() - 1).rev() {
            acc = acc.mul(&nilpotent);
            acc.taylor[0] += coeffs[k];
        }
        acc
    }

    fn series(&self, f: impl Fn(C64, usize) -> C64) -> Vec<C64> {
        (0..=self.space.order).map(|k| f(self.value(), k)).collect()
    }

    pub fn recip(&self) -> Result<WJet, JetError> {
        let g0 = self.value();
        if g0.norm() < 1e-300 {
            return Err(ExprError::DivisionByZero.into());
        }
        let coeffs = self.series(|g0, k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            C64::new(sign, 0.0) / g0.powi(k as i32 + 1)
        });
        Ok(self.compose_series(&coeffs))
    }

    pub fn div(&self, other: &WJet) -> Result<WJet, JetError> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn powi(&self, k: i32) -> Result<WJet, JetError> {
        if k == 0 {
            return Ok(WJet::constant(
                &self.space,
                &self.base_point,
                C64::new(1.0, 0.0),
            ));
        }
        if k < 0 {
            return self.powi(-k)?.recip();
        }
        let mut base = self.clone();
        let mut exp = k as u32;
        let mut acc: Option<WJet> = None;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = Some(match acc {
                    Some(a) => a.mul(&base),
                    None => base.clone(),
                });
            }
            exp >>= 1;
            if exp > 0 {
                base = base.mul(&base);
            }
        }
        Ok(acc.unwrap())
    }

    pub fn exp(&self) -> WJet {
        let e = self.value().exp();
        let coeffs = self.series(|_, k| e / FACT_C(k));
        self.compose_series(&coeffs)
    }

    pub fn sin(&self) -> WJet {
        let (s, c) = (self.value().sin(), self.value().cos());
        let cycle = [s, c, -s, -c];
        let coeffs = self.series(|_, k| cycle[k % 4] / FACT_C(k));
        self.compose_series(&coeffs)
    }

    pub fn cos(&self) -> WJet {
        let (s, c) = (self.value().sin(), self.value().cos());
        let cycle = [c, -s, -c, s];
        let coeffs = self.series(|_, k| cycle[k % 4] / FACT_C(k));
        self.compose_series(&coeffs)
    }

    pub fn ln(&self) -> Result<WJet, JetError> {
        let g0 = self.value();
        check_positive_real(g0, "log")?;
        let coeffs = self.series(|g0, k| {
            if k == 0 {
                C64::new(g0.re.ln(), 0.0)
            } else {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                C64::new(sign / k as f64, 0.0) / g0.powi(k as i32)
            }
        });
        Ok(self.compose_series(&coeffs))
    }

    pub fn sqrt(&self) -> Result<WJet, JetError> {
        let g0 = self.value();
        check_positive_real(g0, "sqrt")?;
        let s = g0.re.sqrt();
        // phi^(k)(x)/k! for phi = sqrt at x = g0
        let table = [
            C64::new(s, 0.0),
            C64::new(0.5 / s, 0.0),
            C64::new(-1.0 / (8.0 * s.powi(3)), 0.0),
            C64::new(1.0 / (16.0 * s.powi(5)), 0.0),
        ];
        let coeffs: Vec<C64> = table[..=self.space.order].to_vec();
        Ok(self.compose_series(&coeffs))
    }
}

#[allow(non_snake_case)]
fn FACT_C(k: usize) -> C64 {
    C64::new(FACT[k], 0.0)
}

fn check_positive_real(v: C64, what: &str) -> Result<(), JetError> {
    if v.im.abs() > 1e-10 * (1.0 + v.norm()) {
        return Err(ExprError::Domain(format!("{what} of a non-real argument ({v})")).into());
    }
    if v.re <= 0.0 {
        return Err(ExprError::Domain(format!(
            "{what} of a non-positive argument ({})",
            v.re
        ))
        .into());
    }
    Ok(())
}

struct LiftCtx<'a> {
    space: Arc<JetSpace>,
    point: &'a [C64],
    frame: Option<&'a DMatrix<C64>>,
}

impl<'a> LiftCtx<'a> {
    fn coord(&self, j: usize) -> WJet {
        let n = self.space.n;
        let mut jet = WJet::constant(&self.space, self.point, self.point[j]);
        let mut key = vec![0u8; 2 * n];
        for k in 0..n {
            key[k] = 1;
            let pos = self.space.pos_of(&key).unwrap();
            jet.taylor[pos] = match self.frame {
                Some(u) => u[(j, k)],
                None => {
                    if j == k {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }
            };
            key[k] = 0;
        }
        jet
    }

    fn lift(&self, e: &Expr) -> Result<WJet, JetError> {
        use Expr::*;
        Ok(match e {
            Const(c) => WJet::constant(&self.space, self.point, C64::new(*c, 0.0)),
            Coord(j) => self.coord(*j),
            Conj(e) => self.lift(e)?.conj(),
            Re(e) => {
                let v = self.lift(e)?;
                v.add(&v.conj()).scale(C64::new(0.5, 0.0))
            }
            Im(e) => {
                let v = self.lift(e)?;
                v.sub(&v.conj()).scale(C64::new(0.0, -0.5))
            }
            Abs2(e) => {
                let v = self.lift(e)?;
                v.mul(&v.conj())
            }
            Neg(e) => self.lift(e)?.scale(C64::new(-1.0, 0.0)),
            Add(a, b) => self.lift(a)?.add(&self.lift(b)?),
            Sub(a, b) => self.lift(a)?.sub(&self.lift(b)?),
            Mul(a, b) => self.lift(a)?.mul(&self.lift(b)?),
            Div(a, b) => self.lift(a)?.div(&self.lift(b)?)?,
            Pow(e, k) => self.lift(e)?.powi(*k)?,
            Exp(e) => self.lift(e)?.exp(),
            Log(e) => self.lift(e)?.ln()?,
            Sin(e) => self.lift(e)?.sin(),
            Cos(e) => self.lift(e)?.cos(),
            Sqrt(e) => self.lift(e)?.sqrt()?,
        })
    }
}

/// Jet of `expr` at `point`, all Wirtinger derivatives up to `order`.
pub fn jet_lift(expr: &Expr, point: &[C64], order: usize) -> Result<WJet, JetError> {
    jet_lift_impl(expr, point, None, order)
}

/// Jet of `w -> expr(point + frame * w)` at w = 0. `frame` is n x n; it does
/// not need to be unitary, though every caller in this crate passes one.
pub fn jet_lift_frame(
    expr: &Expr,
    point: &[C64],
    frame: &DMatrix<C64>,
    order: usize,
) -> Result<WJet, JetError> {
    jet_lift_impl(expr, point, Some(frame), order)
}

fn jet_lift_impl(
    expr: &Expr,
    point: &[C64],
    frame: Option<&DMatrix<C64>>,
    order: usize,
) -> Result<WJet, JetError> {
    let n = point.len();
    if let Some(u) = frame {
        assert_eq!(u.nrows(), n);
        assert_eq!(u.ncols(), n);
    }
    let space = JetSpace::get(n, order)?;
    let ctx = LiftCtx {
        space,
        point,
        frame,
    };
    ctx.lift(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_defining_function;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn abs2_second_order_coefficients() {
        let e = parse_defining_function("abs2(z1)", 2).unwrap();
        let p = [c(0.3, -0.7), c(0.0, 0.0)];
        let jet = jet_lift(&e, &p, 2).unwrap();
        // f = z1 zbar1: f_z1 = zbar1, f_zbar1 = z1, f_{z1 zbar1} = 1
        assert_relative_eq!(
            jet.derivative(&[1, 0], &[0, 0]).unwrap().re,
            p[0].conj().re
        );
        assert_relative_eq!(
            jet.derivative(&[1, 0], &[0, 0]).unwrap().im,
            p[0].conj().im
        );
        assert_relative_eq!(jet.derivative(&[0, 0], &[1, 0]).unwrap().re, p[0].re);
        let mixed = jet.derivative(&[1, 0], &[1, 0]).unwrap();
        assert_relative_eq!(mixed.re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(mixed.im, 0.0, epsilon = 1e-14);
        // all remaining second-order coefficients vanish
        for (a, b) in [([2, 0], [0, 0]), ([0, 0], [2, 0]), ([1, 1], [0, 0])] {
            let v = jet.derivative(&a, &b).unwrap();
            assert!(v.norm() < 1e-14, "expected zero, got {v}");
        }
    }

    #[test]
    fn log_gradient_closed_form() {
        // d/dz1 log(|z1|^2 + 1) = zbar1 / (|z1|^2 + 1) = 0.5 at z1 = 1
        let e = parse_defining_function("log(abs2(z1) + 1)", 2).unwrap();
        let jet = jet_lift(&e, &[c(1.0, 0.0), c(0.0, 0.0)], 2).unwrap();
        let d = jet.derivative(&[1, 0], &[0, 0]).unwrap();
        assert_relative_eq!(d.re, 0.5, epsilon = 1e-13);
        assert_relative_eq!(d.im, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn quartic_third_order() {
        // f = (z1 zbar1)^2: d^3 f / dz1^2 dzbar1 = 4 zbar1 = 4 at z1 = 1
        let e = parse_defining_function("abs2(z1)^2", 2).unwrap();
        let jet = jet_lift(&e, &[c(1.0, 0.0), c(0.0, 0.0)], 3).unwrap();
        let d = jet.derivative(&[2, 0], &[1, 0]).unwrap();
        assert_relative_eq!(d.re, 4.0, epsilon = 1e-13);
        assert_relative_eq!(d.im, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn jet_derivative_basics() {
        let seven = parse_defining_function("7", 2).unwrap();
        let jet = jet_lift(&seven, &[c(1.0, 2.0), c(0.0, 0.0)], 2).unwrap();
        assert_eq!(jet.derivative(&[0, 0], &[0, 0]).unwrap(), c(7.0, 0.0));

        let z1 = crate::expr::parse_unchecked("z1", 2).unwrap();
        let jet = jet_lift(&z1, &[c(0.3, 0.4), c(0.0, 0.0)], 2).unwrap();
        assert_eq!(jet.derivative(&[1, 0], &[0, 0]).unwrap(), c(1.0, 0.0));
        assert_eq!(jet.derivative(&[0, 0], &[1, 0]).unwrap(), c(0.0, 0.0));

        let zb = crate::expr::parse_unchecked("conj(z1)", 2).unwrap();
        let jet = jet_lift(&zb, &[c(0.3, 0.4), c(0.0, 0.0)], 2).unwrap();
        assert_eq!(jet.derivative(&[0, 0], &[1, 0]).unwrap(), c(1.0, 0.0));

        assert!(matches!(
            jet.derivative(&[2, 0], &[1, 0]),
            Err(JetError::IndexOutOfOrder { .. })
        ));
    }

    #[test]
    fn order_out_of_range() {
        let e = parse_defining_function("abs2(z1)", 2).unwrap();
        assert!(matches!(
            jet_lift(&e, &[c(0.0, 0.0), c(0.0, 0.0)], 4),
            Err(JetError::OrderOutOfRange(4))
        ));
    }

    #[test]
    fn reality_defect_small_on_real_expressions() {
        let corpus = [
            "abs2(z2) - 1",
            "exp(-abs2(z1))*(abs2(z2) - 1)",
            "2*re(z2) + abs2(z1)^3",
            "sin(re(z1)) + sqrt(abs2(z2) + 1)",
        ];
        for text in corpus {
            let e = parse_defining_function(text, 2).unwrap();
            let jet = jet_lift(&e, &[c(0.4, -0.2), c(0.9, 0.3)], 3).unwrap();
            assert!(
                jet.reality_defect() < 1e-10,
                "defect {} for {text}",
                jet.reality_defect()
            );
        }
    }

    #[test]
    fn linearity_is_exact() {
        let f = parse_defining_function("abs2(z1)^2 + re(z1*conj(z2))", 2).unwrap();
        let g = parse_defining_function("exp(-abs2(z2))*(abs2(z1) - 1)", 2).unwrap();
        let p = [c(0.5, -0.3), c(0.2, 0.8)];
        let (alpha, beta) = (1.7, -0.4);
        let combined = crate::expr::parse_unchecked(
            &format!("1.7*({f}) + (-0.4)*({g})"),
            2,
        )
        .unwrap();
        let jf = jet_lift(&f, &p, 3).unwrap();
        let jg = jet_lift(&g, &p, 3).unwrap();
        let direct = jet_lift(&combined, &p, 3).unwrap();
        let lin = WJet::linear_combination(alpha, &jf, beta, &jg);
        for i in 0..direct.taylor.len() {
            assert!(
                (direct.taylor[i] - lin.taylor[i]).norm()
                    <= 1e-13 * (1.0 + direct.taylor[i].norm()),
                "coefficient {i} differs"
            );
        }
    }
}
