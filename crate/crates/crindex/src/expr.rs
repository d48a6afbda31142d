//! Defining-function expressions over complex coordinates.
//!
//! A small closed language: real constants, coordinates `z1..zn`, `conj`,
//! `re`, `im`, `abs2`, the four arithmetic operators, integer powers and the
//! elementary functions `exp`, `log`, `sin`, `cos`, `sqrt`. Every node has
//! closed-form Wirtinger derivative rules to third order, which is what the
//! jet engine relies on. `log` and `sqrt` only accept positive real
//! arguments; `abs2(e)` means `e * conj(e)` so it stays smooth.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

pub type C64 = Complex64;

/// Relative imaginary residue allowed when coercing a value to a real.
pub const REAL_RESIDUE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdent { name: String, pos: usize },
    #[error("coordinate index {index} out of range 1..={n}")]
    CoordOutOfRange { index: usize, n: usize },
    #[error("expression is not real-valued: imaginary residue {defect:.3e} at a probe point")]
    NotReal { defect: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// Expression tree over the coordinates of C^n.
///
/// Coordinate indices are stored 0-based; the surface syntax is `z1..zn`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Conj(Box<Expr>),
    Re(Box<Expr>),
    Im(Box<Expr>),
    Abs2(Box<Expr>),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    /// Largest coordinate index referenced (0-based), if any.
    pub fn max_coord(&self) -> Option<usize> {
        use Expr::*;
        match self {
            Const(_) => None,
            Coord(j) => Some(*j),
            Conj(e) | Re(e) | Im(e) | Abs2(e) | Neg(e) | Pow(e, _) | Exp(e) | Log(e) | Sin(e)
            | Cos(e) | Sqrt(e) => e.max_coord(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => match (a.max_coord(), b.max_coord())
            {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }
}

/// Checks a value that should be real and strips the imaginary residue.
pub fn coerce_real(v: C64) -> Result<f64, ExprError> {
    let tol = REAL_RESIDUE_TOL * (1.0 + v.norm());
    if v.im.abs() <= tol {
        Ok(v.re)
    } else {
        Err(ExprError::NotReal { defect: v.im.abs() })
    }
}

fn check_log_arg(v: C64, what: &str) -> Result<f64, ExprError> {
    if v.im.abs() > 1e-10 * (1.0 + v.norm()) {
        return Err(ExprError::Domain(format!(
            "{what} of a non-real argument ({v})"
        )));
    }
    if v.re <= 0.0 {
        return Err(ExprError::Domain(format!(
            "{what} of a non-positive argument ({})",
            v.re
        )));
    }
    Ok(v.re)
}

/// Full complex evaluation; callers that need a real number go through
/// [`eval_expr`].
pub fn eval_complex(e: &Expr, point: &[C64]) -> Result<C64, ExprError> {
    use Expr::*;
    Ok(match e {
        Const(c) => C64::new(*c, 0.0),
        Coord(j) => point[*j],
        Conj(e) => eval_complex(e, point)?.conj(),
        Re(e) => C64::new(eval_complex(e, point)?.re, 0.0),
        Im(e) => C64::new(eval_complex(e, point)?.im, 0.0),
        Abs2(e) => {
            let v = eval_complex(e, point)?;
            C64::new(v.norm_sqr(), 0.0)
        }
        Neg(e) => -eval_complex(e, point)?,
        Add(a, b) => eval_complex(a, point)? + eval_complex(b, point)?,
        Sub(a, b) => eval_complex(a, point)? - eval_complex(b, point)?,
        Mul(a, b) => eval_complex(a, point)? * eval_complex(b, point)?,
        Div(a, b) => {
            let num = eval_complex(a, point)?;
            let den = eval_complex(b, point)?;
            if den.norm() < 1e-300 {
                return Err(ExprError::DivisionByZero);
            }
            num / den
        }
        Pow(e, k) => {
            let v = eval_complex(e, point)?;
            if *k < 0 && v.norm() < 1e-300 {
                return Err(ExprError::DivisionByZero);
            }
            v.powi(*k)
        }
        Exp(e) => eval_complex(e, point)?.exp(),
        Log(e) => C64::new(check_log_arg(eval_complex(e, point)?, "log")?.ln(), 0.0),
        Sin(e) => eval_complex(e, point)?.sin(),
        Cos(e) => eval_complex(e, point)?.cos(),
        Sqrt(e) => C64::new(check_log_arg(eval_complex(e, point)?, "sqrt")?.sqrt(), 0.0),
    })
}

/// Evaluates a real-valued expression at a point of C^n.
pub fn eval_expr(e: &Expr, point: &[C64]) -> Result<f64, ExprError> {
    coerce_real(eval_complex(e, point)?)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<Option<(Tok, usize)>, ExprError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
                {
                    end += 1;
                }
                // exponent suffix like 1e-3
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    let mut e = end + 1;
                    if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                        e += 1;
                    }
                    if e < self.src.len() && self.src[e].is_ascii_digit() {
                        while e < self.src.len() && self.src[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("invalid number `{text}`"),
                })?;
                self.pos = end;
                Tok::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                self.pos = end;
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    cursor: usize,
    end_pos: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.cursor).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks
            .get(self.cursor)
            .map(|(_, p)| *p)
            .unwrap_or(self.end_pos)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        match self.bump() {
            Some((t, _)) if t == tok => Ok(()),
            Some((t, p)) => Err(ExprError::Syntax {
                pos: p,
                msg: format!("expected {what}, found {t:?}"),
            }),
            None => Err(ExprError::Syntax {
                pos: self.end_pos,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let exponent = self.integer_exponent()?;
            Ok(Expr::Pow(Box::new(base), exponent))
        } else {
            Ok(base)
        }
    }

    fn integer_exponent(&mut self) -> Result<i32, ExprError> {
        let mut negate = false;
        let mut parens = false;
        if let Some(Tok::LParen) = self.peek() {
            self.bump();
            parens = true;
        }
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            negate = true;
        }
        let pos = self.pos();
        let k = match self.bump() {
            Some((Tok::Num(v), p)) => {
                if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                    return Err(ExprError::Syntax {
                        pos: p,
                        msg: format!("exponent must be an integer, found `{v}`"),
                    });
                }
                v as i32
            }
            _ => {
                return Err(ExprError::Syntax {
                    pos,
                    msg: "expected an integer exponent after `^`".to_string(),
                })
            }
        };
        if parens {
            self.expect(Tok::RParen, "`)` after exponent")?;
        }
        Ok(if negate { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Expr::Const(v)),
            Some((Tok::LParen, _)) => {
                let e = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some((Tok::Ident(name), p)) => self.ident(&name, p),
            Some((t, p)) => Err(ExprError::Syntax {
                pos: p,
                msg: format!("expected a value, found {t:?}"),
            }),
            None => Err(ExprError::Syntax {
                pos,
                msg: "expected a value, found end of input".to_string(),
            }),
        }
    }

    fn ident(&mut self, name: &str, pos: usize) -> Result<Expr, ExprError> {
        let unary: Option<fn(Box<Expr>) -> Expr> = match name {
            "conj" => Some(Expr::Conj),
            "re" => Some(Expr::Re),
            "im" => Some(Expr::Im),
            "abs2" => Some(Expr::Abs2),
            "exp" => Some(Expr::Exp),
            "log" => Some(Expr::Log),
            "sin" => Some(Expr::Sin),
            "cos" => Some(Expr::Cos),
            "sqrt" => Some(Expr::Sqrt),
            _ => None,
        };
        if let Some(ctor) = unary {
            self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
            let arg = self.sum()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(ctor(Box::new(arg)));
        }
        if let Some(rest) = name.strip_prefix('z') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().map_err(|_| ExprError::Syntax {
                    pos,
                    msg: format!("bad coordinate index in `{name}`"),
                })?;
                if index < 1 || index > self.n {
                    return Err(ExprError::CoordOutOfRange { index, n: self.n });
                }
                return Ok(Expr::Coord(index - 1));
            }
        }
        Err(ExprError::UnknownIdent {
            name: name.to_string(),
            pos,
        })
    }
}

/// Parses a real-valued defining function over `z1..zn`.
///
/// Rejects expressions that fail the realness probe: evaluation at 16
/// pseudo-random points must have imaginary part within
/// `1e-12 * (1 + |value|)`.
pub fn parse_defining_function(text: &str, n: usize) -> Result<Expr, ExprError> {
    let expr = parse_unchecked(text, n)?;
    realness_probe(&expr, n)?;
    Ok(expr)
}

/// Parses without the realness probe. Used by the round-trip test path and
/// by internal callers that validate separately.
pub fn parse_unchecked(text: &str, n: usize) -> Result<Expr, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "empty expression".to_string(),
        });
    }
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next()? {
        toks.push(t);
    }
    let mut parser = Parser {
        toks,
        cursor: 0,
        end_pos: text.len(),
        n,
    };
    let expr = parser.sum()?;
    if parser.cursor != parser.toks.len() {
        return Err(ExprError::Syntax {
            pos: parser.pos(),
            msg: "trailing input after expression".to_string(),
        });
    }
    Ok(expr)
}

/// Evaluates at 16 pseudo-random points and checks the imaginary residue.
/// Probes where the expression is undefined (log/sqrt domain) are skipped;
/// the check needs at least one valid probe.
fn realness_probe(expr: &Expr, n: usize) -> Result<(), ExprError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut valid = 0usize;
    let mut worst: f64 = 0.0;
    let mut attempts = 0usize;
    while valid < 16 && attempts < 160 {
        attempts += 1;
        let point: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
            .collect();
        match eval_complex(expr, &point) {
            Ok(v) => {
                valid += 1;
                let defect = v.im.abs() / (1.0 + v.norm());
                worst = worst.max(defect);
                if defect > REAL_RESIDUE_TOL {
                    return Err(ExprError::NotReal { defect: v.im.abs() });
                }
            }
            Err(ExprError::Domain(_)) | Err(ExprError::DivisionByZero) => continue,
            Err(e) => return Err(e),
        }
    }
    if valid == 0 {
        return Err(ExprError::Domain(
            "expression undefined at all probe points".to_string(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pretty-printing (parses back to an equivalent tree)
// ---------------------------------------------------------------------------

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl Expr {
    // precedence levels: 0 sum, 1 product, 2 unary, 3 power/atom
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        use Expr::*;
        let prec = match self {
            Add(..) | Sub(..) => 0,
            Mul(..) | Div(..) => 1,
            Neg(..) => 2,
            _ => 3,
        };
        let need_parens = prec < parent;
        if need_parens {
            write!(f, "(")?;
        }
        match self {
            Const(c) => {
                if *c < 0.0 || !c.is_finite() {
                    write!(f, "({c})")?;
                } else {
                    write!(f, "{c}")?;
                }
            }
            Coord(j) => write!(f, "z{}", j + 1)?,
            Conj(e) => write!(f, "conj({e})")?,
            Re(e) => write!(f, "re({e})")?,
            Im(e) => write!(f, "im({e})")?,
            Abs2(e) => write!(f, "abs2({e})")?,
            Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 2)?;
            }
            Add(a, b) => {
                a.fmt_prec(f, 0)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 1)?;
            }
            Sub(a, b) => {
                a.fmt_prec(f, 0)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 1)?;
            }
            Mul(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, "*")?;
                b.fmt_prec(f, 2)?;
            }
            Div(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, "/")?;
                b.fmt_prec(f, 2)?;
            }
            Pow(e, k) => {
                e.fmt_prec(f, 4)?;
                if *k < 0 {
                    write!(f, "^({k})")?;
                } else {
                    write!(f, "^{k}")?;
                }
            }
            Exp(e) => write!(f, "exp({e})")?,
            Log(e) => write!(f, "log({e})")?,
            Sin(e) => write!(f, "sin({e})")?,
            Cos(e) => write!(f, "cos({e})")?,
            Sqrt(e) => write!(f, "sqrt({e})")?,
        }
        if need_parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}
