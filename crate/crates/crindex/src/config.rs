//! Run configuration: the domain, sampling parameters, tolerances and the
//! oracle schedule, loaded from a TOML file.

use crate::expr::{parse_defining_function, Expr, ExprError};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("bad expression for `{key}`: {source}")]
    Expr {
        key: String,
        #[source]
        source: ExprError,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub count: i64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton_iters")]
    pub max_newton_iters: i64,
    #[serde(default = "default_box_radius")]
    pub box_radius: f64,
    /// Refinement pass that hunts for degenerate (Levi-null) boundary
    /// points; uniform sampling alone cannot hit measure-zero weak strata.
    #[serde(default = "default_true")]
    pub weak_seek: bool,
    #[serde(default = "default_weak_seek_starts")]
    pub weak_seek_starts: i64,
    #[serde(default = "default_weak_seek_budget")]
    pub weak_seek_budget: i64,
}

fn default_seed() -> u64 {
    42
}
fn default_count() -> i64 {
    512
}
fn default_newton_tol() -> f64 {
    1e-12
}
fn default_max_newton_iters() -> i64 {
    50
}
fn default_box_radius() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}
fn default_weak_seek_starts() -> i64 {
    8
}
fn default_weak_seek_budget() -> i64 {
    400
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            seed: default_seed(),
            count: default_count(),
            newton_tol: default_newton_tol(),
            max_newton_iters: default_max_newton_iters(),
            box_radius: default_box_radius(),
            weak_seek: true,
            weak_seek_starts: default_weak_seek_starts(),
            weak_seek_budget: default_weak_seek_budget(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_null_eig_rel_tol")]
    pub null_eig_rel_tol: f64,
    #[serde(default = "default_psd_tol")]
    pub psd_tol: f64,
    #[serde(default = "default_strict_margin")]
    pub strict_margin: f64,
}

fn default_null_eig_rel_tol() -> f64 {
    1e-7
}
fn default_psd_tol() -> f64 {
    1e-9
}
fn default_strict_margin() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            null_eig_rel_tol: default_null_eig_rel_tol(),
            psd_tol: default_psd_tol(),
            strict_margin: default_strict_margin(),
        }
    }
}

/// Bisection window for one exponent search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaGrid {
    pub lo: f64,
    pub hi: f64,
    pub bisect_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_distances")]
    pub distances: Vec<f64>,
    #[serde(default = "default_df_grid")]
    pub df_grid: GammaGrid,
    #[serde(default = "default_s_grid")]
    pub s_grid: GammaGrid,
}

fn default_distances() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn default_df_grid() -> GammaGrid {
    GammaGrid {
        lo: 0.01,
        hi: 0.999,
        bisect_tol: 1e-4,
    }
}
fn default_s_grid() -> GammaGrid {
    GammaGrid {
        lo: 1.001,
        hi: 64.0,
        bisect_tol: 1e-3,
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            distances: default_distances(),
            df_grid: default_df_grid(),
            s_grid: default_s_grid(),
        }
    }
}

/// Raw file schema; [`DomainSpec`] is the validated form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub n: i64,
    pub rho: String,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub conformal_basis: Vec<String>,
}

/// A validated analysis target: the domain `{rho < 0}` in C^n together with
/// everything the pipeline needs to sample and measure its boundary.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub n: usize,
    pub rho: Expr,
    pub rho_text: String,
    pub sampling: SamplingConfig,
    pub tolerances: Tolerances,
    pub oracle: OracleConfig,
    pub conformal_basis: Vec<Expr>,
    pub conformal_basis_text: Vec<String>,
    /// Optional global unitary U; when set the analyzed function is
    /// `z -> rho(U z)`. Used by the invariance checks.
    pub ambient_unitary: Option<DMatrix<Complex64>>,
}

impl DomainSpec {
    pub fn from_raw(raw: RawConfig) -> Result<DomainSpec, ConfigError> {
        if raw.n < 2 {
            return Err(ConfigError::Invariant(format!(
                "n must be at least 2, got {}",
                raw.n
            )));
        }
        let n = raw.n as usize;
        let s = &raw.sampling;
        if s.count < 1 {
            return Err(ConfigError::Invariant(format!(
                "sampling.count must be positive, got {}",
                s.count
            )));
        }
        if s.max_newton_iters < 1 {
            return Err(ConfigError::Invariant(
                "sampling.max_newton_iters must be positive".into(),
            ));
        }
        if s.weak_seek_starts < 0 || s.weak_seek_budget < 0 {
            return Err(ConfigError::Invariant(
                "weak-seek parameters must be non-negative".into(),
            ));
        }
        for (key, value) in [
            ("sampling.newton_tol", s.newton_tol),
            ("sampling.box_radius", s.box_radius),
            ("tolerances.null_eig_rel_tol", raw.tolerances.null_eig_rel_tol),
            ("tolerances.psd_tol", raw.tolerances.psd_tol),
            ("tolerances.strict_margin", raw.tolerances.strict_margin),
        ] {
            if !(value > 0.0) {
                return Err(ConfigError::Invariant(format!(
                    "{key} must be strictly positive, got {value}"
                )));
            }
        }
        let d = &raw.oracle.distances;
        if d.is_empty() {
            return Err(ConfigError::Invariant("oracle.distances is empty".into()));
        }
        for w in d.windows(2) {
            if !(w[1] < w[0]) {
                return Err(ConfigError::Invariant(
                    "oracle.distances must be strictly decreasing".into(),
                ));
            }
        }
        if !(d[d.len() - 1] > 0.0) {
            return Err(ConfigError::Invariant(
                "oracle.distances must be positive".into(),
            ));
        }
        for (name, grid) in [("df_grid", &raw.oracle.df_grid), ("s_grid", &raw.oracle.s_grid)] {
            if !(grid.lo < grid.hi) || !(grid.bisect_tol > 0.0) {
                return Err(ConfigError::Invariant(format!(
                    "oracle.{name} must satisfy lo < hi and bisect_tol > 0"
                )));
            }
        }
        if !(raw.oracle.df_grid.lo > 0.0 && raw.oracle.df_grid.hi < 1.0) {
            return Err(ConfigError::Invariant(
                "oracle.df_grid must lie inside (0, 1)".into(),
            ));
        }
        if !(raw.oracle.s_grid.lo > 1.0) {
            return Err(ConfigError::Invariant(
                "oracle.s_grid must lie inside (1, inf)".into(),
            ));
        }

        let rho = parse_defining_function(&raw.rho, n).map_err(|source| ConfigError::Expr {
            key: "rho".into(),
            source,
        })?;
        let mut basis = Vec::with_capacity(raw.conformal_basis.len());
        for (i, text) in raw.conformal_basis.iter().enumerate() {
            let expr =
                parse_defining_function(text, n).map_err(|source| ConfigError::Expr {
                    key: format!("conformal_basis[{i}]"),
                    source,
                })?;
            basis.push(expr);
        }

        Ok(DomainSpec {
            n,
            rho,
            rho_text: raw.rho,
            sampling: raw.sampling,
            tolerances: raw.tolerances,
            oracle: raw.oracle,
            conformal_basis: basis,
            conformal_basis_text: raw.conformal_basis,
            ambient_unitary: None,
        })
    }

    /// Re-serializable echo of the resolved configuration.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            n: self.n as i64,
            rho: self.rho_text.clone(),
            sampling: self.sampling.clone(),
            tolerances: self.tolerances.clone(),
            oracle: self.oracle.clone(),
            conformal_basis: self.conformal_basis_text.clone(),
        }
    }

    /// Same domain pre-composed with a global unitary.
    pub fn with_ambient_unitary(mut self, u: DMatrix<Complex64>) -> DomainSpec {
        assert_eq!(u.nrows(), self.n);
        assert_eq!(u.ncols(), self.n);
        self.ambient_unitary = Some(u);
        self
    }

    pub fn count(&self) -> usize {
        self.sampling.count as usize
    }

    pub fn max_newton_iters(&self) -> usize {
        self.sampling.max_newton_iters as usize
    }
}

/// Loads and validates a configuration from TOML text.
pub fn load_domain_config(contents: &str) -> Result<DomainSpec, ConfigError> {
    let raw: RawConfig = toml::from_str(contents)?;
    DomainSpec::from_raw(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = load_domain_config("n = 2\nrho = \"abs2(z2) - 1\"\n").unwrap();
        assert_eq!(spec.n, 2);
        assert_eq!(spec.sampling.seed, 42);
        assert_eq!(spec.count(), 512);
        assert_eq!(spec.sampling.newton_tol, 1e-12);
        assert_eq!(spec.tolerances.null_eig_rel_tol, 1e-7);
        assert_eq!(spec.oracle.distances, vec![1e-2, 1e-3, 1e-4]);
        assert_eq!(spec.oracle.df_grid.hi, 0.999);
        assert_eq!(spec.oracle.s_grid.hi, 64.0);
        assert!(spec.conformal_basis.is_empty());
    }

    #[test]
    fn negative_count_is_invariant_violation() {
        let err = load_domain_config(
            "n = 2\nrho = \"abs2(z2) - 1\"\n[sampling]\ncount = -3\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Invariant(_)), "{err}");
    }

    #[test]
    fn carries_conformal_basis() {
        let spec = load_domain_config(
            "n = 2\nrho = \"abs2(z1)^2 + abs2(z2) - 1\"\nconformal_basis = [\"abs2(z1)\"]\n",
        )
        .unwrap();
        assert_eq!(spec.conformal_basis.len(), 1);
    }

    #[test]
    fn missing_mandatory_keys() {
        assert!(load_domain_config("rho = \"abs2(z2) - 1\"\n").is_err());
        assert!(load_domain_config("n = 2\n").is_err());
    }

    #[test]
    fn rejects_n_below_two() {
        let err = load_domain_config("n = 1\nrho = \"abs2(z1) - 1\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invariant(_)));
    }

    #[test]
    fn rejects_increasing_distances() {
        let err = load_domain_config(
            "n = 2\nrho = \"abs2(z2) - 1\"\n[oracle]\ndistances = [1e-4, 1e-3]\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Invariant(_)));
    }

    #[test]
    fn echo_revalidates() {
        let spec = load_domain_config(
            "n = 2\nrho = \"abs2(z2) - 1\"\nconformal_basis = [\"abs2(z1)\"]\n[sampling]\nseed = 7\n",
        )
        .unwrap();
        let echoed = toml::to_string(&spec.to_raw()).unwrap();
        let again = load_domain_config(&echoed).unwrap();
        assert_eq!(again.sampling.seed, 7);
        assert_eq!(again.rho_text, spec.rho_text);
    }
}
