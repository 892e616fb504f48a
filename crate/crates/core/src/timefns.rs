//! Drift a(t) and variance b(t), the time grid, and scalar quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric real function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeFn {
    /// sum_k c_k t^k
    Poly(Vec<f64>),
    /// amp * exp(rate * t) + offset
    Exp { amp: f64, rate: f64, offset: f64 },
    /// amp * t^exponent
    Power { amp: f64, exponent: f64 },
}

impl TimeFn {
    pub fn zero() -> Self {
        TimeFn::Poly(vec![0.0])
    }

    pub fn linear(slope: f64) -> Self {
        TimeFn::Poly(vec![0.0, slope])
    }

    /// Build from a family name and parameter list as found in config files.
    ///
    /// Families: `poly` (coefficients, constant first), `linear` (`[slope]` or
    /// `[slope, intercept]`), `exp` (`[amp, rate, offset]`), `power` (`[amp, exponent]`),
    /// `zero`.
    pub fn from_family(family: &str, params: &[f64]) -> Result<Self> {
        let bad = |reason: &str| Error::BadParams {
            family: family.to_string(),
            reason: reason.to_string(),
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("parameters must be finite"));
        }
        match family {
            "zero" => Ok(TimeFn::zero()),
            "poly" => {
                if params.is_empty() {
                    return Err(bad("need at least one coefficient"));
                }
                Ok(TimeFn::Poly(params.to_vec()))
            }
            "linear" => match params {
                [s] => Ok(TimeFn::Poly(vec![0.0, *s])),
                [s, c] => Ok(TimeFn::Poly(vec![*c, *s])),
                _ => Err(bad("expected [slope] or [slope, intercept]")),
            },
            "exp" => match params {
                [amp, rate, offset] => Ok(TimeFn::Exp {
                    amp: *amp,
                    rate: *rate,
                    offset: *offset,
                }),
                _ => Err(bad("expected [amp, rate, offset]")),
            },
            "power" => match params {
                [amp, exponent] => Ok(TimeFn::Power {
                    amp: *amp,
                    exponent: *exponent,
                }),
                _ => Err(bad("expected [amp, exponent]")),
            },
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeFn::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck),
            TimeFn::Exp { amp, rate, offset } => amp * (rate * t).exp() + offset,
            TimeFn::Power { amp, exponent } => amp * t.powf(*exponent),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            TimeFn::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * t + k as f64 * ck),
            TimeFn::Exp { amp, rate, .. } => amp * rate * (rate * t).exp(),
            TimeFn::Power { amp, exponent } => {
                if *exponent == 0.0 {
                    0.0
                } else {
                    amp * exponent * t.powf(exponent - 1.0)
                }
            }
        }
    }
}

/// Uniform grid 0 = t_0 < ... < t_N = T with N even.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    n: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N = {n} must be even and positive")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        Ok(TimeGrid { n, horizon })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.n as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.n {
            self.horizon
        } else {
            self.horizon * i as f64 / self.n as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.t(i)).collect()
    }

    /// Index of the grid node nearest to `t`.
    pub fn snap(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(((t / self.h()).round() as usize).min(self.n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub a: TimeFn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSpec {
    pub b: TimeFn,
    pub horizon: f64,
}

/// The pair (a, b) together with the grid and their tabulated values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceConfig {
    pub drift: DriftSpec,
    pub variance: VarianceSpec,
    pub grid: TimeGrid,
    a: Vec<f64>,
    a_prime: Vec<f64>,
    b: Vec<f64>,
    b_prime: Vec<f64>,
}

impl SpaceConfig {
    /// Tabulate a, a', b, b' on the grid. Hypotheses are not checked here; see
    /// [`validate_config`] and [`SpaceConfig::validated`].
    pub fn new(drift: DriftSpec, variance: VarianceSpec, grid: TimeGrid) -> Result<Self> {
        if (grid.horizon() - variance.horizon).abs() > 1e-12 * variance.horizon.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "grid horizon {} differs from variance horizon {}",
                grid.horizon(),
                variance.horizon
            )));
        }
        let nodes = grid.nodes();
        let a = nodes.iter().map(|&t| drift.a.value(t)).collect();
        let a_prime = nodes.iter().map(|&t| drift.a.deriv(t)).collect();
        let b = nodes.iter().map(|&t| variance.b.value(t)).collect();
        let b_prime = nodes.iter().map(|&t| variance.b.deriv(t)).collect();
        Ok(SpaceConfig {
            drift,
            variance,
            grid,
            a,
            a_prime,
            b,
            b_prime,
        })
    }

    /// Convenience constructor from families; does not validate.
    pub fn from_fns(a: TimeFn, b: TimeFn, horizon: f64, n: usize) -> Result<Self> {
        let grid = TimeGrid::new(n, horizon)?;
        SpaceConfig::new(DriftSpec { a }, VarianceSpec { b, horizon }, grid)
    }

    /// Construct and require every hypothesis check to pass.
    pub fn validated(a: TimeFn, b: TimeFn, horizon: f64, n: usize) -> Result<Self> {
        let cfg = SpaceConfig::from_fns(a, b, horizon, n)?;
        let report = validate_config(&cfg)?;
        if let Some(bad) = report.checks.iter().find(|c| !c.pass) {
            return Err(Error::InvalidArgument(format!(
                "space configuration fails check `{}` (measured {})",
                bad.name, bad.value
            )));
        }
        Ok(cfg)
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a
    }

    pub fn a_prime(&self) -> &[f64] {
        &self.a_prime
    }

    pub fn b_values(&self) -> &[f64] {
        &self.b
    }

    pub fn b_prime(&self) -> &[f64] {
        &self.b_prime
    }
}

/// Composite Simpson rule on uniformly spaced samples (even number of intervals).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n % 2 == 0);
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        if i % 2 == 1 {
            odd += values[i];
        } else {
            even += values[i];
        }
    }
    h / 3.0 * (values[0] + values[n] + 4.0 * odd + 2.0 * even)
}

fn check_finite(name: &str, values: &[f64], grid: &TimeGrid) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::InvalidFunction {
            name: name.to_string(),
            node,
            t: grid.t(node),
        }),
        None => Ok(()),
    }
}

/// Composite Simpson value of the integral of `f` over [0, T].
pub fn quadrature<F: Fn(f64) -> Complex64>(f: F, cfg: &SpaceConfig) -> Result<Complex64> {
    let grid = &cfg.grid;
    let vals: Vec<Complex64> = grid.nodes().into_iter().map(f).collect();
    if let Some(node) = vals.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidFunction {
            name: "integrand".into(),
            node,
            t: grid.t(node),
        });
    }
    let re: Vec<f64> = vals.iter().map(|v| v.re).collect();
    let im: Vec<f64> = vals.iter().map(|v| v.im).collect();
    Ok(Complex64::new(simpson(&re, grid.h()), simpson(&im, grid.h())))
}

/// (u, v)_{a,b} = int u v (b' + |a'|) dt.
pub fn inner_ab<U: Fn(f64) -> f64, V: Fn(f64) -> f64>(u: U, v: V, cfg: &SpaceConfig) -> Result<f64> {
    let nodes = cfg.grid.nodes();
    let w: Vec<f64> = cfg
        .b_prime()
        .iter()
        .zip(cfg.a_prime())
        .map(|(bp, ap)| bp + ap.abs())
        .collect();
    check_finite("b' + |a'|", &w, &cfg.grid)?;
    let vals: Vec<f64> = nodes
        .iter()
        .zip(&w)
        .map(|(&t, wi)| u(t) * v(t) * wi)
        .collect();
    check_finite("integrand", &vals, &cfg.grid)?;
    Ok(simpson(&vals, cfg.h()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// sum over cells of h |(a(t_{i+1}) - a(t_i)) / h|^k on an n-interval grid.
/// Uses only values of a, so a' is never evaluated at a singular endpoint.
fn drift_power_sum(a: &TimeFn, horizon: f64, n: usize, k: f64) -> f64 {
    let h = horizon / n as f64;
    let mut prev = a.value(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        let t = if i == n { horizon } else { horizon * i as f64 / n as f64 };
        let cur = a.value(t);
        acc += h * ((cur - prev) / h).abs().powf(k);
        prev = cur;
    }
    acc
}

/// Declares divergence when the sum more than doubles under one refinement,
/// or when successive increments fail to contract (log-type growth).
fn convergence_check(name: &str, a: &TimeFn, grid: &TimeGrid, k: f64) -> Check {
    let q: Vec<f64> = [1, 2, 4]
        .iter()
        .map(|m| drift_power_sum(a, grid.horizon(), grid.n() * m, k))
        .collect();
    let finite = q.iter().all(|v| v.is_finite());
    let doubled = q[1] > 2.0 * q[0].abs().max(f64::MIN_POSITIVE) || q[2] > 2.0 * q[1].abs().max(f64::MIN_POSITIVE);
    let d1 = (q[1] - q[0]).abs();
    let d2 = (q[2] - q[1]).abs();
    let negligible = d1 <= 1e-12 * (1.0 + q[0].abs());
    let stalled = !negligible && d2 >= 0.9 * d1;
    Check {
        name: name.to_string(),
        pass: finite && !doubled && !stalled,
        value: q[2],
    }
}

/// Check the standing hypotheses on (a, b).
pub fn validate_config(cfg: &SpaceConfig) -> Result<ValidationReport> {
    let grid = &cfg.grid;
    check_finite("a", cfg.a_values(), grid)?;
    check_finite("b", cfg.b_values(), grid)?;
    check_finite("b'", cfg.b_prime(), grid)?;

    let a0 = cfg.a_values()[0];
    let b0 = cfg.b_values()[0];
    let bmin = cfg.b_prime().iter().cloned().fold(f64::INFINITY, f64::min);
    let bmax = cfg.b_prime().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut checks = vec![
        Check {
            name: "a(0) = 0".into(),
            pass: a0.abs() <= 1e-12,
            value: a0,
        },
        Check {
            name: "b(0) = 0".into(),
            pass: b0.abs() <= 1e-12,
            value: b0,
        },
        Check {
            name: "min b' > 0".into(),
            pass: bmin > 0.0,
            value: bmin,
        },
        Check {
            name: "max b' finite".into(),
            pass: bmax.is_finite(),
            value: bmax,
        },
        Check {
            name: "grid horizon = T".into(),
            pass: (grid.horizon() - cfg.variance.horizon).abs() <= 1e-12 * cfg.variance.horizon.max(1.0),
            value: grid.horizon(),
        },
    ];
    checks.push(convergence_check("int a'^2 dt finite", &cfg.drift.a, grid, 2.0));
    checks.push(convergence_check("int |a'|^3 dt finite", &cfg.drift.a, grid, 3.0));
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { checks, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(a: TimeFn, b: TimeFn) -> SpaceConfig {
        SpaceConfig::from_fns(a, b, 1.0, 1024).unwrap()
    }

    fn check<'a>(r: &'a ValidationReport, name: &str) -> &'a Check {
        r.checks.iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn test_linear_config_passes_validation() {
        let r = validate_config(&cfg(TimeFn::linear(1.0), TimeFn::linear(1.0))).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn test_two_thirds_power_drift_fails_cubic_check() {
        let a = TimeFn::Power { amp: 1.0, exponent: 2.0 / 3.0 };
        let r = validate_config(&cfg(a, TimeFn::linear(1.0))).unwrap();
        assert!(!r.pass);
        assert!(!check(&r, "int |a'|^3 dt finite").pass);
        assert!(check(&r, "int a'^2 dt finite").pass);
        assert!(check(&r, "a(0) = 0").pass);
    }

    #[test]
    fn test_decreasing_variance_fails_positivity() {
        let r = validate_config(&cfg(TimeFn::linear(1.0), TimeFn::linear(-1.0))).unwrap();
        assert!(!check(&r, "min b' > 0").pass);
        assert!(!r.pass);
    }

    #[test]
    fn test_nonzero_start_values_fail() {
        let r = validate_config(&cfg(TimeFn::Poly(vec![0.5, 1.0]), TimeFn::Poly(vec![0.1, 1.0]))).unwrap();
        assert!(!check(&r, "a(0) = 0").pass);
        assert!(!check(&r, "b(0) = 0").pass);
    }

    #[test]
    fn test_non_finite_value_is_an_error_naming_the_node() {
        let b = TimeFn::Power { amp: 1.0, exponent: -1.0 };
        let err = validate_config(&cfg(TimeFn::zero(), b)).unwrap_err();
        assert!(matches!(err, Error::InvalidFunction { node: 0, .. }), "{err}");
    }

    #[test]
    fn test_quadrature_constant_and_quadratic() {
        let c = cfg(TimeFn::zero(), TimeFn::linear(1.0));
        let one = quadrature(|_| Complex64::new(1.0, 0.0), &c).unwrap();
        assert!((one.re - 1.0).abs() < 1e-14 && one.im == 0.0);
        let sq = quadrature(|t| Complex64::new(t * t, 0.0), &c).unwrap();
        assert!((sq.re - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn test_quadrature_exponential() {
        let c = cfg(TimeFn::zero(), TimeFn::linear(1.0));
        let v = quadrature(|t| Complex64::new(t.exp(), 0.0), &c).unwrap();
        assert!((v.re - (std::f64::consts::E - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn test_quadrature_rejects_nan() {
        let c = cfg(TimeFn::zero(), TimeFn::linear(1.0));
        let err = quadrature(|t| Complex64::new(if t > 0.5 { f64::NAN } else { 0.0 }, 0.0), &c).unwrap_err();
        assert!(matches!(err, Error::InvalidFunction { node: 513, .. }), "{err}");
    }

    #[test]
    fn test_simpson_halving_ratio_near_sixteen() {
        let f = |t: f64| (3.0 * t).sin() * t.exp();
        let err = |n: usize| {
            let c = SpaceConfig::from_fns(TimeFn::zero(), TimeFn::linear(1.0), 1.0, n).unwrap();
            quadrature(|t| Complex64::new(f(t), 0.0), &c).unwrap().re
        };
        let (q1, q2, q3) = (err(16), err(32), err(64));
        let ratio = (q1 - q2).abs() / (q2 - q3).abs();
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn test_inner_ab_examples() {
        let c = cfg(TimeFn::linear(1.0), TimeFn::linear(1.0));
        assert!((inner_ab(|_| 1.0, |_| 1.0, &c).unwrap() - 2.0).abs() < 1e-14);
        let c0 = cfg(TimeFn::zero(), TimeFn::linear(1.0));
        assert!((inner_ab(|_| 1.0, |_| 1.0, &c0).unwrap() - 1.0).abs() < 1e-14);
        assert!((inner_ab(|t| t, |_| 1.0, &c0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn test_inner_ab_zero_iff_vanishes_on_grid() {
        let c = cfg(TimeFn::zero(), TimeFn::linear(1.0));
        // sin(1024 pi t) vanishes at every node
        let v = inner_ab(|t| (1024.0 * std::f64::consts::PI * t).sin(), |t| (1024.0 * std::f64::consts::PI * t).sin(), &c).unwrap();
        assert!(v.abs() < 1e-20);
        assert!(inner_ab(|t| t - 0.5, |t| t - 0.5, &c).unwrap() > 0.0);
    }

    #[test]
    fn test_families() {
        assert_eq!(TimeFn::from_family("linear", &[2.0]).unwrap().value(0.5), 1.0);
        let e = TimeFn::from_family("exp", &[1.0, 1.0, -1.0]).unwrap();
        assert!((e.value(1.0) - (std::f64::consts::E - 1.0)).abs() < 1e-15);
        assert!((e.deriv(0.0) - 1.0).abs() < 1e-15);
        let p = TimeFn::from_family("poly", &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.deriv(2.0), 5.0);
        assert!(TimeFn::from_family("spline", &[1.0]).is_err());
        assert!(TimeFn::from_family("exp", &[1.0]).is_err());
    }

    #[test]
    fn test_grid_requires_even_n() {
        assert!(TimeGrid::new(7, 1.0).is_err());
        assert!(TimeGrid::new(8, 0.0).is_err());
        let g = TimeGrid::new(8, 2.0).unwrap();
        assert_eq!(g.snap(0.74).unwrap(), 3);
        assert!(g.snap(2.5).is_err());
    }
}
