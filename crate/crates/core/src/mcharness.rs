//! Monte-Carlo estimators, exact finite-n evaluators and per-identity verifiers.

use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cmspace::{extend_basis, CMElement, KernelOperator, OrthonormalBasis};
use crate::error::{Error, Result};
use crate::fresnel::{
    analytic_integral, build_fresnel, feynman_integral, feynman_linear_weighted, first_variation, inv_sqrt, pairwise_sum,
    AtomicMeasure, Lambda, LambdaPair, PhaseFunctional,
};
use crate::gbm::{PathSample, PathSampler, RngStream};
use crate::timefns::SpaceConfig;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Closed form against closed form, relative to 1 + |value|.
pub const EXACT_TOL: f64 = 1e-10;
/// Closed form against the Gauss-Hermite oracle, relative.
pub const ORACLE_TOL: f64 = 1e-8;
/// Monte-Carlo agreement, in combined standard errors.
pub const MC_SIGMAS: f64 = 4.0;
/// G_n-weighted integrands have a finite fourth moment only for Re lambda > 3/4.
pub const MC_MIN_RE_LAMBDA: f64 = 0.8;
/// Residuals below this are treated as zero when checking decay.
pub const RESIDUAL_FLOOR: f64 = 1e-12;
/// Largest acceptable residual at the last n of a decay sequence.
pub const RESIDUAL_FINAL: f64 = 1e-3;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: Complex64,
    /// max(stderr_re, stderr_im)
    pub stderr: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub n: usize,
    pub seed: u64,
}

impl MCEstimate {
    /// sqrt(stderr_re^2 + stderr_im^2), the standard error of the complex mean.
    pub fn combined_stderr(&self) -> f64 {
        self.stderr_re.hypot(self.stderr_im)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub theorem_id: String,
    /// Basis size for finite-n checks, sample count for Monte-Carlo checks, 0 otherwise.
    pub n: usize,
    pub closed: Complex64,
    pub estimate: Complex64,
    pub stderr: f64,
    pub discrepancy: f64,
    pub threshold: f64,
    pub pass: bool,
    pub runtime: Duration,
}

impl VerifyReport {
    fn new(id: &str, n: usize, closed: Complex64, estimate: Complex64, stderr: f64, discrepancy: f64, threshold: f64) -> Self {
        VerifyReport {
            theorem_id: id.to_string(),
            n,
            closed,
            estimate,
            stderr,
            discrepancy,
            threshold,
            pass: discrepancy <= threshold,
            runtime: Duration::ZERO,
        }
    }

    /// Two closed forms, agreement to EXACT_TOL (1 + |closed|).
    pub fn exact(id: &str, n: usize, closed: Complex64, other: Complex64) -> Self {
        Self::new(id, n, closed, other, 0.0, (closed - other).norm(), EXACT_TOL * (1.0 + closed.norm()))
    }

    /// Closed form against a Monte-Carlo estimate.
    pub fn mc(id: &str, closed: Complex64, est: &MCEstimate) -> Self {
        let se = est.combined_stderr();
        Self::new(id, est.n, closed, est.mean, se, (closed - est.mean).norm(), MC_SIGMAS * se)
    }

    /// Two estimates from the same paths, judged by the estimate of their difference.
    pub fn paired(id: &str, lhs: &MCEstimate, rhs: &MCEstimate, diff: &MCEstimate) -> Self {
        let se = diff.combined_stderr();
        Self::new(id, diff.n, lhs.mean, rhs.mean, se, diff.mean.norm(), MC_SIGMAS * se)
    }

    fn timed(mut self, start: Instant) -> Self {
        self.runtime = start.elapsed();
        self
    }
}

fn pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let n: usize = std::env::var("GFFT_THREADS").ok()?.parse().ok().filter(|&n| n > 0)?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()
    })
    .as_ref()
}

/// Run `f` on the pool capped by GFFT_THREADS, or the global pool.
pub fn with_threads<R: Send, F: FnOnce() -> R + Send>(f: F) -> R {
    match pool() {
        Some(p) => p.install(f),
        None => f(),
    }
}

/// Running mean and M2 for each real and imaginary component.
#[derive(Debug, Clone)]
struct Acc {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Acc {
    fn new(k: usize) -> Self {
        Acc {
            n: 0,
            mean: vec![0.0; 2 * k],
            m2: vec![0.0; 2 * k],
        }
    }

    fn push(&mut self, v: &[Complex64]) {
        self.n += 1;
        let n = self.n as f64;
        for (j, z) in v.iter().enumerate() {
            for (slot, x) in [(2 * j, z.re), (2 * j + 1, z.im)] {
                let d = x - self.mean[slot];
                self.mean[slot] += d / n;
                self.m2[slot] += d * (x - self.mean[slot]);
            }
        }
    }

    fn merge(a: Acc, b: Acc) -> Acc {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let (na, nb) = (a.n as f64, b.n as f64);
        let n = na + nb;
        let mut out = Acc::new(a.mean.len() / 2);
        out.n = a.n + b.n;
        for s in 0..a.mean.len() {
            let d = b.mean[s] - a.mean[s];
            out.mean[s] = a.mean[s] + d * nb / n;
            out.m2[s] = a.m2[s] + b.m2[s] + d * d * na * nb / n;
        }
        out
    }
}

fn merge_pairwise(mut accs: Vec<Acc>) -> Acc {
    while accs.len() > 1 {
        let mut next = Vec::with_capacity(accs.len().div_ceil(2));
        let mut it = accs.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Acc::merge(a, b),
                None => a,
            });
        }
        accs = next;
    }
    accs.pop().expect("at least one chunk")
}

fn estimates(acc: &Acc, seed: u64) -> Vec<MCEstimate> {
    let n = acc.n as f64;
    (0..acc.mean.len() / 2)
        .map(|j| {
            let se = |s: usize| (acc.m2[s] / (n - 1.0) / n).max(0.0).sqrt();
            let (se_re, se_im) = (se(2 * j), se(2 * j + 1));
            MCEstimate {
                mean: Complex64::new(acc.mean[2 * j], acc.mean[2 * j + 1]),
                stderr: se_re.max(se_im),
                stderr_re: se_re,
                stderr_im: se_im,
                n: acc.n as usize,
                seed,
            }
        })
        .collect()
}

/// Means of `k` complex integrands over `n` i.i.d. path pairs.
///
/// Pair i uses paths i of substreams 0 and 1 of `rng`, so results do not depend on
/// the number of workers; chunk statistics are merged in a fixed pairwise order.
pub fn mc_expectation_multi<F>(cfg: &Arc<SpaceConfig>, n: usize, rng: &RngStream, k: usize, f: F) -> Result<Vec<MCEstimate>>
where
    F: Fn(&PathSample, &PathSample, &mut [Complex64]) + Sync,
{
    if n < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 samples, got {n}")));
    }
    let sampler = PathSampler::new(cfg)?;
    let (s1, s2) = (rng.substream(0), rng.substream(1));
    let chunks = n.div_ceil(CHUNK);
    let run = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Acc::new(k);
                let mut buf = vec![Complex64::new(0.0, 0.0); k];
                for i in (c * CHUNK)..((c + 1) * CHUNK).min(n) {
                    let x1 = sampler.sample(&s1, i as u64);
                    let x2 = sampler.sample(&s2, i as u64);
                    f(&x1, &x2, &mut buf);
                    if buf.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(Error::NonFiniteIntegrand(i as u64));
                    }
                    acc.push(&buf);
                }
                Ok(acc)
            })
            .collect::<Result<Vec<Acc>>>()
    };
    let accs = with_threads(run)?;
    Ok(estimates(&merge_pairwise(accs), rng.seed))
}

/// E[f(x_1, x_2)] over i.i.d. path pairs.
pub fn mc_expectation<F>(f: F, cfg: &Arc<SpaceConfig>, n: usize, rng: &RngStream) -> Result<MCEstimate>
where
    F: Fn(&PathSample, &PathSample) -> Complex64 + Sync,
{
    let est = mc_expectation_multi(cfg, n, rng, 1, |x1, x2, out| out[0] = f(x1, x2))?;
    Ok(est[0])
}

/// E[f(x)] over single paths (the first coordinate of the pair stream).
pub fn mc_expectation_single<F>(f: F, cfg: &Arc<SpaceConfig>, n: usize, rng: &RngStream) -> Result<MCEstimate>
where
    F: Fn(&PathSample) -> Complex64 + Sync,
{
    mc_expectation(|x1, _| f(x1), cfg, n, rng)
}

fn check_basis_n(basis: &OrthonormalBasis, n: usize) -> Result<()> {
    if n > basis.len() {
        return Err(Error::InvalidArgument(format!("n = {n} exceeds basis size {}", basis.len())));
    }
    Ok(())
}

/// G_n(lambda, x) = exp{((1 - lambda)/2) sum s_k^2 + (lambda^{1/2} - 1) sum (e_k, a) s_k}, s_k = (e_k, x)~.
pub fn g_n_weight(lambda: Complex64, x: &PathSample, basis: &OrthonormalBasis, n: usize) -> Result<Complex64> {
    if !(lambda.re > 0.0) {
        return Err(Error::InvalidLambda {
            re: lambda.re,
            im: lambda.im,
        });
    }
    check_basis_n(basis, n)?;
    let mut sq = 0.0;
    let mut lin = 0.0;
    for (e, alpha) in basis.elements()[..n].iter().zip(basis.drift_coeffs()) {
        let s = crate::gbm::pwz(e, x)?;
        sq += s * s;
        lin += alpha * s;
    }
    Ok(((1.0 - lambda) / 2.0 * sq + (lambda.sqrt() - 1.0) * lin).exp())
}

/// lambda^{n/2} E[G_n(lambda, x) exp{i (w, x)~}]
///   = exp{((lambda - 1)/(2 lambda)) sum (e_k, w)^2 - ||w||^2/2
///         + i lambda^{-1/2} sum (e_k, a)(e_k, w) + i (r, a)}
/// with r the part of w orthogonal to e_1..e_n.
pub fn scaled_lemma(lambda: Complex64, w: &CMElement, basis: &OrthonormalBasis, n: usize) -> Result<Complex64> {
    check_basis_n(basis, n)?;
    let is = inv_sqrt(lambda)?;
    let ext = extend_basis(&basis.prefix(n), w)?;
    let sum_sq: f64 = ext.coeffs.iter().map(|c| c * c).sum();
    let cross: f64 = ext.coeffs.iter().zip(basis.drift_coeffs()).map(|(c, a)| c * a).sum();
    let e = (lambda - 1.0) / (2.0 * lambda) * sum_sq - w.norm_sq() / 2.0 + I * is * cross + I * ext.residual_drift();
    Ok(e.exp())
}

/// E[G_n(lambda, x) exp{i (w, x)~}] in closed form.
pub fn lemma_limit_exact(lambda: Complex64, w: &CMElement, basis: &OrthonormalBasis, n: usize) -> Result<Complex64> {
    Ok(inv_sqrt(lambda)?.powu(n as u32) * scaled_lemma(lambda, w, basis, n)?)
}

/// Gauss-Hermite rule for E[h(Y)], Y ~ N(0, 1).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        // Newton iteration on the orthonormal Hermite recurrence (weight e^{-x^2}),
        // then rescaled to the standard normal.
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        let mut z: f64 = 0.0;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        GaussHermite {
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / sqrt_pi).collect(),
        }
    }
}

/// One coordinate of the Gaussian oracle: integral over s of phi(s - mean) exp{log_g(s)},
/// after the substitution s = center + sigma y.
struct Dim {
    mean: f64,
    center: f64,
    sigma: f64,
    quad: Complex64,
    lin: Complex64,
}

impl Dim {
    fn log_integrand(&self, y: f64) -> Complex64 {
        let s = self.center + self.sigma * y;
        let d = s - self.mean;
        Complex64::new(-d * d / 2.0 + y * y / 2.0, 0.0) + self.quad * s * s + self.lin * s
    }
}

/// E[G_n(lambda, x) exp{i (w, x)~}] by tensor Gauss-Hermite quadrature in the n + 1
/// independent Gaussian coordinates s_1..s_n and (r, x)~ / ||r||.
pub fn lemma_oracle(lambda: Complex64, w: &CMElement, basis: &OrthonormalBasis, n: usize, nodes: usize) -> Result<Complex64> {
    check_basis_n(basis, n)?;
    if !(lambda.re > 0.0) {
        return Err(Error::InvalidLambda {
            re: lambda.re,
            im: lambda.im,
        });
    }
    let ext = extend_basis(&basis.prefix(n), w)?;
    let sl = lambda.sqrt();
    let sigma = 1.0 / lambda.re.sqrt();
    let mut dims = Vec::with_capacity(n + 1);
    for k in 0..n {
        let m = basis.drift_coeffs()[k];
        dims.push(Dim {
            mean: m,
            center: sl.re * m / lambda.re,
            sigma,
            quad: Complex64::new((1.0 - lambda.re) / 2.0, -lambda.im / 2.0),
            lin: (sl - 1.0) * m + I * ext.coeffs[k],
        });
    }
    let rn = ext.residual_norm;
    let mt = if rn > 0.0 { ext.residual_drift() / rn } else { 0.0 };
    dims.push(Dim {
        mean: mt,
        center: mt,
        sigma: 1.0,
        quad: Complex64::new(0.0, 0.0),
        lin: I * rn,
    });
    tensor_quadrature(&dims, &GaussHermite::new(nodes))
}

fn tensor_quadrature(dims: &[Dim], gh: &GaussHermite) -> Result<Complex64> {
    let m = gh.nodes.len();
    let total = m.checked_pow(dims.len() as u32).filter(|&t| t <= 1 << 26).ok_or_else(|| {
        Error::InvalidArgument(format!("tensor rule with {} dimensions is too large", dims.len()))
    })?;
    // per-dimension tables of weight * exp(log integrand)
    let tables: Vec<Vec<Complex64>> = dims
        .iter()
        .map(|d| {
            (0..m)
                .map(|i| d.sigma * gh.weights[i] * d.log_integrand(gh.nodes[i]).exp())
                .collect()
        })
        .collect();
    let mut terms = Vec::with_capacity(total.min(1 << 20));
    let mut acc = Complex64::new(0.0, 0.0);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        let mut p = Complex64::new(1.0, 0.0);
        for (t, &i) in tables.iter().zip(&idx) {
            p *= t[i];
        }
        terms.push(p);
        if terms.len() == 1 << 20 {
            acc += pairwise_sum(&terms);
            terms.clear();
        }
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(acc + pairwise_sum(&terms))
}

/// E[G_n(lambda, x)] as a product of one-dimensional Gauss-Hermite rules.
pub fn g_n_normalization_oracle(lambda: Complex64, basis: &OrthonormalBasis, n: usize, nodes: usize) -> Result<Complex64> {
    check_basis_n(basis, n)?;
    if !(lambda.re > 0.0) {
        return Err(Error::InvalidLambda {
            re: lambda.re,
            im: lambda.im,
        });
    }
    let gh = GaussHermite::new(nodes);
    let sl = lambda.sqrt();
    let sigma = 1.0 / lambda.re.sqrt();
    let mut prod = Complex64::new(1.0, 0.0);
    for &m in &basis.drift_coeffs()[..n] {
        let d = Dim {
            mean: m,
            center: sl.re * m / lambda.re,
            sigma,
            quad: Complex64::new((1.0 - lambda.re) / 2.0, -lambda.im / 2.0),
            lin: (sl - 1.0) * m,
        };
        let vals: Vec<Complex64> = (0..gh.nodes.len())
            .map(|i| d.sigma * gh.weights[i] * d.log_integrand(gh.nodes[i]).exp())
            .collect();
        prod *= pairwise_sum(&vals);
    }
    Ok(prod)
}

/// Closed form vs tensor Gauss-Hermite oracle (32 nodes per dimension), and vs
/// Monte-Carlo when Re lambda >= MC_MIN_RE_LAMBDA and `mc_n > 0`.
pub fn verify_lemma_limit(
    lambda: Complex64,
    w: &CMElement,
    basis: &OrthonormalBasis,
    n: usize,
    mc_n: usize,
    rng: &RngStream,
) -> Result<Vec<VerifyReport>> {
    let start = Instant::now();
    let exact = lemma_limit_exact(lambda, w, basis, n)?;
    let oracle = lemma_oracle(lambda, w, basis, n, 32)?;
    let d = (exact - oracle).norm();
    let mut out = vec![VerifyReport::new("lemma", n, exact, oracle, 0.0, d, ORACLE_TOL * exact.norm()).timed(start)];
    if mc_n > 0 && lambda.re >= MC_MIN_RE_LAMBDA {
        let start = Instant::now();
        let est = mc_expectation_single(
            |x| {
                let g = g_n_weight(lambda, x, basis, n).unwrap_or(Complex64::new(f64::NAN, 0.0));
                g * Complex64::from_polar(1.0, crate::gbm::pwz(w, x).unwrap_or(f64::NAN))
            },
            w.cfg(),
            mc_n,
            rng,
        )?;
        let mut r = VerifyReport::mc("lemma-mc", exact, &est).timed(start);
        r.n = n;
        out.push(r);
    }
    Ok(out)
}

/// How the interior parameters approach the boundary point -iq.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPath {
    /// lambda_n = -iq + r 0.5^n, with r halved until the point lies in Gamma_{q0}.
    Geometric { r: f64 },
    /// The boundary point itself at every n.
    Boundary,
}

impl LambdaPath {
    pub fn at(&self, q: f64, q0: f64, n: usize) -> Lambda {
        match *self {
            LambdaPath::Boundary => Lambda::Boundary(q),
            LambdaPath::Geometric { r } => {
                let mut eps = r * 0.5f64.powi(n as i32);
                loop {
                    let l = Lambda::Interior(Complex64::new(eps, -q));
                    if l.gamma_margin(q0) > 0.0 || eps < 1e-300 {
                        return l;
                    }
                    eps *= 0.5;
                }
            }
        }
    }
}

/// Whether each residual is strictly below the previous one (or both are below
/// RESIDUAL_FLOOR), and the last is at most RESIDUAL_FINAL.
pub fn residual_decay_ok(residuals: &[f64]) -> bool {
    let steps = residuals
        .windows(2)
        .all(|p| p[1] < p[0] || (p[0] <= RESIDUAL_FLOOR && p[1] <= RESIDUAL_FLOOR));
    steps && residuals.last().is_some_and(|&r| r <= RESIDUAL_FINAL)
}

/// Residuals over a list of basis sizes, plus optional Monte-Carlo spot check.
#[derive(Debug, Clone)]
pub struct LimitReport {
    pub reports: Vec<VerifyReport>,
    pub residuals: Vec<f64>,
    pub decay_ok: bool,
    pub mc: Option<VerifyReport>,
}

impl LimitReport {
    pub fn pass(&self) -> bool {
        self.decay_ok && self.mc.as_ref().is_none_or(|r| r.pass)
    }

    pub fn all_reports(&self) -> Vec<VerifyReport> {
        let mut out = self.reports.clone();
        out.extend(self.mc.clone());
        out
    }

    fn build(id: &str, ns: &[usize], target: Complex64, values: Vec<Complex64>, start: Instant) -> LimitReport {
        let residuals: Vec<f64> = values.iter().map(|v| (v - target).norm()).collect();
        let decay_ok = residual_decay_ok(&residuals);
        let last = ns.len().saturating_sub(1);
        let reports = ns
            .iter()
            .zip(&values)
            .zip(&residuals)
            .enumerate()
            .map(|(i, ((&n, &v), &res))| {
                let mut thr = if i == 0 {
                    f64::INFINITY
                } else if residuals[i - 1] <= RESIDUAL_FLOOR {
                    RESIDUAL_FLOOR
                } else {
                    residuals[i - 1] * (1.0 - 1e-12)
                };
                if i == last {
                    thr = thr.min(RESIDUAL_FINAL);
                }
                VerifyReport::new(id, n, target, v, 0.0, res, thr).timed(start)
            })
            .collect();
        LimitReport {
            reports,
            residuals,
            decay_ok,
            mc: None,
        }
    }
}

/// F with coefficients c_k exp{i (u_{k,1}, y_1)~ + i (u_{k,2}, y_2)~}, so that it evaluates to F(y + x) at x.
fn translated_by_paths(f: &PhaseFunctional, y1: &PathSample, y2: &PathSample) -> Result<PhaseFunctional> {
    let mut out = PhaseFunctional::new(f.cfg());
    for a in f.atoms() {
        let ph = crate::gbm::pwz(&a.u[0], y1)? + crate::gbm::pwz(&a.u[1], y2)?;
        out.push(a.coef * Complex64::from_polar(1.0, ph), a.u[0].clone(), a.u[1].clone())?;
    }
    Ok(out)
}

/// lambda_1^{n/2} lambda_2^{n/2} E[G_n(lambda_1, x_1) G_n(lambda_2, x_2) F(y_1 + x_1, y_2 + x_2)] in closed form.
pub fn limit_exact(
    f: &PhaseFunctional,
    lambda: [Complex64; 2],
    y1: &PathSample,
    y2: &PathSample,
    basis: &OrthonormalBasis,
    n: usize,
) -> Result<Complex64> {
    let fy = translated_by_paths(f, y1, y2)?;
    let mut terms = Vec::with_capacity(fy.len());
    for a in fy.atoms() {
        terms.push(a.coef * scaled_lemma(lambda[0], &a.u[0], basis, n)? * scaled_lemma(lambda[1], &a.u[1], basis, n)?);
    }
    Ok(pairwise_sum(&terms))
}

/// Monte-Carlo spot check for the finite-n limit formula.
#[derive(Debug, Clone, Copy)]
pub struct McSpot {
    pub lambda: Complex64,
    pub n: usize,
    pub samples: usize,
    pub rng: RngStream,
}

/// Residuals |finite-n value at lambda_n - transform at -iq| over `n_list`.
#[allow(clippy::too_many_arguments)]
pub fn verify_limit_gfft(
    f: &PhaseFunctional,
    q: [f64; 2],
    q0: f64,
    y1: &PathSample,
    y2: &PathSample,
    basis: &OrthonormalBasis,
    n_list: &[usize],
    path: LambdaPath,
    spot: Option<McSpot>,
) -> Result<LimitReport> {
    let start = Instant::now();
    let boundary = LambdaPair::boundary(q[0], q[1])?;
    boundary.check_q0(q0)?;
    let target = crate::fresnel::gfft(f, &boundary, y1, y2, q0)?;
    let mut values = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let l = [path.at(q[0], q0, n).value(), path.at(q[1], q0, n).value()];
        values.push(limit_exact(f, l, y1, y2, basis, n)?);
    }
    let mut rep = LimitReport::build("limit", n_list, target, values, start);
    if let Some(s) = spot {
        let start = Instant::now();
        if s.lambda.re < MC_MIN_RE_LAMBDA {
            return Err(Error::InvalidArgument(format!(
                "Monte-Carlo spot check needs Re lambda >= {MC_MIN_RE_LAMBDA}"
            )));
        }
        let closed = limit_exact(f, [s.lambda; 2], y1, y2, basis, s.n)?;
        let fy = translated_by_paths(f, y1, y2)?;
        let scale = s.lambda.sqrt().powu(s.n as u32).powu(2);
        let est = mc_expectation(
            |x1, x2| {
                let g1 = g_n_weight(s.lambda, x1, basis, s.n).unwrap_or(Complex64::new(f64::NAN, 0.0));
                let g2 = g_n_weight(s.lambda, x2, basis, s.n).unwrap_or(Complex64::new(f64::NAN, 0.0));
                scale * g1 * g2 * fy.eval_unchecked(x1, x2)
            },
            f.cfg(),
            s.samples,
            &s.rng,
        )?;
        let mut r = VerifyReport::mc("limit-mc", closed, &est).timed(start);
        r.n = s.n;
        rep.mc = Some(r);
    }
    Ok(rep)
}

/// E[F(rho_1 x_1, rho_2 x_2)] against rho_1^{-n} rho_2^{-n} E[G_n(rho_1^{-2}, x_1) G_n(rho_2^{-2}, x_2) F(x_1, x_2)].
pub fn verify_change_of_scale(
    f: &PhaseFunctional,
    rho: [f64; 2],
    basis: &OrthonormalBasis,
    n_list: &[usize],
    mc: Option<(usize, RngStream)>,
) -> Result<LimitReport> {
    let start = Instant::now();
    if !(rho[0] > 0.0 && rho[1] > 0.0) {
        return Err(Error::InvalidArgument("scale factors must be positive".into()));
    }
    let lam = [rho[0].powi(-2), rho[1].powi(-2)];
    let lhs = analytic_integral(f, &LambdaPair::real(lam[0], lam[1])?, 1.0)?;
    let mut values = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut terms = Vec::with_capacity(f.len());
        for a in f.atoms() {
            let e1 = lemma_limit_exact(Complex64::new(lam[0], 0.0), &a.u[0], basis, n)?;
            let e2 = lemma_limit_exact(Complex64::new(lam[1], 0.0), &a.u[1], basis, n)?;
            terms.push(a.coef * e1 * e2);
        }
        let pref = (rho[0] * rho[1]).powi(-(n as i32));
        values.push(pref * pairwise_sum(&terms));
    }
    let mut rep = LimitReport::build("scale", n_list, lhs, values, start);
    if let Some((samples, rng)) = mc {
        let start = Instant::now();
        let est = mc_expectation(|x1, x2| f.eval_unchecked(&x1.scaled(rho[0]), &x2.scaled(rho[1])), f.cfg(), samples, &rng)?;
        rep.mc = Some(VerifyReport::mc("scale-mc", lhs, &est).timed(start));
    }
    Ok(rep)
}

fn require_first_coordinate(g: &PhaseFunctional) -> Result<()> {
    if g.atoms().iter().all(|a| a.u[1].is_zero()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("functional must depend on the first coordinate only".into()))
    }
}

/// E[G(x + x0)] = exp{-||x0||^2/2 - (x0, a)} E[G(x) exp{(x0, x)~}] for G on one coordinate.
///
/// Returns the closed-form comparison and, when `samples > 0`, the paired Monte-Carlo one.
pub fn verify_translation(g: &PhaseFunctional, x0: &CMElement, samples: usize, rng: &RngStream) -> Result<Vec<VerifyReport>> {
    let start = Instant::now();
    require_first_coordinate(g)?;
    let x0a = x0.inner_drift();
    let x0sq = x0.norm_sq();
    let k = (-x0sq / 2.0 - x0a).exp();
    // E[exp{i (u, x + x0)~}] = exp{i (u, x0) + i (u, a) - ||u||^2 / 2}
    let mut lhs_terms = Vec::with_capacity(g.len());
    // E[exp{(i u + x0, x)~}] = exp{(i u + x0, a) + (i u + x0, i u + x0) / 2}
    let mut rhs_terms = Vec::with_capacity(g.len());
    for a in g.atoms() {
        let u = &a.u[0];
        let (ua, usq, ux0) = (u.inner_drift(), u.norm_sq(), u.inner(x0)?);
        lhs_terms.push(a.coef * Complex64::new(-usq / 2.0, ux0 + ua).exp());
        let z = Complex64::new(x0a, ua) + Complex64::new(-usq + x0sq, 2.0 * ux0) / 2.0;
        rhs_terms.push(a.coef * z.exp());
    }
    let lhs = pairwise_sum(&lhs_terms);
    let rhs = k * pairwise_sum(&rhs_terms);
    let mut out = vec![VerifyReport::exact("translation", 0, lhs, rhs).timed(start)];
    if samples > 0 {
        let start = Instant::now();
        let est = mc_expectation_multi(g.cfg(), samples, rng, 3, |x, _, o| {
            let shifted = x.shifted(1.0, x0);
            let l = g.eval_unchecked(&shifted, &shifted);
            let r = k * g.eval_unchecked(x, x) * x.pwz_unchecked(x0).exp();
            o[0] = l;
            o[1] = r;
            o[2] = l - r;
        })?;
        out.push(VerifyReport::paired("translation-mc", &est[0], &est[1], &est[2]).timed(start));
    }
    Ok(out)
}

/// E[delta F(rho x | rho g)] = E[F(rho x){(g_1, x_1)~ + (g_2, x_2)~}] - {(g_1, a) + (g_2, a)} E[F(rho x)].
///
/// Closed forms on both sides, plus paired Monte-Carlo when `samples > 0`.
pub fn verify_cameron_storvick_mu(
    f: &PhaseFunctional,
    g1: &CMElement,
    g2: &CMElement,
    rho: [f64; 2],
    samples: usize,
    rng: &RngStream,
) -> Result<Vec<VerifyReport>> {
    let start = Instant::now();
    if !(rho[0] > 0.0 && rho[1] > 0.0) {
        return Err(Error::InvalidArgument("scale factors must be positive".into()));
    }
    let lam = LambdaPair::real(rho[0].powi(-2), rho[1].powi(-2))?;
    let df = first_variation(f, &g1.scale(rho[0]), &g2.scale(rho[1]))?;
    let lhs = analytic_integral(&df, &lam, 1.0)?;
    let c = [Complex64::new(1.0 / rho[0], 0.0), Complex64::new(1.0 / rho[1], 0.0)];
    let ga = g1.inner_drift() + g2.inner_drift();
    let rhs = feynman_linear_weighted(f, g1, g2, c[0], c[1], &lam, 1.0)? - ga * analytic_integral(f, &lam, 1.0)?;
    let mut out = vec![VerifyReport::exact("cs-mu", 0, lhs, rhs).timed(start)];
    if samples > 0 {
        let start = Instant::now();
        let est = mc_expectation_multi(f.cfg(), samples, rng, 3, |x1, x2, o| {
            let (s1, s2) = (x1.scaled(rho[0]), x2.scaled(rho[1]));
            let l = df.eval_unchecked(&s1, &s2);
            let fv = f.eval_unchecked(&s1, &s2);
            let r = fv * (x1.pwz_unchecked(g1) + x2.pwz_unchecked(g2)) - ga * fv;
            o[0] = l;
            o[1] = r;
            o[2] = l - r;
        })?;
        out.push(VerifyReport::paired("cs-mu-mc", &est[0], &est[1], &est[2]).timed(start));
    }
    Ok(out)
}

/// Coefficient of the drift term in the Feynman-integral form of the
/// Cameron-Storvick identity; analytic continuation of the real-lambda form gives -1.
pub const CS_DRIFT_COEF: Complex64 = Complex64::new(-1.0, 0.0);

/// E^{anf_q}[delta F(x | g)] against
/// -i E^{anf_q}[F {q_1 (g_1, x_1)~ + q_2 (g_2, x_2)~}] + coef {sum_j (-i q_j)^{1/2} (g_j, a)} E^{anf_q}[F].
#[allow(clippy::too_many_arguments)]
pub fn verify_cameron_storvick_feynman(
    f: &PhaseFunctional,
    g1: &CMElement,
    g2: &CMElement,
    q: [f64; 2],
    q0: f64,
    drift_coef: Complex64,
) -> Result<VerifyReport> {
    let start = Instant::now();
    let lam = LambdaPair::boundary(q[0], q[1])?;
    let lhs = feynman_integral(&first_variation(f, g1, g2)?, q, q0)?;
    let weighted = feynman_linear_weighted(f, g1, g2, Complex64::new(q[0], 0.0), Complex64::new(q[1], 0.0), &lam, q0)?;
    let drift = lam.0[0].sqrt() * g1.inner_drift() + lam.0[1].sqrt() * g2.inner_drift();
    let rhs = -I * weighted + drift_coef * drift * feynman_integral(f, q, q0)?;
    Ok(VerifyReport::exact("cs-feynman", 0, lhs, rhs).timed(start))
}

/// The real-lambda form by paired Monte-Carlo:
/// E[delta F(lambda^{-1/2} x | g)] = E[F(lambda^{-1/2} x) sum_j lambda_j (g_j, lambda_j^{-1/2} x_j)~]
///                                  - sum_j lambda_j^{1/2} (g_j, a) E[F(lambda^{-1/2} x)].
pub fn verify_cameron_storvick_real(
    f: &PhaseFunctional,
    g1: &CMElement,
    g2: &CMElement,
    lambda: [f64; 2],
    samples: usize,
    rng: &RngStream,
) -> Result<VerifyReport> {
    let start = Instant::now();
    if !(lambda[0] > 0.0 && lambda[1] > 0.0) {
        return Err(Error::InvalidLambda {
            re: lambda[0].min(lambda[1]),
            im: 0.0,
        });
    }
    let rho = [lambda[0].sqrt().recip(), lambda[1].sqrt().recip()];
    let df = first_variation(f, g1, g2)?;
    let drift = lambda[0].sqrt() * g1.inner_drift() + lambda[1].sqrt() * g2.inner_drift();
    let est = mc_expectation_multi(f.cfg(), samples, rng, 3, |x1, x2, o| {
        let (s1, s2) = (x1.scaled(rho[0]), x2.scaled(rho[1]));
        let l = df.eval_unchecked(&s1, &s2);
        let fv = f.eval_unchecked(&s1, &s2);
        let r = fv * (lambda[0] * s1.pwz_unchecked(g1) + lambda[1] * s2.pwz_unchecked(g2)) - drift * fv;
        o[0] = l;
        o[1] = r;
        o[2] = l - r;
    })?;
    Ok(VerifyReport::paired("cs-real-mc", &est[0], &est[1], &est[2]).timed(start))
}

/// Feynman integral of the first variation for F built over (A^+, A^-) at q = (1, -1),
/// against sum_k c_k i (A w_k, g) exp{-(i/2)(A w_k, w_k)}
///        exp{i [(-i)^{-1/2} (A^{+1/2} w_k, a) + i^{-1/2} (A^{-1/2} w_k, a)]}.
pub fn verify_indefinite_kernel(f: &AtomicMeasure, a: &KernelOperator, g: &CMElement, q0: f64) -> Result<VerifyReport> {
    let start = Instant::now();
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(Error::QInsideBand { q: 1.0, q0 });
    }
    let (ap, am) = a.decompose();
    let fun = build_fresnel(f, &ap, &am)?;
    let g1 = ap.apply(g, true)?;
    let g2 = am.apply(g, true)?.scale(-1.0);
    let lhs = feynman_integral(&first_variation(&fun, &g1, &g2)?, [1.0, -1.0], q0)?;

    let h = std::f64::consts::FRAC_1_SQRT_2;
    let minus_i_inv_sqrt = Complex64::new(h, h);
    let i_inv_sqrt = Complex64::new(h, -h);
    let mut terms = Vec::with_capacity(f.atoms().len());
    for (c, w) in f.atoms() {
        let aw = a.apply(w, false)?;
        let awg = aw.inner(g)?;
        let aww = aw.inner(w)?;
        let dp = ap.apply(w, true)?.inner_drift();
        let dm = am.apply(w, true)?.inner_drift();
        let e = Complex64::new(0.0, -aww / 2.0) + I * (minus_i_inv_sqrt * dp + i_inv_sqrt * dm);
        terms.push(c * I * awg * e.exp());
    }
    let rhs = pairwise_sum(&terms);
    Ok(VerifyReport::exact("section9", 0, lhs, rhs).timed(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmspace::{beta, cosine_basis};
    use crate::fresnel::psi;
    use crate::timefns::TimeFn;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn space(a: TimeFn, b: TimeFn, n: usize) -> Arc<SpaceConfig> {
        Arc::new(SpaceConfig::from_fns(a, b, 1.0, n).unwrap())
    }

    #[test]
    fn test_gauss_hermite_moments() {
        let gh = GaussHermite::new(32);
        let m = |k: i32| -> f64 { gh.nodes.iter().zip(&gh.weights).map(|(x, w)| w * x.powi(k)).sum() };
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!(m(1).abs() < 1e-14);
        assert!((m(2) - 1.0).abs() < 1e-13);
        assert!((m(4) - 3.0).abs() < 1e-12);
        assert!((m(10) - 945.0).abs() < 1e-8);
        let gh = GaussHermite::new(64);
        let cf: f64 = gh.nodes.iter().zip(&gh.weights).map(|(x, w)| w * x.cos()).sum();
        assert!((cf - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn test_mc_constant_integrand() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 64);
        let est = mc_expectation(|_, _| c(0.5, -2.0), &cfg, 500, &RngStream::new(3, 0)).unwrap();
        assert_eq!(est.mean, c(0.5, -2.0));
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.n, 500);
    }

    #[test]
    fn test_mc_characteristic_function() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 256);
        let last = cfg.n();
        let est = mc_expectation_single(|x| c(0.0, x.node_values()[last]).exp(), &cfg, 20_000, &RngStream::new(11, 0)).unwrap();
        assert!((est.mean - c((-0.5f64).exp(), 0.0)).norm() <= 4.0 * est.combined_stderr());
    }

    #[test]
    fn test_mc_second_moment() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 128);
        let last = cfg.n();
        let est = mc_expectation_single(|x| c(x.node_values()[last].powi(2), 0.0), &cfg, 20_000, &RngStream::new(5, 0)).unwrap();
        assert!((est.mean.re - 2.0).abs() <= 4.0 * est.stderr);
    }

    #[test]
    fn test_mc_rejects_small_n_and_nonfinite() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 16);
        assert!(mc_expectation(|_, _| c(1.0, 0.0), &cfg, 99, &RngStream::new(1, 0)).is_err());
        let err = mc_expectation_single(
            |x| if x.node_values()[1] > 0.3 { c(f64::NAN, 0.0) } else { c(0.0, 0.0) },
            &cfg,
            1000,
            &RngStream::new(1, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteIntegrand(_)));
    }

    #[test]
    fn test_mc_independent_of_thread_count() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 32);
        let f = |x1: &PathSample, x2: &PathSample| c(x1.node_values()[32], x2.node_values()[16]).exp();
        let rng = RngStream::new(9, 4);
        let a = mc_expectation(f, &cfg, 5000, &rng).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = single.install(|| mc_expectation(f, &cfg, 5000, &rng).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn test_g_n_weight_examples() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 256);
        let basis = cosine_basis(3, &cfg).unwrap();
        let x = PathSampler::new(&cfg).unwrap().sample(&RngStream::new(2, 0), 0);
        assert_eq!(g_n_weight(c(1.0, 0.0), &x, &basis, 3).unwrap(), c(1.0, 0.0));
        let s1 = crate::gbm::pwz(&basis.elements()[0], &x).unwrap();
        let v = g_n_weight(c(4.0, 0.0), &x, &basis, 1).unwrap();
        assert!((v - c((-1.5 * s1 * s1).exp(), 0.0)).norm() < 1e-14);
        assert!(g_n_weight(c(0.0, 1.0), &x, &basis, 1).is_err());
        assert!(g_n_weight(c(1.0, 0.0), &x, &basis, 4).is_err());
    }

    #[test]
    fn test_lemma_examples() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 512);
        let basis = cosine_basis(4, &cfg).unwrap();
        let b1 = beta(1.0, &cfg).unwrap();
        let v = lemma_limit_exact(c(2.0, 0.0), &b1, &basis, 1).unwrap();
        let want = (-0.25f64).exp() / 2f64.sqrt();
        assert!((v - c(want, 0.0)).norm() < 1e-12, "{v}");
        let o = lemma_oracle(c(2.0, 0.0), &b1, &basis, 1, 32).unwrap();
        assert!((o - c(want, 0.0)).norm() < 1e-8 * want);

        let z = CMElement::zero(&cfg);
        let l = c(0.7, 0.3);
        assert!((lemma_limit_exact(l, &z, &basis, 3).unwrap() - inv_sqrt(l).unwrap().powu(3)).norm() < 1e-15);
    }

    #[test]
    fn test_lemma_at_one_matches_psi() {
        let cfg = space(TimeFn::Poly(vec![0.0, 1.0, 0.5]), TimeFn::linear(1.0), 512);
        let basis = cosine_basis(6, &cfg).unwrap();
        let w = CMElement::from_poly(&[0.4, -1.0, 0.5], &cfg).unwrap();
        let v = lemma_limit_exact(c(1.0, 0.0), &w, &basis, 3).unwrap();
        let z = CMElement::zero(&cfg);
        let p = psi(&LambdaPair::real(1.0, 1.0).unwrap(), &w, &z);
        assert!((v - p).norm() < 1e-12);
    }

    #[test]
    fn test_lemma_oracle_complex_lambda_with_drift() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::Poly(vec![0.0, 1.0, 1.0]), 512);
        let basis = cosine_basis(3, &cfg).unwrap();
        let w = CMElement::from_poly(&[1.0, -0.5], &cfg).unwrap();
        for n in 1..=3 {
            let l = c(0.5, 0.5);
            let e = lemma_limit_exact(l, &w, &basis, n).unwrap();
            let o = lemma_oracle(l, &w, &basis, n, 32).unwrap();
            assert!((e - o).norm() <= 1e-8 * e.norm(), "n={n} {e} {o}");
        }
    }

    #[test]
    fn test_normalization_oracle() {
        let cfg = space(TimeFn::Exp { amp: 1.0, rate: 1.0, offset: -1.0 }, TimeFn::linear(1.0), 512);
        let basis = cosine_basis(8, &cfg).unwrap();
        for l in [c(0.6, 0.4), c(2.0, -1.0), c(1.0, 0.0)] {
            for n in [1, 4, 8] {
                let e = g_n_normalization_oracle(l, &basis, n, 64).unwrap();
                let scaled = l.sqrt().powu(n as u32) * e;
                assert!((scaled - 1.0).norm() < 1e-10, "{l} {n} {scaled}");
            }
        }
    }

    #[test]
    fn test_residual_decay_rule() {
        assert!(residual_decay_ok(&[1e-1, 1e-2, 1e-4]));
        assert!(residual_decay_ok(&[0.0, 1e-16, 0.0]));
        assert!(!residual_decay_ok(&[1e-2, 1e-2]));
        assert!(!residual_decay_ok(&[1.0, 0.5]));
        assert!(!residual_decay_ok(&[]));
    }

    #[test]
    fn test_lambda_path_stays_in_gamma() {
        for q in [1.5, -2.0, 5.0] {
            for n in [0, 2, 8] {
                let l = LambdaPath::Geometric { r: 10.0 }.at(q, 1.0, n);
                assert!(l.gamma_margin(1.0) > 0.0);
                assert!(l.value().re > 0.0);
            }
        }
    }

    #[test]
    fn test_limit_constant_functional() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 256);
        let basis = cosine_basis(8, &cfg).unwrap();
        let one = PhaseFunctional::one(&cfg);
        let y = PathSampler::new(&cfg).unwrap().sample(&RngStream::new(1, 0), 0);
        let rep = verify_limit_gfft(&one, [2.0, -3.0], 1.0, &y, &y, &basis, &[2, 4, 8], LambdaPath::Geometric { r: 1.0 }, None)
            .unwrap();
        assert!(rep.residuals.iter().all(|&r| r == 0.0), "{:?}", rep.residuals);
        assert!(rep.pass());
    }

    #[test]
    fn test_change_of_scale_examples() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 512);
        let basis = cosine_basis(8, &cfg).unwrap();
        let b1 = beta(1.0, &cfg).unwrap();
        let f = PhaseFunctional::single(c(1.0, 0.0), b1, CMElement::zero(&cfg)).unwrap();
        let rep = verify_change_of_scale(&f, [2.0, 1.0], &basis, &[2, 4, 8], None).unwrap();
        assert!((rep.reports[0].closed - c((-2.0f64).exp(), 0.0)).norm() < 1e-12);
        let rep = verify_change_of_scale(&PhaseFunctional::one(&cfg), [2.0, 0.5], &basis, &[2, 4], None).unwrap();
        assert!(rep.residuals.iter().all(|&r| r < 1e-14));
    }

    #[test]
    fn test_translation_closed_forms() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 256);
        let x0 = CMElement::from_poly(&[1.0], &cfg).unwrap();
        let rep = verify_translation(&PhaseFunctional::one(&cfg), &x0, 0, &RngStream::new(0, 0)).unwrap();
        assert!((rep[0].closed - 1.0).norm() < 1e-12 && (rep[0].estimate - 1.0).norm() < 1e-12);
        let w = CMElement::from_poly(&[0.5, 1.0], &cfg).unwrap();
        let g = PhaseFunctional::single(c(1.0, 0.0), w.clone(), CMElement::zero(&cfg)).unwrap();
        let rep = verify_translation(&g, &x0, 0, &RngStream::new(0, 0)).unwrap();
        let eg = c(-w.norm_sq() / 2.0, w.inner_drift()).exp();
        let want = c(0.0, w.inner(&x0).unwrap()).exp() * eg;
        assert!((rep[0].closed - want).norm() < 1e-12);
        assert!(rep[0].pass);
        let bad = PhaseFunctional::single(c(1.0, 0.0), w.clone(), w).unwrap();
        assert!(verify_translation(&bad, &x0, 0, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn test_cs_feynman_examples() {
        let cfg = space(TimeFn::Poly(vec![0.0, 1.0, 1.0]), TimeFn::linear(1.0), 256);
        let g1 = CMElement::from_poly(&[1.0, 0.5], &cfg).unwrap();
        let g2 = CMElement::from_poly(&[-0.5], &cfg).unwrap();
        let one = PhaseFunctional::one(&cfg);
        let r = verify_cameron_storvick_feynman(&one, &g1, &g2, [2.0, -3.0], 1.0, CS_DRIFT_COEF).unwrap();
        assert!(r.pass && r.closed == c(0.0, 0.0) && r.estimate.norm() < 1e-14, "{r:?}");
        let z = CMElement::zero(&cfg);
        let f = PhaseFunctional::single(c(0.3, 0.4), g1.clone(), g2.clone()).unwrap();
        let r = verify_cameron_storvick_feynman(&f, &z, &z, [2.0, -3.0], 1.0, CS_DRIFT_COEF).unwrap();
        assert!(r.pass && r.closed == c(0.0, 0.0));
        let r = verify_cameron_storvick_feynman(&one, &g1, &g2, [2.0, -3.0], 1.0, c(0.0, -1.0)).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn test_indefinite_kernel_examples() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 512);
        let mut m = AtomicMeasure::new();
        m.push(c(1.0, 0.0), beta(1.0, &cfg).unwrap()).unwrap();
        let phi = KernelOperator::from_poly(&[-0.5, 1.0], &cfg).unwrap();
        let g = CMElement::from_poly(&[0.2, 1.0], &cfg).unwrap();
        let r = verify_indefinite_kernel(&m, &phi, &g, 0.5).unwrap();
        assert!(r.pass, "{r:?}");
        let pos = KernelOperator::from_poly(&[1.0, 1.0], &cfg).unwrap();
        assert!(verify_indefinite_kernel(&m, &pos, &g, 0.5).unwrap().pass);
    }
}
