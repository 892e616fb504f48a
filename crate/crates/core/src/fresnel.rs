//! Fresnel-type functionals in canonical atomic form and their closed-form
//! transforms, Feynman integrals and first variations.

use std::sync::Arc;

use num_complex::Complex64;

use crate::cmspace::{same_cfg, CMElement, KernelOperator};
use crate::error::{Error, Result};
use crate::gbm::PathSample;
use crate::timefns::SpaceConfig;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Fixed-order pairwise sum, so results do not depend on how terms were produced.
pub(crate) fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// lambda^{-1/2} on the principal branch (positive real part).
pub fn inv_sqrt(lambda: Complex64) -> Result<Complex64> {
    if lambda == Complex64::new(0.0, 0.0) || lambda.re < 0.0 || !lambda.re.is_finite() || !lambda.im.is_finite() {
        return Err(Error::InvalidLambda {
            re: lambda.re,
            im: lambda.im,
        });
    }
    Ok(lambda.sqrt().inv())
}

/// A scaling parameter: interior point of the right half-plane, or the
/// boundary point -iq.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Interior(Complex64),
    Boundary(f64),
}

impl Lambda {
    pub fn value(&self) -> Complex64 {
        match *self {
            Lambda::Interior(l) => l,
            Lambda::Boundary(q) => Complex64::new(0.0, -q),
        }
    }

    /// lambda^{-1/2}; at -iq this is 1/sqrt(2|q|) + sign(q) i/sqrt(2|q|).
    pub fn inv_sqrt(&self) -> Complex64 {
        match *self {
            Lambda::Interior(l) => l.sqrt().inv(),
            Lambda::Boundary(q) => {
                let r = 1.0 / (2.0 * q.abs()).sqrt();
                Complex64::new(r, q.signum() * r)
            }
        }
    }

    /// lambda^{1/2}; at -iq this is sqrt(|q|/2)(1 - sign(q) i).
    pub fn sqrt(&self) -> Complex64 {
        match *self {
            Lambda::Interior(l) => l.sqrt(),
            Lambda::Boundary(q) => {
                let r = (q.abs() / 2.0).sqrt();
                Complex64::new(r, -q.signum() * r)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Lambda::Interior(l) if l.re > 0.0 && l.im.is_finite() && l.re.is_finite() => Ok(()),
            Lambda::Boundary(q) if q != 0.0 && q.is_finite() => Ok(()),
            _ => {
                let v = self.value();
                Err(Error::InvalidLambda { re: v.re, im: v.im })
            }
        }
    }

    /// 1/sqrt(2 q0) - |Im lambda^{-1/2}|, positive inside the region Gamma_{q0}.
    pub fn gamma_margin(&self, q0: f64) -> f64 {
        1.0 / (2.0 * q0).sqrt() - self.inv_sqrt().im.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPair(pub [Lambda; 2]);

impl LambdaPair {
    pub fn interior(l1: Complex64, l2: Complex64) -> Result<Self> {
        let p = LambdaPair([Lambda::Interior(l1), Lambda::Interior(l2)]);
        p.validate()?;
        Ok(p)
    }

    pub fn real(l1: f64, l2: f64) -> Result<Self> {
        Self::interior(Complex64::new(l1, 0.0), Complex64::new(l2, 0.0))
    }

    /// (-i q1, -i q2)
    pub fn boundary(q1: f64, q2: f64) -> Result<Self> {
        let p = LambdaPair([Lambda::Boundary(q1), Lambda::Boundary(q2)]);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.0[0].validate()?;
        self.0[1].validate()
    }

    /// Boundary coordinates must satisfy |q| > q0.
    pub fn check_q0(&self, q0: f64) -> Result<()> {
        if !(q0 > 0.0) {
            return Err(Error::NonPositiveQ0(q0));
        }
        for l in &self.0 {
            if let Lambda::Boundary(q) = *l {
                if q.abs() <= q0 {
                    return Err(Error::QInsideBand { q: q.abs(), q0 });
                }
            }
        }
        Ok(())
    }

    /// Whether both coordinates lie in Gamma_{q0}.
    pub fn in_gamma(&self, q0: f64) -> bool {
        self.0.iter().all(|l| l.gamma_margin(q0) > 0.0)
    }
}

/// Finite complex measure on C'_{a,b}: weighted point masses.
#[derive(Debug, Clone)]
pub struct AtomicMeasure {
    atoms: Vec<(Complex64, CMElement)>,
}

const MERGE_TOL: f64 = 1e-12;

impl AtomicMeasure {
    pub fn new() -> Self {
        AtomicMeasure { atoms: Vec::new() }
    }

    /// Add a point mass, merging with an existing atom at the same element.
    pub fn push(&mut self, coef: Complex64, w: CMElement) -> Result<()> {
        if let Some((_, first)) = self.atoms.first() {
            if !same_cfg(first.cfg(), w.cfg()) {
                return Err(Error::ConfigMismatch);
            }
        }
        match self.atoms.iter_mut().find(|(_, v)| v.sup_distance(&w) <= MERGE_TOL) {
            Some((c, _)) => *c += coef,
            None => self.atoms.push((coef, w)),
        }
        Ok(())
    }

    pub fn atoms(&self) -> &[(Complex64, CMElement)] {
        &self.atoms
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|(c, _)| c.norm()).sum()
    }
}

impl Default for AtomicMeasure {
    fn default() -> Self {
        Self::new()
    }
}

/// Where an atom came from, when it was built as (A_1^{1/2} w, A_2^{1/2} w).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomOrigin {
    pub w_norm: f64,
    pub op_sqrt_norms: [f64; 2],
}

/// One term c exp{i (u_1, x_1)~ + i (u_2, x_2)~}.
#[derive(Debug, Clone)]
pub struct Atom {
    pub coef: Complex64,
    pub u: [CMElement; 2],
    pub origin: Option<AtomOrigin>,
}

/// F(x_1, x_2) = sum_k c_k exp{i (u_{k,1}, x_1)~ + i (u_{k,2}, x_2)~}.
#[derive(Debug, Clone)]
pub struct PhaseFunctional {
    atoms: Vec<Atom>,
    cfg: Arc<SpaceConfig>,
}

impl PhaseFunctional {
    /// The zero functional.
    pub fn new(cfg: &Arc<SpaceConfig>) -> Self {
        PhaseFunctional {
            atoms: Vec::new(),
            cfg: cfg.clone(),
        }
    }

    /// F = 1.
    pub fn one(cfg: &Arc<SpaceConfig>) -> Self {
        let mut f = Self::new(cfg);
        f.atoms.push(Atom {
            coef: Complex64::new(1.0, 0.0),
            u: [CMElement::zero(cfg), CMElement::zero(cfg)],
            origin: None,
        });
        f
    }

    /// F = c exp{i (u_1, x_1)~ + i (u_2, x_2)~}.
    pub fn single(coef: Complex64, u1: CMElement, u2: CMElement) -> Result<Self> {
        let mut f = Self::new(u1.cfg());
        f.push(coef, u1, u2)?;
        Ok(f)
    }

    pub fn cfg(&self) -> &Arc<SpaceConfig> {
        &self.cfg
    }

    pub fn push(&mut self, coef: Complex64, u1: CMElement, u2: CMElement) -> Result<()> {
        self.push_atom(Atom {
            coef,
            u: [u1, u2],
            origin: None,
        })
    }

    pub fn push_atom(&mut self, atom: Atom) -> Result<()> {
        if !same_cfg(&self.cfg, atom.u[0].cfg()) || !same_cfg(&self.cfg, atom.u[1].cfg()) {
            return Err(Error::ConfigMismatch);
        }
        self.atoms.push(atom);
        Ok(())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// sum_k |c_k|, a bound on |F| everywhere.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.coef.norm()).sum()
    }

    /// c F
    pub fn scaled(&self, c: Complex64) -> PhaseFunctional {
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.coef *= c;
        }
        out
    }

    /// Pointwise product F G, realized as atom-wise convolution.
    pub fn product(&self, other: &PhaseFunctional) -> Result<PhaseFunctional> {
        if !same_cfg(&self.cfg, &other.cfg) {
            return Err(Error::ConfigMismatch);
        }
        let mut out = PhaseFunctional::new(&self.cfg);
        for a in &self.atoms {
            for b in &other.atoms {
                out.atoms.push(Atom {
                    coef: a.coef * b.coef,
                    u: [a.u[0].add(&b.u[0])?, a.u[1].add(&b.u[1])?],
                    origin: None,
                });
            }
        }
        Ok(out)
    }

    fn check_paths(&self, x1: &PathSample, x2: &PathSample) -> Result<()> {
        if same_cfg(&self.cfg, x1.cfg()) && same_cfg(&self.cfg, x2.cfg()) {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }

    /// (u_{k,1}, x_1)~ + (u_{k,2}, x_2)~ for every atom.
    fn phases(&self, x1: &PathSample, x2: &PathSample) -> Vec<f64> {
        self.atoms
            .iter()
            .map(|a| x1.pwz_unchecked(&a.u[0]) + x2.pwz_unchecked(&a.u[1]))
            .collect()
    }

    /// F(x_1, x_2)
    pub fn eval(&self, x1: &PathSample, x2: &PathSample) -> Result<Complex64> {
        self.check_paths(x1, x2)?;
        Ok(self.eval_unchecked(x1, x2))
    }

    pub(crate) fn eval_unchecked(&self, x1: &PathSample, x2: &PathSample) -> Complex64 {
        let terms: Vec<Complex64> = self
            .atoms
            .iter()
            .zip(self.phases(x1, x2))
            .map(|(a, ph)| a.coef * Complex64::from_polar(1.0, ph))
            .collect();
        pairwise_sum(&terms)
    }
}

pub fn eval_functional(f: &PhaseFunctional, x1: &PathSample, x2: &PathSample) -> Result<Complex64> {
    f.eval(x1, x2)
}

/// Canonical form of the functional int exp{sum_j i (A_j^{1/2} w, x_j)~} df(w).
pub fn build_fresnel(f: &AtomicMeasure, a1: &KernelOperator, a2: &KernelOperator) -> Result<PhaseFunctional> {
    let n1 = a1.op_norm_sqrt()?;
    let n2 = a2.op_norm_sqrt()?;
    let cfg = match f.atoms().first() {
        Some((_, w)) => w.cfg().clone(),
        None => return Err(Error::InvalidArgument("measure has no atoms".into())),
    };
    let mut out = PhaseFunctional::new(&cfg);
    for (c, w) in f.atoms() {
        out.push_atom(Atom {
            coef: *c,
            u: [a1.apply(w, true)?, a2.apply(w, true)?],
            origin: Some(AtomOrigin {
                w_norm: w.norm(),
                op_sqrt_norms: [n1, n2],
            }),
        })?;
    }
    Ok(out)
}

/// psi(lambda; u_1, u_2) = exp{sum_j [-||u_j||^2 / (2 lambda_j) + i lambda_j^{-1/2} (u_j, a)]}.
pub fn psi(lambda: &LambdaPair, u1: &CMElement, u2: &CMElement) -> Complex64 {
    let mut e = Complex64::new(0.0, 0.0);
    for (l, u) in lambda.0.iter().zip([u1, u2]) {
        let nsq = u.norm_sq();
        let ua = u.inner_drift();
        e += -nsq / (2.0 * l.value()) + I * l.inv_sqrt() * ua;
    }
    e.exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub q0: f64,
    /// k(q0; A; w_k) per atom
    pub k_values: Vec<f64>,
    /// sum_k |c_k| k(q0; A; w_k)
    pub weighted_sum: f64,
    /// Smallest 1/sqrt(2 q0) - |Im lambda_j^{-1/2}| over the sampled lambdas.
    pub gamma_margin: f64,
    /// Smallest k - |psi| over sampled lambdas inside Gamma_{q0} and atoms.
    pub psi_margin: f64,
    /// Number of sampled lambdas that were inside Gamma_{q0}.
    pub lambdas_in_gamma: usize,
    pub member: bool,
}

/// Bound constants and a numerical check of |psi| < k on sampled lambdas.
///
/// Atoms carrying an origin use k = exp{sum_j (2 q0)^{-1/2} ||A_j^{1/2}||_o ||w|| ||a||};
/// other atoms use ||u_j|| in place of ||A_j^{1/2}||_o ||w||.
pub fn class_check(f: &PhaseFunctional, q0: f64, lambdas: &[LambdaPair], cap: f64) -> Result<ClassReport> {
    if !(q0 > 0.0) {
        return Err(Error::NonPositiveQ0(q0));
    }
    let a_norm = CMElement::drift(f.cfg())?.norm();
    let c = 1.0 / (2.0 * q0).sqrt();
    let k_values: Vec<f64> = f
        .atoms()
        .iter()
        .map(|atom| {
            let s: f64 = match atom.origin {
                Some(o) => o.op_sqrt_norms.iter().map(|n| n * o.w_norm).sum(),
                None => atom.u.iter().map(|u| u.norm()).sum(),
            };
            (c * s * a_norm).exp()
        })
        .collect();
    let weighted_sum = f.atoms().iter().zip(&k_values).map(|(a, k)| a.coef.norm() * k).sum();
    let mut gamma_margin = f64::INFINITY;
    let mut psi_margin = f64::INFINITY;
    let mut inside = 0;
    for l in lambdas {
        l.validate()?;
        let m = l.0[0].gamma_margin(q0).min(l.0[1].gamma_margin(q0));
        gamma_margin = gamma_margin.min(m);
        if m > 0.0 {
            inside += 1;
            for (atom, k) in f.atoms().iter().zip(&k_values) {
                psi_margin = psi_margin.min(k - psi(l, &atom.u[0], &atom.u[1]).norm());
            }
        }
    }
    Ok(ClassReport {
        q0,
        k_values,
        weighted_sum,
        gamma_margin,
        psi_margin,
        lambdas_in_gamma: inside,
        member: weighted_sum < cap,
    })
}

/// T_lambda(F)(y_1, y_2) = sum_k c_k exp{i (u_{k,1}, y_1)~ + i (u_{k,2}, y_2)~} psi(lambda; atom_k).
///
/// Boundary coordinates -iq require |q| > q0.
pub fn gfft(f: &PhaseFunctional, lambda: &LambdaPair, y1: &PathSample, y2: &PathSample, q0: f64) -> Result<Complex64> {
    lambda.validate()?;
    if lambda.0.iter().any(|l| matches!(l, Lambda::Boundary(_))) {
        lambda.check_q0(q0)?;
    }
    f.check_paths(y1, y2)?;
    let terms: Vec<Complex64> = f
        .atoms()
        .iter()
        .zip(f.phases(y1, y2))
        .map(|(a, ph)| a.coef * Complex64::from_polar(1.0, ph) * psi(lambda, &a.u[0], &a.u[1]))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// The transform re-expressed as a functional with coefficients c_k psi(lambda; atom_k).
pub fn gfft_functional(f: &PhaseFunctional, lambda: &LambdaPair, q0: f64) -> Result<PhaseFunctional> {
    lambda.validate()?;
    if lambda.0.iter().any(|l| matches!(l, Lambda::Boundary(_))) {
        lambda.check_q0(q0)?;
    }
    let mut out = f.clone();
    for a in &mut out.atoms {
        a.coef *= psi(lambda, &a.u[0], &a.u[1]);
        a.origin = None;
    }
    Ok(out)
}

/// Analytic function space integral at an interior or boundary lambda (transform at y = 0).
pub fn analytic_integral(f: &PhaseFunctional, lambda: &LambdaPair, q0: f64) -> Result<Complex64> {
    let zero = PathSample::zero(f.cfg());
    gfft(f, lambda, &zero, &zero, q0)
}

/// Analytic Feynman integral with parameters (q_1, q_2).
pub fn feynman_integral(f: &PhaseFunctional, q: [f64; 2], q0: f64) -> Result<Complex64> {
    analytic_integral(f, &LambdaPair::boundary(q[0], q[1])?, q0)
}

/// delta F(. | g_1, g_2): coefficients become c_k i [(u_{k,1}, g_1) + (u_{k,2}, g_2)].
pub fn first_variation(f: &PhaseFunctional, g1: &CMElement, g2: &CMElement) -> Result<PhaseFunctional> {
    let mut out = f.clone();
    for a in &mut out.atoms {
        let s = a.u[0].inner(g1)? + a.u[1].inner(g2)?;
        a.coef *= I * s;
        a.origin = None;
    }
    Ok(out)
}

/// Central difference (F(x + h g) - F(x - h g)) / 2h, an independent route to delta F(x | g).
pub fn first_variation_fd(
    f: &PhaseFunctional,
    x1: &PathSample,
    x2: &PathSample,
    g1: &CMElement,
    g2: &CMElement,
    h: f64,
) -> Result<Complex64> {
    let plus = f.eval(&x1.shifted(h, g1), &x2.shifted(h, g2))?;
    let minus = f.eval(&x1.shifted(-h, g1), &x2.shifted(-h, g2))?;
    Ok((plus - minus) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub diff: f64,
}

/// Both sides of the translation theorem for the transform at (-iq_1, -iq_2):
///
/// T(F)(y + A^{1/2} g) = exp{sum_j [i q_j (A_j g_j, g_j)/2 - (-iq_j)^{1/2} (A_j^{1/2} g_j, a)]}
///                       exp{sum_j i q_j (A_j^{1/2} g_j, y_j)~} T(F*)(y)
///
/// with F* = F exp{sum_j -i q_j (A_j^{1/2} g_j, .)~}.
#[allow(clippy::too_many_arguments)]
pub fn gfft_translation_check(
    f: &PhaseFunctional,
    q: [f64; 2],
    q0: f64,
    a1: &KernelOperator,
    a2: &KernelOperator,
    g1: &CMElement,
    g2: &CMElement,
    y1: &PathSample,
    y2: &PathSample,
) -> Result<TranslationCheck> {
    let lambda = LambdaPair::boundary(q[0], q[1])?;
    let h = [a1.apply(g1, true)?, a2.apply(g2, true)?];
    let lhs = gfft(f, &lambda, &y1.shifted(1.0, &h[0]), &y2.shifted(1.0, &h[1]), q0)?;

    let phase = PhaseFunctional::single(Complex64::new(1.0, 0.0), h[0].scale(-q[0]), h[1].scale(-q[1]))?;
    let f_star = f.product(&phase)?;
    let ops = [a1, a2];
    let gs = [g1, g2];
    let ys = [y1, y2];
    let mut e = Complex64::new(0.0, 0.0);
    for j in 0..2 {
        let agg = ops[j].apply(gs[j], false)?.inner(gs[j])?;
        e += I * q[j] * agg / 2.0 - lambda.0[j].sqrt() * h[j].inner_drift();
        e += I * q[j] * crate::gbm::pwz(&h[j], ys[j])?;
    }
    let rhs = e.exp() * gfft(&f_star, &lambda, y1, y2, q0)?;
    Ok(TranslationCheck {
        lhs,
        rhs,
        diff: (lhs - rhs).norm(),
    })
}

/// E^{an_lambda}[F (c_1 (g_1, x_1)~ + c_2 (g_2, x_2)~)], atom by atom
/// sum_j c_j [lambda_j^{-1/2} (g_j, a) + i (u_j, g_j) / lambda_j] psi(lambda; atom).
#[allow(clippy::too_many_arguments)]
pub fn feynman_linear_weighted(
    f: &PhaseFunctional,
    g1: &CMElement,
    g2: &CMElement,
    c1: Complex64,
    c2: Complex64,
    lambda: &LambdaPair,
    q0: f64,
) -> Result<Complex64> {
    lambda.validate()?;
    if lambda.0.iter().any(|l| matches!(l, Lambda::Boundary(_))) {
        lambda.check_q0(q0)?;
    }
    let gs = [g1, g2];
    let cs = [c1, c2];
    let ga = [g1.inner_drift(), g2.inner_drift()];
    let mut terms = Vec::with_capacity(f.len());
    for a in f.atoms() {
        let mut w = Complex64::new(0.0, 0.0);
        for j in 0..2 {
            let l = lambda.0[j];
            w += cs[j] * (l.inv_sqrt() * ga[j] + I * a.u[j].inner(gs[j])? / l.value());
        }
        terms.push(a.coef * w * psi(lambda, &a.u[0], &a.u[1]));
    }
    Ok(pairwise_sum(&terms))
}

/// Functional generated by a discrete measure nu on R^d through directions g_1..g_d:
/// one atom per point v with weight c at w = sum_l v_l g_l, mapped through A_j^{1/2}.
pub fn build_from_theta(
    nu: &[(Complex64, Vec<f64>)],
    gs: &[CMElement],
    a1: &KernelOperator,
    a2: &KernelOperator,
) -> Result<PhaseFunctional> {
    let cfg = match gs.first() {
        Some(g) => g.cfg().clone(),
        None => return Err(Error::DimensionMismatch("need at least one direction".into())),
    };
    let n1 = a1.op_norm_sqrt()?;
    let n2 = a2.op_norm_sqrt()?;
    let mut out = PhaseFunctional::new(&cfg);
    for (weight, v) in nu {
        if v.len() != gs.len() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, {} directions given",
                v.len(),
                gs.len()
            )));
        }
        let mut w = CMElement::zero(&cfg);
        for (vl, g) in v.iter().zip(gs) {
            w = w.axpy(*vl, g)?;
        }
        out.push_atom(Atom {
            coef: *weight,
            u: [a1.apply(&w, true)?, a2.apply(&w, true)?],
            origin: Some(AtomOrigin {
                w_norm: w.norm(),
                op_sqrt_norms: [n1, n2],
            }),
        })?;
    }
    Ok(out)
}
