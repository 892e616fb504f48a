//! The Cameron-Martin type space C'_{a,b}[0,T], stored through densities z = D_t w.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::timefns::SpaceConfig;

pub(crate) fn same_cfg(a: &Arc<SpaceConfig>, b: &Arc<SpaceConfig>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Integral over [t_0, t_end] of a node-sampled integrand that may jump at nodes.
///
/// The range is split into runs at every jump; each run uses composite Simpson,
/// Simpson followed by a 3/8 panel when its interval count is odd, or the
/// trapezoid rule for a single interval.
fn integrate_runs<L, R, B>(h: f64, end: usize, left: L, right: R, is_break: B) -> f64
where
    L: Fn(usize) -> f64,
    R: Fn(usize) -> f64,
    B: Fn(usize) -> bool,
{
    let mut total = 0.0;
    let mut start = 0;
    for i in 1..=end {
        if i == end || is_break(i) {
            total += run(h, start, i, &left, &right);
            start = i;
        }
    }
    total
}

fn run<L: Fn(usize) -> f64, R: Fn(usize) -> f64>(h: f64, p: usize, q: usize, left: &L, right: &R) -> f64 {
    let v = |i: usize| if i == p { right(p) } else { left(i) };
    let m = q - p;
    let simpson = |from: usize, to: usize| {
        let mut odd = 0.0;
        let mut even = 0.0;
        for i in from + 1..to {
            if (i - from) % 2 == 1 {
                odd += v(i);
            } else {
                even += v(i);
            }
        }
        h / 3.0 * (v(from) + v(to) + 4.0 * odd + 2.0 * even)
    };
    match m {
        0 => 0.0,
        1 => 0.5 * h * (v(p) + v(q)),
        _ if m % 2 == 0 => simpson(p, q),
        _ => {
            let head = if m > 3 { simpson(p, q - 3) } else { 0.0 };
            let k = q - 3;
            head + 3.0 * h / 8.0 * (v(k) + 3.0 * v(k + 1) + 3.0 * v(k + 2) + v(q))
        }
    }
}

/// An element w of C'_{a,b}[0,T], w(t) = int_0^t z db.
///
/// The density is kept as left and right limits at each node so indicator
/// densities integrate without a fractional end cell. At a node where both
/// limits agree the density is continuous.
#[derive(Debug, Clone)]
pub struct CMElement {
    left: Vec<f64>,
    right: Vec<f64>,
    cfg: Arc<SpaceConfig>,
}

impl PartialEq for CMElement {
    fn eq(&self, other: &Self) -> bool {
        self.left == other.left && self.right == other.right && same_cfg(&self.cfg, &other.cfg)
    }
}

/// Build the element with density `z` (one value per node).
pub fn d_inv(z: &[f64], cfg: &Arc<SpaceConfig>) -> Result<CMElement> {
    CMElement::from_density(z.to_vec(), cfg)
}

impl CMElement {
    pub fn from_density(z: Vec<f64>, cfg: &Arc<SpaceConfig>) -> Result<Self> {
        if z.len() != cfg.n() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "density has {} values, grid has {} nodes",
                z.len(),
                cfg.n() + 1
            )));
        }
        if let Some(node) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction {
                name: "density".into(),
                node,
                t: cfg.grid.t(node),
            });
        }
        Ok(CMElement {
            right: z.clone(),
            left: z,
            cfg: cfg.clone(),
        })
    }

    /// Density given by a callable evaluated at the nodes.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, cfg: &Arc<SpaceConfig>) -> Result<Self> {
        let z = cfg.grid.nodes().into_iter().map(f).collect();
        Self::from_density(z, cfg)
    }

    /// Density sum_k c_k t^k.
    pub fn from_poly(coeffs: &[f64], cfg: &Arc<SpaceConfig>) -> Result<Self> {
        Self::from_fn(|t| coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c), cfg)
    }

    pub fn zero(cfg: &Arc<SpaceConfig>) -> Self {
        let z = vec![0.0; cfg.n() + 1];
        CMElement {
            left: z.clone(),
            right: z,
            cfg: cfg.clone(),
        }
    }

    /// The element with density a'/b', which represents the drift a itself.
    pub fn drift(cfg: &Arc<SpaceConfig>) -> Result<Self> {
        let z = cfg
            .a_prime()
            .iter()
            .zip(cfg.b_prime())
            .map(|(ap, bp)| ap / bp)
            .collect();
        Self::from_density(z, cfg)
    }

    pub fn cfg(&self) -> &Arc<SpaceConfig> {
        &self.cfg
    }

    /// Density values at the nodes, left-continuous convention.
    pub fn density(&self) -> Vec<f64> {
        let mut z = self.left.clone();
        z[0] = self.right[0];
        z
    }

    pub(crate) fn right_limits(&self) -> &[f64] {
        &self.right
    }

    fn is_break(&self, i: usize) -> bool {
        self.left[i] != self.right[i]
    }

    fn check_cfg(&self, other: &CMElement) -> Result<()> {
        if same_cfg(&self.cfg, &other.cfg) {
            Ok(())
        } else {
            Err(Error::ConfigMismatch)
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> CMElement {
        CMElement {
            left: self.left.iter().map(|&v| f(v)).collect(),
            right: self.right.iter().map(|&v| f(v)).collect(),
            cfg: self.cfg.clone(),
        }
    }

    fn zip(&self, other: &CMElement, f: impl Fn(f64, f64) -> f64) -> Result<CMElement> {
        self.check_cfg(other)?;
        Ok(CMElement {
            left: self.left.iter().zip(&other.left).map(|(&x, &y)| f(x, y)).collect(),
            right: self.right.iter().zip(&other.right).map(|(&x, &y)| f(x, y)).collect(),
            cfg: self.cfg.clone(),
        })
    }

    pub fn scale(&self, c: f64) -> CMElement {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &CMElement) -> Result<CMElement> {
        self.zip(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &CMElement) -> Result<CMElement> {
        self.zip(other, |x, y| x - y)
    }

    /// self + c * other
    pub fn axpy(&self, c: f64, other: &CMElement) -> Result<CMElement> {
        self.zip(other, |x, y| x + c * y)
    }

    /// Pointwise product of the density with a continuous node function.
    pub(crate) fn mul_nodes(&self, phi: &[f64]) -> CMElement {
        CMElement {
            left: self.left.iter().zip(phi).map(|(z, p)| z * p).collect(),
            right: self.right.iter().zip(phi).map(|(z, p)| z * p).collect(),
            cfg: self.cfg.clone(),
        }
    }

    /// Maximum over nodes of the difference in either one-sided limit.
    pub fn sup_distance(&self, other: &CMElement) -> f64 {
        self.left
            .iter()
            .zip(&other.left)
            .chain(self.right.iter().zip(&other.right))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.left.iter().chain(&self.right).all(|&v| v == 0.0)
    }

    /// int_0^{t_end} (product of densities) * weight dt
    fn integral_with(&self, others: &[&CMElement], weight: &[f64], end: usize) -> f64 {
        let left = |i: usize| others.iter().fold(weight[i] * self.left[i], |acc, e| acc * e.left[i]);
        let right = |i: usize| others.iter().fold(weight[i] * self.right[i], |acc, e| acc * e.right[i]);
        let brk = |i: usize| self.is_break(i) || others.iter().any(|e| e.is_break(i));
        integrate_runs(self.cfg.h(), end, left, right, brk)
    }

    /// w(t_i) = int_0^{t_i} z db.
    pub fn eval_at_node(&self, i: usize) -> f64 {
        self.integral_with(&[], self.cfg.b_prime(), i)
    }

    /// w(t) with t snapped to the nearest node.
    pub fn eval_path(&self, t: f64) -> Result<f64> {
        let i = self.cfg.grid.snap(t)?;
        Ok(self.eval_at_node(i))
    }

    /// w(t_i) at every node.
    pub fn path_values(&self) -> Vec<f64> {
        (0..=self.cfg.n()).map(|i| self.eval_at_node(i)).collect()
    }

    /// (w, v)_{C'} = int z_w z_v db
    pub fn inner(&self, other: &CMElement) -> Result<f64> {
        self.check_cfg(other)?;
        Ok(self.integral_with(&[other], self.cfg.b_prime(), self.cfg.n()))
    }

    pub fn norm_sq(&self) -> f64 {
        self.integral_with(&[self], self.cfg.b_prime(), self.cfg.n())
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().max(0.0).sqrt()
    }

    /// (w, a)_{C'} = int z a' dt
    pub fn inner_drift(&self) -> f64 {
        self.integral_with(&[], self.cfg.a_prime(), self.cfg.n())
    }

    /// int z^2 d[b + |a|], the L^2_{a,b} norm squared of the density.
    pub fn density_norm_ab_sq(&self) -> f64 {
        let w: Vec<f64> = self
            .cfg
            .b_prime()
            .iter()
            .zip(self.cfg.a_prime())
            .map(|(b, a)| b + a.abs())
            .collect();
        self.integral_with(&[self], &w, self.cfg.n())
    }
}

/// (w1, w2)_{C'}
pub fn inner_cm(w1: &CMElement, w2: &CMElement) -> Result<f64> {
    w1.inner(w2)
}

pub fn eval_path(w: &CMElement, t: f64) -> Result<f64> {
    w.eval_path(t)
}

/// beta_t: indicator density of [0, t], with t snapped to the nearest node.
pub fn beta(t: f64, cfg: &Arc<SpaceConfig>) -> Result<CMElement> {
    let m = cfg.grid.snap(t)?;
    let n = cfg.n();
    if m == 0 {
        return Ok(CMElement::zero(cfg));
    }
    let left = (0..=n).map(|i| if i <= m { 1.0 } else { 0.0 }).collect();
    let right = (0..=n).map(|i| if i < m { 1.0 } else { 0.0 }).collect();
    Ok(CMElement {
        left,
        right,
        cfg: cfg.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    elements: Vec<CMElement>,
    drift_coeffs: Vec<f64>,
    pub gram_tol: f64,
}

impl OrthonormalBasis {
    fn from_elements(elements: Vec<CMElement>) -> Self {
        let drift_coeffs = elements.iter().map(|e| e.inner_drift()).collect();
        OrthonormalBasis {
            elements,
            drift_coeffs,
            gram_tol: 1e-10,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMElement] {
        &self.elements
    }

    /// (e_k, a)_{C'} for each element.
    pub fn drift_coeffs(&self) -> &[f64] {
        &self.drift_coeffs
    }

    /// The first `n` elements.
    pub fn prefix(&self, n: usize) -> OrthonormalBasis {
        let n = n.min(self.len());
        OrthonormalBasis {
            elements: self.elements[..n].to_vec(),
            drift_coeffs: self.drift_coeffs[..n].to_vec(),
            gram_tol: self.gram_tol,
        }
    }

    /// Largest |(e_i, e_j) - delta_ij|.
    pub fn gram_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, ei) in self.elements.iter().enumerate() {
            for (j, ej) in self.elements.iter().enumerate().skip(i) {
                let g = ei.inner(ej).unwrap_or(f64::NAN);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

const RANK_TOL: f64 = 1e-8;

fn orthogonalize(v: &CMElement, basis: &[CMElement]) -> Result<(CMElement, Vec<f64>)> {
    let mut r = v.clone();
    let mut coeffs = vec![0.0; basis.len()];
    for _pass in 0..2 {
        for (k, e) in basis.iter().enumerate() {
            let c = r.inner(e)?;
            coeffs[k] += c;
            r = r.axpy(-c, e)?;
        }
    }
    Ok((r, coeffs))
}

/// Modified Gram-Schmidt with one re-orthogonalization pass over the first `n` seeds.
pub fn gram_schmidt_elements(seeds: &[CMElement], n: usize) -> Result<OrthonormalBasis> {
    if seeds.len() < n {
        return Err(Error::DimensionMismatch(format!("{} seeds for {} basis elements", seeds.len(), n)));
    }
    let mut out: Vec<CMElement> = Vec::with_capacity(n);
    for (index, seed) in seeds.iter().take(n).enumerate() {
        let (r, _) = orthogonalize(seed, &out)?;
        let norm = r.norm();
        if norm <= RANK_TOL * seed.norm().max(1.0) {
            return Err(Error::RankDeficient { index, residual: norm });
        }
        out.push(r.scale(1.0 / norm));
    }
    Ok(OrthonormalBasis::from_elements(out))
}

/// Orthonormalize the first `n` seed densities under (.,.)_{C'}.
pub fn gram_schmidt(seeds: &[Vec<f64>], n: usize, cfg: &Arc<SpaceConfig>) -> Result<OrthonormalBasis> {
    let elems = seeds
        .iter()
        .map(|z| CMElement::from_density(z.clone(), cfg))
        .collect::<Result<Vec<_>>>()?;
    gram_schmidt_elements(&elems, n)
}

/// Orthonormal basis from the seeds cos(k pi t / T), k = 0, 1, ...
pub fn cosine_basis(n: usize, cfg: &Arc<SpaceConfig>) -> Result<OrthonormalBasis> {
    let horizon = cfg.horizon();
    let seeds = (0..n)
        .map(|k| CMElement::from_fn(|t| (k as f64 * std::f64::consts::PI * t / horizon).cos(), cfg))
        .collect::<Result<Vec<_>>>()?;
    gram_schmidt_elements(&seeds, n)
}

#[derive(Debug, Clone)]
pub struct Extension {
    /// (e_k, w)_{C'}
    pub coeffs: Vec<f64>,
    /// || w - sum_k (e_k, w) e_k ||
    pub residual_norm: f64,
    /// w - sum_k (e_k, w) e_k
    pub residual: CMElement,
    /// Normalized residual, present when the residual norm exceeds 1e-8.
    pub next: Option<CMElement>,
}

impl Extension {
    /// (e_{n+1}, a)_{C'} times the residual norm, i.e. (residual, a)_{C'}.
    pub fn residual_drift(&self) -> f64 {
        self.residual.inner_drift()
    }
}

/// Expand w against the basis and return the part orthogonal to it.
pub fn extend_basis(basis: &OrthonormalBasis, w: &CMElement) -> Result<Extension> {
    let (residual, coeffs) = orthogonalize(w, basis.elements())?;
    let residual_norm = residual.norm();
    let next = (residual_norm > RANK_TOL).then(|| residual.scale(1.0 / residual_norm));
    Ok(Extension {
        coeffs,
        residual_norm,
        residual,
        next,
    })
}

/// Multiplication operator A w(t) = int_0^t phi z db.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    phi: Vec<f64>,
    cfg: Arc<SpaceConfig>,
}

impl KernelOperator {
    pub fn from_values(phi: Vec<f64>, cfg: &Arc<SpaceConfig>) -> Result<Self> {
        if phi.len() != cfg.n() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} values, grid has {} nodes",
                phi.len(),
                cfg.n() + 1
            )));
        }
        if let Some(node) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction {
                name: "kernel".into(),
                node,
                t: cfg.grid.t(node),
            });
        }
        Ok(KernelOperator { phi, cfg: cfg.clone() })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(f: F, cfg: &Arc<SpaceConfig>) -> Result<Self> {
        Self::from_values(cfg.grid.nodes().into_iter().map(f).collect(), cfg)
    }

    pub fn from_poly(coeffs: &[f64], cfg: &Arc<SpaceConfig>) -> Result<Self> {
        Self::from_fn(|t| coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c), cfg)
    }

    pub fn constant(c: f64, cfg: &Arc<SpaceConfig>) -> Self {
        KernelOperator {
            phi: vec![c; cfg.n() + 1],
            cfg: cfg.clone(),
        }
    }

    pub fn identity(cfg: &Arc<SpaceConfig>) -> Self {
        Self::constant(1.0, cfg)
    }

    pub fn zero(cfg: &Arc<SpaceConfig>) -> Self {
        Self::constant(0.0, cfg)
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn is_nonnegative(&self) -> bool {
        self.phi.iter().all(|&v| v >= 0.0)
    }

    fn sqrt_kernel(&self) -> Result<Vec<f64>> {
        if let Some((node, &value)) = self.phi.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(Error::NegativeKernel { node, value });
        }
        Ok(self.phi.iter().map(|v| v.sqrt()).collect())
    }

    /// A w, or A^{1/2} w when `sqrt` is set.
    pub fn apply(&self, w: &CMElement, sqrt: bool) -> Result<CMElement> {
        if !same_cfg(&self.cfg, w.cfg()) {
            return Err(Error::ConfigMismatch);
        }
        if sqrt {
            Ok(w.mul_nodes(&self.sqrt_kernel()?))
        } else {
            Ok(w.mul_nodes(&self.phi))
        }
    }

    /// (A_+, A_-) with kernels max(phi, 0) and max(-phi, 0).
    pub fn decompose(&self) -> (KernelOperator, KernelOperator) {
        let plus = self.phi.iter().map(|&v| v.max(0.0)).collect();
        let minus = self.phi.iter().map(|&v| (-v).max(0.0)).collect();
        (
            KernelOperator { phi: plus, cfg: self.cfg.clone() },
            KernelOperator { phi: minus, cfg: self.cfg.clone() },
        )
    }

    /// Grid maximum of sqrt(phi), standing in for ||A^{1/2}||_o.
    pub fn op_norm_sqrt(&self) -> Result<f64> {
        Ok(self.sqrt_kernel()?.into_iter().fold(0.0, f64::max))
    }

    /// Grid maximum of |phi|.
    pub fn op_norm(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn apply_op(a: &KernelOperator, w: &CMElement, sqrt: bool) -> Result<CMElement> {
    a.apply(w, sqrt)
}

pub fn decompose(a: &KernelOperator) -> (KernelOperator, KernelOperator) {
    a.decompose()
}

pub fn op_norm_sqrt(a: &KernelOperator) -> Result<f64> {
    a.op_norm_sqrt()
}
