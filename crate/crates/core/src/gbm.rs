//! Sampling of generalized Brownian motion paths and PWZ stochastic integrals.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cmspace::{same_cfg, CMElement};
use crate::error::{Error, Result};
use crate::timefns::SpaceConfig;

/// Randomness keyed by (seed, stream id, path index), never by execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Generator for one path.
    pub fn path_rng(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_id.to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// A derived stream, used to give the two coordinates of a path pair
    /// independent randomness.
    pub fn substream(&self, k: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: self.stream_id.wrapping_mul(2).wrapping_add(k),
        }
    }
}

/// A path x on the grid, possibly scaled and shifted by Cameron-Martin elements:
/// x = scale * values + sum_k c_k h_k.
///
/// Shifts are kept symbolically so that (w, x)~ picks up (w, h)_{C'} exactly.
#[derive(Debug, Clone)]
pub struct PathSample {
    values: Arc<Vec<f64>>,
    scale: f64,
    shifts: Vec<(f64, CMElement)>,
    cfg: Arc<SpaceConfig>,
}

impl PathSample {
    /// Path from node values; x(t_0) must be 0.
    pub fn from_values(values: Vec<f64>, cfg: &Arc<SpaceConfig>) -> Result<Self> {
        if values.len() != cfg.n() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "path has {} values, grid has {} nodes",
                values.len(),
                cfg.n() + 1
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidArgument(format!("path must start at 0, got {}", values[0])));
        }
        Ok(PathSample {
            values: Arc::new(values),
            scale: 1.0,
            shifts: Vec::new(),
            cfg: cfg.clone(),
        })
    }

    pub fn zero(cfg: &Arc<SpaceConfig>) -> Self {
        PathSample {
            values: Arc::new(vec![0.0; cfg.n() + 1]),
            scale: 1.0,
            shifts: Vec::new(),
            cfg: cfg.clone(),
        }
    }

    /// The deterministic path t -> h(t).
    pub fn from_element(h: &CMElement) -> Self {
        PathSample::zero(h.cfg()).shifted(1.0, h)
    }

    pub fn cfg(&self) -> &Arc<SpaceConfig> {
        &self.cfg
    }

    /// rho * x
    pub fn scaled(&self, rho: f64) -> PathSample {
        PathSample {
            values: self.values.clone(),
            scale: self.scale * rho,
            shifts: self.shifts.iter().map(|(c, h)| (c * rho, h.clone())).collect(),
            cfg: self.cfg.clone(),
        }
    }

    /// x + c * h
    pub fn shifted(&self, c: f64, h: &CMElement) -> PathSample {
        let mut shifts = self.shifts.clone();
        shifts.push((c, h.clone()));
        PathSample {
            values: self.values.clone(),
            scale: self.scale,
            shifts,
            cfg: self.cfg.clone(),
        }
    }

    /// x(t_i) at every node.
    pub fn node_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.values.iter().map(|v| self.scale * v).collect();
        for (c, h) in &self.shifts {
            for (o, hv) in out.iter_mut().zip(h.path_values()) {
                *o += c * hv;
            }
        }
        out
    }

    /// (w, x)~ on a path known to share the configuration of w.
    pub(crate) fn pwz_unchecked(&self, w: &CMElement) -> f64 {
        let z = w.right_limits();
        let v = &self.values;
        let mut acc = 0.0;
        for j in 0..v.len() - 1 {
            acc += z[j] * (v[j + 1] - v[j]);
        }
        let mut total = self.scale * acc;
        for (c, h) in &self.shifts {
            total += c * w.inner(h).unwrap_or(f64::NAN);
        }
        total
    }
}

/// (w, x)~ as the left-endpoint Stieltjes sum sum_j z(t_j)(x(t_{j+1}) - x(t_j)).
pub fn pwz(w: &CMElement, x: &PathSample) -> Result<f64> {
    if !same_cfg(w.cfg(), x.cfg()) {
        return Err(Error::ConfigMismatch);
    }
    Ok(x.pwz_unchecked(w))
}

/// Precomputed increment law for fast repeated sampling.
#[derive(Debug, Clone)]
pub struct PathSampler {
    cfg: Arc<SpaceConfig>,
    mean_inc: Vec<f64>,
    sd_inc: Vec<f64>,
}

impl PathSampler {
    pub fn new(cfg: &Arc<SpaceConfig>) -> Result<Self> {
        let a = cfg.a_values();
        let b = cfg.b_values();
        let mut mean_inc = Vec::with_capacity(cfg.n());
        let mut sd_inc = Vec::with_capacity(cfg.n());
        for j in 1..=cfg.n() {
            let var = b[j] - b[j - 1];
            if !(var > 0.0 && var.is_finite()) {
                return Err(Error::NonIncreasingVariance(j - 1, j));
            }
            let da = a[j] - a[j - 1];
            if !da.is_finite() {
                return Err(Error::InvalidFunction {
                    name: "a".into(),
                    node: j,
                    t: cfg.grid.t(j),
                });
            }
            mean_inc.push(da);
            sd_inc.push(var.sqrt());
        }
        Ok(PathSampler {
            cfg: cfg.clone(),
            mean_inc,
            sd_inc,
        })
    }

    pub fn cfg(&self) -> &Arc<SpaceConfig> {
        &self.cfg
    }

    /// Path number `index` of the given stream.
    pub fn sample(&self, rng: &RngStream, index: u64) -> PathSample {
        let mut r = rng.path_rng(index);
        let mut values = Vec::with_capacity(self.cfg.n() + 1);
        let mut x = 0.0;
        values.push(x);
        for (m, s) in self.mean_inc.iter().zip(&self.sd_inc) {
            let z: f64 = StandardNormal.sample(&mut r);
            x += m + s * z;
            values.push(x);
        }
        PathSample {
            values: Arc::new(values),
            scale: 1.0,
            shifts: Vec::new(),
            cfg: self.cfg.clone(),
        }
    }
}

/// `count` independent paths with x(t_j) - x(t_{j-1}) ~ N(a(t_j) - a(t_{j-1}), b(t_j) - b(t_{j-1})).
pub fn sample_paths(cfg: &Arc<SpaceConfig>, count: usize, rng: &RngStream) -> Result<Vec<PathSample>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let sampler = PathSampler::new(cfg)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| sampler.sample(rng, i))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moment {
    pub estimate: f64,
    pub target: f64,
    pub stderr: f64,
}

impl Moment {
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            (self.estimate - self.target) / self.stderr
        } else if self.estimate == self.target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Sample moments of (w, x)~ and (u, x)~ against their Gaussian targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub count: usize,
    pub mean: Moment,
    pub variance: Moment,
    /// E[(w,x)~ (u,x)~] against int z_w z_u db + (w,a)(u,a)
    pub cross: Moment,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Monte-Carlo moments of PWZ integrals with closed-form targets.
pub fn pwz_moments(
    w: &CMElement,
    u: &CMElement,
    cfg: &Arc<SpaceConfig>,
    count: usize,
    rng: &RngStream,
) -> Result<MomentReport> {
    if count < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 paths, got {count}")));
    }
    if !same_cfg(w.cfg(), cfg) || !same_cfg(u.cfg(), cfg) {
        return Err(Error::ConfigMismatch);
    }
    let sampler = PathSampler::new(cfg)?;
    let pairs: Vec<(f64, f64)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let x = sampler.sample(rng, i);
            (x.pwz_unchecked(w), x.pwz_unchecked(u))
        })
        .collect();
    let nf = count as f64;
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for (s, _) in &pairs {
        let d = s - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let var = m2 / (nf - 1.0);
    let pop_var = m2 / nf;
    let skewness = if pop_var > 0.0 { (m3 / nf) / pop_var.powf(1.5) } else { 0.0 };
    let excess_kurtosis = if pop_var > 0.0 { (m4 / nf) / (pop_var * pop_var) - 3.0 } else { 0.0 };
    // Standard error of the sample variance from the fourth central moment.
    let var_se = (((m4 / nf) - pop_var * pop_var).max(0.0) / nf).sqrt();

    let prods: Vec<f64> = pairs.iter().map(|(s, t)| s * t).collect();
    let cross_mean = prods.iter().sum::<f64>() / nf;
    let cross_var = prods.iter().map(|p| (p - cross_mean).powi(2)).sum::<f64>() / (nf - 1.0);

    let wa = w.inner_drift();
    let ua = u.inner_drift();
    Ok(MomentReport {
        count,
        mean: Moment {
            estimate: mean,
            target: wa,
            stderr: (var / nf).sqrt(),
        },
        variance: Moment {
            estimate: var,
            target: w.norm_sq(),
            stderr: var_se,
        },
        cross: Moment {
            estimate: cross_mean,
            target: w.inner(u)? + wa * ua,
            stderr: (cross_var / nf).sqrt(),
        },
        skewness,
        excess_kurtosis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmspace::beta;
    use crate::timefns::TimeFn;

    fn space(a: TimeFn, b: TimeFn, n: usize) -> Arc<SpaceConfig> {
        Arc::new(SpaceConfig::from_fns(a, b, 1.0, n).unwrap())
    }

    #[test]
    fn test_paths_start_at_zero_and_are_deterministic() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 64);
        let rng = RngStream::new(7, 3);
        let p1 = sample_paths(&cfg, 5, &rng).unwrap();
        let p2 = sample_paths(&cfg, 5, &rng).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(a.node_values()[0], 0.0);
            assert_eq!(a.node_values(), b.node_values());
        }
        let other = sample_paths(&cfg, 1, &RngStream::new(7, 4)).unwrap();
        assert_ne!(other[0].node_values(), p1[0].node_values());
    }

    #[test]
    fn test_terminal_moments_standard_case() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 256);
        let b1 = beta(1.0, &cfg).unwrap();
        let r = pwz_moments(&b1, &b1, &cfg, 20_000, &RngStream::new(1, 0)).unwrap();
        assert!(r.mean.z_score().abs() < 4.0, "{r:?}");
        assert!((r.variance.estimate - 1.0).abs() < 4.0 * r.variance.stderr, "{r:?}");
    }

    #[test]
    fn test_midpoint_mean_with_linear_drift() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 256);
        let half = beta(0.5, &cfg).unwrap();
        let r = pwz_moments(&half, &half, &cfg, 20_000, &RngStream::new(2, 0)).unwrap();
        assert!((r.mean.target - 0.5).abs() < 1e-14);
        assert!(r.mean.z_score().abs() < 4.0, "{r:?}");
    }

    #[test]
    fn test_covariance_is_min_b() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 1000);
        let s = beta(0.3, &cfg).unwrap();
        let t = beta(0.7, &cfg).unwrap();
        let r = pwz_moments(&s, &t, &cfg, 20_000, &RngStream::new(3, 0)).unwrap();
        assert!((r.cross.target - 0.3).abs() < 1e-14);
        assert!(r.cross.z_score().abs() < 4.0, "{r:?}");
    }

    #[test]
    fn test_pwz_of_beta_is_path_value() {
        let cfg = space(TimeFn::linear(0.5), TimeFn::Poly(vec![0.0, 1.0, 1.0]), 128);
        let x = &sample_paths(&cfg, 1, &RngStream::new(9, 0)).unwrap()[0];
        let vals = x.node_values();
        for i in [1, 17, 64, 128] {
            let t = cfg.grid.t(i);
            let v = pwz(&beta(t, &cfg).unwrap(), x).unwrap();
            assert!((v - vals[i]).abs() < 1e-13, "node {i}");
        }
    }

    #[test]
    fn test_pwz_deterministic_path() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(1.0), 128);
        let x = PathSample::from_values(cfg.grid.nodes(), &cfg).unwrap();
        let w = CMElement::from_poly(&[1.0], &cfg).unwrap();
        assert!((pwz(&w, &x).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(pwz(&CMElement::zero(&cfg), &x).unwrap(), 0.0);
    }

    #[test]
    fn test_pwz_scale_is_exact() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 128);
        let x = &sample_paths(&cfg, 1, &RngStream::new(4, 0)).unwrap()[0];
        let w = CMElement::from_poly(&[0.2, 1.0, -0.7], &cfg).unwrap();
        let base = pwz(&w, x).unwrap();
        for rho in [2.0, 0.5, -1.0] {
            assert_eq!(pwz(&w, &x.scaled(rho)).unwrap(), rho * base);
        }
    }

    #[test]
    fn test_shift_adds_inner_product() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 128);
        let x = &sample_paths(&cfg, 1, &RngStream::new(5, 0)).unwrap()[0];
        let w = CMElement::from_poly(&[0.2, 1.0], &cfg).unwrap();
        let h = CMElement::from_poly(&[1.0, -1.0], &cfg).unwrap();
        let shifted = x.shifted(0.5, &h);
        let expect = pwz(&w, x).unwrap() + 0.5 * w.inner(&h).unwrap();
        assert!((pwz(&w, &shifted).unwrap() - expect).abs() < 1e-15);
        let hv = h.path_values();
        let xs = shifted.node_values();
        let xv = x.node_values();
        assert!((xs[77] - xv[77] - 0.5 * hv[77]).abs() < 1e-15);
    }

    #[test]
    fn test_decreasing_variance_rejected() {
        let cfg = space(TimeFn::zero(), TimeFn::linear(-1.0), 16);
        assert!(matches!(
            sample_paths(&cfg, 1, &RngStream::new(0, 0)),
            Err(Error::NonIncreasingVariance(0, 1))
        ));
    }

    #[test]
    fn test_config_mismatch() {
        let c1 = space(TimeFn::zero(), TimeFn::linear(1.0), 16);
        let c2 = space(TimeFn::zero(), TimeFn::linear(1.0), 32);
        let x = PathSample::zero(&c1);
        assert_eq!(pwz(&CMElement::zero(&c2), &x).unwrap_err(), Error::ConfigMismatch);
    }

    #[test]
    fn test_zero_element_moments() {
        let cfg = space(TimeFn::linear(1.0), TimeFn::linear(1.0), 64);
        let z = CMElement::zero(&cfg);
        let r = pwz_moments(&z, &z, &cfg, 1000, &RngStream::new(0, 0)).unwrap();
        assert_eq!((r.mean.estimate, r.variance.estimate), (0.0, 0.0));
        assert_eq!((r.mean.target, r.variance.target), (0.0, 0.0));
    }
}
