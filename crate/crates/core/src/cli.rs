//! Command-line front end: reads a TOML run configuration, dispatches to the
//! evaluators and verifiers, writes CSV reports.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Deserialize;

use crate::cmspace::{cosine_basis, CMElement, KernelOperator};
use crate::fresnel::{build_fresnel, feynman_integral, gfft, AtomicMeasure, LambdaPair, PhaseFunctional};
use crate::gbm::{sample_paths, PathSample, PathSampler, RngStream};
use crate::mcharness::{self, LambdaPath, LimitReport, McSpot, VerifyReport};
use crate::timefns::{validate_config, SpaceConfig, TimeFn};

#[derive(Parser, Debug)]
#[command(name = "gfft", version, about = "Analytic Fourier-Feynman transforms on C_{a,b}^2[0,T]")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte-Carlo sample (or path) count, overrides [run].samples
    #[arg(long, alias = "count")]
    samples: Option<usize>,
    /// Overrides [run].seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides [space].grid_n
    #[arg(long)]
    grid_n: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check the (a, b) pair and the run section
    Validate(Common),
    /// Write sampled paths as CSV rows path_id,t,x
    SamplePaths(Common),
    /// Evaluate F at a sampled path pair
    Eval(Common),
    /// Transform of F at (-iq_1, -iq_2), at a sampled or zero path pair
    Gfft(Common),
    /// Analytic Feynman integral of F with parameters (q_1, q_2)
    Feynman(Common),
    /// Run one identity check and write its report
    Verify {
        which: Theorem,
        #[command(flatten)]
        common: Common,
        /// Residual-vs-n chart for the limit and scale checks
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Theorem {
    Translation,
    Limit,
    Scale,
    CsMu,
    CsFeynman,
    Lemma,
    Section9,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
struct SpaceSection {
    a_family: String,
    #[serde(default)]
    a_params: Vec<f64>,
    b_family: String,
    #[serde(default)]
    b_params: Vec<f64>,
    #[serde(rename = "T")]
    horizon: f64,
    grid_n: usize,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
struct AtomSection {
    coef_re: f64,
    #[serde(default)]
    coef_im: f64,
    z_poly: Vec<f64>,
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
struct MeasureSection {
    #[serde(default)]
    atoms: Vec<AtomSection>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
struct OperatorSection {
    #[serde(default = "one_poly")]
    phi1_poly: Vec<f64>,
    #[serde(default = "one_poly")]
    phi2_poly: Vec<f64>,
    #[serde(default)]
    phi_poly: Option<Vec<f64>>,
}

impl Default for OperatorSection {
    fn default() -> Self {
        OperatorSection {
            phi1_poly: one_poly(),
            phi2_poly: one_poly(),
            phi_poly: None,
        }
    }
}

fn one_poly() -> Vec<f64> {
    vec![1.0]
}

#[derive(Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
struct ElementSection {
    g1_poly: Option<Vec<f64>>,
    g2_poly: Option<Vec<f64>>,
    x0_poly: Option<Vec<f64>>,
    w_poly: Option<Vec<f64>>,
    g_poly: Option<Vec<f64>>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default = "default_q0")]
    q0: f64,
    #[serde(default = "default_q")]
    q1: f64,
    #[serde(default = "default_q")]
    q2: f64,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_n_list")]
    n_list: Vec<usize>,
    #[serde(default = "one")]
    rho1: f64,
    #[serde(default = "one")]
    rho2: f64,
    #[serde(default = "one")]
    lambda_re: f64,
    #[serde(default)]
    lambda_im: f64,
    basis_size: Option<usize>,
    #[serde(default = "one")]
    lambda_r: f64,
    y_sample: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn default_q0() -> f64 {
    0.5
}
fn default_q() -> f64 {
    1.0
}
fn default_samples() -> usize {
    10_000
}
fn default_n_list() -> Vec<usize> {
    vec![2, 4, 8, 16]
}
fn one() -> f64 {
    1.0
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    space: SpaceSection,
    #[serde(default)]
    measure: MeasureSection,
    #[serde(default)]
    operators: OperatorSection,
    #[serde(default)]
    elements: ElementSection,
    #[serde(default)]
    run: RunSection,
}

/// Loaded configuration with the space built.
struct Session {
    rc: RunConfig,
    cfg: Arc<SpaceConfig>,
}

impl Session {
    fn load(common: &Common) -> anyhow::Result<Session> {
        let text = std::fs::read_to_string(&common.config)
            .with_context(|| format!("cannot read config {}", common.config.display()))?;
        let mut rc: RunConfig =
            toml::from_str(&text).with_context(|| format!("malformed config {}", common.config.display()))?;
        if let Some(n) = common.grid_n {
            rc.space.grid_n = n;
        }
        if let Some(s) = common.samples {
            rc.run.samples = s;
        }
        if let Some(s) = common.seed {
            rc.run.seed = s;
        }
        let a = TimeFn::from_family(&rc.space.a_family, &rc.space.a_params)?;
        let b = TimeFn::from_family(&rc.space.b_family, &rc.space.b_params)?;
        let cfg = Arc::new(SpaceConfig::from_fns(a, b, rc.space.horizon, rc.space.grid_n)?);
        Ok(Session { rc, cfg })
    }

    fn check_q(&self) -> anyhow::Result<()> {
        let r = &self.rc.run;
        if !(r.q0 > 0.0) {
            bail!("q0 must be positive, got {}", r.q0);
        }
        for (name, q) in [("q1", r.q1), ("q2", r.q2)] {
            if q.abs() <= r.q0 {
                bail!("|{name}| = {} must exceed q0 = {} (transform defined only for |q_j| > q0)", q.abs(), r.q0);
            }
        }
        Ok(())
    }

    fn q(&self) -> [f64; 2] {
        [self.rc.run.q1, self.rc.run.q2]
    }

    fn rho(&self) -> [f64; 2] {
        [self.rc.run.rho1, self.rc.run.rho2]
    }

    fn rng(&self) -> RngStream {
        RngStream::new(self.rc.run.seed, 0)
    }

    fn kernel(&self, poly: &[f64]) -> anyhow::Result<KernelOperator> {
        Ok(KernelOperator::from_poly(poly, &self.cfg)?)
    }

    fn measure(&self) -> anyhow::Result<AtomicMeasure> {
        if self.rc.measure.atoms.is_empty() {
            bail!("config has no [[measure.atoms]] entries");
        }
        let mut m = AtomicMeasure::new();
        for a in &self.rc.measure.atoms {
            m.push(Complex64::new(a.coef_re, a.coef_im), CMElement::from_poly(&a.z_poly, &self.cfg)?)?;
        }
        Ok(m)
    }

    fn functional(&self) -> anyhow::Result<PhaseFunctional> {
        let a1 = self.kernel(&self.rc.operators.phi1_poly)?;
        let a2 = self.kernel(&self.rc.operators.phi2_poly)?;
        Ok(build_fresnel(&self.measure()?, &a1, &a2)?)
    }

    fn element(&self, name: &str, poly: &Option<Vec<f64>>) -> anyhow::Result<CMElement> {
        match poly {
            Some(p) => Ok(CMElement::from_poly(p, &self.cfg)?),
            None => bail!("config is missing [elements].{name}"),
        }
    }

    /// y = path pair number y_sample of the seed's auxiliary stream, or the zero pair.
    fn y_pair(&self) -> anyhow::Result<(PathSample, PathSample)> {
        match self.rc.run.y_sample {
            None => Ok((PathSample::zero(&self.cfg), PathSample::zero(&self.cfg))),
            Some(i) => {
                let s = PathSampler::new(&self.cfg)?;
                let r = RngStream::new(self.rc.run.seed, 7);
                Ok((s.sample(&r.substream(0), i), s.sample(&r.substream(1), i)))
            }
        }
    }

    fn basis_size(&self) -> usize {
        let max_n = self.rc.run.n_list.iter().copied().max().unwrap_or(1);
        self.rc.run.basis_size.unwrap_or(max_n).max(max_n)
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_values(out: &Option<PathBuf>, values: &[(&str, Complex64)]) -> anyhow::Result<()> {
    for (name, v) in values {
        println!("{name} = {} {:+}i", v.re, v.im);
    }
    if let Some(p) = out {
        let rows: Vec<Vec<String>> = values
            .iter()
            .map(|(n, v)| vec![n.to_string(), fmt_f(v.re), fmt_f(v.im)])
            .collect();
        write_csv(p, &["quantity", "re", "im"], &rows)?;
    }
    Ok(())
}

const REPORT_HEADER: [&str; 10] = [
    "theorem_id",
    "n",
    "closed_re",
    "closed_im",
    "est_re",
    "est_im",
    "stderr",
    "discrepancy",
    "threshold",
    "pass",
];

fn report_row(r: &VerifyReport) -> Vec<String> {
    vec![
        r.theorem_id.clone(),
        r.n.to_string(),
        fmt_f(r.closed.re),
        fmt_f(r.closed.im),
        fmt_f(r.estimate.re),
        fmt_f(r.estimate.im),
        fmt_f(r.stderr),
        fmt_f(r.discrepancy),
        fmt_f(r.threshold),
        r.pass.to_string(),
    ]
}

/// Static SVG polyline of log10(residual) against n.
fn residual_svg(title: &str, ns: &[usize], residuals: &[f64]) -> String {
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let ys: Vec<f64> = residuals.iter().map(|r| r.max(1e-16).log10()).collect();
    let (xmin, xmax) = (
        *ns.first().unwrap_or(&0) as f64,
        (*ns.last().unwrap_or(&1) as f64).max(ns.first().map_or(1.0, |&n| n as f64 + 1.0)),
    );
    let ymin = ys.iter().cloned().fold(f64::INFINITY, f64::min).floor();
    let ymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil().max(ymin + 1.0);
    let px = |x: f64| pad + (x - xmin) / (xmax - xmin) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - ymin) / (ymax - ymin) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">n</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">log10 residual</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{ymax}</text>"#, pad - 4.0, pad + 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{ymin}</text>"#, pad - 4.0, h - pad);
    let pts: Vec<String> = ns
        .iter()
        .zip(&ys)
        .map(|(&n, &y)| format!("{:.2},{:.2}", px(n as f64), py(y)))
        .collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, pts.join(" "));
    for (&n, &y) in ns.iter().zip(&ys) {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, px(n as f64), py(y));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" font-size="10" text-anchor="middle">{n}</text>"#, px(n as f64), h - pad + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

enum Outcome {
    Pass,
    Fail,
}

fn cmd_validate(c: &Common) -> anyhow::Result<Outcome> {
    let s = Session::load(c)?;
    let rep = validate_config(&s.cfg)?;
    for ch in &rep.checks {
        println!("{:<24} {:<5} {}", ch.name, if ch.pass { "ok" } else { "FAIL" }, ch.value);
    }
    s.check_q()?;
    if s.rc.measure.atoms.iter().any(|a| a.z_poly.is_empty()) {
        bail!("measure atom with empty z_poly");
    }
    if let Some(p) = &c.out {
        let rows: Vec<Vec<String>> = rep
            .checks
            .iter()
            .map(|ch| vec![ch.name.clone(), ch.pass.to_string(), fmt_f(ch.value)])
            .collect();
        write_csv(p, &["check", "pass", "value"], &rows)?;
    }
    Ok(if rep.pass { Outcome::Pass } else { Outcome::Fail })
}

fn cmd_sample_paths(c: &Common) -> anyhow::Result<Outcome> {
    let s = Session::load(c)?;
    let count = c.samples.unwrap_or(10);
    let paths = sample_paths(&s.cfg, count, &s.rng().substream(0))?;
    let nodes = s.cfg.grid.nodes();
    let mut rows = Vec::with_capacity(count * nodes.len());
    for (i, p) in paths.iter().enumerate() {
        for (t, x) in nodes.iter().zip(p.node_values()) {
            rows.push(vec![i.to_string(), fmt_f(*t), fmt_f(x)]);
        }
    }
    match &c.out {
        Some(p) => write_csv(p, &["path_id", "t", "x"], &rows)?,
        None => {
            println!("path_id,t,x");
            for r in rows {
                println!("{}", r.join(","));
            }
        }
    }
    Ok(Outcome::Pass)
}

fn cmd_eval(c: &Common) -> anyhow::Result<Outcome> {
    let s = Session::load(c)?;
    let f = s.functional()?;
    let (x1, x2) = s.y_pair()?;
    write_values(&c.out, &[("F", f.eval(&x1, &x2)?)])?;
    Ok(Outcome::Pass)
}

fn cmd_gfft(c: &Common) -> anyhow::Result<Outcome> {
    let s = Session::load(c)?;
    s.check_q()?;
    let f = s.functional()?;
    let (y1, y2) = s.y_pair()?;
    let q = s.q();
    let v = gfft(&f, &LambdaPair::boundary(q[0], q[1])?, &y1, &y2, s.rc.run.q0)?;
    write_values(&c.out, &[("gfft", v)])?;
    Ok(Outcome::Pass)
}

fn cmd_feynman(c: &Common) -> anyhow::Result<Outcome> {
    let s = Session::load(c)?;
    s.check_q()?;
    let v = feynman_integral(&s.functional()?, s.q(), s.rc.run.q0)?;
    write_values(&c.out, &[("feynman", v)])?;
    Ok(Outcome::Pass)
}

fn limit_reports(rep: &LimitReport, svg: &Option<PathBuf>, title: &str, ns: &[usize]) -> anyhow::Result<Vec<VerifyReport>> {
    if let Some(p) = svg {
        std::fs::write(p, residual_svg(title, ns, &rep.residuals)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    let mut out = rep.all_reports();
    if !rep.decay_ok {
        // the per-n rows may pass individually while the sequence as a whole does not
        for r in &mut out {
            if r.theorem_id == title {
                r.pass = r.pass && rep.decay_ok;
            }
        }
    }
    Ok(out)
}

fn cmd_verify(which: Theorem, c: &Common, svg: &Option<PathBuf>) -> anyhow::Result<Outcome> {
    let s = Session::load(c)?;
    let run = &s.rc.run;
    let samples = run.samples;
    let rng = s.rng();
    let reports: Vec<VerifyReport> = match which {
        Theorem::Translation => {
            let a1 = s.kernel(&s.rc.operators.phi1_poly)?;
            let g = build_fresnel(&s.measure()?, &a1, &KernelOperator::zero(&s.cfg))?;
            let x0 = s.element("x0_poly", &s.rc.elements.x0_poly)?;
            mcharness::verify_translation(&g, &x0, samples, &rng)?
        }
        Theorem::Limit => {
            s.check_q()?;
            let f = s.functional()?;
            let (y1, y2) = s.y_pair()?;
            let basis = cosine_basis(s.basis_size(), &s.cfg)?;
            let spot = McSpot {
                lambda: Complex64::new(run.lambda_re, run.lambda_im),
                n: run.n_list.first().copied().unwrap_or(1),
                samples,
                rng,
            };
            let rep = mcharness::verify_limit_gfft(
                &f,
                s.q(),
                run.q0,
                &y1,
                &y2,
                &basis,
                &run.n_list,
                LambdaPath::Geometric { r: run.lambda_r },
                (samples > 0).then_some(spot),
            )?;
            limit_reports(&rep, svg, "limit", &run.n_list)?
        }
        Theorem::Scale => {
            let f = s.functional()?;
            let basis = cosine_basis(s.basis_size(), &s.cfg)?;
            let rep = mcharness::verify_change_of_scale(&f, s.rho(), &basis, &run.n_list, (samples > 0).then_some((samples, rng)))?;
            limit_reports(&rep, svg, "scale", &run.n_list)?
        }
        Theorem::CsMu => {
            let f = s.functional()?;
            let g1 = s.element("g1_poly", &s.rc.elements.g1_poly)?;
            let g2 = s.element("g2_poly", &s.rc.elements.g2_poly)?;
            mcharness::verify_cameron_storvick_mu(&f, &g1, &g2, s.rho(), samples, &rng)?
        }
        Theorem::CsFeynman => {
            s.check_q()?;
            let f = s.functional()?;
            let g1 = s.element("g1_poly", &s.rc.elements.g1_poly)?;
            let g2 = s.element("g2_poly", &s.rc.elements.g2_poly)?;
            let mut out = vec![mcharness::verify_cameron_storvick_feynman(
                &f,
                &g1,
                &g2,
                s.q(),
                run.q0,
                mcharness::CS_DRIFT_COEF,
            )?];
            if samples > 0 {
                let rho = s.rho();
                out.push(mcharness::verify_cameron_storvick_real(
                    &f,
                    &g1,
                    &g2,
                    [rho[0].powi(-2), rho[1].powi(-2)],
                    samples,
                    &rng,
                )?);
            }
            out
        }
        Theorem::Lemma => {
            let w = s.element("w_poly", &s.rc.elements.w_poly)?;
            let basis = cosine_basis(s.basis_size(), &s.cfg)?;
            let lambda = Complex64::new(run.lambda_re, run.lambda_im);
            let mut out = Vec::new();
            for &n in &run.n_list {
                out.extend(mcharness::verify_lemma_limit(lambda, &w, &basis, n, samples, &rng)?);
            }
            out
        }
        Theorem::Section9 => {
            let phi = match &s.rc.operators.phi_poly {
                Some(p) => s.kernel(p)?,
                None => bail!("config is missing [operators].phi_poly"),
            };
            let g = s.element("g_poly", &s.rc.elements.g_poly)?;
            vec![mcharness::verify_indefinite_kernel(&s.measure()?, &phi, &g, run.q0)?]
        }
    };
    for r in &reports {
        println!(
            "{:<16} n={:<7} closed={:.12e}{:+.12e}i other={:.12e}{:+.12e}i disc={:.3e} thr={:.3e} {}",
            r.theorem_id,
            r.n,
            r.closed.re,
            r.closed.im,
            r.estimate.re,
            r.estimate.im,
            r.discrepancy,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(p) = &c.out {
        let rows: Vec<Vec<String>> = reports.iter().map(report_row).collect();
        write_csv(p, &REPORT_HEADER, &rows)?;
    }
    Ok(if reports.iter().all(|r| r.pass) { Outcome::Pass } else { Outcome::Fail })
}

/// Parse arguments and run; returns the process exit code
/// (0 all checks pass, 2 a check failed, 1 usage or configuration error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.cmd {
        Cmd::Validate(c) => cmd_validate(c),
        Cmd::SamplePaths(c) => cmd_sample_paths(c),
        Cmd::Eval(c) => cmd_eval(c),
        Cmd::Gfft(c) => cmd_gfft(c),
        Cmd::Feynman(c) => cmd_feynman(c),
        Cmd::Verify { which, common, svg } => cmd_verify(*which, common, svg),
    };
    match result {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_run_section_defaults() {
        let r = RunSection::default();
        assert_eq!(r.n_list, vec![2, 4, 8, 16]);
        assert_eq!(r.q0, 0.5);
        assert!(r.y_sample.is_none());
    }

    #[test]
    fn test_unknown_key_rejected() {
        let text = "[space]\na_family='zero'\nb_family='linear'\nb_params=[1.0]\nT=1.0\ngrid_n=8\nbogus=1\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn test_usage_errors_exit_one() {
        assert_eq!(run(["gfft", "frobnicate"]), 1);
        assert_eq!(run(["gfft", "validate"]), 1);
        assert_eq!(run(["gfft", "verify", "nonsense", "--config", "x.toml"]), 1);
    }

    #[test]
    fn test_svg_has_one_point_per_n() {
        let s = residual_svg("limit", &[2, 4, 8], &[1e-2, 1e-4, 0.0]);
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.starts_with("<svg"));
    }
}
