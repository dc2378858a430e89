//! Laurent analysis in ζ at fixed real `x`, null tests, point values and the
//! ring of generalized numbers, pairings with test functions and association.

use crate::algebra::{Representative, SpaceIndex, SLOPE_TOL};
use crate::domains::{sector_samples, zeta_levels};
use crate::error::{At, Error, Result};
use crate::expr::Expr;
use crate::fit::{loglog, tail_indices, LogLogFit};
use crate::quadrature::{integrate, peak_breakpoints, QuadOptions};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

fn c64(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Truncated Laurent expansion `Σ_{|j| ≤ J} a_j ζ^j` of `ζ ↦ f(x, ζ)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaurentSeries {
    pub center: Vec<f64>,
    pub radius: f64,
    pub truncation: u32,
    pub angles: usize,
    /// `a_{-J}, …, a_{J}`.
    pub coefficients: Vec<Complex64>,
    /// Max reconstruction error on the interleaved circle.
    pub residual: f64,
}

impl LaurentSeries {
    pub fn coeff(&self, j: i32) -> Complex64 {
        let idx = j + self.truncation as i32;
        if idx < 0 {
            return Complex64::default();
        }
        self.coefficients.get(idx as usize).copied().unwrap_or_default()
    }

    pub fn indices(&self) -> impl Iterator<Item = i32> {
        let t = self.truncation as i32;
        -t..=t
    }

    pub fn eval(&self, zeta: Complex64) -> Complex64 {
        self.indices().map(|j| self.coeff(j) * zeta.powi(j)).sum()
    }

    /// Smallest `j` with `|a_j| ≥ tol`.
    pub fn lowest_index(&self, tol: f64) -> Option<i32> {
        self.indices().find(|j| self.coeff(*j).norm() >= tol)
    }

    pub fn max_coefficient(&self) -> (i32, f64) {
        self.indices().map(|j| (j, self.coeff(j).norm())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a })
    }
}

/// Contour radius default `1/(2n)`.
pub fn default_radius(n: u32) -> f64 {
    0.5 / n as f64
}

/// Trapezoid coefficients on `|ζ| = r` with `max(256, 8J+16)` angles.
/// `x` must lie in `O_n` of the claimed family, where `V_n` holds the full
/// punctured disk `0 < |ζ| < 1/n`.
pub fn laurent(f: &Representative, x: &[f64], r: Option<f64>, j: u32) -> Result<LaurentSeries> {
    let space = f
        .claimed()
        .ok_or_else(|| Error::Precondition("Laurent analysis needs a claimed space (n, φ, family)".into()))?;
    laurent_in(f, space, x, r, j)
}

pub fn laurent_in(f: &Representative, space: &SpaceIndex, x: &[f64], r: Option<f64>, j: u32) -> Result<LaurentSeries> {
    let n = space.n.max(1);
    if x.len() != f.dim() {
        return Err(Error::Domain(format!("point of dimension {} for a {}-dimensional representative", x.len(), f.dim())));
    }
    if !space.family.in_o(x, n) {
        return Err(Error::Domain(format!(
            "x = {x:?} is not in O_{n}; only the sector branch is available there, not the full ζ-circle"
        )));
    }
    let r = r.unwrap_or_else(|| default_radius(n));
    if !(r > 0.0 && r < 1.0 / n as f64) {
        return Err(Error::Domain(format!("contour radius {r} must lie in (0, 1/{n})")));
    }
    let m = 256usize.max(8 * j as usize + 16);
    let z: Vec<Complex64> = x.iter().map(|v| c64(*v)).collect();
    let circle = |offset: f64| -> Result<Vec<Complex64>> {
        let vals: Vec<Result<Complex64>> = (0..m)
            .into_par_iter()
            .map(|k| {
                let theta = 2.0 * PI * (k as f64 + offset) / m as f64;
                f.evaluate(&z, Complex64::from_polar(r, theta))
            })
            .collect();
        vals.into_iter().collect()
    };
    let vals = circle(0.0)?;
    let t = j as i32;
    let coefficients: Vec<Complex64> = (-t..=t)
        .map(|jj| {
            let s: Complex64 = vals
                .iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (jj as f64) * k as f64 / m as f64))
                .sum();
            s / (m as f64) * r.powi(-jj)
        })
        .collect();
    let mut series = LaurentSeries { center: x.to_vec(), radius: r, truncation: j, angles: m, coefficients, residual: 0.0 };
    let check = circle(0.5)?;
    series.residual = check
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let zeta = Complex64::from_polar(r, 2.0 * PI * (k as f64 + 0.5) / m as f64);
            (v - series.eval(zeta)).norm()
        })
        .fold(0.0, f64::max);
    Ok(series)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullTestOptions {
    pub truncation: u32,
    /// Absolute threshold for coefficients, residuals and the sector norm.
    pub tol: f64,
    pub radius: Option<f64>,
    pub sampling: GnSampling,
}

impl Default for NullTestOptions {
    fn default() -> Self {
        NullTestOptions { truncation: 16, tol: 1e-9, radius: None, sampling: GnSampling::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Witness {
    Laurent { x: Vec<f64>, j: i32, coefficient: Complex64 },
    SectorNorm { x: Vec<f64>, zeta: Complex64, value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum NullVerdict {
    /// Every probe passed both stages to tolerance.
    Zero,
    Nonzero { witness: Witness },
    /// A Laurent series failed to reconstruct and the sector stage found nothing.
    Inconclusive { reason: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NullTestReport {
    pub verdict: NullVerdict,
    pub series: Vec<LaurentSeries>,
    pub sector_norms: Vec<GnNorm>,
}

/// Two-stage test for `f = 0` in `H_{n,φ}`: Laurent coefficients at the probes,
/// then the sector norm of each point value over complex `arg ζ`.
pub fn null_test(f: &Representative, space: &SpaceIndex, probes: &[Vec<f64>], opts: &NullTestOptions) -> Result<NullTestReport> {
    if probes.is_empty() {
        return Err(Error::Precondition("null test needs at least one probe point".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Precondition("null test tolerance must be positive".into()));
    }
    let mut series = Vec::new();
    let mut unresolved = None;
    for x in probes {
        let s = laurent_in(f, space, x, opts.radius, opts.truncation)?;
        let (j, a) = s.max_coefficient();
        let converged = s.residual < opts.tol.max(1e-9 * a);
        if converged && a >= opts.tol {
            let witness = Witness::Laurent { x: x.clone(), j, coefficient: s.coeff(j) };
            series.push(s);
            return Ok(NullTestReport { verdict: NullVerdict::Nonzero { witness }, series, sector_norms: Vec::new() });
        }
        if !converged && unresolved.is_none() {
            unresolved = Some(format!("Laurent residual {:.3e} at x = {x:?} exceeds tolerance", s.residual));
        }
        series.push(s);
    }
    let mut sector_norms = Vec::new();
    for x in probes {
        let gn = pointvalue_in(f, x, space.n)?;
        let est = gn_norm(&gn, space.n, &opts.sampling)?;
        if est.estimate >= opts.tol {
            let witness = Witness::SectorNorm { x: x.clone(), zeta: est.argmax, value: est.estimate };
            sector_norms.push(est);
            return Ok(NullTestReport { verdict: NullVerdict::Nonzero { witness }, series, sector_norms });
        }
        sector_norms.push(est);
    }
    let verdict = match unresolved {
        Some(reason) => NullVerdict::Inconclusive { reason },
        None => NullVerdict::Zero,
    };
    Ok(NullTestReport { verdict, series, sector_norms })
}

/// Smooth compactly supported test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFunction {
    /// `exp(−((x−c)/w)²)` on `|x − c| ≤ cutoff·w`.
    TruncGaussian { center: f64, width: f64, cutoff: f64 },
    /// `p(t)·(1 + cos πt)/2` on `|t| ≤ 1`, `t = (x − c)/radius`, `p(t) = Σ c_k t^k`.
    PolyCosBump { center: f64, radius: f64, coeffs: Vec<f64> },
}

impl TestFunction {
    pub fn gaussian() -> Self {
        TestFunction::TruncGaussian { center: 0.0, width: 1.0, cutoff: 8.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::TruncGaussian { width, cutoff, center } if !(*width > 0.0 && *cutoff > 0.0 && center.is_finite()) => {
                Err(Error::Object("gaussian test function needs positive width and cutoff".into()))
            }
            TestFunction::PolyCosBump { radius, coeffs, .. } if !(*radius > 0.0) || coeffs.is_empty() => {
                Err(Error::Object("cosine bump needs a positive radius and at least one coefficient".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::TruncGaussian { center, width, cutoff } => {
                let t = (x - center) / width;
                if t.abs() > *cutoff {
                    0.0
                } else {
                    (-t * t).exp()
                }
            }
            TestFunction::PolyCosBump { center, radius, coeffs } => {
                let t = (x - center) / radius;
                if t.abs() > 1.0 {
                    return 0.0;
                }
                let p = coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c);
                p * 0.5 * (1.0 + (PI * t).cos())
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            TestFunction::TruncGaussian { center, width, cutoff } => (center - cutoff * width, center + cutoff * width),
            TestFunction::PolyCosBump { center, radius, .. } => (center - radius, center + radius),
        }
    }

    pub fn center(&self) -> f64 {
        match self {
            TestFunction::TruncGaussian { center, .. } | TestFunction::PolyCosBump { center, .. } => *center,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::TruncGaussian { center, width, cutoff } => write!(f, "gaussian[c={center}, w={width}, cut={cutoff}]"),
            TestFunction::PolyCosBump { center, radius, coeffs } => write!(f, "cosbump[c={center}, r={radius}, p={coeffs:?}]"),
        }
    }
}

/// Quadrature settings used by pairings.
pub const PAIR_QUAD: QuadOptions = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_evals: 1 << 21 };

#[derive(Clone, Debug)]
pub struct Pairing {
    pub f: Representative,
    pub phi: TestFunction,
    pub quad: QuadOptions,
}

impl Pairing {
    pub fn eval(&self, zeta: Complex64) -> Result<Complex64> {
        let (a, b) = self.phi.support();
        let mut bp = vec![a, b, self.phi.center()];
        for p in self.f.peaks() {
            peak_breakpoints(*p, zeta.norm(), a, b, &mut bp);
        }
        let r = integrate(|x| Ok(self.f.evaluate(&[c64(x)], zeta)? * self.phi.eval(x)), &bp, &self.quad)?;
        Ok(r.value)
    }
}

#[derive(Clone, Debug)]
pub enum GnBody {
    /// Expression in `zeta` alone.
    Expr(Expr),
    Point { f: Representative, x: Vec<f64> },
    Pairing(Pairing),
    Linear(Vec<(Complex64, GeneralizedNumber)>),
    Product(Vec<GeneralizedNumber>),
    Reciprocal(GeneralizedNumber),
}

/// Holomorphic function of `ζ` on the sector `|arg ζ| < 1/n, 0 < |ζ| < 1/n`.
#[derive(Clone, Debug)]
pub struct GeneralizedNumber {
    body: Arc<GnBody>,
    pub n: u32,
}

impl GeneralizedNumber {
    pub fn expr(e: Expr, n: u32) -> Result<Self> {
        if e.z_arity() > 0 {
            return Err(Error::Object("generalized numbers depend on zeta only".into()));
        }
        Ok(GeneralizedNumber { body: Arc::new(GnBody::Expr(e)), n })
    }

    pub fn parse(src: &str, n: u32) -> Result<Self> {
        Self::expr(Expr::parse(src)?, n)
    }

    pub fn constant(c: Complex64) -> Self {
        GeneralizedNumber { body: Arc::new(GnBody::Expr(Expr::constant(c))), n: 0 }
    }

    pub fn body(&self) -> &GnBody {
        &self.body
    }

    pub fn eval(&self, zeta: Complex64) -> Result<Complex64> {
        match &*self.body {
            GnBody::Expr(e) => e.eval(&[], zeta),
            GnBody::Point { f, x } => {
                let z: Vec<Complex64> = x.iter().map(|v| c64(*v)).collect();
                f.evaluate(&z, zeta)
            }
            GnBody::Pairing(p) => p.eval(zeta),
            GnBody::Linear(t) => t.iter().try_fold(Complex64::default(), |acc, (c, g)| Ok(acc + c * g.eval(zeta)?)),
            GnBody::Product(v) => v.iter().try_fold(c64(1.0), |acc, g| Ok(acc * g.eval(zeta)?)),
            GnBody::Reciprocal(g) => {
                let v = g.eval(zeta)?;
                if v.norm() == 0.0 {
                    return Err(Error::Pole { what: "reciprocal of zero".into(), at: At { z: Vec::new(), zeta } });
                }
                let r = 1.0 / v;
                if !r.norm().is_finite() {
                    return Err(Error::NonFinite { what: "reciprocal".into(), at: At { z: Vec::new(), zeta } });
                }
                Ok(r)
            }
        }
    }
}

impl fmt::Display for GeneralizedNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.body {
            GnBody::Expr(e) => write!(f, "{e}"),
            GnBody::Point { f: r, x } => write!(f, "[{r}] at x = {x:?}"),
            GnBody::Pairing(p) => write!(f, "<[{}], {}>", p.f, p.phi),
            GnBody::Linear(t) => {
                for (i, (c, g)) in t.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "({c})*[{g}]")?;
                }
                Ok(())
            }
            GnBody::Product(v) => {
                for (i, g) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "[{g}]")?;
                }
                Ok(())
            }
            GnBody::Reciprocal(g) => write!(f, "1/[{g}]"),
        }
    }
}

/// `ζ ↦ f(x, ζ)` with the index of the claimed space (1 when unclaimed).
pub fn pointvalue(f: &Representative, x: &[f64]) -> Result<GeneralizedNumber> {
    pointvalue_in(f, x, f.claimed().map_or(1, |s| s.n))
}

fn pointvalue_in(f: &Representative, x: &[f64], n: u32) -> Result<GeneralizedNumber> {
    if x.len() != f.dim() {
        return Err(Error::Domain(format!("point of dimension {} for a {}-dimensional representative", x.len(), f.dim())));
    }
    if let Some(s) = f.claimed() {
        if !s.family.omega.contains(x) {
            return Err(Error::OutsideDomain(format!("x = {x:?} is not in Ω")));
        }
    }
    Ok(GeneralizedNumber { body: Arc::new(GnBody::Point { f: f.clone(), x: x.to_vec() }), n })
}

pub fn gn_add(a: &GeneralizedNumber, b: &GeneralizedNumber) -> GeneralizedNumber {
    gn_linear(&[(c64(1.0), a.clone()), (c64(1.0), b.clone())])
}

pub fn gn_linear(terms: &[(Complex64, GeneralizedNumber)]) -> GeneralizedNumber {
    let n = terms.iter().map(|(_, g)| g.n).max().unwrap_or(0);
    GeneralizedNumber { body: Arc::new(GnBody::Linear(terms.to_vec())), n }
}

pub fn gn_mul(a: &GeneralizedNumber, b: &GeneralizedNumber) -> GeneralizedNumber {
    GeneralizedNumber { body: Arc::new(GnBody::Product(vec![a.clone(), b.clone()])), n: a.n + b.n }
}

/// Candidate inverse, claimed at index `m`.
pub fn gn_reciprocal(a: &GeneralizedNumber, m: u32) -> GeneralizedNumber {
    GeneralizedNumber { body: Arc::new(GnBody::Reciprocal(a.clone())), n: m }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnSampling {
    pub budget: usize,
    pub floor: f64,
    pub seed: u64,
}

impl Default for GnSampling {
    fn default() -> Self {
        GnSampling { budget: 2000, floor: 1e-8, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnNorm {
    pub n: u32,
    pub estimate: f64,
    pub coarse_estimate: f64,
    pub argmax: Complex64,
    pub points: usize,
    pub stable: bool,
}

fn sector_sup(a: &GeneralizedNumber, n: u32, samples: &[Complex64]) -> Result<(f64, Complex64)> {
    let vals: Vec<Result<f64>> = samples.par_iter().map(|z| Ok(z.norm().powi(n as i32) * a.eval(*z)?.norm())).collect();
    let mut best = (0.0, Complex64::default());
    for (v, z) in vals.into_iter().zip(samples) {
        let v = v?;
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "sector norm".into(), at: At { z: Vec::new(), zeta: *z } });
        }
        if v > best.0 {
            best = (v, *z);
        }
    }
    Ok(best)
}

/// Sampled `sup |ζ|^n |a(ζ)|` over the sector, checked under one refinement.
pub fn gn_norm(a: &GeneralizedNumber, n: u32, s: &GnSampling) -> Result<GnNorm> {
    let n = n.max(1);
    let coarse = sector_samples(n, s.floor, s.budget, s.seed)?;
    let (c, _) = sector_sup(a, n, &coarse)?;
    let mut all = coarse;
    all.extend(sector_samples(n, s.floor / 10.0, s.budget, s.seed + 1)?);
    let (estimate, argmax) = sector_sup(a, n, &all)?;
    let stable = estimate == 0.0 || (estimate - c) / estimate < 0.01;
    Ok(GnNorm { n, estimate, coarse_estimate: c, argmax, points: all.len(), stable })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Invertibility {
    /// `|ζ|^m |1/a(ζ)|` stays bounded on the sampled sector.
    InvertibleSoFar { m: u32, bound: f64, fit: Option<LogLogFit> },
    NoninvertibleEvidence { reason: String, fit: Option<LogLogFit> },
}

/// Moderate-growth probe for `1/a` on the sector, levels from `floor` to `1/n`
/// and five arguments per level.
pub fn gn_invertibility_probe(a: &GeneralizedNumber, m_max: u32, floor: f64) -> Result<Invertibility> {
    let n = a.n.max(1);
    let top = (1.0 / n as f64) * (1.0 - 1e-9);
    let levels = zeta_levels(floor, top)?;
    let b = (1.0 / n as f64) * (1.0 - 1e-6);
    let args = [-b, -0.5 * b, 0.0, 0.5 * b, b];
    let inv = gn_reciprocal(a, 0);
    let mut sups = Vec::with_capacity(levels.len());
    for &r in &levels {
        let mut s = 0.0f64;
        for t in args {
            let zeta = Complex64::from_polar(r, t);
            match inv.eval(zeta) {
                Ok(v) => s = s.max(v.norm()),
                Err(Error::Pole { .. }) => {
                    return Ok(Invertibility::NoninvertibleEvidence { reason: format!("a vanishes at ζ = {zeta}"), fit: None })
                }
                Err(Error::NonFinite { .. }) => {
                    return Ok(Invertibility::NoninvertibleEvidence {
                        reason: format!("1/a overflows at ζ = {zeta}: growth beyond every power"),
                        fit: None,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        sups.push(s);
    }
    let tail = tail_indices(&levels);
    let tx: Vec<f64> = tail.iter().map(|i| levels[*i]).collect();
    let ty: Vec<f64> = tail.iter().map(|i| sups[*i]).collect();
    let fit = loglog(&tx, &ty)?;
    let m = (-fit.slope - SLOPE_TOL).ceil().max(0.0);
    if m > m_max as f64 {
        return Ok(Invertibility::NoninvertibleEvidence {
            reason: format!("1/a grows like |ζ|^{:.3}, beyond m_max = {m_max}", fit.slope),
            fit: Some(fit),
        });
    }
    let m = m as u32;
    let bound = tail.iter().map(|i| sups[*i] * levels[*i].powi(m as i32)).fold(0.0, f64::max);
    Ok(Invertibility::InvertibleSoFar { m, bound, fit: Some(fit) })
}

/// `ζ ↦ ∫ f(x, ζ) φ(x) dx`.
pub fn pair(f: &Representative, phi: &TestFunction) -> Result<GeneralizedNumber> {
    pair_with(f, phi, PAIR_QUAD)
}

pub fn pair_with(f: &Representative, phi: &TestFunction, quad: QuadOptions) -> Result<GeneralizedNumber> {
    if f.dim() != 1 {
        return Err(Error::Object("pairings are implemented for one-dimensional representatives".into()));
    }
    phi.validate()?;
    if let Some(s) = f.claimed() {
        let (a, b) = phi.support();
        if !(s.family.omega.closure_contains(&[a]) && s.family.omega.closure_contains(&[b])) {
            return Err(Error::OutsideDomain(format!("test support [{a}, {b}] leaves Ω")));
        }
    }
    let n = f.claimed().map_or(1, |s| s.n);
    Ok(GeneralizedNumber { body: Arc::new(GnBody::Pairing(Pairing { f: f.clone(), phi: phi.clone(), quad })), n })
}

/// Warning when the test support is not inside `O_n`, where the Laurent
/// argument for pairings applies.
pub fn pair_support_warning(f: &Representative, phi: &TestFunction) -> Option<String> {
    let s = f.claimed()?;
    let (a, b) = phi.support();
    let inside = (0..=64).all(|i| s.family.in_o(&[a + (b - a) * i as f64 / 64.0], s.n));
    (!inside).then(|| format!("test support [{a}, {b}] is not contained in O_{}", s.n))
}

/// One Richardson window on three consecutive grid values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RichardsonWindow {
    pub xi: f64,
    pub limit: Complex64,
    /// Fitted `p` in `a + bξ^p`; `None` once successive differences vanish.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Association {
    Converged {
        limit: Complex64,
        order: Option<f64>,
        /// Largest distance between the limits of the last three windows.
        spread: f64,
        low_confidence: bool,
        windows: Vec<RichardsonWindow>,
    },
    Divergent { order: f64, fit: LogLogFit },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssociationReport {
    pub test_function: TestFunction,
    pub xi: Vec<f64>,
    pub pairings: Vec<Complex64>,
    pub verdict: Association,
}

/// Default association tolerance.
pub const ASSOCIATION_TOL: f64 = 1e-4;

/// Geometric grid `0.1·2^{-k}`, `k = 0..14`.
pub fn default_xi_grid() -> Vec<f64> {
    crate::fit::geometric_grid(0.1, 0.5, 14)
}

fn check_geometric(xi: &[f64]) -> Result<f64> {
    if xi.len() < 10 {
        return Err(Error::Grid(format!("association needs at least 10 ξ values, got {}", xi.len())));
    }
    if xi.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::Grid("ξ values must lie in (0, 1)".into()));
    }
    let r = xi[1] / xi[0];
    if !(r < 1.0) || xi.windows(2).any(|w| ((w[1] / w[0]) / r - 1.0).abs() > 1e-9) {
        return Err(Error::Grid("ξ grid must be geometric and decreasing".into()));
    }
    Ok(r)
}

/// Extrapolate `ξ ↦ ⟨f(·, ξ), φ⟩` to `ξ → 0`, or report its pole order.
pub fn associate(f: &Representative, phi: &TestFunction, xi: &[f64]) -> Result<AssociationReport> {
    let ratio = check_geometric(xi)?;
    let gn = pair(f, phi)?;
    let vals: Vec<Result<Complex64>> = xi.par_iter().map(|x| gn.eval(c64(*x))).collect();
    let pairings: Vec<Complex64> = vals.into_iter().collect::<Result<_>>()?;
    let verdict = extrapolate(xi, &pairings, ratio)?;
    Ok(AssociationReport { test_function: phi.clone(), xi: xi.to_vec(), pairings, verdict })
}

fn extrapolate(xi: &[f64], p: &[Complex64], ratio: f64) -> Result<Association> {
    let mags: Vec<f64> = p.iter().map(|v| v.norm()).collect();
    let nonzero: Vec<usize> = (0..p.len()).filter(|i| mags[*i] > 0.0).collect();
    if nonzero.len() >= crate::fit::MIN_FIT_POINTS {
        let xs: Vec<f64> = nonzero.iter().map(|i| xi[*i]).collect();
        let tail = tail_indices(&xs);
        let fit = loglog(
            &tail.iter().map(|i| xs[*i]).collect::<Vec<_>>(),
            &tail.iter().map(|i| mags[nonzero[*i]]).collect::<Vec<_>>(),
        )?;
        if fit.slope < -0.5 {
            return Ok(Association::Divergent { order: -fit.slope, fit });
        }
    }
    let scale = mags.iter().copied().fold(0.0, f64::max);
    let mut windows = Vec::new();
    for w in p.windows(3).enumerate() {
        let (k, v) = w;
        let (d1, d2) = (v[1] - v[0], v[2] - v[1]);
        let flat = 1e-14 * scale.max(1e-300);
        let (limit, order) = if d1.norm() <= flat || d2.norm() <= flat {
            (v[2], None)
        } else {
            let rho = d2 / d1;
            let order = rho.norm().ln() / ratio.ln();
            if (c64(1.0) - rho).norm() < 1e-12 {
                (v[2], Some(order))
            } else {
                (v[2] + d2 * rho / (c64(1.0) - rho), Some(order))
            }
        };
        windows.push(RichardsonWindow { xi: xi[k + 2], limit, order });
    }
    let last = &windows[windows.len() - 3..];
    let spread = last
        .iter()
        .flat_map(|a| last.iter().map(move |b| (a.limit - b.limit).norm()))
        .fold(0.0, f64::max);
    let limit = last[2].limit;
    let order = last[2].order;
    // noise: differences of the raw pairings should shrink monotonically
    let diffs: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let tail = &diffs[diffs.len() / 2..];
    let noisy = tail.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-6) && w[1] > ASSOCIATION_TOL);
    let low_confidence = noisy || spread > ASSOCIATION_TOL;
    Ok(Association::Converged { limit, order, spread, low_confidence, windows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{Omega, ShrinkingFamily, Side};
    use crate::embedding::{default_family, embed_compact, embed_constant_at_infinity, embed_delta, DistributionTerm, MollifierSpec, RealFunction};
    use crate::weight::WeightFunction;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn space(n: u32) -> SpaceIndex {
        SpaceIndex::new(n, WeightFunction::one(), default_family())
    }

    #[test]
    fn laurent_of_simple_poles() {
        let f = Representative::parse("1/zeta", 1).unwrap().with_claim(space(2));
        // roundoff in a_j grows like r^{-j}; J = 4 keeps it below 1e-12 at r = 1/4
        let s = laurent(&f, &[3.0], None, 4).unwrap();
        for j in s.indices() {
            let expected = if j == -1 { 1.0 } else { 0.0 };
            assert!((s.coeff(j) - c(expected, 0.0)).norm() < 1e-12, "j={j}");
        }
        let zero = Representative::constant(c(0.0, 0.0), 1).with_claim(space(2));
        let s = laurent(&zero, &[3.0], None, 8).unwrap();
        assert!(s.coefficients.iter().all(|a| a.norm() < 1e-14));
        assert!(matches!(laurent(&f, &[0.5], None, 8), Err(Error::Domain(_))));
    }

    #[test]
    fn laurent_of_delta_at_five() {
        let d = embed_delta(0.0, 0, &default_family()).unwrap().representative;
        let s = laurent(&d, &[5.0], Some(0.1), 12).unwrap();
        // (1/π)ζ/(ζ²+25) = (1/(25π)) Σ_m (−1)^m ζ^{2m+1}/25^m
        for m in 0..3 {
            let oracle = (-1f64).powi(m) / (25f64.powi(m + 1) * PI);
            let a = s.coeff(2 * m + 1);
            assert!((a.re - oracle).abs() <= 1e-9 * oracle.abs(), "m={m}: {a} vs {oracle}");
            assert!(s.coeff(2 * m).norm() < 1e-14);
        }
        assert!(s.residual < 1e-14);
    }

    #[test]
    fn coefficient_bound_from_norm() {
        let f = Representative::parse("exp(z)/zeta^2 + zeta", 1).unwrap().with_claim(space(2));
        let grid = space(2).domain().unwrap().sample(&f.grid_options(2000, 1e-8, 3)).unwrap();
        let m = f.norm_estimate(&space(2), &grid).unwrap().estimate;
        // weight ≡ 1 and x ∈ O_2
        let s = laurent(&f, &[2.5], None, 6).unwrap();
        for j in s.indices() {
            assert!(s.coeff(j).norm() <= 1.1 * m * s.radius.powi(-j - 2) + 1e-12, "j={j}");
        }
    }

    #[test]
    fn pole_order_matches_pointvalue_slope() {
        for (src, lowest) in [("3/zeta^2 + 1/zeta", -2), ("zeta + zeta^3", 1), ("2/zeta", -1)] {
            let f = Representative::parse(src, 1).unwrap().with_claim(space(3));
            let s = laurent(&f, &[4.0], None, 6).unwrap();
            assert_eq!(s.lowest_index(1e-9), Some(lowest));
            let pv = pointvalue(&f, &[4.0]).unwrap();
            let xi = crate::fit::geometric_grid(1e-3, 0.5, 12);
            let ys: Vec<f64> = xi.iter().map(|x| pv.eval(c(*x, 0.0)).unwrap().norm()).collect();
            let fit = loglog(&xi, &ys).unwrap();
            assert!((fit.slope - lowest as f64).abs() < 0.05, "{src}: {}", fit.slope);
        }
    }

    #[test]
    fn null_test_verdicts() {
        let fam = default_family();
        let d = embed_delta(0.0, 0, &fam).unwrap().representative;
        let closed = Representative::parse("(1/pi)*zeta/(zeta^2+z^2)", 1).unwrap();
        let diff = d.sub(&closed).unwrap();
        let probes = vec![vec![3.0], vec![-4.5], vec![10.0]];
        let r = null_test(&diff, &space(2), &probes, &NullTestOptions::default()).unwrap();
        assert_eq!(r.verdict, NullVerdict::Zero);
        let pert = diff.add(&Representative::parse("1e-3*zeta", 1).unwrap()).unwrap();
        let opts = NullTestOptions { tol: 1e-6, ..Default::default() };
        match null_test(&pert, &space(2), &probes, &opts).unwrap().verdict {
            NullVerdict::Nonzero { witness: Witness::Laurent { j, coefficient, .. } } => {
                assert_eq!(j, 1);
                assert!((coefficient - c(1e-3, 0.0)).norm() < 1e-12);
            }
            v => panic!("{v:?}"),
        }
        let flat = Representative::parse("exp(-1/zeta^2)", 1).unwrap();
        match null_test(&flat, &space(2), &probes, &NullTestOptions::default()).unwrap().verdict {
            NullVerdict::Nonzero { witness: Witness::SectorNorm { value, .. } } => assert!(value > 1e-6),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn null_test_of_differences_is_zero() {
        let fam = default_family();
        let spec = MollifierSpec::default();
        let tri = embed_compact(&[DistributionTerm { order: 0, f: RealFunction::triangle(0.0, 1.0) }], &spec, &fam).unwrap();
        let corpus = vec![
            embed_delta(0.0, 0, &fam).unwrap().representative,
            embed_delta(0.0, 2, &fam).unwrap().representative,
            tri.representative.clone(),
            tri.representative.mul(&tri.representative).unwrap(),
            Representative::parse("exp(z)*zeta", 1).unwrap(),
        ];
        for f in corpus {
            let z = f.sub(&f).unwrap();
            let r = null_test(&z, &space(3), &[vec![4.0]], &NullTestOptions { truncation: 6, ..Default::default() }).unwrap();
            assert_eq!(r.verdict, NullVerdict::Zero, "{f}");
        }
    }

    #[test]
    fn pointvalues() {
        let d = embed_delta(0.0, 0, &default_family()).unwrap().representative;
        let pv = pointvalue(&d, &[0.0]).unwrap();
        for xi in [0.01, 0.05, 0.1, 0.2, 0.3] {
            let zeta = c(xi, 0.1 * xi);
            assert!((pv.eval(zeta).unwrap() - 1.0 / (PI * zeta)).norm() < 1e-12 / xi);
        }
        let sq = pointvalue(&d.mul(&d).unwrap(), &[0.3]).unwrap();
        let p = pointvalue(&d, &[0.3]).unwrap();
        let z = c(0.05, 0.001);
        assert!((sq.eval(z).unwrap() - p.eval(z).unwrap().powi(2)).norm() < 1e-10);
        let cst = pointvalue(&Representative::constant(c(2.0, 0.0), 1), &[1.0]).unwrap();
        assert_eq!(cst.eval(c(0.1, 0.0)).unwrap(), c(2.0, 0.0));
    }

    #[test]
    fn generalized_number_ring() {
        let z = GeneralizedNumber::parse("zeta", 0).unwrap();
        match gn_invertibility_probe(&z, 12, 1e-8).unwrap() {
            Invertibility::InvertibleSoFar { m, .. } => assert_eq!(m, 1),
            v => panic!("{v:?}"),
        }
        let flat = GeneralizedNumber::parse("exp(-1/zeta^2)", 2).unwrap();
        let est = gn_norm(&flat, 2, &GnSampling::default()).unwrap();
        // sup of ρ² e^{−cos(2θ)/ρ²} over the sector sits at ρ = 1/2, θ = ±1/2
        let oracle = 0.25 * (-(1.0f64).cos() / 0.25).exp();
        assert!(est.estimate > 1e-6 && est.estimate <= oracle * (1.0 + 1e-6));
        assert!(est.estimate > 0.99 * oracle);
        assert!(matches!(gn_invertibility_probe(&flat, 12, 1e-8).unwrap(), Invertibility::NoninvertibleEvidence { .. }));
        let one = gn_mul(&flat, &gn_reciprocal(&flat, 0));
        for zeta in [c(0.3, 0.05), c(0.4, -0.1)] {
            assert!((one.eval(zeta).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        }
        let s = gn_add(&z, &GeneralizedNumber::constant(c(1.0, 0.0)));
        assert_eq!(s.eval(c(0.5, 0.0)).unwrap(), c(1.5, 0.0));
        assert_eq!(gn_mul(&z, &flat).n, 2);
    }

    #[test]
    fn pairing_values() {
        let one = Representative::constant(c(1.0, 0.0), 1);
        let phi = TestFunction::PolyCosBump { center: 0.0, radius: 1.0, coeffs: vec![1.0] };
        // ∫ (1 + cos πt)/2 dt over [−1, 1] = 1
        assert!((pair(&one, &phi).unwrap().eval(c(0.1, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-12);
        let d = embed_delta(0.0, 0, &default_family()).unwrap().representative;
        let g = TestFunction::gaussian();
        for xi in [0.1, 0.01, 1e-4] {
            let v = pair(&d, &g).unwrap().eval(c(xi, 0.0)).unwrap();
            // Poisson kernel against e^{−x²}: e^{ξ²} erfc(ξ), oracle by quadrature on ℝ
            let r = crate::quadrature::integrate_real_line(
                |x| Ok(c(xi / (PI * (xi * xi + x * x)) * (-x * x).exp(), 0.0)),
                0.0,
                xi,
                &[],
                &QuadOptions { abs_tol: 1e-13, rel_tol: 1e-13, max_evals: 1 << 20 },
            )
            .unwrap();
            assert!((v - r.value).norm() < 1e-10, "ξ={xi}");
        }
        // linearity in f and φ
        let tri = embed_compact(&[DistributionTerm { order: 0, f: RealFunction::triangle(0.0, 1.0) }], &MollifierSpec::default(), &default_family())
            .unwrap()
            .representative;
        let comb = d.scale(c(2.0, 0.0)).add(&tri.scale(c(-0.5, 0.0))).unwrap();
        let z = c(0.05, 0.0);
        let lhs = pair(&comb, &g).unwrap().eval(z).unwrap();
        let rhs = 2.0 * pair(&d, &g).unwrap().eval(z).unwrap() - 0.5 * pair(&tri, &g).unwrap().eval(z).unwrap();
        assert!((lhs - rhs).norm() < 1e-10);
        assert!(pair_support_warning(&d, &g).is_some());
    }

    #[test]
    fn association_of_delta() {
        let d = embed_delta(0.0, 0, &default_family()).unwrap().representative;
        let r = associate(&d, &TestFunction::gaussian(), &default_xi_grid()).unwrap();
        match r.verdict {
            Association::Converged { limit, order, low_confidence, .. } => {
                assert!((limit - c(1.0, 0.0)).norm() < 1e-6, "{limit}");
                assert!((order.unwrap() - 1.0).abs() < 0.01);
                assert!(!low_confidence);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn association_of_delta_squared_diverges() {
        let d = embed_delta(0.0, 0, &default_family()).unwrap().representative;
        let r = associate(&d.mul(&d).unwrap(), &TestFunction::gaussian(), &default_xi_grid()).unwrap();
        match r.verdict {
            Association::Divergent { order, .. } => assert!((order - 1.0).abs() < 0.02, "{order}"),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn association_of_heaviside_square_defect() {
        let plus = ShrinkingFamily::one_sided(Side::Plus, Omega::real_line()).unwrap();
        let h = embed_constant_at_infinity(None, 0.0, 1.0, 0.0, &MollifierSpec::default(), &plus).unwrap().representative;
        let defect = h.mul(&h).unwrap().sub(&h).unwrap();
        let r = associate(&defect, &TestFunction::gaussian(), &default_xi_grid()).unwrap();
        match r.verdict {
            Association::Converged { limit, order, .. } => {
                assert!(limit.norm() < 1e-3, "{limit}");
                assert!(order.unwrap() < 1.0);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn association_matches_classical_pairing() {
        let fam = default_family();
        let g = TestFunction::gaussian();
        for f in [RealFunction::triangle(0.2, 0.7), RealFunction::unit_bump(-0.3, 0.5).unwrap()] {
            let e = embed_compact(&[DistributionTerm { order: 0, f: f.clone() }], &MollifierSpec::default(), &fam).unwrap();
            let (a, b) = f.support();
            let mut bp = vec![a, b];
            bp.extend(f.kinks());
            let classical = integrate(|x| Ok(c(f.eval(x) * g.eval(x), 0.0)), &bp, &QuadOptions::default()).unwrap().value;
            let r = associate(&e.representative, &g, &default_xi_grid()).unwrap();
            match r.verdict {
                Association::Converged { limit, .. } => assert!((limit - classical).norm() < 1e-4, "{f}"),
                v => panic!("{v:?}"),
            }
        }
    }

    #[test]
    fn grid_validation() {
        let d = Representative::constant(c(1.0, 0.0), 1);
        assert!(associate(&d, &TestFunction::gaussian(), &[0.1, 0.05]).is_err());
        let mut xi = default_xi_grid();
        xi[3] *= 1.01;
        assert!(matches!(associate(&d, &TestFunction::gaussian(), &xi), Err(Error::Grid(_))));
    }
}
