//! Representatives `f(z, ζ)` of elements of the algebra, the spaces `H_{n,φ}`,
//! ring operations, derivatives and sampled norm certificates.

use crate::domains::{CompactBox, GridPoint, SampleGrid, SampleOptions, SectorDomain, ShrinkingFamily};
use crate::embedding::{MollifierSpec, RealFunction};
use crate::error::{At, Error, Result};
use crate::expr::{Expr, Var};
use crate::fit::{loglog, tail_indices, LogLogFit};
use crate::quadrature::{integrate, peak_breakpoints, QuadOptions};
use crate::weight::WeightFunction;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// The pair `(n, φ)` together with the family defining `V_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceIndex {
    pub n: u32,
    pub phi: WeightFunction,
    pub family: ShrinkingFamily,
}

impl SpaceIndex {
    pub fn new(n: u32, phi: WeightFunction, family: ShrinkingFamily) -> Self {
        SpaceIndex { n, phi, family }
    }

    pub fn domain(&self) -> Result<SectorDomain> {
        SectorDomain::new(self.n, self.family.clone())
    }

    pub fn weight_at(&self, x: &[f64]) -> f64 {
        self.phi.eval(x, &self.family.omega)
    }

    /// Target of `∂/∂x_i`: `(n+1, φ·(n+1)/min(d(x,∂Ω),1))`.
    pub fn derivative_target(&self) -> SpaceIndex {
        SpaceIndex { n: self.n + 1, phi: self.phi.derivative_weight(self.n), family: self.family.clone() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Standard,
    /// Double-double arithmetic for closed-form bodies.
    Extended,
}

/// Convolution of a density with the `order`-th derivative of the mollifier:
/// `ζ^{-1-m} ∫ g(λ) ρ^{(m)}((z-λ)/ζ) dλ`.
#[derive(Clone, Debug)]
pub struct Convolution {
    pub density: RealFunction,
    pub order: u32,
    pub mollifier: MollifierSpec,
    pub quad: QuadOptions,
    kernel: Option<Expr>,
}

impl Convolution {
    pub fn new(density: RealFunction, order: u32, mollifier: MollifierSpec, quad: QuadOptions) -> Result<Self> {
        density.validate()?;
        mollifier.validate()?;
        let kernel = mollifier.kernel_derivative_expr(order);
        Ok(Convolution { density, order, mollifier, quad, kernel })
    }

    fn kernel_at(&self, w: Complex64) -> Result<Complex64> {
        match &self.kernel {
            Some(e) => e.eval(&[w], Complex64::new(1.0, 0.0)),
            None => Ok(MollifierSpec::cauchy_derivative(self.order, w)),
        }
    }

    /// Distance from the segment `{(z-λ)/ζ : λ ∈ supp}` to the kernel poles `±i`.
    pub fn kernel_margin(&self, z: Complex64, zeta: Complex64) -> f64 {
        let (a, b) = self.density.support();
        let (p, q) = ((z - a) / zeta, (z - b) / zeta);
        let i = Complex64::new(0.0, 1.0);
        segment_distance(p, q, i).min(segment_distance(p, q, -i))
    }

    fn eval(&self, z: &[Complex64], zeta: Complex64) -> Result<EvalDetail> {
        let at = || At { z: z.to_vec(), zeta };
        if z.len() != 1 {
            return Err(Error::Domain("convolution bodies are one-dimensional".into()));
        }
        if zeta.norm() == 0.0 {
            return Err(Error::Pole { what: "zeta = 0".into(), at: at() });
        }
        let z0 = z[0];
        let alpha = self.kernel_margin(z0, zeta);
        if !(alpha > 1e-13) {
            return Err(Error::KernelPole { at: at() });
        }
        let (a, b) = self.density.support();
        let mut bp = vec![a, b];
        bp.extend(self.density.kinks().into_iter().filter(|p| *p > a && *p < b));
        let i = Complex64::new(0.0, 1.0);
        for pole in [z0 - i * zeta, z0 + i * zeta] {
            peak_breakpoints(pole.re, pole.im.abs().max(1e-300), a, b, &mut bp);
        }
        let scale = zeta.powi(-1 - self.order as i32);
        let tol_scale = zeta.norm().powi(1 + self.order as i32);
        let opts = QuadOptions { abs_tol: self.quad.abs_tol * tol_scale, ..self.quad };
        let r = integrate(
            |lam| {
                let g = self.density.eval(lam);
                if g == 0.0 {
                    return Ok(Complex64::default());
                }
                Ok(self.kernel_at((z0 - lam) / zeta)? * g)
            },
            &bp,
            &opts,
        )?;
        let value = r.value * scale;
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::NonFinite { what: "convolution".into(), at: at() });
        }
        Ok(EvalDetail { value, error: r.error / tol_scale, evals: r.evals, kernel_margin: Some(alpha) })
    }
}

fn segment_distance(p: Complex64, q: Complex64, c: Complex64) -> f64 {
    let d = q - p;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (c - p).norm();
    }
    let t = ((c - p) * d.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (p + d * t - c).norm()
}

/// Regularized step `c₋ + (c₊ - c₋)·(1/2 + atan((z - x₀)/ζ)/π)`, evaluated
/// through `atan(1/w)` away from the jump so no branch cut is crossed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub x0: f64,
    pub c_minus: Complex64,
    pub c_plus: Complex64,
}

impl Step {
    fn eval(&self, z: &[Complex64], zeta: Complex64) -> Result<Complex64> {
        let at = || At { z: z.to_vec(), zeta };
        if z.len() != 1 {
            return Err(Error::Domain("step bodies are one-dimensional".into()));
        }
        if zeta.norm() == 0.0 {
            return Err(Error::Pole { what: "zeta = 0".into(), at: at() });
        }
        let u = z[0] - self.x0;
        let w = u / zeta;
        let pi = std::f64::consts::PI;
        let check = |v: Complex64| -> Result<Complex64> {
            if v.re.abs() <= 1e-15 * v.im.abs() && v.im.abs() >= 1.0 {
                return Err(Error::BranchCut { func: "atan", at: at() });
            }
            Ok(v.atan())
        };
        let h = if w.norm() <= 2.0 {
            0.5 + check(w)? / pi
        } else if u.re > 0.0 {
            1.0 - check(zeta / u)? / pi
        } else {
            -check(zeta / u)? / pi
        };
        Ok(self.c_minus + (self.c_plus - self.c_minus) * h)
    }
}

#[derive(Clone, Debug)]
pub enum Body {
    Expr(Expr),
    Convolution(Convolution),
    Step(Step),
    Linear(Vec<(Complex64, Representative)>),
    Product(Vec<Representative>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalDetail {
    pub value: Complex64,
    /// Quadrature error bound (zero for closed forms).
    pub error: f64,
    pub evals: usize,
    /// Smallest kernel-pole distance among the convolutions involved.
    pub kernel_margin: Option<f64>,
}

impl EvalDetail {
    fn exact(value: Complex64) -> Self {
        EvalDetail { value, error: 0.0, evals: 0, kernel_margin: None }
    }
}

fn min_margin(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// A holomorphic function of `(z, ζ)` representing an element of the algebra.
#[derive(Clone, Debug)]
pub struct Representative {
    body: Arc<Body>,
    dim: usize,
    claimed: Option<SpaceIndex>,
    peaks: Vec<f64>,
    note: String,
}

impl Representative {
    fn from_body(body: Body, dim: usize) -> Self {
        Representative { body: Arc::new(body), dim, claimed: None, peaks: Vec::new(), note: String::new() }
    }

    /// Closed-form representative in `z1..z_dim` and `ζ`.
    pub fn expr(e: Expr, dim: usize) -> Result<Self> {
        if e.z_arity() > dim {
            return Err(Error::Object(format!("expression uses z{} but dimension is {dim}", e.z_arity())));
        }
        Ok(Self::from_body(Body::Expr(e), dim))
    }

    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        Self::expr(Expr::parse(src)?, dim)
    }

    pub fn constant(c: Complex64, dim: usize) -> Self {
        Self::from_body(Body::Expr(Expr::constant(c)), dim)
    }

    pub fn convolution(c: Convolution) -> Self {
        let (a, b) = c.density.support();
        let mut peaks = vec![a, b];
        peaks.extend(c.density.kinks());
        let mut r = Self::from_body(Body::Convolution(c), 1);
        r.peaks = dedup(peaks);
        r
    }

    pub fn step(step: Step) -> Self {
        let mut r = Self::from_body(Body::Step(step), 1);
        r.peaks = vec![step.x0];
        r
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn claimed(&self) -> Option<&SpaceIndex> {
        self.claimed.as_ref()
    }

    pub fn with_claim(mut self, s: SpaceIndex) -> Self {
        self.claimed = Some(s);
        self
    }

    pub fn without_claim(mut self) -> Self {
        self.claimed = None;
        self
    }

    /// First-axis locations where `|f|` concentrates at scale `|ζ|`.
    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    pub fn with_peaks(mut self, peaks: Vec<f64>) -> Self {
        self.peaks = dedup(peaks);
        self
    }

    pub fn note(&self) -> &str {
        &self.note
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn as_expr(&self) -> Option<&Expr> {
        match self.body() {
            Body::Expr(e) => Some(e),
            _ => None,
        }
    }

    pub fn evaluate(&self, z: &[Complex64], zeta: Complex64) -> Result<Complex64> {
        Ok(self.evaluate_detailed(z, zeta, Precision::Standard)?.value)
    }

    pub fn evaluate_with(&self, z: &[Complex64], zeta: Complex64, precision: Precision) -> Result<Complex64> {
        Ok(self.evaluate_detailed(z, zeta, precision)?.value)
    }

    pub fn evaluate_detailed(&self, z: &[Complex64], zeta: Complex64, precision: Precision) -> Result<EvalDetail> {
        if z.len() != self.dim {
            return Err(Error::Domain(format!("point has dimension {} but representative has {}", z.len(), self.dim)));
        }
        match self.body() {
            Body::Expr(e) => {
                let v = match precision {
                    Precision::Standard => e.eval(z, zeta)?,
                    Precision::Extended => e.eval_extended(z, zeta)?,
                };
                Ok(EvalDetail::exact(v))
            }
            Body::Convolution(c) => c.eval(z, zeta),
            Body::Step(s) => Ok(EvalDetail::exact(s.eval(z, zeta)?)),
            Body::Linear(terms) => {
                let mut acc = EvalDetail::exact(Complex64::default());
                for (c, f) in terms {
                    let d = f.evaluate_detailed(z, zeta, precision)?;
                    acc.value += c * d.value;
                    acc.error += c.norm() * d.error;
                    acc.evals += d.evals;
                    acc.kernel_margin = min_margin(acc.kernel_margin, d.kernel_margin);
                }
                Ok(acc)
            }
            Body::Product(factors) => {
                let mut acc = EvalDetail::exact(Complex64::new(1.0, 0.0));
                for f in factors {
                    let d = f.evaluate_detailed(z, zeta, precision)?;
                    acc.error = acc.error * d.value.norm() + acc.value.norm() * d.error + acc.error * d.error;
                    acc.value *= d.value;
                    acc.evals += d.evals;
                    acc.kernel_margin = min_margin(acc.kernel_margin, d.kernel_margin);
                }
                if !(acc.value.re.is_finite() && acc.value.im.is_finite()) {
                    return Err(Error::NonFinite { what: "product".into(), at: At { z: z.to_vec(), zeta } });
                }
                Ok(acc)
            }
        }
    }

    /// `(x, ξ) ↦ f(x, ξ)`: the restriction to real arguments.
    pub fn eval_real(&self, x: &[f64], xi: f64) -> Result<Complex64> {
        let z: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.evaluate(&z, Complex64::new(xi, 0.0))
    }

    pub fn restrict_real(&self) -> RealRestriction<'_> {
        RealRestriction { f: self }
    }

    pub fn add(&self, g: &Representative) -> Result<Representative> {
        self.same_dim(g)?;
        let claimed = match (&self.claimed, &g.claimed) {
            (Some(a), Some(b)) if a.family == b.family => Some(SpaceIndex {
                n: a.n.max(b.n),
                phi: a.phi.max(&b.phi),
                family: a.family.clone(),
            }),
            _ => None,
        };
        let body = match (self.body(), g.body()) {
            (Body::Expr(a), Body::Expr(b)) => Body::Expr(a.clone() + b.clone()),
            _ => {
                let mut terms = Vec::new();
                for f in [self, g] {
                    match f.body() {
                        Body::Linear(t) => terms.extend(t.iter().cloned()),
                        _ => terms.push((Complex64::new(1.0, 0.0), f.clone())),
                    }
                }
                Body::Linear(terms)
            }
        };
        let mut out = Self::from_body(body, self.dim);
        out.claimed = claimed;
        out.peaks = dedup(self.peaks.iter().chain(&g.peaks).copied().collect());
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> Representative {
        let body = match self.body() {
            Body::Expr(e) => Body::Expr(Expr::constant(c) * e.clone()),
            Body::Linear(t) => Body::Linear(t.iter().map(|(a, f)| (c * a, f.clone())).collect()),
            _ => Body::Linear(vec![(c, self.clone())]),
        };
        let mut out = Self::from_body(body, self.dim);
        out.claimed = self.claimed.clone();
        out.peaks = self.peaks.clone();
        out
    }

    pub fn sub(&self, g: &Representative) -> Result<Representative> {
        self.add(&g.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Pointwise product; claims `(n_f + n_g, φ_f·φ_g)`.
    pub fn mul(&self, g: &Representative) -> Result<Representative> {
        self.same_dim(g)?;
        let claimed = match (&self.claimed, &g.claimed) {
            (Some(a), Some(b)) if a.family == b.family => Some(SpaceIndex {
                n: a.n + b.n,
                phi: a.phi.mul(&b.phi),
                family: a.family.clone(),
            }),
            _ => None,
        };
        let body = match (self.body(), g.body()) {
            (Body::Expr(a), Body::Expr(b)) => Body::Expr(a.clone() * b.clone()),
            _ => {
                let mut factors = Vec::new();
                for f in [self, g] {
                    match f.body() {
                        Body::Product(v) => factors.extend(v.iter().cloned()),
                        _ => factors.push(f.clone()),
                    }
                }
                Body::Product(factors)
            }
        };
        let mut out = Self::from_body(body, self.dim);
        out.claimed = claimed;
        out.peaks = dedup(self.peaks.iter().chain(&g.peaks).copied().collect());
        Ok(out)
    }

    /// `∂/∂z_{axis+1}`; claims `(n+1, φ·(n+1)/min(d(x,∂Ω),1))`.
    pub fn differentiate(&self, axis: usize) -> Result<Representative> {
        if axis >= self.dim {
            return Err(Error::Domain(format!("axis {axis} out of range for dimension {}", self.dim)));
        }
        let mut out = match self.body() {
            Body::Expr(e) => Self::from_body(Body::Expr(e.derivative(Var::Z(axis))), self.dim),
            Body::Convolution(c) => {
                let d = Convolution::new(c.density.clone(), c.order + 1, c.mollifier, c.quad)?;
                Self::from_body(Body::Convolution(d), 1)
            }
            Body::Step(s) => {
                let delta = crate::embedding::delta_expr(s.x0);
                Self::from_body(Body::Expr(Expr::constant(s.c_plus - s.c_minus) * delta), 1)
            }
            Body::Linear(terms) => {
                let mut t = Vec::with_capacity(terms.len());
                for (c, f) in terms {
                    t.push((*c, f.differentiate(axis)?.without_claim()));
                }
                Self::from_body(Body::Linear(t), self.dim)
            }
            Body::Product(factors) => {
                let mut terms = Vec::with_capacity(factors.len());
                for i in 0..factors.len() {
                    let mut v = factors.clone();
                    v[i] = factors[i].differentiate(axis)?.without_claim();
                    terms.push((Complex64::new(1.0, 0.0), Self::from_body(Body::Product(v), self.dim)));
                }
                Self::from_body(Body::Linear(terms), self.dim)
            }
        };
        out.claimed = self.claimed.as_ref().map(SpaceIndex::derivative_target);
        out.peaks = self.peaks.clone();
        Ok(out)
    }

    fn same_dim(&self, g: &Representative) -> Result<()> {
        if self.dim != g.dim {
            return Err(Error::Object(format!("dimension mismatch: {} vs {}", self.dim, g.dim)));
        }
        Ok(())
    }

    /// `max_grid |ζ|^n |f| / φ(x)` and the index of the maximizing point.
    /// Evaluation runs in parallel; the reduction is in grid order.
    pub fn sampled_norm(&self, s: &SpaceIndex, grid: &SampleGrid) -> Result<(f64, usize)> {
        let vals = self.sampled_values(s, grid)?;
        let mut best = (0.0, 0usize);
        for (i, v) in vals.into_iter().enumerate() {
            if v > best.0 {
                best = (v, i);
            }
        }
        Ok(best)
    }

    fn sampled_values(&self, s: &SpaceIndex, grid: &SampleGrid) -> Result<Vec<f64>> {
        if grid.n < s.n {
            return Err(Error::Precondition(format!("grid samples V_{} but the space needs V_{} or smaller", grid.n, s.n)));
        }
        let vals: Vec<Result<f64>> = grid
            .points
            .par_iter()
            .map(|p| {
                let v = self.evaluate(&p.z, p.zeta)?;
                Ok(p.zeta.norm().powi(s.n as i32) * v.norm() / s.weight_at(&p.x()))
            })
            .collect();
        vals.into_iter()
            .enumerate()
            .map(|(i, v)| {
                let v = v?;
                if !v.is_finite() {
                    let p = &grid.points[i];
                    return Err(Error::NonFinite { what: "weighted norm".into(), at: At { z: p.z.clone(), zeta: p.zeta } });
                }
                Ok(v)
            })
            .collect()
    }

    /// Sampled lower bound for `‖f‖_{n,φ}` with a one-step refinement check.
    /// Both maxima are polished by a local search inside `V_n` before comparison.
    pub fn norm_estimate(&self, s: &SpaceIndex, grid: &SampleGrid) -> Result<NormCertificate> {
        let domain = SectorDomain::new(grid.n, s.family.clone())?;
        let refined = domain.refine(grid)?;
        let (coarse, cp) = self.polished_max(s, &domain, grid)?;
        let (mut estimate, mut argmax) = self.polished_max(s, &domain, &refined)?;
        if coarse > estimate {
            (estimate, argmax) = (coarse, cp);
        }
        let stable = if estimate == 0.0 { true } else { (estimate - coarse) / estimate < 0.01 };
        Ok(NormCertificate {
            space: s.clone(),
            estimate,
            coarse_estimate: coarse,
            argmax,
            points: refined.len(),
            grid: refined.provenance.clone(),
            stable,
        })
    }

    /// Best of the polished [`POLISH_STARTS`] largest sampled values.
    fn polished_max(&self, s: &SpaceIndex, domain: &SectorDomain, grid: &SampleGrid) -> Result<(f64, Option<GridPoint>)> {
        let vals = self.sampled_values(s, grid)?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]).then(a.cmp(b)));
        let Some(&first) = order.first() else { return Ok((0.0, None)) };
        let mut best = (vals[first], grid.points.get(first).cloned());
        let n = domain.n as f64;
        // distinct starts: skip candidates in the neighbourhood of a chosen one
        let near = |p: &GridPoint, q: &GridPoint| {
            let r = p.zeta.norm().max(q.zeta.norm());
            p.z.iter().zip(&q.z).all(|(a, b)| (a.re - b.re).abs() < 0.5 * r && (a.im - b.im).abs() < 0.5 * r / n)
                && (p.zeta.norm().ln() - q.zeta.norm().ln()).abs() < 0.2
                && (p.zeta.arg() - q.zeta.arg()).abs() < 0.5 / n
        };
        let mut starts: Vec<usize> = Vec::new();
        for i in order.into_iter().take(POLISH_POOL).filter(|i| vals[*i] > 0.0) {
            if starts.len() == POLISH_STARTS {
                break;
            }
            if !starts.iter().any(|j| near(&grid.points[i], &grid.points[*j])) {
                starts.push(i);
            }
        }
        for i in starts {
            let (v, p) = self.polish(s, domain, &grid.points[i], vals[i]);
            if v > best.0 {
                best = (v, p);
            }
        }
        Ok(best)
    }

    fn weighted_at(&self, s: &SpaceIndex, domain: &SectorDomain, x: &[f64], y: &[f64], zeta: Complex64) -> Option<f64> {
        domain.contains(x, y, zeta)?;
        let z: Vec<Complex64> = x.iter().zip(y).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let v = zeta.norm().powi(s.n as i32) * self.evaluate(&z, zeta).ok()?.norm() / s.weight_at(x);
        v.is_finite().then_some(v)
    }

    /// Compass search on `(x, y, ln|ζ|, arg ζ)` from a sampled maximum.
    fn polish(&self, s: &SpaceIndex, domain: &SectorDomain, start: &GridPoint, v0: f64) -> (f64, Option<GridPoint>) {
        let k = self.dim;
        let n = domain.n as f64;
        let r = start.zeta.norm();
        let mut u: Vec<f64> = start.z.iter().map(|c| c.re).chain(start.z.iter().map(|c| c.im)).collect();
        u.push(r.ln());
        u.push(start.zeta.arg());
        let mut step: Vec<f64> = (0..k).map(|_| 0.25 * r).chain((0..k).map(|_| 0.25 * r / n)).collect();
        step.push(0.1);
        step.push(0.25 / n);
        let eval = |u: &[f64]| {
            let zeta = Complex64::from_polar(u[2 * k].exp(), u[2 * k + 1]);
            self.weighted_at(s, domain, &u[..k], &u[k..2 * k], zeta)
        };
        let mut best = v0;
        let mut evals = 0;
        let mut halvings = 0;
        while evals < POLISH_EVALS && halvings < 30 {
            let trials: Vec<Vec<f64>> = (0..u.len())
                .flat_map(|i| [-1.0, 1.0].map(|sg| (i, sg)))
                .map(|(i, sg)| {
                    let mut t = u.clone();
                    t[i] += sg * step[i];
                    t
                })
                .collect();
            evals += trials.len();
            let vals: Vec<Option<f64>> = trials.par_iter().map(|t| eval(t)).collect();
            let top = vals.iter().enumerate().filter_map(|(i, v)| v.map(|v| (v, i))).max_by(|a, b| a.0.total_cmp(&b.0));
            match top {
                Some((v, i)) if v > best * (1.0 + 1e-12) => {
                    best = v;
                    u = trials[i].clone();
                }
                _ => {
                    step.iter_mut().for_each(|h| *h *= 0.5);
                    halvings += 1;
                }
            }
        }
        let zeta = Complex64::from_polar(u[2 * k].exp(), u[2 * k + 1]);
        let z = (0..k).map(|i| Complex64::new(u[i], u[k + i])).collect();
        (best, Some(GridPoint { z, zeta }))
    }

    /// Grid options for `V_n` that place anchors at this representative's peaks.
    pub fn grid_options(&self, budget: usize, floor: f64, seed: u64) -> SampleOptions {
        SampleOptions::new(budget, floor, seed).with_anchors(self.peaks.clone())
    }
}

fn dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.retain(|p| p.is_finite());
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl fmt::Display for Representative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.body() {
            Body::Expr(e) => write!(f, "{e}"),
            Body::Convolution(c) => write!(f, "conv[m={}, s={}]({})", c.order, c.mollifier.s, c.density),
            Body::Step(s) => write!(f, "step[x0={}, c-={}, c+={}]", s.x0, s.c_minus, s.c_plus),
            Body::Linear(t) => {
                for (i, (c, g)) in t.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "({c})*[{g}]")?;
                }
                Ok(())
            }
            Body::Product(v) => {
                for (i, g) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "[{g}]")?;
                }
                Ok(())
            }
        }
    }
}

/// Evaluable map `(x, ξ) ↦ f(x, ξ)` with `y = 0`, `ζ = ξ > 0`.
#[derive(Clone, Copy)]
pub struct RealRestriction<'a> {
    f: &'a Representative,
}

impl RealRestriction<'_> {
    pub fn eval(&self, x: &[f64], xi: f64) -> Result<Complex64> {
        self.f.eval_real(x, xi)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormCertificate {
    pub space: SpaceIndex,
    /// Sampled lower bound on the refined grid.
    pub estimate: f64,
    /// Value on the grid before refinement.
    pub coarse_estimate: f64,
    pub argmax: Option<GridPoint>,
    pub points: usize,
    pub grid: SampleOptions,
    /// Refinement changed the estimate by less than 1%.
    pub stable: bool,
}

/// Evaluation budget of the local search that polishes sampled maxima.
pub const POLISH_EVALS: usize = 400;

/// Number of distinct sampled maxima polished per grid.
pub const POLISH_STARTS: usize = 12;

/// Largest sampled values searched for distinct polishing starts.
pub const POLISH_POOL: usize = 400;

/// `sup_{x ∈ K} |f(x, ξ)|` over a tensor grid of `K` plus the peak hints and
/// their `ξ`-neighbours. `None` signals overflow.
pub fn sup_on_compact(f: &Representative, k: &CompactBox, xi: f64, resolution: usize) -> Result<Option<f64>> {
    let mut xs = k.grid(resolution);
    if f.dim() == 1 {
        for p in f.peaks() {
            for d in [0.0, -xi, xi, -0.5 * xi, 0.5 * xi] {
                let x = vec![p + d];
                if k.contains(&x) {
                    xs.push(x);
                }
            }
        }
    }
    let vals: Vec<Result<Option<f64>>> = xs
        .par_iter()
        .map(|x| match f.eval_real(x, xi) {
            Ok(v) if v.norm().is_finite() => Ok(Some(v.norm())),
            Ok(_) | Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut best = 0.0f64;
    for v in vals {
        match v? {
            Some(v) => best = best.max(v),
            None => return Ok(None),
        }
    }
    Ok(Some(best))
}

/// Resolution of the `x`-grid used by the compact sup checks.
pub const COMPACT_RESOLUTION: usize = 201;

/// Slope tolerance for moderateness, negligibility and sharp checks.
pub const SLOPE_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Moderateness {
    /// `sup_K |f(x,ξ)| ≤ constant / ξ^n` on the sampled tail.
    Pass { n: u32, constant: f64, fit: Option<LogLogFit> },
    Fail { reason: String, fit: Option<LogLogFit> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Negligibility {
    Negligible { q_max: u32, fit: Option<LogLogFit> },
    FailAt { q: u32, fit: Option<LogLogFit> },
}

/// Sup profile over `K` along a ξ-grid; `None` when some value overflowed.
pub fn sup_profile(f: &Representative, k: &CompactBox, xi: &[f64]) -> Result<Option<Vec<f64>>> {
    k.validate()?;
    let mut out = Vec::with_capacity(xi.len());
    for &x in xi {
        match sup_on_compact(f, k, x, COMPACT_RESOLUTION)? {
            Some(v) => out.push(v),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Fit the tail of a sup profile. Zero values (underflow) are left out of the
/// fit and count as satisfying any bound. `Ok(None)` means the profile is zero.
pub fn fit_profile(xi: &[f64], sups: &[f64]) -> Result<Option<LogLogFit>> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = xi.iter().zip(sups).filter(|(_, s)| **s > 0.0).map(|(a, b)| (*a, *b)).unzip();
    if xs.is_empty() {
        return Ok(None);
    }
    let tail = tail_indices(&xs);
    let tx: Vec<f64> = tail.iter().map(|i| xs[*i]).collect();
    let ty: Vec<f64> = tail.iter().map(|i| ys[*i]).collect();
    loglog(&tx, &ty).map(Some)
}

/// Growth test at `n = 0`: smallest `N ≤ n_max` with `sup_K |f(x,ξ)| ξ^N` bounded.
pub fn moderateness_check(f: &Representative, k: &CompactBox, xi: &[f64], n_max: u32) -> Result<Moderateness> {
    let Some(sups) = sup_profile(f, k, xi)? else {
        return Ok(Moderateness::Fail { reason: "overflow: values exceed floating-point range".into(), fit: None });
    };
    let Some(fit) = fit_profile(xi, &sups)? else {
        return Ok(Moderateness::Pass { n: 0, constant: 0.0, fit: None });
    };
    let needed = (-fit.slope - SLOPE_TOL).ceil().max(0.0);
    if needed > n_max as f64 {
        return Ok(Moderateness::Fail { reason: format!("growth exponent {:.3} exceeds {n_max}", -fit.slope), fit: Some(fit) });
    }
    let n = needed as u32;
    let tail = tail_indices(xi);
    let constant = tail.iter().map(|i| sups[*i] * xi[*i].powi(n as i32)).fold(0.0, f64::max);
    Ok(Moderateness::Pass { n, constant, fit: Some(fit) })
}

/// Decay test: `sup_K |f(x,ξ)| ≤ C ξ^q` for every `q ≤ q_max`.
pub fn negligibility_check(f: &Representative, k: &CompactBox, xi: &[f64], q_max: u32) -> Result<Negligibility> {
    let Some(sups) = sup_profile(f, k, xi)? else {
        return Ok(Negligibility::FailAt { q: 0, fit: None });
    };
    let Some(fit) = fit_profile(xi, &sups)? else {
        return Ok(Negligibility::Negligible { q_max, fit: None });
    };
    for q in 0..=q_max {
        if fit.slope < q as f64 - SLOPE_TOL {
            return Ok(Negligibility::FailAt { q, fit: Some(fit) });
        }
    }
    Ok(Negligibility::Negligible { q_max, fit: Some(fit) })
}
