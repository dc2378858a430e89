//! The embedding `j`: classical functions and distributions on ℝ become
//! representatives through convolution with the analytic mollifier
//! `ρ(w) = C_s / (1 + w²)^s`, `ρ_ζ(z) = ζ^{-1} ρ(z/ζ)`.

use crate::algebra::{Convolution, Representative, SpaceIndex, Step};
use crate::domains::{Omega, ShrinkingFamily, Side};
use crate::domains::FamilyKind;
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::quadrature::{integrate, QuadOptions};
use crate::weight::WeightFunction;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Kernel power `s` and dimension `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub s: u32,
    #[serde(default = "one")]
    pub k: usize,
}

fn one() -> usize {
    1
}

impl Default for MollifierSpec {
    fn default() -> Self {
        MollifierSpec { s: 1, k: 1 }
    }
}

/// `Γ(h/2)` for a positive integer `h`.
fn gamma_half(h: u32) -> f64 {
    let mut g = if h % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if h % 2 == 0 { 1.0 } else { 0.5 };
    while 2.0 * x < h as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

impl MollifierSpec {
    /// Smallest integrable power in dimension `k`.
    pub fn for_dim(k: usize) -> Self {
        MollifierSpec { s: (k / 2 + 1) as u32, k }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || 2 * self.s as usize <= self.k {
            return Err(Error::Object(format!("kernel power s = {} is not integrable in dimension {}", self.s, self.k)));
        }
        Ok(())
    }

    /// `C_s` making `∫_{ℝ^k} ρ = 1`: `Γ(s) / (π^{k/2} Γ(s - k/2))`.
    pub fn normalization(&self) -> f64 {
        let s2 = 2 * self.s;
        gamma_half(s2) / (PI.powf(self.k as f64 / 2.0) * gamma_half(s2 - self.k as u32))
    }

    pub fn rho(&self, w2: Complex64) -> Complex64 {
        (Complex64::new(1.0, 0.0) + w2).powi(-(self.s as i32)) * self.normalization()
    }

    /// `ρ_ζ(z) = ζ^{-k} ρ(z/ζ)`.
    pub fn value(&self, z: &[Complex64], zeta: Complex64) -> Result<Complex64> {
        if z.len() != self.k {
            return Err(Error::Domain(format!("mollifier of dimension {} evaluated at a {}-point", self.k, z.len())));
        }
        let w2: Complex64 = z.iter().map(|v| (v / zeta) * (v / zeta)).sum();
        let den = Complex64::new(1.0, 0.0) + w2;
        if den.norm() <= 1e-15 * (1.0 + w2.norm()) || zeta.norm() == 0.0 {
            return Err(Error::KernelPole { at: crate::error::At { z: z.to_vec(), zeta } });
        }
        Ok(self.rho(w2) / zeta.powi(self.k as i32))
    }

    /// `ρ^{(m)}` as an expression in `z1 = w`, or `None` when the closed
    /// Cauchy form applies (`s = 1`, `k = 1`).
    pub(crate) fn kernel_derivative_expr(&self, m: u32) -> Option<Expr> {
        if self.s == 1 && self.k == 1 {
            return None;
        }
        let w = Expr::z(0);
        let mut e = Expr::real(self.normalization()) * (Expr::one() + w.powi(2)).powi(-(self.s as i32));
        for _ in 0..m {
            e = e.derivative(Var::Z(0));
        }
        Some(e)
    }

    /// `d^m/dw^m (1/π)/(1+w²) = (−1)^m m!/(2πi)·[(w−i)^{−m−1} − (w+i)^{−m−1}]`.
    pub fn cauchy_derivative(m: u32, w: Complex64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let p = -(m as i32) - 1;
        let fact: f64 = (1..=m).map(|v| v as f64).product();
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        ((w - i).powi(p) - (w + i).powi(p)) * (sign * fact) / (2.0 * PI * i)
    }
}

/// Compactly supported real densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RealFunction {
    /// Piecewise linear through the nodes, zero outside them.
    Table { xs: Vec<f64>, ys: Vec<f64> },
    Triangle { center: f64, half_width: f64, height: f64 },
    /// `scale · exp(−1/(1 − t²))`, `t = (x − center)/radius`.
    Bump { center: f64, radius: f64, scale: f64 },
    /// `exp(−((x−c)/w)²)/(w√π)` cut off at `|x − c| ≤ cutoff·w`.
    Gaussian { center: f64, width: f64, cutoff: f64 },
    /// Real part of an expression in `z`, on `[lo, hi]`.
    Expr { expr: Expr, lo: f64, hi: f64 },
    Sum { terms: Vec<(f64, RealFunction)> },
}

impl RealFunction {
    pub fn triangle(center: f64, half_width: f64) -> Self {
        RealFunction::Triangle { center, half_width, height: 1.0 / half_width }
    }

    /// Smooth bump with unit integral.
    pub fn unit_bump(center: f64, radius: f64) -> Result<Self> {
        let raw = RealFunction::Bump { center, radius, scale: 1.0 };
        let mass = raw.integral()?;
        Ok(RealFunction::Bump { center, radius, scale: 1.0 / mass })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Object(m.to_string()));
        match self {
            RealFunction::Table { xs, ys } => {
                if xs.len() < 2 || xs.len() != ys.len() {
                    return bad("table needs at least two (λ, f) rows");
                }
                if xs.windows(2).any(|w| !(w[0] < w[1])) || xs.iter().chain(ys).any(|v| !v.is_finite()) {
                    return bad("table abscissae must be finite and strictly increasing");
                }
                Ok(())
            }
            RealFunction::Triangle { half_width: r, .. } | RealFunction::Bump { radius: r, .. } if !(*r > 0.0) => {
                bad("support radius must be positive")
            }
            RealFunction::Gaussian { width, cutoff, .. } if !(*width > 0.0 && *cutoff > 0.0) => {
                bad("gaussian width and cutoff must be positive")
            }
            RealFunction::Expr { expr, lo, hi } => {
                if !(lo < hi) {
                    return bad("expression density needs lo < hi");
                }
                if expr.uses_zeta() || expr.z_arity() > 1 {
                    return bad("density expressions may only use z");
                }
                Ok(())
            }
            RealFunction::Sum { terms } => {
                if terms.is_empty() {
                    return bad("empty density sum");
                }
                terms.iter().try_for_each(|(_, f)| f.validate())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RealFunction::Table { xs, ys } => {
                if x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let j = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1);
                let t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
                ys[j - 1] + t * (ys[j] - ys[j - 1])
            }
            RealFunction::Triangle { center, half_width, height } => height * (1.0 - (x - center).abs() / half_width).max(0.0),
            RealFunction::Bump { center, radius, scale } => {
                let t = (x - center) / radius;
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    scale * (-1.0 / (1.0 - t * t)).exp()
                }
            }
            RealFunction::Gaussian { center, width, cutoff } => {
                let t = (x - center) / width;
                if t.abs() > *cutoff {
                    0.0
                } else {
                    (-t * t).exp() / (width * PI.sqrt())
                }
            }
            RealFunction::Expr { expr, lo, hi } => {
                if x < *lo || x > *hi {
                    return 0.0;
                }
                expr.eval(&[Complex64::new(x, 0.0)], Complex64::new(1.0, 0.0)).map(|v| v.re).unwrap_or(f64::NAN)
            }
            RealFunction::Sum { terms } => terms.iter().map(|(c, f)| c * f.eval(x)).sum(),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            RealFunction::Table { xs, .. } => (xs[0], xs[xs.len() - 1]),
            RealFunction::Triangle { center, half_width, .. } => (center - half_width, center + half_width),
            RealFunction::Bump { center, radius, .. } => (center - radius, center + radius),
            RealFunction::Gaussian { center, width, cutoff } => (center - cutoff * width, center + cutoff * width),
            RealFunction::Expr { lo, hi, .. } => (*lo, *hi),
            RealFunction::Sum { terms } => terms
                .iter()
                .map(|(_, f)| f.support())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1))),
        }
    }

    /// Points where the density is not smooth (quadrature breakpoints).
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            RealFunction::Table { xs, .. } => xs.clone(),
            RealFunction::Triangle { center, half_width, .. } => vec![center - half_width, *center, center + half_width],
            RealFunction::Gaussian { center, .. } => vec![*center],
            RealFunction::Sum { terms } => {
                let mut v: Vec<f64> = terms.iter().flat_map(|(_, f)| {
                    let (a, b) = f.support();
                    let mut k = f.kinks();
                    k.extend([a, b]);
                    k
                }).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            _ => Vec::new(),
        }
    }

    fn quad<F: Fn(f64) -> f64>(&self, g: F) -> Result<f64> {
        let (a, b) = self.support();
        let mut bp = vec![a, b];
        bp.extend(self.kinks());
        let r = integrate(|x| Ok(Complex64::new(g(x), 0.0)), &bp, &QuadOptions { abs_tol: 1e-14, rel_tol: 1e-13, ..Default::default() })?;
        Ok(r.value.re)
    }

    pub fn integral(&self) -> Result<f64> {
        self.quad(|x| self.eval(x))
    }

    pub fn l1_norm(&self) -> Result<f64> {
        self.quad(|x| self.eval(x).abs())
    }
}

impl fmt::Display for RealFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealFunction::Table { xs, .. } => write!(f, "table[{} rows on [{}, {}]]", xs.len(), xs[0], xs[xs.len() - 1]),
            RealFunction::Triangle { center, half_width, height } => write!(f, "triangle[c={center}, r={half_width}, h={height}]"),
            RealFunction::Bump { center, radius, scale } => write!(f, "bump[c={center}, r={radius}, scale={scale}]"),
            RealFunction::Gaussian { center, width, cutoff } => write!(f, "gaussian[c={center}, w={width}, cut={cutoff}]"),
            RealFunction::Expr { expr, lo, hi } => write!(f, "{expr} on [{lo}, {hi}]"),
            RealFunction::Sum { terms } => {
                for (i, (c, g)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{c}*{g}")?;
                }
                Ok(())
            }
        }
    }
}

/// One term `D^order g` of a compactly supported distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionTerm {
    #[serde(default)]
    pub order: u32,
    pub f: RealFunction,
}

/// Classical objects accepted by [`embed`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicalObject {
    AnalyticFunction { expr: Expr, radius: f64 },
    ContinuousCompact { f: RealFunction },
    CompactDistribution { terms: Vec<DistributionTerm> },
    /// `c₋ + (c₊ − c₋)·H(x − x0) + f` with `f` compactly supported.
    ConstantAtInfinity {
        #[serde(default)]
        f: Option<RealFunction>,
        c_minus: f64,
        c_plus: f64,
        #[serde(default)]
        x0: f64,
    },
    /// `p(x) + f` with `p` of degree at most 4 (coefficients from degree 0).
    PolynomialAtInfinity {
        coeffs: Vec<f64>,
        #[serde(default)]
        f: Option<RealFunction>,
    },
    Delta {
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        order: u32,
    },
}

/// Bound `|ζ|^{p} |F(z, ζ)| ≤ constant` on `V_n`, `p = pole_order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBound {
    pub pole_order: u32,
    pub constant: f64,
    /// `sup |1 + w²|^{-s}` over the kernel arguments reachable from `V_n`
    /// (or the analogous Cauchy factor for derivative orders).
    pub kernel_factor: f64,
    /// `∫|g|` summed over the terms.
    pub mass: f64,
    /// Lower bound for `|1 + w²|` on `V_n`; the kernel denominator never drops below it.
    pub denominator_floor: f64,
}

#[derive(Clone, Debug)]
pub struct Embedded {
    pub representative: Representative,
    pub space: SpaceIndex,
    pub bound: Option<EmbeddingBound>,
}

/// `(1/π)·ζ/(ζ² + (z − x0)²)`.
pub fn delta_expr(x0: f64) -> Expr {
    let u = Expr::z(0) - Expr::real(x0);
    Expr::one() / Expr::pi() * Expr::zeta() / (Expr::zeta().powi(2) + u.powi(2))
}

/// Lower bound for `|1 + w²|` on `V_n` given `n ≥ 2` and `O_n` separated from
/// the support by at least 1: `min(cos²(1/n) − 1/n², n² − 1)`.
fn denominator_floor(n: u32) -> f64 {
    let t = 1.0 / n as f64;
    (t.cos().powi(2) - t * t).min((n * n) as f64 - 1.0)
}

/// `(cos(1/n) − 1/n)`: lower bound for `|w ∓ i|` on `V_n`.
fn pole_distance_floor(n: u32) -> f64 {
    let t = 1.0 / n as f64;
    t.cos() - t
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(|v| v as f64).product()
}

/// `sup |ζ|^{1+m} |ζ^{-1-m} ρ^{(m)}(w)|` per unit mass, when a closed bound exists.
fn kernel_bound(spec: &MollifierSpec, m: u32, n: u32) -> Option<(f64, f64)> {
    if m == 0 {
        let factor = denominator_floor(n).powi(-(spec.s as i32));
        Some((spec.normalization() * factor, factor))
    } else if spec.s == 1 && spec.k == 1 {
        let factor = pole_distance_floor(n).powi(-(m as i32) - 1);
        Some((factorial(m) / PI * factor, factor))
    } else {
        None
    }
}

/// Smallest `n ≥ max(2, min_n)` whose `O_n` misses `[lo − 1, hi + 1]`.
pub fn sector_index(family: &ShrinkingFamily, lo: f64, hi: f64, min_n: u32) -> Result<u32> {
    let start = min_n.max(2);
    if family.kind == FamilyKind::AtInfinity && family.dim() == 1 {
        let need = match family.side {
            Side::Both => (-(lo - 1.0)).max(hi + 1.0),
            Side::Plus => hi + 1.0,
            Side::Minus => -(lo - 1.0),
        };
        return Ok(start.max(need.ceil().max(0.0) as u32));
    }
    (start..=1_000_000)
        .find(|n| family.misses_interval(*n, lo - 1.0, hi + 1.0))
        .ok_or_else(|| Error::Family(format!("no sector index separates O_n from [{}, {}]", lo - 1.0, hi + 1.0)))
}

fn one_dim(family: &ShrinkingFamily) -> Result<()> {
    family.validate()?;
    if family.dim() != 1 {
        return Err(Error::Family("embeddings are implemented for Ω ⊂ ℝ".into()));
    }
    Ok(())
}

pub fn embed_delta(x0: f64, order: u32, family: &ShrinkingFamily) -> Result<Embedded> {
    one_dim(family)?;
    if !family.omega.contains(&[x0]) {
        return Err(Error::OutsideDomain(format!("x0 = {x0} is not in Ω")));
    }
    let n = sector_index(family, x0, x0, order + 1)?;
    let mut e = delta_expr(x0);
    for _ in 0..order {
        e = e.derivative(Var::Z(0));
    }
    let space = SpaceIndex::new(n, WeightFunction::one(), family.clone());
    let bound = kernel_bound(&MollifierSpec::default(), order, n).map(|(constant, kernel_factor)| EmbeddingBound {
        pole_order: order + 1,
        constant,
        kernel_factor,
        mass: 1.0,
        denominator_floor: denominator_floor(n),
    });
    let rep = Representative::expr(e, 1)?
        .with_claim(space.clone())
        .with_peaks(vec![x0])
        .with_note(format!("delta^({order}) at {x0}"));
    Ok(Embedded { representative: rep, space, bound })
}

pub fn embed_compact(terms: &[DistributionTerm], spec: &MollifierSpec, family: &ShrinkingFamily) -> Result<Embedded> {
    embed_compact_with(terms, spec, family, QuadOptions::default())
}

pub fn embed_compact_with(
    terms: &[DistributionTerm],
    spec: &MollifierSpec,
    family: &ShrinkingFamily,
    quad: QuadOptions,
) -> Result<Embedded> {
    one_dim(family)?;
    spec.validate()?;
    if spec.k != 1 {
        return Err(Error::Object("embeddings are implemented for k = 1".into()));
    }
    if terms.is_empty() {
        return Err(Error::Object("empty distribution".into()));
    }
    let (mut lo, mut hi, mut max_order) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for t in terms {
        t.f.validate()?;
        let (a, b) = t.f.support();
        if !(family.omega.contains(&[a]) || family.omega.closure_contains(&[a])) || !family.omega.closure_contains(&[b]) {
            return Err(Error::OutsideDomain(format!("support [{a}, {b}] leaves Ω")));
        }
        lo = lo.min(a);
        hi = hi.max(b);
        max_order = max_order.max(t.order);
    }
    let n = sector_index(family, lo, hi, max_order + 1)?;
    let mut rep: Option<Representative> = None;
    let mut bound = Some(EmbeddingBound {
        pole_order: max_order + 1,
        constant: 0.0,
        kernel_factor: 0.0,
        mass: 0.0,
        denominator_floor: denominator_floor(n),
    });
    let top = 1.0 / n as f64;
    for t in terms {
        let piece = Representative::convolution(Convolution::new(t.f.clone(), t.order, *spec, quad)?);
        rep = Some(match rep {
            None => piece,
            Some(r) => r.add(&piece)?,
        });
        let mass = t.f.l1_norm()?;
        bound = match (bound, kernel_bound(spec, t.order, n)) {
            (Some(mut b), Some((c, factor))) => {
                // |ζ|^{1+M} ≤ |ζ|^{1+m} · (1/n)^{M−m} on V_n
                b.constant += c * mass * top.powi((max_order - t.order) as i32);
                b.kernel_factor = b.kernel_factor.max(factor);
                b.mass += mass;
                Some(b)
            }
            _ => None,
        };
    }
    let space = SpaceIndex::new(n.max(max_order + 1), WeightFunction::one(), family.clone());
    let rep = rep.unwrap_or_else(|| Representative::constant(Complex64::default(), 1)).with_claim(space.clone());
    Ok(Embedded { representative: rep, space, bound })
}

/// `c₋ + (c₊ − c₋)·H(x − x0)` plus the compact part; distinct constants need
/// a one-sided at-infinity family.
pub fn embed_constant_at_infinity(
    f: Option<&RealFunction>,
    c_minus: f64,
    c_plus: f64,
    x0: f64,
    spec: &MollifierSpec,
    family: &ShrinkingFamily,
) -> Result<Embedded> {
    one_dim(family)?;
    let two_sided = c_minus != c_plus;
    if two_sided && !(family.kind == FamilyKind::AtInfinity && family.side != Side::Both) {
        return Err(Error::Family(
            "distinct constants at +∞ and −∞ need a one-sided at_infinity family (side plus or minus)".into(),
        ));
    }
    let (lo, hi) = match f {
        Some(g) => {
            let (a, b) = g.support();
            if two_sided { (a.min(x0), b.max(x0)) } else { (a, b) }
        }
        None if two_sided => (x0, x0),
        None => (0.0, 0.0),
    };
    let n = sector_index(family, lo, hi, 1)?;
    let base = if two_sided {
        Representative::step(Step { x0, c_minus: c_minus.into(), c_plus: c_plus.into() })
    } else {
        Representative::constant(Complex64::new(c_minus, 0.0), 1)
    };
    let (rep, bound) = match f {
        Some(g) => {
            let e = embed_compact(&[DistributionTerm { order: 0, f: g.clone() }], spec, family)?;
            (base.add(&e.representative.without_claim())?, e.bound)
        }
        None => (base, None),
    };
    let n = n.max(2);
    let space = SpaceIndex::new(n, WeightFunction::one(), family.clone());
    Ok(Embedded { representative: rep.with_claim(space.clone()), space, bound })
}

/// `p(z) + j(f)` for a polynomial `p` of degree at most 4.
pub fn embed_polynomial_at_infinity(coeffs: &[f64], f: Option<&RealFunction>, spec: &MollifierSpec, family: &ShrinkingFamily) -> Result<Embedded> {
    one_dim(family)?;
    if coeffs.is_empty() || coeffs.len() > 5 {
        return Err(Error::Object("polynomial at infinity needs 1 to 5 coefficients (degree ≤ 4)".into()));
    }
    let mut p = Expr::zero();
    for (j, c) in coeffs.iter().enumerate() {
        p = p + Expr::real(*c) * Expr::z(0).powi(j as i32);
    }
    let degree = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
    let poly = Representative::expr(p, 1)?;
    let (rep, n, bound) = match f {
        Some(g) => {
            let e = embed_compact(&[DistributionTerm { order: 0, f: g.clone() }], spec, family)?;
            (poly.add(&e.representative.without_claim())?, e.space.n, e.bound)
        }
        None => (poly, 2, None),
    };
    let scale = coeffs.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
    // |p(x + iy)| ≤ Σ|c_j|(|x| + 1)^j for |y| < 1
    let phi = WeightFunction::constant(scale).mul(&WeightFunction::Polynomial { m: degree as f64 });
    let space = SpaceIndex::new(n, phi, family.clone());
    Ok(Embedded { representative: rep.with_claim(space.clone()), space, bound })
}

/// ζ-independent representative `F(z, ζ) = f(z)`, spot-checked on the strip
/// `|y| < radius/2` over `x ∈ [−10, 10]`.
pub fn embed_analytic(f: &Expr, radius: f64, dim: usize) -> Result<Representative> {
    if f.uses_zeta() {
        return Err(Error::Object("analytic functions may not depend on zeta".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Object("convergence radius floor must be positive".into()));
    }
    let rep = Representative::expr(f.clone(), dim)?;
    let zeta = Complex64::new(0.5, 0.0);
    for i in 0..=40 {
        let x = -10.0 + 0.5 * i as f64;
        for y in [-0.49 * radius, 0.0, 0.49 * radius] {
            let z = vec![Complex64::new(x, y); dim];
            rep.evaluate(&z, zeta)?;
        }
    }
    Ok(rep.with_note("analytic"))
}

/// Dispatch over [`ClassicalObject`]. Analytic functions carry no claimed space.
pub fn embed(obj: &ClassicalObject, spec: &MollifierSpec, family: &ShrinkingFamily) -> Result<Embedded> {
    match obj {
        ClassicalObject::AnalyticFunction { expr, radius } => {
            let rep = embed_analytic(expr, *radius, family.dim())?;
            let space = SpaceIndex::new(2, WeightFunction::one(), family.clone());
            Ok(Embedded { representative: rep, space, bound: None })
        }
        ClassicalObject::ContinuousCompact { f } => embed_compact(&[DistributionTerm { order: 0, f: f.clone() }], spec, family),
        ClassicalObject::CompactDistribution { terms } => embed_compact(terms, spec, family),
        ClassicalObject::ConstantAtInfinity { f, c_minus, c_plus, x0 } => {
            embed_constant_at_infinity(f.as_ref(), *c_minus, *c_plus, *x0, spec, family)
        }
        ClassicalObject::PolynomialAtInfinity { coeffs, f } => embed_polynomial_at_infinity(coeffs, f.as_ref(), spec, family),
        ClassicalObject::Delta { x0, order } => embed_delta(*x0, *order, family),
    }
}

/// `ζ^{-1} ∫ ρ((λ − z)/ζ) dλ` over ℝ; equals 1 while `|Im z| < Re ζ`.
pub fn mollifier_mass(spec: &MollifierSpec, z: Complex64, zeta: Complex64) -> Result<Complex64> {
    let scale = zeta.norm().max(1e-300);
    // in t = λ − Re z, so that λ − z keeps full precision when |ζ| ≪ |z|
    let r = crate::quadrature::integrate_real_line(
        |t| spec.value(&[Complex64::new(-t, z.im)], zeta),
        0.0,
        scale,
        &[-zeta.im, zeta.im],
        &QuadOptions { abs_tol: 1e-12, rel_tol: 1e-13, max_evals: 1 << 20 },
    )?;
    Ok(r.value)
}

/// Real line `Ω = ℝ` with the symmetric at-infinity family, the default setting.
pub fn default_family() -> ShrinkingFamily {
    ShrinkingFamily { kind: FamilyKind::AtInfinity, x0: None, side: Side::Both, omega: Omega::real_line() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::SampleOptions;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mollifier_examples() {
        let s = MollifierSpec::default();
        assert!((s.normalization() - 1.0 / PI).abs() < 1e-16);
        let v = s.value(&[c(0.0, 0.0)], c(0.1, 0.0)).unwrap();
        assert!((v.re - 10.0 / PI).abs() < 1e-13);
        let z = c(0.3, 0.01);
        let v = s.value(&[z], z).unwrap();
        assert!((v - (1.0 / z) / PI * 0.5).norm() < 1e-13);
        assert!(matches!(s.value(&[c(0.0, 0.1)], c(0.1, 0.0)), Err(Error::KernelPole { .. })));
        for sp in [2u32, 3, 4] {
            let spec = MollifierSpec { s: sp, k: 1 };
            let m = mollifier_mass(&spec, c(0.2, 0.0), c(0.05, 0.0)).unwrap();
            assert!((m - c(1.0, 0.0)).norm() < 1e-10, "s={sp}: {m}");
        }
        assert!(MollifierSpec { s: 1, k: 2 }.validate().is_err());
        assert_eq!(MollifierSpec::for_dim(3).s, 2);
    }

    #[test]
    fn cauchy_derivative_matches_symbolic() {
        let spec = MollifierSpec { s: 1, k: 1 };
        let generic = MollifierSpec { s: 1, k: 1 };
        let _ = generic;
        let mut e = Expr::real(spec.normalization()) * (Expr::one() + Expr::z(0).powi(2)).powi(-1);
        for m in 0..5 {
            let w = c(0.7, -0.2);
            let sym = e.eval(&[w], c(1.0, 0.0)).unwrap();
            let closed = MollifierSpec::cauchy_derivative(m, w);
            assert!((sym - closed).norm() < 1e-12 * sym.norm().max(1.0), "m={m}");
            e = e.derivative(Var::Z(0));
        }
    }

    #[test]
    fn delta_index_and_values() {
        let fam = default_family();
        let d = embed_delta(0.0, 0, &fam).unwrap();
        assert_eq!(d.space.n, 2);
        let v = d.representative.eval_real(&[0.0], 0.01).unwrap();
        assert!((v.re - 1.0 / (PI * 0.01)).abs() < 1e-10);
        let d1 = embed_delta(0.0, 1, &fam).unwrap();
        assert_eq!(d1.representative.evaluate(&[c(0.0, 0.0)], c(0.1, 0.0)).unwrap(), c(0.0, 0.0));
        assert_eq!(embed_delta(3.0, 0, &fam).unwrap().space.n, 4);
        let point = ShrinkingFamily::point(vec![0.0], Omega::real_line()).unwrap();
        assert!(embed_delta(0.0, 0, &point).is_err());
        assert_eq!(embed_delta(5.0, 0, &point).unwrap().space.n, 2);
    }

    #[test]
    fn triangle_embedding_matches_closed_form_far_away() {
        // far from the support the convolution is (1/π) ζ ∫ f(λ)/(ζ² + (x−λ)²) dλ
        let fam = default_family();
        let tri = RealFunction::triangle(0.0, 1.0);
        let e = embed_compact(&[DistributionTerm { order: 0, f: tri.clone() }], &MollifierSpec::default(), &fam).unwrap();
        let xi = 0.05;
        let x = 3.0;
        let r = integrate(
            |l| Ok(c(tri.eval(l) * xi / (PI * (xi * xi + (x - l) * (x - l))), 0.0)),
            &[-1.0, 0.0, 1.0],
            &QuadOptions::default(),
        )
        .unwrap();
        let v = e.representative.eval_real(&[x], xi).unwrap();
        assert!((v - r.value).norm() < 1e-12);
    }

    #[test]
    fn embedding_is_linear() {
        let fam = default_family();
        let spec = MollifierSpec::default();
        let f = RealFunction::triangle(0.0, 1.0);
        let g = RealFunction::unit_bump(0.5, 0.5).unwrap();
        let (a, b) = (2.0, -0.5);
        let sum = RealFunction::Sum { terms: vec![(a, f.clone()), (b, g.clone())] };
        let ef = embed_compact(&[DistributionTerm { order: 0, f }], &spec, &fam).unwrap().representative;
        let eg = embed_compact(&[DistributionTerm { order: 0, f: g }], &spec, &fam).unwrap().representative;
        let es = embed_compact(&[DistributionTerm { order: 0, f: sum }], &spec, &fam).unwrap().representative;
        let comb = ef.scale(a.into()).add(&eg.scale(b.into())).unwrap();
        let grid = es.claimed().unwrap().domain().unwrap().sample(&es.grid_options(50, 1e-7, 11)).unwrap();
        for p in &grid.points {
            let u = es.evaluate(&p.z, p.zeta).unwrap();
            let v = comb.evaluate(&p.z, p.zeta).unwrap();
            assert!((u - v).norm() <= 1e-8 * (1.0 + u.norm()), "{u} vs {v}");
        }
    }

    #[test]
    fn heaviside_restriction_is_arctan_profile() {
        let plus = ShrinkingFamily::one_sided(Side::Plus, Omega::real_line()).unwrap();
        let h = embed_constant_at_infinity(None, 0.0, 1.0, 0.0, &MollifierSpec::default(), &plus).unwrap();
        for (x, xi) in [(0.0, 0.1), (0.3, 0.01), (-2.0, 0.2), (5.0, 1e-3)] {
            let v = h.representative.eval_real(&[x], xi).unwrap();
            let closed = 0.5 + (x / xi).atan() / PI;
            // numerical convolution of H with the Poisson kernel
            let r = crate::quadrature::integrate_real_line(
                |l| Ok(c(if l > 0.0 { 1.0 } else { 0.0 } * xi / (PI * (xi * xi + (x - l) * (x - l))), 0.0)),
                x,
                xi,
                &[0.0],
                &QuadOptions::default(),
            )
            .unwrap();
            assert!((v.re - closed).abs() < 1e-14);
            assert!((v.re - r.value.re).abs() < 1e-8);
        }
        let sym = default_family();
        assert!(matches!(
            embed_constant_at_infinity(None, 0.0, 1.0, 0.0, &MollifierSpec::default(), &sym),
            Err(Error::Family(_))
        ));
        let cst = embed_constant_at_infinity(None, 2.5, 2.5, 0.0, &MollifierSpec::default(), &sym).unwrap();
        assert_eq!(cst.representative.evaluate(&[c(0.3, 0.01)], c(0.1, 0.02)).unwrap(), c(2.5, 0.0));
    }

    #[test]
    fn heaviside_is_holomorphic_across_formula_switch() {
        let step = Step { x0: 0.0, c_minus: c(0.0, 0.0), c_plus: c(1.0, 0.0) };
        let h = Representative::step(step);
        let zeta = c(0.1, 0.01);
        for z in [c(0.2, 0.001), c(-0.2, 0.001), c(0.19, -0.002)] {
            let direct = 0.5 + (z / zeta).atan() / PI;
            assert!((h.evaluate(&[z], zeta).unwrap() - direct).norm() < 1e-14);
        }
        // derivative of the step is the delta expression
        let d = h.differentiate(0).unwrap();
        let expected = delta_expr(0.0).eval(&[c(0.05, 0.0)], zeta).unwrap();
        assert!((d.evaluate(&[c(0.05, 0.0)], zeta).unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn derivative_commutes_with_embedding() {
        // f = bump, f' written out; ∂_z j(f) = j(f')
        let fam = default_family();
        let spec = MollifierSpec::default();
        let f = RealFunction::Bump { center: 0.0, radius: 1.0, scale: 1.0 };
        let fprime = RealFunction::Expr { expr: Expr::parse("exp(-1/(1-z^2))*(-2*z/(1-z^2)^2)").unwrap(), lo: -1.0, hi: 1.0 };
        let ef = embed_compact(&[DistributionTerm { order: 0, f }], &spec, &fam).unwrap().representative;
        let efp = embed_compact(&[DistributionTerm { order: 0, f: fprime }], &spec, &fam).unwrap().representative;
        let d = ef.differentiate(0).unwrap();
        let grid = efp.claimed().unwrap().domain().unwrap().sample(&SampleOptions::new(20, 1e-5, 2).with_anchors(vec![0.0])).unwrap();
        for p in &grid.points {
            let u = d.evaluate(&p.z, p.zeta).unwrap();
            let v = efp.evaluate(&p.z, p.zeta).unwrap();
            assert!((u - v).norm() <= 1e-7 * (1.0 + u.norm()), "{u} vs {v}");
        }
    }

    #[test]
    fn analytic_subalgebra_is_exact() {
        let f = embed_analytic(&Expr::parse("z^2").unwrap(), 1.0, 1).unwrap();
        let sq = f.mul(&f).unwrap();
        assert_eq!(sq.eval_real(&[3.0], 0.1).unwrap(), c(81.0, 0.0));
        let e = embed_analytic(&Expr::parse("exp(z)").unwrap(), 1.0, 1).unwrap();
        let z = c(1.0, 0.01);
        assert_eq!(e.evaluate(&[z], c(0.3, 0.0)).unwrap(), z.exp());
        assert!(embed_analytic(&Expr::parse("log(z)").unwrap(), 1.0, 1).is_err());
        assert!(embed_analytic(&Expr::parse("zeta").unwrap(), 1.0, 1).is_err());
    }

    #[test]
    fn polynomial_at_infinity() {
        let fam = default_family();
        let e = embed_polynomial_at_infinity(&[1.0, 0.0, 2.0], None, &MollifierSpec::default(), &fam).unwrap();
        assert_eq!(e.representative.eval_real(&[2.0], 0.1).unwrap(), c(9.0, 0.0));
        assert!(embed_polynomial_at_infinity(&[1.0; 6], None, &MollifierSpec::default(), &fam).is_err());
    }

    #[test]
    fn table_density() {
        let t = RealFunction::Table { xs: vec![-1.0, 0.0, 1.0], ys: vec![0.0, 1.0, 0.0] };
        assert_eq!(t.eval(0.5), 0.5);
        assert_eq!(t.eval(2.0), 0.0);
        assert!((t.integral().unwrap() - 1.0).abs() < 1e-13);
        assert!(RealFunction::Table { xs: vec![0.0, 0.0], ys: vec![1.0, 1.0] }.validate().is_err());
    }
}
