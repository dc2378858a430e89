//! Weight functions φ: Ω → (0, ∞) indexing the spaces `H_{n,φ}`.

use crate::domains::{norm, Omega};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Catalog of strictly positive continuous weights.
///
/// `Blowup { m }` is `min(d(x, ∂Ω), 1)^{-m}`; the cap keeps it finite and
/// positive on ℝ^k, where the boundary distance is infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum WeightFunction {
    Constant { c: f64 },
    /// `(1 + |x|)^m`
    Polynomial { m: f64 },
    Blowup { m: f64 },
    Product { factors: Vec<WeightFunction> },
    /// Pointwise maximum, produced by sums of elements from different spaces.
    Max { parts: Vec<WeightFunction> },
    Psi(PsiWeight),
}

impl Default for WeightFunction {
    fn default() -> Self {
        WeightFunction::one()
    }
}

impl WeightFunction {
    pub fn one() -> Self {
        WeightFunction::Constant { c: 1.0 }
    }

    pub fn constant(c: f64) -> Self {
        WeightFunction::Constant { c }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFunction::Constant { c } if !(*c > 0.0 && c.is_finite()) => {
                Err(Error::Domain(format!("constant weight must be positive and finite, got {c}")))
            }
            WeightFunction::Polynomial { m } | WeightFunction::Blowup { m } if !m.is_finite() => {
                Err(Error::Domain("weight exponent must be finite".into()))
            }
            WeightFunction::Product { factors: v } | WeightFunction::Max { parts: v } => {
                if v.is_empty() {
                    return Err(Error::Domain("empty weight combination".into()));
                }
                v.iter().try_for_each(|w| w.validate())
            }
            WeightFunction::Psi(p) => p.validate(),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], omega: &Omega) -> f64 {
        match self {
            WeightFunction::Constant { c } => *c,
            WeightFunction::Polynomial { m } => (1.0 + norm(x)).powf(*m),
            WeightFunction::Blowup { m } => omega.boundary_distance(x).min(1.0).powf(-*m),
            WeightFunction::Product { factors } => factors.iter().map(|w| w.eval(x, omega)).product(),
            WeightFunction::Max { parts } => parts.iter().map(|w| w.eval(x, omega)).fold(0.0, f64::max),
            WeightFunction::Psi(p) => p.eval(x, omega),
        }
    }

    /// Upper bound for `sup_{K_r} φ`, exact for the single-factor forms.
    pub fn sup_on_exhaustion(&self, r: f64) -> f64 {
        match self {
            WeightFunction::Constant { c } => *c,
            WeightFunction::Polynomial { m } => {
                if *m >= 0.0 {
                    (1.0 + r).powf(*m)
                } else {
                    1.0
                }
            }
            WeightFunction::Blowup { m } => {
                if *m >= 0.0 {
                    r.max(1.0).powf(*m)
                } else {
                    1.0
                }
            }
            WeightFunction::Product { factors } => factors.iter().map(|w| w.sup_on_exhaustion(r)).product(),
            WeightFunction::Max { parts } => parts.iter().map(|w| w.sup_on_exhaustion(r)).fold(0.0, f64::max),
            WeightFunction::Psi(p) => p.nu_at_level(r.ceil().max(1.0) as usize + 1),
        }
    }

    /// Number of catalog nodes; guards against runaway chain weights.
    pub fn size(&self) -> usize {
        match self {
            WeightFunction::Product { factors: v } | WeightFunction::Max { parts: v } => {
                1 + v.iter().map(|w| w.size()).sum::<usize>()
            }
            WeightFunction::Psi(p) => 1 + p.source.size(),
            _ => 1,
        }
    }

    /// Product with like factors merged (constants multiply, exponents add).
    pub fn mul(&self, other: &WeightFunction) -> WeightFunction {
        let mut c = 1.0;
        let mut poly = 0.0;
        let mut blow = 0.0;
        let mut rest = Vec::new();
        for w in [self, other] {
            collect_factors(w, &mut c, &mut poly, &mut blow, &mut rest);
        }
        let mut factors = Vec::new();
        if c != 1.0 || (poly == 0.0 && blow == 0.0 && rest.is_empty()) {
            factors.push(WeightFunction::Constant { c });
        }
        if poly != 0.0 {
            factors.push(WeightFunction::Polynomial { m: poly });
        }
        if blow != 0.0 {
            factors.push(WeightFunction::Blowup { m: blow });
        }
        factors.extend(rest);
        if factors.len() == 1 {
            factors.pop().unwrap_or_default()
        } else {
            WeightFunction::Product { factors }
        }
    }

    pub fn scale(&self, c: f64) -> WeightFunction {
        WeightFunction::Constant { c }.mul(self)
    }

    pub fn max(&self, other: &WeightFunction) -> WeightFunction {
        if self == other {
            return self.clone();
        }
        let mut parts = Vec::new();
        for w in [self, other] {
            match w {
                WeightFunction::Max { parts: p } => parts.extend(p.iter().cloned()),
                w => parts.push(w.clone()),
            }
        }
        parts.dedup();
        WeightFunction::Max { parts }
    }

    /// Target weight of `∂/∂x_i` on `H_{n,φ}`: `φ · (n+1) / min(d(x, ∂Ω), 1)`.
    pub fn derivative_weight(&self, n: u32) -> WeightFunction {
        self.mul(&WeightFunction::Product {
            factors: vec![WeightFunction::Constant { c: (n + 1) as f64 }, WeightFunction::Blowup { m: 1.0 }],
        })
    }
}

fn collect_factors(w: &WeightFunction, c: &mut f64, poly: &mut f64, blow: &mut f64, rest: &mut Vec<WeightFunction>) {
    match w {
        WeightFunction::Constant { c: v } => *c *= v,
        WeightFunction::Polynomial { m } => *poly += m,
        WeightFunction::Blowup { m } => *blow += m,
        WeightFunction::Product { factors } => {
            for f in factors {
                collect_factors(f, c, poly, blow, rest);
            }
        }
        other => rest.push(other.clone()),
    }
}

/// Continuous weight built from levels `ν_1 ≤ ν_2 ≤ …` on the exhaustion.
///
/// With `t(x) = max(|x|, 1/d(x, ∂Ω))` and `t ∈ (r-1, r]`, the value moves
/// linearly from `ν_r` to `ν_{r+1}`, so `ψ ≥ ν_r` on `K_r \ K_{r-1}`.
/// Levels past the stored table are `sup_{K_r} φ / ε_last`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiWeight {
    pub nu: Vec<f64>,
    pub source: Box<WeightFunction>,
    pub eps_last: f64,
}

impl PsiWeight {
    pub fn validate(&self) -> Result<()> {
        if self.nu.is_empty() || self.nu.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("ψ levels must be positive and finite".into()));
        }
        if !(self.eps_last > 0.0) {
            return Err(Error::Domain("ψ tail ε must be positive".into()));
        }
        self.source.validate()
    }

    /// `ν_r` for `r ≥ 1`.
    pub fn nu_at_level(&self, r: usize) -> f64 {
        let r = r.max(1);
        if r <= self.nu.len() {
            self.nu[r - 1]
        } else {
            let tail = self.source.sup_on_exhaustion(r as f64) / self.eps_last;
            tail.max(*self.nu.last().unwrap_or(&0.0))
        }
    }

    pub fn eval(&self, x: &[f64], omega: &Omega) -> f64 {
        let t = omega.exhaustion_level(x);
        if !t.is_finite() {
            return f64::INFINITY;
        }
        let r = t.ceil().max(1.0);
        let frac = (t - (r - 1.0)).clamp(0.0, 1.0);
        let lo = self.nu_at_level(r as usize);
        let hi = self.nu_at_level(r as usize + 1);
        lo + frac * (hi - lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        let line = Omega::real_line();
        let half = Omega::HalfSpace { dim: 1, axis: 0, offset: 0.0, positive: true };
        assert_eq!(WeightFunction::constant(3.0).eval(&[9.0], &line), 3.0);
        assert_eq!(WeightFunction::Polynomial { m: 2.0 }.eval(&[-2.0], &line), 9.0);
        assert_eq!(WeightFunction::Blowup { m: 1.0 }.eval(&[5.0], &line), 1.0);
        assert_eq!(WeightFunction::Blowup { m: 2.0 }.eval(&[0.25], &half), 16.0);
    }

    #[test]
    fn products_merge_like_factors() {
        let a = WeightFunction::Polynomial { m: 1.0 }.mul(&WeightFunction::constant(2.0));
        let sq = a.mul(&a);
        assert_eq!(
            sq,
            WeightFunction::Product {
                factors: vec![WeightFunction::Constant { c: 4.0 }, WeightFunction::Polynomial { m: 2.0 }]
            }
        );
        assert_eq!(WeightFunction::one().mul(&WeightFunction::one()), WeightFunction::one());
        let line = Omega::real_line();
        assert!((sq.eval(&[1.0], &line) - 16.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_weight_and_max() {
        let line = Omega::real_line();
        let d = WeightFunction::one().derivative_weight(2);
        assert_eq!(d.eval(&[0.0], &line), 3.0);
        let m = WeightFunction::constant(2.0).max(&WeightFunction::Polynomial { m: 1.0 });
        assert_eq!(m.eval(&[0.0], &line), 2.0);
        assert_eq!(m.eval(&[3.0], &line), 4.0);
    }

    #[test]
    fn psi_is_continuous_and_dominates_levels() {
        let line = Omega::real_line();
        let p = PsiWeight { nu: vec![1.0, 2.0, 4.0, 8.0], source: Box::new(WeightFunction::one()), eps_last: 1e-3 };
        for r in 1..4usize {
            let below = p.eval(&[r as f64 - 1.0 + 1e-9], &line);
            let above = p.eval(&[r as f64 - 1.0 - 1e-9], &line);
            if r > 1 {
                assert!((below - above).abs() < 1e-6);
            }
            for t in [0.1, 0.5, 1.0] {
                assert!(p.eval(&[r as f64 - 1.0 + t], &line) >= p.nu[r - 1]);
            }
        }
        assert_eq!(p.nu_at_level(10), 1000.0);
    }

    #[test]
    fn exhaustion_sups() {
        let w = WeightFunction::Polynomial { m: 2.0 }.mul(&WeightFunction::Blowup { m: 1.0 });
        assert_eq!(w.sup_on_exhaustion(3.0), 16.0 * 3.0);
        assert_eq!(w.size(), 3);
    }
}
