//! Globally adaptive 7/15-point Gauss–Kronrod quadrature of complex-valued
//! integrands, with caller-supplied breakpoints for peaked integrands.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    pub abs_tol: f64,
    /// Relative fallback for integrals too large for `abs_tol` to be meaningful.
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-12, max_evals: 1 << 20 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    /// `∫|f|` over the segment
    l1: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error).then_with(|| o.a.total_cmp(&self.a))
    }
}

fn kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut fv = [(Complex64::default(), Complex64::default()); 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (f1, f2) = (f(c - dx)?, f(c + dx)?);
        fv[j] = (f1, f2);
        k += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            g += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = k * 0.5;
    let mut resasc = WGK[7] * (fc - mean).norm();
    let mut resabs = WGK[7] * fc.norm();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j].0 - mean).norm() + (fv[j].1 - mean).norm());
        resabs += WGK[j] * (fv[j].0.norm() + fv[j].1.norm());
    }
    let h = h.abs();
    let (resasc, resabs) = (resasc * h, resabs * h);
    let mut err = ((k - g) * h).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(Segment { a, b, value: k * (b - a) * 0.5, error: err, l1: resabs })
}

/// Integrate `f` over `[points[0], points[last]]`, splitting first at every
/// interior breakpoint. Breakpoints need not be sorted or distinct.
pub fn integrate<F>(mut f: F, points: &[f64], opts: &QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Ok(QuadResult { value: Complex64::default(), error: 0.0, evals: 0 });
    }
    let mut heap = BinaryHeap::new();
    let mut done: Vec<Segment> = Vec::new();
    let mut evals = 0usize;
    for w in pts.windows(2) {
        heap.push(kronrod(&mut f, w[0], w[1])?);
        evals += 15;
    }
    let total = |heap: &BinaryHeap<Segment>, done: &[Segment]| {
        let v: Complex64 = heap.iter().chain(done.iter()).map(|s| s.value).sum();
        let e: f64 = heap.iter().chain(done.iter()).map(|s| s.error).sum();
        let l1: f64 = heap.iter().chain(done.iter()).map(|s| s.l1).sum();
        (v, e, l1)
    };
    let (mut value, mut error, mut l1) = total(&heap, &done);
    loop {
        // relative to ∫|f| so that cancelling integrands stop at the roundoff floor
        let tol = opts.abs_tol.max(opts.rel_tol * value.norm().max(l1));
        if error <= tol {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let tiny = 64.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if worst.b - worst.a <= tiny || mid <= worst.a || mid >= worst.b {
            // roundoff limited: keep the segment as is
            done.push(worst);
            continue;
        }
        if evals + 30 > opts.max_evals {
            return Err(Error::Quadrature { evals, error });
        }
        let left = kronrod(&mut f, worst.a, mid)?;
        let right = kronrod(&mut f, mid, worst.b)?;
        evals += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        l1 += left.l1 + right.l1 - worst.l1;
        heap.push(left);
        heap.push(right);
        if evals % 3000 == 0 {
            // resum to shed accumulated cancellation in the running totals
            (value, error, l1) = total(&heap, &done);
        }
    }
    let (value, error, _) = total(&heap, &done);
    Ok(QuadResult { value, error, evals })
}

/// Integrate over ℝ via `λ = center + scale·tan(u)`. Breakpoints are given in `λ`.
pub fn integrate_real_line<F>(mut f: F, center: f64, scale: f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> Result<Complex64>,
{
    if !(scale > 0.0) {
        return Err(Error::Precondition("real-line quadrature needs a positive scale".into()));
    }
    let half = std::f64::consts::FRAC_PI_2;
    let mut us = vec![-half, half];
    us.extend(breakpoints.iter().map(|p| ((p - center) / scale).atan()));
    integrate(
        |u| {
            let c = u.cos();
            if c <= 0.0 {
                return Ok(Complex64::default());
            }
            Ok(f(center + scale * u.tan())? * (scale / (c * c)))
        },
        &us,
        opts,
    )
}

/// Breakpoints `c`, `c ± w·{1, 10, 100}` inside `[a, b]`.
pub fn peak_breakpoints(c: f64, w: f64, a: f64, b: f64, out: &mut Vec<f64>) {
    if !c.is_finite() || !w.is_finite() {
        return;
    }
    let mut push = |p: f64| {
        if p > a && p < b {
            out.push(p);
        }
    };
    push(c);
    for s in [1.0, 10.0, 100.0] {
        push(c - s * w);
        push(c + s * w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| Ok(Complex64::new(x.powi(5), 1.0)), &[0.0, 2.0], &QuadOptions::default()).unwrap();
        assert!((r.value - Complex64::new(64.0 / 6.0, 2.0)).norm() < 1e-13);
        assert_eq!(r.evals, 15);
    }

    #[test]
    fn narrow_peak_with_breakpoints() {
        let eps = 1e-7;
        let f = |x: f64| Ok(Complex64::new(eps / (PI * (eps * eps + x * x)), 0.0));
        let mut bp = vec![-1.0, 1.0];
        peak_breakpoints(0.0, eps, -1.0, 1.0, &mut bp);
        let r = integrate(f, &bp, &QuadOptions::default()).unwrap();
        let exact = 2.0 / PI * (1.0 / eps).atan();
        assert!((r.value.re - exact).abs() < 1e-10, "{} vs {exact}", r.value.re);
    }

    #[test]
    fn real_line_lorentzian() {
        let r = integrate_real_line(|x| Ok(Complex64::new(1.0 / (1.0 + x * x), 0.0)), 0.0, 1.0, &[], &QuadOptions::default()).unwrap();
        assert!((r.value.re - PI).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 0.0, max_evals: 200 };
        let r = integrate(|x| Ok(Complex64::new((1.0 / (x + 1e-9)).sin(), 0.0)), &[0.0, 1.0], &opts);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn errors_propagate() {
        let r = integrate(|_| Err(Error::Fit("x".into())), &[0.0, 1.0], &QuadOptions::default());
        assert!(r.is_err());
    }
}
