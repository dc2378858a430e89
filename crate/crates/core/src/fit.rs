//! Log-log slope fits for growth and decay rates in ξ.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Minimum number of points for a slope fit.
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    /// `y ≈ e^intercept · x^slope`
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares line through `(ln x, ln y)`. All values must be positive.
pub fn loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit("abscissae and ordinates differ in length".into()));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!("{} points, at least {MIN_FIT_POINTS} needed", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 1e-12 * m {
        return Err(Error::Fit("abscissae do not spread in log scale".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok(LogLogFit { slope, intercept: my - slope * mx, points: xs.len() })
}

/// Geometric grid `start · ratio^k`, `k = 0..count`.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

/// Indices of the small-ξ tail used in fits: the smaller half, but never fewer
/// than [`MIN_FIT_POINTS`] when available.
pub fn tail_indices(xs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let keep = (xs.len() / 2).max(MIN_FIT_POINTS).min(xs.len());
    idx.truncate(keep);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn too_few_points() {
        assert!(matches!(loglog(&[1.0; 3], &[1.0; 3]), Err(Error::Fit(_))));
    }

    proptest! {
        #[test]
        fn recovers_exact_powers(p in -6.0f64..6.0, c in 0.01f64..100.0) {
            let xs = geometric_grid(0.1, 0.5, 12);
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
            let f = loglog(&xs, &ys).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-9);
            prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn tail_is_smallest_half() {
        let xs = geometric_grid(1.0, 0.5, 20);
        let t = tail_indices(&xs);
        assert_eq!(t, (10..20).collect::<Vec<_>>());
        assert_eq!(tail_indices(&xs[..9]).len(), 8);
    }
}
