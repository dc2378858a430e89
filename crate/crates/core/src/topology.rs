//! Sharp-topology neighbourhoods, boundedness in the inductive limit, the
//! chain of spaces `(n_p, φ_p)`, the ψ-construction making
//! `H_{n,φ} ↪ H_{n+1,ψ}` compact, and finite `Γ_{l¹}` hulls.

use crate::algebra::{sup_profile, NormCertificate, Representative, SpaceIndex, SLOPE_TOL};
use crate::diagnostics::{gn_linear, gn_mul, GeneralizedNumber};
use crate::domains::{CompactBox, SampleGrid, SampleOptions, SectorDomain};
use crate::error::{Error, Result};
use crate::fit::{tail_indices, LogLogFit};
use crate::algebra::fit_profile;
use crate::weight::{PsiWeight, WeightFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `V(K, p, q)`: `sup_{x∈K} |D^α f(x, ξ)| ≤ C ξ^q` for `|α| ≤ p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpNeighborhood {
    pub k: CompactBox,
    pub p: u32,
    pub q: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeFit {
    /// Axes differentiated, in order.
    pub alpha: Vec<usize>,
    pub fit: Option<LogLogFit>,
    /// `max_tail sup_K |D^α f| / ξ^q`.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SharpVerdict {
    Member { c: f64, eta: f64, fits: Vec<DerivativeFit> },
    Fail { alpha: Vec<usize>, reason: String, fits: Vec<DerivativeFit> },
}

/// Multi-indices of order `≤ p` as nondecreasing axis sequences.
fn multi_indices(dim: usize, p: u32) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..p {
        let mut next = Vec::new();
        for a in &frontier {
            let start = a.last().copied().unwrap_or(0);
            for axis in start..dim {
                let mut b: Vec<usize> = a.clone();
                b.push(axis);
                next.push(b);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn sharp_membership(f: &Representative, v: &SharpNeighborhood, xi: &[f64]) -> Result<SharpVerdict> {
    v.k.validate()?;
    if v.k.lo.len() != f.dim() {
        return Err(Error::Domain("compact and representative dimensions differ".into()));
    }
    let tail = tail_indices(xi);
    let eta = tail.iter().map(|i| xi[*i]).fold(0.0, f64::max);
    let mut fits = Vec::new();
    let mut c = 0.0f64;
    for alpha in multi_indices(f.dim(), v.p) {
        let mut d = f.clone();
        for axis in &alpha {
            d = d.differentiate(*axis)?;
        }
        let Some(sups) = sup_profile(&d, &v.k, xi)? else {
            return Ok(SharpVerdict::Fail { alpha, reason: "overflow in the sup profile".into(), fits });
        };
        let fit = fit_profile(xi, &sups)?;
        let constant = tail.iter().map(|i| sups[*i] / xi[*i].powi(v.q)).fold(0.0, f64::max);
        let entry = DerivativeFit { alpha: alpha.clone(), fit, constant };
        fits.push(entry);
        if let Some(fit) = fit {
            if fit.slope < v.q as f64 - SLOPE_TOL {
                let reason = format!("sup_K |D f| decays like ξ^{:.3}, slower than ξ^{}", fit.slope, v.q);
                return Ok(SharpVerdict::Fail { alpha, reason, fits });
            }
        }
        c = c.max(constant);
    }
    Ok(SharpVerdict::Member { c, eta, fits })
}

/// Sampling parameters shared by the topology checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub budget: usize,
    pub floor: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { budget: 2000, floor: 1e-8, seed: 0 }
    }
}

impl GridSpec {
    fn options(&self, anchors: Vec<f64>) -> SampleOptions {
        SampleOptions::new(self.budget, self.floor, self.seed).with_anchors(anchors)
    }

    fn sample(&self, n: u32, space: &SpaceIndex, anchors: Vec<f64>) -> Result<SampleGrid> {
        SectorDomain::new(n, space.family.clone())?.sample(&self.options(anchors))
    }
}

/// `(n_p, φ_p)`, `p = 1..`, with the ψ certificates used to build each step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceChain {
    pub indices: Vec<SpaceIndex>,
    pub psi: Vec<PsiCertificate>,
    pub weight_checks: Vec<WeightCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    /// 1-based chain position.
    pub p: usize,
    pub n: u32,
    pub bound: f64,
    pub estimates: Vec<f64>,
}

/// First chain position where every element has a finite, refinement-stable
/// norm estimate. Evaluation errors count as unbounded.
pub fn bounded_in(chain: &SpaceChain, fs: &[Representative], grid: &GridSpec) -> Result<Option<Bounded>> {
    'steps: for (p, s) in chain.indices.iter().enumerate() {
        let mut estimates = Vec::with_capacity(fs.len());
        for f in fs {
            match membership(f, s, grid) {
                Some(e) => estimates.push(e),
                None => continue 'steps,
            }
        }
        let bound = estimates.iter().copied().fold(0.0, f64::max);
        return Ok(Some(Bounded { p: p + 1, n: s.n, bound, estimates }));
    }
    Ok(None)
}

/// Peaks of `f` plus the point of the real axis where `φ` is smallest, since
/// the weighted sup of slowly varying elements sits there.
fn anchors(fs: &[&Representative], s: &SpaceIndex) -> Vec<f64> {
    let omega = &s.family.omega;
    let mut out: Vec<f64> = fs.iter().flat_map(|f| f.peaks().to_vec()).collect();
    let best = weight_samples(s)
        .into_iter()
        .map(|x| (s.phi.eval(&x, omega), x[0]))
        .filter(|(w, _)| w.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((_, x0)) = best {
        out.push(x0);
    }
    out
}

/// Two-pass estimate: a first grid locates the sup in `x`, which then joins
/// the anchors so that both the grid and its refinement contain it exactly.
fn estimate(f: &Representative, s: &SpaceIndex, grid: &GridSpec) -> Result<NormCertificate> {
    let mut a = anchors(&[f], s);
    let first = grid.sample(s.n, s, a.clone())?;
    let (_, i) = f.sampled_norm(s, &first)?;
    if let Some(p) = first.points.get(i) {
        a.push(p.x()[0]);
    }
    f.norm_estimate(s, &grid.sample(s.n, s, a)?)
}

/// Stable finite norm estimate of `f` in `s`, if any.
fn membership(f: &Representative, s: &SpaceIndex, grid: &GridSpec) -> Option<f64> {
    match estimate(f, s, grid) {
        Ok(c) if c.stable && c.estimate.is_finite() => Some(c.estimate),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// ε-schedule for the ψ factor of each step.
    pub schedule: Vec<f64>,
    pub grid: GridSpec,
    /// Largest admissible weight expression size.
    pub max_weight_size: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { schedule: vec![0.1], grid: GridSpec { budget: 400, floor: 1e-8, seed: 0 }, max_weight_size: 256 }
    }
}

/// Sampled domination of `φ_{p+1}` over `φ_p²` and over the derivative weight of `(n_p, φ_p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightCheck {
    pub step: usize,
    pub samples: usize,
    pub dominates_square: bool,
    pub dominates_derivative_weight: bool,
}

fn weight_samples(s: &SpaceIndex) -> Vec<Vec<f64>> {
    let omega = &s.family.omega;
    let dim = omega.dim();
    (0..=400)
        .map(|i| {
            let mut x = vec![0.0; dim];
            x[0] = -20.0 + 0.1 * i as f64;
            x
        })
        .filter(|x| omega.contains(x))
        .collect()
}

/// `n_{p+1} = 2n_p + 1`, `φ_{p+1} = φ_p² · (n_p+1)/min(d,1) · ψ_p` with `ψ_p`
/// from [`construct_psi`] on a constant sequence.
pub fn build_chain(base: &SpaceIndex, steps: usize, opts: &ChainOptions) -> Result<SpaceChain> {
    if steps == 0 {
        return Err(Error::Precondition("a chain needs at least one step".into()));
    }
    base.phi.validate()?;
    base.family.validate()?;
    let mut indices = vec![base.clone()];
    let mut psis = Vec::new();
    let mut weight_checks = Vec::new();
    for step in 0..steps {
        let cur = indices[step].clone();
        let one = Representative::constant(Complex64::new(1.0, 0.0), cur.family.dim());
        let input = PsiInput {
            space: cur.clone(),
            fs: vec![one.clone(), one.clone(), one],
            f_limit: None,
            schedule: opts.schedule.clone(),
            grid: opts.grid.clone(),
        };
        let cert = construct_psi(&input)?;
        let phi = cur.phi.mul(&cur.phi).mul(&WeightFunction::one().derivative_weight(cur.n)).mul(&cert.psi);
        if phi.size() > opts.max_weight_size {
            return Err(Error::WeightExplosion(format!(
                "weight at step {} has {} nodes, above the limit {}",
                step + 2,
                phi.size(),
                opts.max_weight_size
            )));
        }
        let next = SpaceIndex::new(2 * cur.n + 1, phi, cur.family.clone());
        let xs = weight_samples(&cur);
        let omega = &cur.family.omega;
        let dw = cur.phi.derivative_weight(cur.n);
        let tol = 1.0 + 1e-12;
        weight_checks.push(WeightCheck {
            step: step + 1,
            samples: xs.len(),
            dominates_square: xs.iter().all(|x| next.phi.eval(x, omega) * tol >= cur.phi.eval(x, omega).powi(2)),
            dominates_derivative_weight: xs.iter().all(|x| next.phi.eval(x, omega) * tol >= dw.eval(x, omega)),
        });
        psis.push(cert);
        indices.push(next);
    }
    Ok(SpaceChain { indices, psi: psis, weight_checks })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductCheck {
    pub step: usize,
    pub pair: (usize, usize),
    /// `est_{p+1}(f·g)` on the common grid.
    pub lhs: f64,
    /// `est_p(f) · est_p(g)` on the same grid.
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub step: usize,
    pub element: usize,
    pub estimate: Option<f64>,
    pub stable: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub element: usize,
    /// First 1-based chain position with a stable estimate.
    pub entry: Option<usize>,
    pub estimates: Vec<Option<f64>>,
    /// Estimates do not increase along the inclusions after entry.
    pub inclusions_hold: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCertificates {
    pub product: Vec<ProductCheck>,
    pub derivative: Vec<DerivativeCheck>,
    pub stability: Vec<StabilityCheck>,
    pub weights_ok: bool,
    pub passed: bool,
}

/// Product, derivative and norm-stability certificates of a chain over a corpus.
/// Pairs are `(k, k+1 mod len)`; a pair or element is checked at every step
/// from the one where its factors have entered the chain.
pub fn chain_certificates(chain: &SpaceChain, corpus: &[Representative], grid: &GridSpec) -> Result<ChainCertificates> {
    if chain.indices.len() < 2 || corpus.is_empty() {
        return Err(Error::Precondition("certificates need a chain of two or more spaces and a nonempty corpus".into()));
    }
    let steps = chain.indices.len();
    let est: Vec<Vec<Option<f64>>> = corpus
        .iter()
        .map(|f| chain.indices.iter().map(|s| membership(f, s, grid)).collect())
        .collect();
    let entry: Vec<Option<usize>> = est.iter().map(|e| e.iter().position(|v| v.is_some())).collect();

    let mut stability = Vec::new();
    for (i, f) in corpus.iter().enumerate() {
        let mut inclusions_hold = true;
        if let Some(p0) = entry[i] {
            for p in p0..steps - 1 {
                let (s, t) = (&chain.indices[p], &chain.indices[p + 1]);
                let g = grid.sample(t.n, t, anchors(&[f], t))?;
                let a = f.sampled_norm(s, &g).map(|v| v.0);
                let b = f.sampled_norm(t, &g).map(|v| v.0);
                inclusions_hold &= matches!((a, b), (Ok(a), Ok(b)) if b <= a * (1.0 + 1e-12));
            }
        }
        let stable_after = entry[i].is_some_and(|p0| est[i][p0..].iter().all(|v| v.is_some()));
        stability.push(StabilityCheck {
            element: i,
            entry: entry[i].map(|p| p + 1),
            estimates: est[i].clone(),
            inclusions_hold,
            ok: stable_after && inclusions_hold,
        });
    }

    let mut product = Vec::new();
    for a in 0..corpus.len() {
        let b = (a + 1) % corpus.len();
        let (Some(ea), Some(eb)) = (entry[a], entry[b]) else { continue };
        let fg = corpus[a].mul(&corpus[b])?;
        for p in ea.max(eb)..steps - 1 {
            let (s, t) = (&chain.indices[p], &chain.indices[p + 1]);
            let g = grid.sample(t.n, t, anchors(&[&corpus[a], &corpus[b]], t))?;
            let lhs = fg.sampled_norm(t, &g)?.0;
            let rhs = corpus[a].sampled_norm(s, &g)?.0 * corpus[b].sampled_norm(s, &g)?.0;
            product.push(ProductCheck { step: p + 1, pair: (a, b), lhs, rhs, ok: lhs <= rhs * (1.0 + 1e-12) });
        }
    }

    let mut derivative = Vec::new();
    for (i, f) in corpus.iter().enumerate() {
        let Some(p0) = entry[i] else { continue };
        for axis in 0..f.dim() {
            let d = f.differentiate(axis)?;
            for p in p0..steps - 1 {
                let t = &chain.indices[p + 1];
                let (estimate, stable) = match estimate(&d, t, grid) {
                    Ok(c) => (Some(c.estimate), c.stable && c.estimate.is_finite()),
                    Err(_) => (None, false),
                };
                derivative.push(DerivativeCheck { step: p + 1, element: i, estimate, stable, ok: stable });
            }
        }
    }

    let weights_ok = chain.weight_checks.iter().all(|w| w.dominates_square && w.dominates_derivative_weight);
    let passed = weights_ok
        && stability.iter().all(|c| c.ok)
        && product.iter().all(|c| c.ok)
        && derivative.iter().all(|c| c.ok)
        && !product.is_empty();
    Ok(ChainCertificates { product, derivative, stability, weights_ok, passed })
}

/// Default ε-schedule `10^{-m}`, `m = 1..4`.
pub fn default_schedule() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

#[derive(Clone, Debug)]
pub struct PsiInput {
    pub space: SpaceIndex,
    pub fs: Vec<Representative>,
    /// Defaults to the last element of `fs`.
    pub f_limit: Option<Representative>,
    pub schedule: Vec<f64>,
    /// Sampling of `V_{n+1}` for the q₀ table and the verification.
    pub grid: GridSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiBoundCheck {
    pub eps: f64,
    pub q0: usize,
    pub checked: usize,
    pub violations: usize,
    /// `max |f_q − f| |ζ|^{n+1} / (ε ψ(x))` over the checked points.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiCertificate {
    pub source: SpaceIndex,
    pub psi: WeightFunction,
    /// `ν_r`, `r = 1..`.
    pub nu: Vec<f64>,
    /// `ν` after each step of the schedule.
    pub history: Vec<Vec<f64>>,
    pub schedule: Vec<f64>,
    /// 1-based `q₀(ε_m)` from the per-compact bound `ε |φ|_{K_r} / |ζ|^{n+1}`.
    pub q0: Vec<usize>,
    /// 1-based first index from which the ψ-bound holds on the grid.
    pub q0_psi: Vec<usize>,
    pub verification: Vec<PsiBoundCheck>,
    pub verified: bool,
    pub grid: SampleOptions,
    pub grid_points: usize,
    pub sequence_len: usize,
}

fn level(space: &SpaceIndex, x: &[f64]) -> usize {
    let t = space.family.omega.exhaustion_level(x);
    if t.is_finite() {
        t.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// First 1-based `q` such that every `q' ≥ q` passes.
fn first_tail(ok: &[bool]) -> Option<usize> {
    let mut q = ok.len();
    while q > 0 && ok[q - 1] {
        q -= 1;
    }
    (q < ok.len()).then_some(q + 1)
}

/// The ψ-construction on a finite sequence in the unit ball of `H_{n,φ}`.
///
/// Step `m` freezes `ν_1..ν_{m−1}` and raises `ν_r`, `r ≥ m`, to
/// `|φ|_{K_r}/ε_m`; `q₀(ε_m)` is the first index from which
/// `|f_q − f| ≤ ε_m |φ|_{K_r}/|ζ|^{n+1}` holds on the `V_{n+1}` grid for `x ∈ K_r`.
pub fn construct_psi(input: &PsiInput) -> Result<PsiCertificate> {
    let s = &input.space;
    if input.fs.is_empty() {
        return Err(Error::Precondition("empty sequence".into()));
    }
    let sched = &input.schedule;
    if sched.is_empty() || sched.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) || sched.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("ε-schedule must be strictly decreasing in (0, 1]".into()));
    }
    let mut anchors: Vec<f64> = input.fs.iter().flat_map(|f| f.peaks().to_vec()).collect();
    anchors.sort_by(f64::total_cmp);
    anchors.dedup();
    let base = input.grid.sample(s.n, s, anchors.clone())?;
    for (i, f) in input.fs.iter().enumerate() {
        let est = f.sampled_norm(s, &base).map_err(|e| {
            Error::Precondition(format!("element {} is not uniformly bounded on V_{}: {e}", i + 1, s.n))
        })?;
        if est.0 > 1.0 + 1e-12 {
            return Err(Error::Precondition(format!(
                "element {} has norm estimate {:.6e} > 1; the sequence must lie in the unit ball",
                i + 1,
                est.0
            )));
        }
    }
    let limit = input.f_limit.clone().unwrap_or_else(|| input.fs[input.fs.len() - 1].clone());
    let grid = input.grid.sample(s.n + 1, s, anchors)?;
    let n1 = (s.n + 1) as i32;

    // |f_q − f| |ζ|^{n+1} at every grid point, with the point's level
    let pts: Vec<(usize, f64, f64)> = grid
        .points
        .par_iter()
        .map(|p| {
            let x = p.x();
            (level(s, &x), p.zeta.norm().powi(n1), s.weight_at(&x))
        })
        .collect();
    let diffs: Vec<Vec<f64>> = input
        .fs
        .iter()
        .map(|f| {
            let v: Vec<Result<f64>> = grid
                .points
                .par_iter()
                .zip(&pts)
                .map(|(p, (_, zn, _))| Ok((f.evaluate(&p.z, p.zeta)? - limit.evaluate(&p.z, p.zeta)?).norm() * zn))
                .collect();
            v.into_iter().collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let max_level = pts.iter().map(|p| p.0).filter(|l| *l != usize::MAX).max().unwrap_or(1);
    let table_len = max_level.max(sched.len()) + 1;
    let phi_k: Vec<f64> = (1..=table_len).map(|r| s.phi.sup_on_exhaustion(r as f64)).collect();
    let sup_k = |r: usize| if r <= table_len { phi_k[r - 1] } else { s.phi.sup_on_exhaustion(r as f64) };

    let mut nu = vec![0.0; table_len];
    let mut history = Vec::with_capacity(sched.len());
    let mut q0 = Vec::with_capacity(sched.len());
    for (m, eps) in sched.iter().enumerate() {
        for r in (m + 1)..=table_len {
            nu[r - 1] = f64::max(nu[r - 1], phi_k[r - 1] / eps);
        }
        history.push(nu.clone());
        let ok: Vec<bool> = diffs
            .iter()
            .map(|d| d.iter().zip(&pts).all(|(v, (r, _, _))| *v <= eps * sup_k(*r)))
            .collect();
        let q = first_tail(&ok).ok_or_else(|| {
            Error::Verification(format!("no q₀ for ε = {eps:e} within the {} sequence elements", input.fs.len()))
        })?;
        q0.push(q);
    }
    let psi_weight = PsiWeight { nu: nu.clone(), source: Box::new(s.phi.clone()), eps_last: sched[sched.len() - 1] };
    psi_weight.validate()?;
    let psi_at: Vec<f64> = grid.points.par_iter().map(|p| psi_weight.eval(&p.x(), &s.family.omega)).collect();

    let mut verification = Vec::new();
    let mut q0_psi = Vec::new();
    for (m, eps) in sched.iter().enumerate() {
        let ok: Vec<bool> = diffs.iter().map(|d| d.iter().zip(&psi_at).all(|(v, w)| *v <= eps * w)).collect();
        q0_psi.push(first_tail(&ok).unwrap_or(input.fs.len() + 1));
        let mut check = PsiBoundCheck { eps: *eps, q0: q0[m], checked: 0, violations: 0, worst_ratio: 0.0 };
        for d in &diffs[q0[m] - 1..] {
            for (v, w) in d.iter().zip(&psi_at) {
                check.checked += 1;
                let ratio = v / (eps * w);
                check.worst_ratio = check.worst_ratio.max(ratio);
                if ratio > 1.0 {
                    check.violations += 1;
                }
            }
        }
        verification.push(check);
    }
    let verified = verification.iter().all(|c| c.violations == 0);
    Ok(PsiCertificate {
        source: s.clone(),
        psi: WeightFunction::Psi(psi_weight),
        nu,
        history,
        schedule: sched.clone(),
        q0,
        q0_psi,
        verification,
        verified,
        grid: grid.provenance.clone(),
        grid_points: grid.len(),
        sequence_len: input.fs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactBoundCheck {
    pub k: CompactBox,
    /// `|ζ| ≥ eps/2` on the probe.
    pub eps: f64,
    pub points: usize,
    /// `max_p max |f_p| |ζ|^n / φ(x)`; at most 1 under the unit-ball bound.
    pub worst_ratio: f64,
    /// `max_p sup |f_p|` on the probe.
    pub sup: f64,
    /// `|φ|_K (n+1)^{n+1} (2/ε)^n`, the uniform bound on the probe.
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub bounds: Vec<CompactBoundCheck>,
    /// 0-based indices into the input sequence.
    pub subsequence: Vec<usize>,
    /// Sup distances between successive kept elements on the first probe.
    pub distances: Vec<f64>,
    pub psi: PsiCertificate,
}

/// Probe points of `K' = {x ∈ K, |ζ| ≥ ε/2} ∩ V_{n+1}` on the real slice.
fn probe_points(space: &SpaceIndex, k: &CompactBox, eps: f64) -> Result<Vec<(Vec<Complex64>, Complex64)>> {
    let n1 = space.n + 1;
    let dom = SectorDomain::new(n1, space.family.clone())?;
    let top = (1.0 / n1 as f64) * (1.0 - 1e-9);
    let lo = 0.5 * eps;
    if !(lo < top) {
        return Err(Error::Grid(format!("probe floor ε/2 = {lo} is above the V_{n1} radius {top}")));
    }
    let bound = (1.0 / n1 as f64) * (1.0 - 1e-6);
    let mut out = Vec::new();
    for x in k.grid(21) {
        let z: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        for i in 0..8 {
            let r = lo * (top / lo).powf(i as f64 / 7.0);
            for t in [-bound, 0.0, bound] {
                let zeta = Complex64::from_polar(r, t);
                if dom.contains_z(&z, zeta).is_some() {
                    out.push((z.clone(), zeta));
                }
            }
        }
    }
    Ok(out)
}

/// Uniform bounds on probe compacts, a greedy Cauchy subsequence on the first
/// probe, then [`construct_psi`] on it.
pub fn verify_compact_extraction(
    fs: &[Representative],
    space: &SpaceIndex,
    probes: &[CompactBox],
    f_limit: Option<Representative>,
    schedule: &[f64],
    grid: &GridSpec,
) -> Result<ExtractionReport> {
    if probes.is_empty() || fs.is_empty() {
        return Err(Error::Precondition("extraction needs a sequence and at least one probe compact".into()));
    }
    let eps = schedule.first().copied().unwrap_or(0.1);
    let n = space.n as i32;
    let margin = ((space.n + 1) as f64).powi(space.n as i32 + 1);
    let mut bounds = Vec::new();
    let mut first_probe = Vec::new();
    for (pi, k) in probes.iter().enumerate() {
        k.validate()?;
        let pts = probe_points(space, k, eps)?;
        let vals: Vec<Vec<Complex64>> = fs
            .iter()
            .map(|f| pts.par_iter().map(|(z, zeta)| f.evaluate(z, *zeta)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut worst = 0.0f64;
        let mut sup = 0.0f64;
        for v in &vals {
            for (val, (z, zeta)) in v.iter().zip(&pts) {
                let x: Vec<f64> = z.iter().map(|c| c.re).collect();
                worst = worst.max(val.norm() * zeta.norm().powi(n) / space.weight_at(&x));
                sup = sup.max(val.norm());
            }
        }
        let phi_k = k.grid(21).iter().map(|x| space.weight_at(x)).fold(0.0, f64::max);
        let bound = phi_k * margin * (2.0 / eps).powi(n);
        bounds.push(CompactBoundCheck {
            k: k.clone(),
            eps,
            points: pts.len(),
            worst_ratio: worst,
            sup,
            bound,
            ok: worst <= 1.0 + 1e-12 && sup <= bound,
        });
        if pi == 0 {
            first_probe = vals;
        }
    }
    if let Some(b) = bounds.iter().find(|b| !b.ok) {
        return Err(Error::Precondition(format!(
            "sequence is not uniformly bounded on the probe {:?}..{:?} (ratio {:.3e})",
            b.k.lo, b.k.hi, b.worst_ratio
        )));
    }
    let scale = bounds[0].bound;
    let dist = |a: usize, b: usize| -> f64 {
        first_probe[a].iter().zip(&first_probe[b]).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max) / scale
    };
    let mut kept = vec![0usize];
    let mut distances = Vec::new();
    for i in 1..fs.len() {
        let d = dist(kept[kept.len() - 1], i);
        let accept = match distances.last() {
            None => true,
            Some(prev) => d <= 0.5 * prev || d <= 1e-14,
        };
        if accept {
            kept.push(i);
            distances.push(d);
        }
    }
    if kept.len() < 3 {
        return Err(Error::Verification(format!(
            "no Cauchy subsequence certified: only {} elements kept from {}",
            kept.len(),
            fs.len()
        )));
    }
    let sub: Vec<Representative> = kept.iter().map(|i| fs[*i].clone()).collect();
    let psi = construct_psi(&PsiInput {
        space: space.clone(),
        fs: sub,
        f_limit,
        schedule: schedule.to_vec(),
        grid: grid.clone(),
    })?;
    Ok(ExtractionReport { bounds, subsequence: kept, distances, psi })
}

/// Elements that can form finite linear combinations and products.
pub trait HullElement: Clone {
    fn combine(terms: &[(Complex64, Self)]) -> Result<Self>;
    fn product(&self, other: &Self) -> Result<Self>;
}

impl HullElement for Representative {
    fn combine(terms: &[(Complex64, Self)]) -> Result<Self> {
        let mut it = terms.iter();
        let (c, f) = it.next().ok_or_else(|| Error::Precondition("empty combination".into()))?;
        it.try_fold(f.scale(*c), |acc, (c, g)| acc.add(&g.scale(*c)))
    }

    fn product(&self, other: &Self) -> Result<Self> {
        self.mul(other)
    }
}

impl HullElement for GeneralizedNumber {
    fn combine(terms: &[(Complex64, Self)]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Precondition("empty combination".into()));
        }
        Ok(gn_linear(terms))
    }

    fn product(&self, other: &Self) -> Result<Self> {
        Ok(gn_mul(self, other))
    }
}

/// Tolerance on the ℓ¹ mass of hull weights.
pub const HULL_MASS_TOL: f64 = 1e-12;

/// `Γ_{l¹}(x_n) = {Σ λ_n x_n : Σ |λ_n| ≤ 1}` of a finite generator sequence.
#[derive(Clone, Debug)]
pub struct L1Hull<T> {
    pub generators: Vec<T>,
    /// For product hulls, the factor indices of each generator.
    pub origin: Vec<Vec<usize>>,
}

pub fn hull<T: HullElement>(generators: Vec<T>) -> L1Hull<T> {
    let origin = (0..generators.len()).map(|i| vec![i]).collect();
    L1Hull { generators, origin }
}

/// Pairs `(i, j)` of an `a × b` grid in square order: at stage `s`, first
/// `(i, s)` for `i < s`, then `(s, j)` for `j ≤ s`.
pub fn square_order(a: usize, b: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(a * b);
    for s in 0..a.max(b) {
        for i in 0..s.min(a) {
            if s < b {
                out.push((i, s));
            }
        }
        if s < a {
            for j in 0..=s.min(b.saturating_sub(1)) {
                if j < b {
                    out.push((s, j));
                }
            }
        }
    }
    out
}

/// Generators `x_i · y_j` in square order; weights of a product element are
/// `λ_i μ_j`, so the ℓ¹ mass multiplies.
pub fn hull_product<T: HullElement>(h1: &L1Hull<T>, h2: &L1Hull<T>) -> Result<L1Hull<T>> {
    let mut generators = Vec::new();
    let mut origin = Vec::new();
    for (i, j) in square_order(h1.generators.len(), h2.generators.len()) {
        generators.push(h1.generators[i].product(&h2.generators[j])?);
        let mut o = h1.origin[i].clone();
        o.extend(&h2.origin[j]);
        origin.push(o);
    }
    Ok(L1Hull { generators, origin })
}

/// Weights of the product element `(Σ λ_i x_i)(Σ μ_j y_j)` in square order.
pub fn product_weights(lambda: &[Complex64], mu: &[Complex64]) -> Vec<Complex64> {
    square_order(lambda.len(), mu.len()).into_iter().map(|(i, j)| lambda[i] * mu[j]).collect()
}

#[derive(Clone, Debug)]
pub struct HullMembership<T> {
    pub member: bool,
    pub mass: f64,
    pub element: Option<T>,
}

/// `Σ|λ| ≤ 1` (within [`HULL_MASS_TOL`]) and the reconstructed combination.
pub fn hull_member<T: HullElement>(h: &L1Hull<T>, weights: &[Complex64]) -> Result<HullMembership<T>> {
    if weights.len() > h.generators.len() {
        return Err(Error::Precondition(format!(
            "{} weights for {} generators",
            weights.len(),
            h.generators.len()
        )));
    }
    if weights.iter().any(|w| !w.norm().is_finite()) {
        return Err(Error::Precondition("hull weights must be finite".into()));
    }
    let mass: f64 = weights.iter().map(|w| w.norm()).sum();
    if mass > 1.0 + HULL_MASS_TOL {
        return Ok(HullMembership { member: false, mass, element: None });
    }
    let terms: Vec<(Complex64, T)> = weights.iter().zip(&h.generators).map(|(w, g)| (*w, g.clone())).collect();
    let element = if terms.is_empty() { None } else { Some(T::combine(&terms)?) };
    Ok(HullMembership { member: true, mass, element })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{default_family, embed_delta};
    use crate::fit::geometric_grid;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn space(n: u32) -> SpaceIndex {
        SpaceIndex::new(n, WeightFunction::one(), default_family())
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(1, 2), vec![vec![], vec![0], vec![0, 0]]);
        assert_eq!(multi_indices(2, 2).len(), 6);
    }

    #[test]
    fn sharp_membership_examples() {
        let xi = geometric_grid(0.1, 0.7, 20);
        let k = CompactBox::interval(0.0, 1.0);
        let f = Representative::parse("zeta^3", 1).unwrap();
        match sharp_membership(&f, &SharpNeighborhood { k: k.clone(), p: 0, q: 3 }, &xi).unwrap() {
            SharpVerdict::Member { c, .. } => assert!((c - 1.0).abs() < 1e-12),
            v => panic!("{v:?}"),
        }
        let d = embed_delta(0.0, 0, &default_family()).unwrap().representative;
        let v = SharpNeighborhood { k: CompactBox::interval(-1.0, 1.0), p: 0, q: 1 };
        for m in [1.0, 1e3, 1e6] {
            let scaled = d.scale(c(1.0 / m));
            assert!(matches!(sharp_membership(&scaled, &v, &xi).unwrap(), SharpVerdict::Fail { .. }), "m={m}");
        }
        // derivatives enter at p = 1: z·ζ² passes with p = 0 and q = 2, and so does D(z ζ²) = ζ²
        let g = Representative::parse("z*zeta^2", 1).unwrap();
        let v = SharpNeighborhood { k, p: 1, q: 2 };
        assert!(matches!(sharp_membership(&g, &v, &xi).unwrap(), SharpVerdict::Member { .. }));
    }

    #[test]
    fn psi_for_powers_of_zeta() {
        let fs: Vec<Representative> = (1..=12).map(|p| Representative::parse(&format!("zeta^{p}"), 1).unwrap()).collect();
        let cert = construct_psi(&PsiInput {
            space: space(2),
            fs,
            f_limit: Some(Representative::constant(c(0.0), 1)),
            schedule: default_schedule(),
            grid: GridSpec { budget: 2000, floor: 1e-8, seed: 7 },
        })
        .unwrap();
        // smallest p with (1/3)^{3+p} ≤ ε, by exact integer arithmetic: 3^{3+p} ≥ 10^k
        let oracle: Vec<usize> = (1..=4u32).map(|k| (1..).find(|p| 3u128.pow(3 + *p as u32) >= 10u128.pow(k)).unwrap()).collect();
        assert_eq!(cert.q0, oracle);
        assert!(cert.verified);
        for w in cert.nu.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for (m, h) in cert.history.iter().enumerate() {
            for later in &cert.history[m..] {
                assert_eq!(h[..m], later[..m]);
            }
        }
    }

    #[test]
    fn psi_for_constant_sequence() {
        let f = Representative::parse("zeta^2*exp(z/10)/10", 1).unwrap();
        let cert = construct_psi(&PsiInput {
            space: space(2),
            fs: vec![f.clone(), f.clone(), f],
            f_limit: None,
            schedule: default_schedule(),
            grid: GridSpec { budget: 300, floor: 1e-8, seed: 1 },
        })
        .unwrap();
        assert_eq!(cert.q0, vec![1, 1, 1, 1]);
        assert!(cert.verified);
    }

    #[test]
    fn psi_for_perturbed_delta() {
        let d = embed_delta(0.0, 0, &default_family()).unwrap().representative.without_claim();
        let fs: Vec<Representative> = (1..=60).map(|p| d.scale(c(1.0 + 1.0 / p as f64))).collect();
        let cert = construct_psi(&PsiInput {
            space: space(2),
            fs,
            f_limit: Some(d.clone()),
            schedule: vec![1e-1, 1e-2],
            grid: GridSpec { budget: 1000, floor: 1e-8, seed: 3 },
        })
        .unwrap();
        assert!(cert.verified);
        assert!(cert.q0[1] > 1);
    }

    #[test]
    fn psi_rejects_large_elements() {
        let f = Representative::parse("10/zeta^2", 1).unwrap();
        let r = construct_psi(&PsiInput {
            space: space(2),
            fs: vec![f],
            f_limit: None,
            schedule: default_schedule(),
            grid: GridSpec { budget: 100, floor: 1e-8, seed: 0 },
        });
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn extraction_of_powers() {
        let fs: Vec<Representative> = (1..=10).map(|p| Representative::parse(&format!("zeta^{p}"), 1).unwrap()).collect();
        let probes = vec![CompactBox::interval(-1.0, 1.0), CompactBox::interval(3.0, 5.0)];
        let g = GridSpec { budget: 500, floor: 1e-8, seed: 2 };
        let r = verify_compact_extraction(&fs, &space(2), &probes, Some(Representative::constant(c(0.0), 1)), &[0.1, 0.01], &g).unwrap();
        assert_eq!(r.subsequence, (0..10).collect::<Vec<_>>());
        assert!(r.psi.verified);
        let same = vec![fs[2].clone(); 4];
        let r = verify_compact_extraction(&same, &space(2), &probes, None, &[0.1], &g).unwrap();
        assert_eq!(r.psi.q0, vec![1]);
        let big = vec![Representative::parse("5/zeta^2", 1).unwrap(); 3];
        assert!(matches!(verify_compact_extraction(&big, &space(2), &probes, None, &[0.1], &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn chain_indices_and_boundedness() {
        let base = space(1);
        let chain = build_chain(&base, 3, &ChainOptions::default()).unwrap();
        let ns: Vec<u32> = chain.indices.iter().map(|s| s.n).collect();
        assert_eq!(ns, vec![1, 3, 7, 15]);
        assert!(chain.weight_checks.iter().all(|w| w.dominates_square && w.dominates_derivative_weight));
        let g = GridSpec { budget: 300, floor: 1e-8, seed: 0 };
        let powers: Vec<Representative> = (1..=5).map(|m| Representative::parse(&format!("zeta^(-{m})"), 1).unwrap()).collect();
        let b = bounded_in(&chain, &powers, &g).unwrap().unwrap();
        assert_eq!(b.n, 7);
        let wild = vec![Representative::parse("exp(1/zeta^2)", 1).unwrap()];
        assert!(bounded_in(&chain, &wild, &g).unwrap().is_none());
        let opts = ChainOptions { max_weight_size: 4, ..Default::default() };
        assert!(matches!(build_chain(&base, 3, &opts), Err(Error::WeightExplosion(_))));
    }

    #[test]
    fn bounded_delta_family() {
        let e = embed_delta(0.0, 0, &default_family()).unwrap();
        let chain = SpaceChain { indices: vec![e.space.clone()], psi: Vec::new(), weight_checks: Vec::new() };
        let fs: Vec<Representative> = [-1.0, -0.5, 0.1, 0.7, 1.0].iter().map(|k| e.representative.scale(c(*k))).collect();
        let b = bounded_in(&chain, &fs, &GridSpec::default()).unwrap().unwrap();
        let n = e.space.n as i32;
        let recorded = e.bound.unwrap().constant * (1.0 / n as f64).powi(n - 1);
        assert!(b.bound <= recorded + 1e-9, "{} vs {recorded}", b.bound);
    }

    #[test]
    fn hull_examples() {
        let x = Representative::parse("zeta", 1).unwrap();
        let h = hull(vec![x.clone()]);
        let m = hull_member(&h, &[c(0.7)]).unwrap();
        assert!(m.member);
        assert_eq!(m.element.unwrap().evaluate(&[c(0.0)], c(0.2)).unwrap(), c(0.7 * 0.2));
        assert!(!hull_member(&h, &[c(1.5)]).unwrap().member);
        let y = hull(vec![Representative::parse("z", 1).unwrap(), Representative::parse("zeta^2", 1).unwrap()]);
        let x2 = hull(vec![x.clone(), Representative::parse("1", 1).unwrap()]);
        let p = hull_product(&x2, &y).unwrap();
        assert_eq!(p.origin, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        let m = hull_member(&p, &[c(0.5), c(0.0), c(0.0), c(0.5)]).unwrap();
        assert!(m.member);
        let v = m.element.unwrap().evaluate(&[c(2.0)], c(0.1)).unwrap();
        assert!((v - c(0.5 * 0.1 * 2.0 + 0.5 * 0.01)).norm() < 1e-15);
    }

    #[test]
    fn square_order_covers_grid() {
        assert_eq!(square_order(2, 2), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let o = square_order(3, 2);
        assert_eq!(o.len(), 6);
        let mut sorted = o.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    proptest! {
        #[test]
        fn product_weights_stay_in_unit_ball(
            l in proptest::collection::vec(-1.0f64..1.0, 1..6),
            m in proptest::collection::vec(-1.0f64..1.0, 1..6),
        ) {
            let nl: f64 = l.iter().map(|v| v.abs()).sum();
            let nm: f64 = m.iter().map(|v| v.abs()).sum();
            let l: Vec<Complex64> = l.iter().map(|v| c(v / nl.max(1.0))).collect();
            let m: Vec<Complex64> = m.iter().map(|v| c(v / nm.max(1.0))).collect();
            let w = product_weights(&l, &m);
            let mass: f64 = w.iter().map(|v| v.norm()).sum();
            prop_assert!(mass <= 1.0 + HULL_MASS_TOL);
            prop_assert_eq!(w.len(), l.len() * m.len());
        }
    }
}
