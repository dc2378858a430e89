//! Shrinking families `O_n`, sector domains `V_n = A_n ∪ B_n` and seeded
//! sampling of `V_n` for sup-norm estimates.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The open set Ω. Connectedness is assumed for all three shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Omega {
    Full { dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `x[axis] > offset` when `positive`, else `x[axis] < offset`.
    HalfSpace { dim: usize, axis: usize, offset: f64, positive: bool },
}

impl Omega {
    pub fn real_line() -> Self {
        Omega::Full { dim: 1 }
    }

    pub fn dim(&self) -> usize {
        match self {
            Omega::Full { dim } | Omega::HalfSpace { dim, .. } => *dim,
            Omega::Box { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Omega::Full { dim } if *dim == 0 => Err(Error::Domain("dimension must be positive".into())),
            Omega::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::Domain("box bounds must be nonempty and of equal length".into()));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return Err(Error::Domain("box needs finite lo < hi on every axis".into()));
                }
                Ok(())
            }
            Omega::HalfSpace { dim, axis, offset, .. } => {
                if *dim == 0 || axis >= dim || !offset.is_finite() {
                    return Err(Error::Domain("half-space needs axis < dim and a finite offset".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Omega::Full { .. } => x.iter().all(|v| v.is_finite()),
            Omega::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| a < v && v < b),
            Omega::HalfSpace { axis, offset, positive, .. } => {
                if *positive {
                    x[*axis] > *offset
                } else {
                    x[*axis] < *offset
                }
            }
        }
    }

    /// Distance from `x ∈ Ω` to ∂Ω (infinite for ℝ^k).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match self {
            Omega::Full { .. } => f64::INFINITY,
            Omega::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (a, b))| (v - a).min(b - v))
                .fold(f64::INFINITY, f64::min),
            Omega::HalfSpace { axis, offset, .. } => (x[*axis] - offset).abs(),
        }
    }

    /// Closure membership.
    pub fn closure_contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Omega::Full { .. } => true,
            Omega::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| a <= v && v <= b),
            Omega::HalfSpace { axis, offset, positive, .. } => {
                if *positive {
                    x[*axis] >= *offset
                } else {
                    x[*axis] <= *offset
                }
            }
        }
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.closure_contains(x) && !self.contains(x)
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Omega::Box { .. })
    }

    /// Exhaustion shell `K_r = Ω ∩ {|x| ≤ r} ∩ {d(x, ∂Ω) ≥ 1/r}`.
    pub fn in_exhaustion(&self, x: &[f64], r: f64) -> bool {
        self.contains(x) && norm(x) <= r && self.boundary_distance(x) >= 1.0 / r
    }

    /// `t(x) = max(|x|, 1/d(x, ∂Ω))`; `x ∈ K_r` iff `t(x) ≤ r`.
    pub fn exhaustion_level(&self, x: &[f64]) -> f64 {
        norm(x).max(1.0 / self.boundary_distance(x))
    }

    /// Coordinate box enclosing `K_r`.
    fn exhaustion_box(&self, r: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.dim();
        let mut lo = vec![-r; k];
        let mut hi = vec![r; k];
        match self {
            Omega::Full { .. } => {}
            Omega::Box { lo: a, hi: b } => {
                for i in 0..k {
                    lo[i] = lo[i].max(a[i] + 1.0 / r);
                    hi[i] = hi[i].min(b[i] - 1.0 / r);
                }
            }
            Omega::HalfSpace { axis, offset, positive, .. } => {
                if *positive {
                    lo[*axis] = lo[*axis].max(offset + 1.0 / r);
                } else {
                    hi[*axis] = hi[*axis].min(offset - 1.0 / r);
                }
            }
        }
        (lo, hi)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    PointInterior,
    PointBoundary,
    AtInfinity,
    NearBoundary,
}

/// Direction of an at-infinity family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `|x| > n`
    #[default]
    Both,
    /// `x_1 > n`
    Plus,
    /// `x_1 < -n`
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkingFamily {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub side: Side,
    pub omega: Omega,
}

impl ShrinkingFamily {
    /// Validated constructor.
    pub fn new(kind: FamilyKind, x0: Option<Vec<f64>>, side: Side, omega: Omega) -> Result<Self> {
        let f = ShrinkingFamily { kind, x0, side, omega };
        f.validate()?;
        Ok(f)
    }

    pub fn at_infinity(omega: Omega) -> Result<Self> {
        Self::new(FamilyKind::AtInfinity, None, Side::Both, omega)
    }

    pub fn one_sided(side: Side, omega: Omega) -> Result<Self> {
        Self::new(FamilyKind::AtInfinity, None, side, omega)
    }

    pub fn point(x0: Vec<f64>, omega: Omega) -> Result<Self> {
        Self::new(FamilyKind::PointInterior, Some(x0), Side::Both, omega)
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.omega.validate()?;
        let k = self.dim();
        match self.kind {
            FamilyKind::PointInterior | FamilyKind::PointBoundary => {
                let x0 = self
                    .x0
                    .as_ref()
                    .ok_or_else(|| Error::Family("point families require x0".into()))?;
                if x0.len() != k {
                    return Err(Error::Family(format!("x0 has dimension {} but Ω has dimension {k}", x0.len())));
                }
                if !self.omega.closure_contains(x0) {
                    return Err(Error::Family(format!("x0 = {x0:?} lies outside the closure of Ω")));
                }
                if self.kind == FamilyKind::PointInterior && !self.omega.contains(x0) {
                    return Err(Error::Family(format!("x0 = {x0:?} is not an interior point of Ω")));
                }
                if self.kind == FamilyKind::PointBoundary && !self.omega.on_boundary(x0) {
                    return Err(Error::Family(format!("x0 = {x0:?} is not on the boundary of Ω")));
                }
            }
            FamilyKind::AtInfinity => {
                if self.x0.is_some() {
                    return Err(Error::Family("at_infinity takes no x0".into()));
                }
                if self.omega.is_bounded() {
                    return Err(Error::Family("at_infinity needs an unbounded Ω".into()));
                }
                if let Omega::HalfSpace { axis: 0, positive, .. } = self.omega {
                    let bad = matches!((self.side, positive), (Side::Plus, false) | (Side::Minus, true));
                    if bad {
                        return Err(Error::Family("one-sided family points out of the half-space".into()));
                    }
                }
            }
            FamilyKind::NearBoundary => {
                if matches!(self.omega, Omega::Full { .. }) {
                    return Err(Error::Family("near_boundary needs Ω with a boundary".into()));
                }
            }
        }
        Ok(())
    }

    /// `x ∈ O_n`.
    pub fn in_o(&self, x: &[f64], n: u32) -> bool {
        if !self.omega.contains(x) {
            return false;
        }
        let n = n as f64;
        match self.kind {
            FamilyKind::PointInterior | FamilyKind::PointBoundary => {
                let x0 = self.x0.as_deref().unwrap_or(&[]);
                dist(x, x0) < 1.0 / n
            }
            FamilyKind::AtInfinity => match self.side {
                Side::Both => norm(x) > n,
                Side::Plus => x[0] > n,
                Side::Minus => x[0] < -n,
            },
            FamilyKind::NearBoundary => self.omega.boundary_distance(x) < 1.0 / n,
        }
    }

    /// Closed-form `d(O_{n+1}, Ω \ O_n)`.
    pub fn separation(&self, n: u32) -> f64 {
        let n = n as f64;
        match self.kind {
            FamilyKind::AtInfinity => 1.0,
            _ => 1.0 / n - 1.0 / (n + 1.0),
        }
    }

    /// A point of `O_n`, if the family is nonempty at level `n`.
    pub fn witness(&self, n: u32) -> Option<Vec<f64>> {
        let k = self.dim();
        let nf = n as f64;
        let cand = match (&self.kind, &self.omega) {
            (FamilyKind::PointInterior, _) => self.x0.clone()?,
            (FamilyKind::PointBoundary, omega) => {
                let x0 = self.x0.clone()?;
                let step = 0.5 / nf;
                match omega {
                    Omega::Box { lo, hi } => {
                        let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                        let d = dist(&c, &x0);
                        x0.iter().zip(&c).map(|(p, q)| p + (q - p) * (step / d).min(0.5)).collect()
                    }
                    Omega::HalfSpace { axis, positive, .. } => {
                        let mut x = x0;
                        x[*axis] += if *positive { step } else { -step };
                        x
                    }
                    Omega::Full { .. } => return None,
                }
            }
            (FamilyKind::AtInfinity, omega) => {
                let far = nf + 1.0;
                let mut x = vec![0.0; k];
                match omega {
                    Omega::HalfSpace { axis, offset, positive, .. } => {
                        let inside = offset + if *positive { 1.0 } else { -1.0 };
                        x[*axis] = inside;
                        match self.side {
                            Side::Both => {
                                x[*axis] = if *positive { offset.max(0.0) + far } else { offset.min(0.0) - far }
                            }
                            Side::Plus if *axis == 0 => x[0] = offset.max(0.0) + far,
                            Side::Minus if *axis == 0 => x[0] = offset.min(0.0) - far,
                            Side::Plus => x[0] = far,
                            Side::Minus => x[0] = -far,
                        }
                    }
                    _ => x[0] = if self.side == Side::Minus { -far } else { far },
                }
                x
            }
            (FamilyKind::NearBoundary, omega) => match omega {
                Omega::Box { lo, hi } => {
                    let mut x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
                    x[0] = lo[0] + (0.5 / nf).min(0.25 * (hi[0] - lo[0]));
                    x
                }
                Omega::HalfSpace { axis, offset, positive, .. } => {
                    let mut x = vec![0.0; k];
                    x[*axis] = offset + if *positive { 0.5 / nf } else { -0.5 / nf };
                    x
                }
                Omega::Full { .. } => return None,
            },
        };
        self.in_o(&cand, n).then_some(cand)
    }

    /// True when `O_n` misses the closed interval `[lo, hi]` on the first axis
    /// (all other coordinates free). Used to pick sector indices for embeddings.
    pub fn misses_interval(&self, n: u32, lo: f64, hi: f64) -> bool {
        let nf = n as f64;
        match self.kind {
            FamilyKind::AtInfinity => {
                if self.dim() != 1 {
                    return false;
                }
                match self.side {
                    Side::Both => lo >= -nf && hi <= nf,
                    Side::Plus => hi <= nf,
                    Side::Minus => lo >= -nf,
                }
            }
            FamilyKind::PointInterior | FamilyKind::PointBoundary => {
                if self.dim() != 1 {
                    return false;
                }
                let x0 = self.x0.as_ref().map(|v| v[0]).unwrap_or(0.0);
                let d = if x0 < lo { lo - x0 } else if x0 > hi { x0 - hi } else { 0.0 };
                d >= 1.0 / nf
            }
            FamilyKind::NearBoundary => match &self.omega {
                Omega::Box { lo: a, hi: b } if a.len() == 1 => lo - a[0] >= 1.0 / nf && b[0] - hi >= 1.0 / nf,
                Omega::HalfSpace { dim: 1, offset, positive, .. } => {
                    if *positive {
                        lo - offset >= 1.0 / nf
                    } else {
                        offset - hi >= 1.0 / nf
                    }
                }
                _ => false,
            },
        }
    }

    /// Propose a point in `O_n ∩ K_r`; `None` on a miss.
    fn propose_in_o(&self, n: u32, r: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let k = self.dim();
        let nf = n as f64;
        let x = match self.kind {
            FamilyKind::PointInterior | FamilyKind::PointBoundary => {
                let x0 = self.x0.as_ref()?;
                let rad = 1.0 / nf;
                x0.iter().map(|c| c + rng.gen_range(-rad..rad)).collect()
            }
            FamilyKind::NearBoundary => {
                let (lo, hi) = self.omega.exhaustion_box(r);
                let mut x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| uniform(rng, *a, *b)).collect();
                let depth = uniform(rng, 1.0 / r, 1.0 / nf);
                match &self.omega {
                    Omega::Box { lo: a, hi: b } => {
                        let axis = rng.gen_range(0..k);
                        x[axis] = if rng.gen_bool(0.5) { a[axis] + depth } else { b[axis] - depth };
                    }
                    Omega::HalfSpace { axis, offset, positive, .. } => {
                        x[*axis] = if *positive { offset + depth } else { offset - depth };
                    }
                    Omega::Full { .. } => return None,
                }
                x
            }
            FamilyKind::AtInfinity => {
                let (lo, hi) = self.omega.exhaustion_box(r);
                let mut x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| uniform(rng, *a, *b)).collect();
                match self.side {
                    Side::Plus => x[0] = uniform(rng, nf.max(lo[0]), hi[0]),
                    Side::Minus => x[0] = uniform(rng, lo[0], (-nf).min(hi[0])),
                    Side::Both => {}
                }
                x
            }
        };
        (self.in_o(&x, n) && self.omega.in_exhaustion(&x, r)).then_some(x)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn uniform(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    if a < b {
        rng.gen_range(a..b)
    } else {
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Narrow sector over `x ∉ O_{n+1}`.
    A,
    /// Full punctured disk over `x ∈ O_n`.
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorDomain {
    pub n: u32,
    pub family: ShrinkingFamily,
}

impl SectorDomain {
    pub fn new(n: u32, family: ShrinkingFamily) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("sector index n must be positive".into()));
        }
        family.validate()?;
        Ok(SectorDomain { n, family })
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// Membership of `(x, y, ζ)`, returning the branch that certifies it.
    /// The full-disk branch is reported whenever it applies.
    pub fn contains(&self, x: &[f64], y: &[f64], zeta: Complex64) -> Option<Branch> {
        let n = self.n as f64;
        let r = zeta.norm();
        if x.len() != self.dim() || y.len() != x.len() || !(r > 0.0) || r >= 1.0 / n {
            return None;
        }
        if !self.family.omega.contains(x) {
            return None;
        }
        if self.family.in_o(x, self.n) && y.iter().all(|v| v.abs() < 1.0 / n) {
            return Some(Branch::B);
        }
        if !self.family.in_o(x, self.n + 1) && zeta.arg().abs() < 1.0 / n && y.iter().all(|v| v.abs() < r / n) {
            return Some(Branch::A);
        }
        None
    }

    pub fn contains_z(&self, z: &[Complex64], zeta: Complex64) -> Option<Branch> {
        let x: Vec<f64> = z.iter().map(|c| c.re).collect();
        let y: Vec<f64> = z.iter().map(|c| c.im).collect();
        self.contains(&x, &y, zeta)
    }

    /// Upper end of the sampled `|ζ|` range, just inside `1/n`.
    pub fn zeta_top(&self) -> f64 {
        (1.0 / self.n as f64) * (1.0 - 1e-9)
    }

    pub fn sample(&self, opts: &SampleOptions) -> Result<SampleGrid> {
        if opts.budget == 0 {
            return Err(Error::Grid("budget must be at least 1".into()));
        }
        let levels = zeta_levels(opts.floor, self.zeta_top())?;
        let n = self.n as f64;
        let r = opts.radius.unwrap_or(2.0 * n + 4.0);
        if !(r > 0.0) {
            return Err(Error::Grid("exhaustion radius must be positive".into()));
        }
        let (blo, bhi) = self.family.omega.exhaustion_box(r);
        if blo.iter().zip(&bhi).any(|(a, b)| a > b) {
            return Err(Error::Budget(format!("exhaustion K_{r} is empty")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let k = self.dim();
        let mut points = Vec::with_capacity(opts.budget);
        // each anchor exactly, at the top levels, on and at the edges of the sector
        let mut anchors = opts.anchors.clone();
        anchors.sort_by(f64::total_cmp);
        anchors.dedup();
        'seed: for a in anchors {
            let mut x: Vec<f64> = blo.iter().zip(&bhi).map(|(lo, hi)| 0.5 * (lo + hi)).collect();
            x[0] = a;
            if !self.family.omega.in_exhaustion(&x, r) {
                continue;
            }
            let disk = self.family.in_o(&x, self.n);
            let bound = if disk { std::f64::consts::FRAC_PI_2 } else { (1.0 - 1e-6) / n };
            for level in levels.iter().rev().take(ANCHOR_LEVELS) {
                let yb = if disk { 1.0 / n } else { level / n } * (1.0 - 1e-6);
                for arg in [0.0, bound, -bound] {
                    for y in [0.0, yb, -yb] {
                        if points.len() >= opts.budget / 2 {
                            break 'seed;
                        }
                        let zeta = Complex64::from_polar(*level, arg);
                        if self.contains(&x, &vec![y; k], zeta).is_some() {
                            points.push(GridPoint { z: x.iter().map(|v| Complex64::new(*v, y)).collect(), zeta });
                        }
                    }
                }
            }
        }
        let max_attempts = 1000 * opts.budget + 10_000;
        let mut attempts = 0usize;
        let l = levels.len();
        while points.len() < opts.budget {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::Budget(format!(
                    "only {} of {} points found in V_{} after {max_attempts} draws",
                    points.len(),
                    opts.budget,
                    self.n
                )));
            }
            let i = points.len();
            let level = if opts.budget >= l {
                levels[i % l]
            } else if opts.budget == 1 {
                levels[l - 1]
            } else {
                levels[(i * (l - 1)) / (opts.budget - 1)]
            };
            let source = rng.gen_range(0..4u8);
            let x: Vec<f64> = match source {
                0 => match self.family.propose_in_o(self.n, r, &mut rng) {
                    Some(x) => x,
                    None => continue,
                },
                1 if !opts.anchors.is_empty() => {
                    let a = opts.anchors[rng.gen_range(0..opts.anchors.len())];
                    let s = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(-3.0..=3.0) };
                    let mut x: Vec<f64> = (0..k).map(|j| if j == 0 { 0.0 } else { uniform(&mut rng, blo[j], bhi[j]) }).collect();
                    x[0] = a + level * s;
                    x
                }
                _ => blo.iter().zip(&bhi).map(|(a, b)| uniform(&mut rng, *a, *b)).collect(),
            };
            if !self.family.omega.in_exhaustion(&x, r) {
                continue;
            }
            let full_disk = self.family.in_o(&x, self.n);
            if !full_disk && self.family.in_o(&x, self.n + 1) {
                continue;
            }
            let mode = rng.gen_range(0..4u8);
            let shrink = 1.0 - 1e-6;
            let (arg_bound, y_bound) = if full_disk { (std::f64::consts::PI, 1.0 / n) } else { (1.0 / n, level / n) };
            let (arg, y): (f64, Vec<f64>) = match mode {
                0 => (0.0, vec![0.0; k]),
                1 => {
                    let arg = if full_disk {
                        [std::f64::consts::PI, std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2][rng.gen_range(0..3)]
                    } else {
                        [-1.0, 0.0, 1.0][rng.gen_range(0..3)] * arg_bound * shrink
                    };
                    let y = (0..k).map(|_| [-1.0, 0.0, 1.0][rng.gen_range(0..3)] * y_bound * shrink).collect();
                    (arg, y)
                }
                _ => {
                    let arg = if full_disk {
                        rng.gen_range(-arg_bound..=arg_bound)
                    } else {
                        rng.gen_range(-arg_bound * shrink..=arg_bound * shrink)
                    };
                    let y = (0..k).map(|_| rng.gen_range(-y_bound * shrink..=y_bound * shrink)).collect();
                    (arg, y)
                }
            };
            let zeta = Complex64::from_polar(level, arg);
            if self.contains(&x, &y, zeta).is_none() {
                continue;
            }
            let z = x.iter().zip(&y).map(|(a, b)| Complex64::new(*a, *b)).collect();
            points.push(GridPoint { z, zeta });
        }
        Ok(SampleGrid { n: self.n, points, provenance: opts.clone() })
    }

    /// Union of `grid` with a fresh grid one decade deeper and a new seed.
    /// Refinement only adds points, so sampled sups can only grow.
    pub fn refine(&self, grid: &SampleGrid) -> Result<SampleGrid> {
        let mut opts = grid.provenance.clone();
        opts.floor /= 10.0;
        opts.seed = opts.seed.wrapping_add(1);
        let extra = self.sample(&opts)?;
        let mut points = grid.points.clone();
        points.extend(extra.points);
        Ok(SampleGrid { n: grid.n, points, provenance: opts })
    }
}

/// Number of top `|ζ|` levels at which every anchor is placed exactly.
pub const ANCHOR_LEVELS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub budget: usize,
    pub floor: f64,
    pub seed: u64,
    /// Exhaustion radius; defaults to `2n + 4`.
    #[serde(default)]
    pub radius: Option<f64>,
    /// First-axis locations where the integrand peaks at scale `|ζ|`.
    #[serde(default)]
    pub anchors: Vec<f64>,
}

impl SampleOptions {
    pub fn new(budget: usize, floor: f64, seed: u64) -> Self {
        SampleOptions { budget, floor, seed, radius: None, anchors: Vec::new() }
    }

    pub fn with_anchors(mut self, anchors: Vec<f64>) -> Self {
        self.anchors = anchors;
        self
    }
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions::new(2000, 1e-8, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub z: Vec<Complex64>,
    pub zeta: Complex64,
}

impl GridPoint {
    pub fn x(&self) -> Vec<f64> {
        self.z.iter().map(|c| c.re).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub n: u32,
    pub points: Vec<GridPoint>,
    pub provenance: SampleOptions,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_zeta(&self) -> f64 {
        self.points.iter().map(|p| p.zeta.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_zeta(&self) -> f64 {
        self.points.iter().map(|p| p.zeta.norm()).fold(0.0, f64::max)
    }
}

/// Log-spaced `|ζ|` levels, 40 per decade, from `floor` up to `top` inclusive.
/// The range must span at least four decades.
pub fn zeta_levels(floor: f64, top: f64) -> Result<Vec<f64>> {
    if !(floor > 0.0) || !(floor < top) {
        return Err(Error::Grid(format!("need 0 < floor < {top}, got floor = {floor}")));
    }
    let decades = (top / floor).log10();
    if decades < 4.0 - 1e-9 {
        return Err(Error::Grid(format!(
            "|ζ| range [{floor:e}, {top:e}] spans {decades:.2} decades; at least 4 are required"
        )));
    }
    let count = (40.0 * decades).ceil() as usize + 1;
    let step = decades / (count - 1) as f64;
    let mut out: Vec<f64> = (0..count).map(|i| floor * 10f64.powf(step * i as f64)).collect();
    out[0] = floor;
    out[count - 1] = top;
    Ok(out)
}

/// Seeded samples of the generalized-number sector `|arg ζ| < 1/n, 0 < |ζ| < 1/n`.
pub fn sector_samples(n: u32, floor: f64, budget: usize, seed: u64) -> Result<Vec<Complex64>> {
    if n == 0 || budget == 0 {
        return Err(Error::Grid("sector samples need n ≥ 1 and budget ≥ 1".into()));
    }
    let top = (1.0 / n as f64) * (1.0 - 1e-9);
    let levels = zeta_levels(floor, top)?;
    let bound = (1.0 / n as f64) * (1.0 - 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(budget);
    for i in 0..budget {
        let level = if budget >= levels.len() {
            levels[i % levels.len()]
        } else {
            levels[(i * (levels.len() - 1)) / (budget - 1).max(1)]
        };
        let arg = match rng.gen_range(0..4u8) {
            0 => 0.0,
            1 => bound,
            2 => -bound,
            _ => rng.gen_range(-bound..=bound),
        };
        out.push(Complex64::from_polar(level, arg));
    }
    Ok(out)
}

/// Compact box used as the `K` of moderateness, negligibility and sharp checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CompactBox {
    pub fn interval(a: f64, b: f64) -> Self {
        CompactBox { lo: vec![a], hi: vec![b] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() || self.lo.iter().zip(&self.hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Domain("compact box needs lo ≤ hi on every axis".into()));
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lo.len() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    /// Tensor grid with `m` points per axis (endpoints included).
    pub fn grid(&self, m: usize) -> Vec<Vec<f64>> {
        let m = m.max(2);
        let axes: Vec<Vec<f64>> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect())
            .collect();
        let mut out = vec![Vec::new()];
        for axis in axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}
