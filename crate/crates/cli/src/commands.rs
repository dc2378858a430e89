use crate::config::{params, Objects, RunConfig, SpaceSpec, Weight};
use crate::output::{Out, Provenance};
use crate::CliError;
use holgen::algebra::NormCertificate;
use holgen::diagnostics::{associate, default_xi_grid, gn_norm, laurent, null_test, pair, pointvalue, GnSampling, NullTestOptions};
use holgen::embedding::EmbeddingBound;
use holgen::topology::{
    build_chain, chain_certificates, construct_psi, default_schedule, hull, hull_member, hull_product,
    product_weights, sharp_membership, ChainOptions, GridSpec, PsiInput, SharpNeighborhood, SharpVerdict,
};
use holgen::{Association, CompactBox, Complex64, NullVerdict, Precision, Representative, SpaceIndex, TestFunction};
use serde::{Deserialize, Serialize};

/// Shared state of one command run.
pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub objs: Objects<'a>,
    pub seed: u64,
    pub budget: usize,
    pub precision: Precision,
}

/// `Some(reason)` when the command completed but its verdict is negative.
pub type Verdict = Option<String>;

impl Ctx<'_> {
    fn grid(&self) -> GridSpec {
        GridSpec { budget: self.budget, floor: self.cfg.grid.floor, seed: self.seed }
    }

    fn claimed(&self, name: &str, rep: &Representative) -> Result<SpaceIndex, CliError> {
        rep.claimed().cloned().ok_or_else(|| CliError::Config(format!("object `{name}` has no space index; give `space`")))
    }

    fn space_or_claim(&self, name: &str, rep: &Representative, s: &Option<SpaceSpec>) -> Result<SpaceIndex, CliError> {
        match s {
            Some(s) => self.cfg.space(s),
            None => self.claimed(name, rep),
        }
    }

    fn norm(&self, rep: &Representative, space: &SpaceIndex) -> Result<NormCertificate, CliError> {
        let opts = rep.grid_options(self.budget, self.cfg.grid.floor, self.seed);
        let grid = space.domain()?.sample(&opts)?;
        Ok(rep.norm_estimate(space, &grid)?)
    }

    fn eval_real(&self, rep: &Representative, x: &[f64], xi: f64) -> Result<Complex64, CliError> {
        let z: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        Ok(rep.evaluate_with(&z, Complex64::new(xi, 0.0), self.precision)?)
    }
}

#[derive(Serialize)]
struct ComplexRow {
    xi: f64,
    re: f64,
    im: f64,
    abs: f64,
}

impl ComplexRow {
    fn new(xi: f64, v: Complex64) -> Self {
        ComplexRow { xi, re: v.re, im: v.im, abs: v.norm() }
    }
}

#[derive(Serialize)]
struct NormRow {
    n: u32,
    estimate: f64,
    coarse_estimate: f64,
    stable: bool,
    points: usize,
}

impl NormRow {
    fn new(c: &NormCertificate) -> Self {
        NormRow { n: c.space.n, estimate: c.estimate, coarse_estimate: c.coarse_estimate, stable: c.stable, points: c.points }
    }
}

fn expect_mismatch(expect: &Option<String>, got: &str) -> Verdict {
    match expect {
        Some(e) if e != got => Some(format!("expected {e}, got {got}")),
        _ => None,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbedParams {
    object: String,
    /// Norms are tabulated for `n, n+1, …, n+levels−1`.
    #[serde(default = "three")]
    levels: u32,
}

fn three() -> u32 {
    3
}

#[derive(Serialize)]
struct EmbedResult {
    object: String,
    representative: String,
    space: SpaceIndex,
    bound: Option<EmbeddingBound>,
    norms: Vec<NormCertificate>,
}

pub fn embed(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: EmbedParams = params(ctx.cfg, "embed")?;
    let r = ctx.objs.get(&p.object)?;
    let space = ctx.claimed(&p.object, &r.rep)?;
    let norms = (0..p.levels.max(1))
        .map(|k| ctx.norm(&r.rep, &SpaceIndex { n: space.n + k, ..space.clone() }))
        .collect::<Result<Vec<_>, _>>()?;
    out.csv("norms.csv", &norms.iter().map(NormRow::new).collect::<Vec<_>>())?;
    let res = EmbedResult { object: p.object, representative: r.rep.to_string(), space, bound: r.bound, norms };
    out.report(prov, &res)?;
    Ok(None)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductParams {
    a: String,
    b: String,
}

#[derive(Serialize)]
struct ProductResult {
    product: String,
    a: NormCertificate,
    b: NormCertificate,
    ab: NormCertificate,
    /// `‖ab‖ / (‖a‖‖b‖)`.
    ratio: f64,
}

pub fn product(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: ProductParams = params(ctx.cfg, "product")?;
    let (a, b) = (ctx.objs.rep(&p.a)?, ctx.objs.rep(&p.b)?);
    let ab = a.mul(&b)?;
    let na = ctx.norm(&a, &ctx.claimed(&p.a, &a)?)?;
    let nb = ctx.norm(&b, &ctx.claimed(&p.b, &b)?)?;
    let nab = ctx.norm(&ab, &ctx.claimed("product", &ab)?)?;
    let ratio = nab.estimate / (na.estimate * nb.estimate);
    out.report(prov, &ProductResult { product: ab.to_string(), a: na, b: nb, ab: nab, ratio })?;
    Ok(None)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeriveParams {
    object: String,
    #[serde(default)]
    axis: usize,
}

#[derive(Serialize)]
struct DeriveResult {
    derivative: String,
    source: NormCertificate,
    target: NormCertificate,
}

pub fn derive(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: DeriveParams = params(ctx.cfg, "derive")?;
    let f = ctx.objs.rep(&p.object)?;
    let space = ctx.claimed(&p.object, &f)?;
    let d = f.differentiate(p.axis)?;
    let source = ctx.norm(&f, &space)?;
    let target = ctx.norm(&d, &space.derivative_target())?;
    out.report(prov, &DeriveResult { derivative: d.to_string(), source, target })?;
    Ok(None)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NormParams {
    object: String,
    #[serde(default)]
    space: Option<SpaceSpec>,
}

pub fn norm(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: NormParams = params(ctx.cfg, "norm")?;
    let f = ctx.objs.rep(&p.object)?;
    let space = ctx.space_or_claim(&p.object, &f, &p.space)?;
    let cert = ctx.norm(&f, &space)?;
    out.csv("norms.csv", &[NormRow::new(&cert)])?;
    out.report(prov, &cert)?;
    Ok(None)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LaurentParams {
    object: String,
    x: Vec<f64>,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default = "sixteen")]
    truncation: u32,
}

fn sixteen() -> u32 {
    16
}

#[derive(Serialize)]
struct CoefficientRow {
    j: i32,
    re: f64,
    im: f64,
    abs: f64,
}

pub fn laurent_cmd(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: LaurentParams = params(ctx.cfg, "laurent")?;
    let f = ctx.objs.rep(&p.object)?;
    let s = laurent(&f, &p.x, p.radius, p.truncation)?;
    let rows: Vec<CoefficientRow> = s
        .indices()
        .map(|j| {
            let a = s.coeff(j);
            CoefficientRow { j, re: a.re, im: a.im, abs: a.norm() }
        })
        .collect();
    out.csv("coefficients.csv", &rows)?;
    out.report(prov, &s)?;
    Ok(None)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NullParams {
    object: String,
    probes: Vec<Vec<f64>>,
    #[serde(default)]
    space: Option<SpaceSpec>,
    #[serde(default)]
    truncation: Option<u32>,
    #[serde(default)]
    tol: Option<f64>,
    /// `zero` or `nonzero`.
    #[serde(default)]
    expect: Option<String>,
}

pub fn nulltest(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: NullParams = params(ctx.cfg, "nulltest")?;
    check_expect(&p.expect, &["zero", "nonzero", "inconclusive"])?;
    let f = ctx.objs.rep(&p.object)?;
    let space = ctx.space_or_claim(&p.object, &f, &p.space)?;
    let mut opts = NullTestOptions {
        sampling: GnSampling { budget: ctx.budget, floor: ctx.cfg.grid.floor, seed: ctx.seed },
        ..Default::default()
    };
    if let Some(t) = p.truncation {
        opts.truncation = t;
    }
    if let Some(t) = p.tol {
        opts.tol = t;
    }
    let report = null_test(&f, &space, &p.probes, &opts)?;
    let got = match report.verdict {
        NullVerdict::Zero => "zero",
        NullVerdict::Nonzero { .. } => "nonzero",
        NullVerdict::Inconclusive { .. } => "inconclusive",
    };
    out.report(prov, &report)?;
    Ok(expect_mismatch(&p.expect, got))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PointParams {
    object: String,
    x: Vec<f64>,
    #[serde(default)]
    xi: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct PointResult {
    generalized_number: String,
    x: Vec<f64>,
    values: Vec<(f64, Complex64)>,
    sector_norm: holgen::diagnostics::GnNorm,
}

pub fn pointvalue_cmd(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: PointParams = params(ctx.cfg, "pointvalue")?;
    let f = ctx.objs.rep(&p.object)?;
    let gn = pointvalue(&f, &p.x)?;
    let xi = p.xi.unwrap_or_else(default_xi_grid);
    let values = xi.iter().map(|&t| Ok((t, ctx.eval_real(&f, &p.x, t)?))).collect::<Result<Vec<_>, CliError>>()?;
    let sampling = GnSampling { budget: ctx.budget, floor: ctx.cfg.grid.floor, seed: ctx.seed };
    let sector_norm = gn_norm(&gn, gn.n, &sampling)?;
    out.csv("pointvalue.csv", &values.iter().map(|(t, v)| ComplexRow::new(*t, *v)).collect::<Vec<_>>())?;
    out.report(prov, &PointResult { generalized_number: gn.to_string(), x: p.x, values, sector_norm })?;
    Ok(None)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssociateParams {
    object: String,
    #[serde(default = "TestFunction::gaussian")]
    test_function: TestFunction,
    #[serde(default)]
    xi: Option<Vec<f64>>,
    /// `converged` or `divergent`.
    #[serde(default)]
    expect: Option<String>,
    /// Expected limit for a converged verdict, checked to `tol`.
    #[serde(default)]
    limit: Option<f64>,
    #[serde(default = "association_tol")]
    tol: f64,
}

fn association_tol() -> f64 {
    holgen::diagnostics::ASSOCIATION_TOL
}

#[derive(Serialize)]
struct AssociateResult {
    support_warning: Option<String>,
    #[serde(flatten)]
    report: holgen::diagnostics::AssociationReport,
}

pub fn associate_cmd(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: AssociateParams = params(ctx.cfg, "associate")?;
    check_expect(&p.expect, &["converged", "divergent"])?;
    p.test_function.validate()?;
    let f = ctx.objs.rep(&p.object)?;
    let xi = p.xi.unwrap_or_else(default_xi_grid);
    // forces the pairing to be well defined before the Richardson pass
    pair(&f, &p.test_function)?;
    let report = associate(&f, &p.test_function, &xi)?;
    let rows: Vec<ComplexRow> = report.xi.iter().zip(&report.pairings).map(|(t, v)| ComplexRow::new(*t, *v)).collect();
    out.csv("pairings.csv", &rows)?;
    let verdict = match &report.verdict {
        Association::Converged { limit, .. } => match p.limit {
            Some(l) if (limit - Complex64::new(l, 0.0)).norm() > p.tol => {
                Some(format!("limit {limit} differs from {l} by more than {}", p.tol))
            }
            _ => expect_mismatch(&p.expect, "converged"),
        },
        Association::Divergent { .. } => expect_mismatch(&p.expect, "divergent"),
    };
    let support_warning = holgen::diagnostics::pair_support_warning(&f, &p.test_function);
    out.report(prov, &AssociateResult { support_warning, report })?;
    Ok(verdict)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SharpParams {
    object: String,
    k: CompactBox,
    #[serde(default)]
    p: u32,
    q: i32,
    #[serde(default)]
    xi: Option<Vec<f64>>,
    /// `member` or `fail`.
    #[serde(default)]
    expect: Option<String>,
}

pub fn sharp(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: SharpParams = params(ctx.cfg, "sharp")?;
    check_expect(&p.expect, &["member", "fail"])?;
    p.k.validate()?;
    let f = ctx.objs.rep(&p.object)?;
    let xi = p.xi.unwrap_or_else(|| holgen::fit::geometric_grid(0.1, 0.7, 20));
    let v = SharpNeighborhood { k: p.k, p: p.p, q: p.q };
    let verdict = sharp_membership(&f, &v, &xi)?;
    let got = match verdict {
        SharpVerdict::Member { .. } => "member",
        SharpVerdict::Fail { .. } => "fail",
    };
    #[derive(Serialize)]
    struct R {
        neighborhood: SharpNeighborhood,
        xi: Vec<f64>,
        verdict: SharpVerdict,
    }
    out.report(prov, &R { neighborhood: v, xi, verdict })?;
    Ok(expect_mismatch(&p.expect, got))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Generate {
    /// Expression with `{p}` replaced by `from..=to`.
    template: String,
    from: i32,
    to: i32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PsiParams {
    space: SpaceSpec,
    #[serde(default)]
    sequence: Vec<String>,
    #[serde(default)]
    generate: Option<Generate>,
    /// Object name of the limit; `zero` is accepted; defaults to the last element.
    #[serde(default)]
    limit: Option<String>,
    #[serde(default = "default_schedule")]
    schedule: Vec<f64>,
}

#[derive(Serialize)]
struct NuRow {
    r: usize,
    nu: f64,
}

#[derive(Serialize)]
struct Q0Row {
    eps: f64,
    q0: usize,
    q0_psi: Option<usize>,
    checked: Option<usize>,
    violations: Option<usize>,
    worst_ratio: Option<f64>,
}

pub fn psi(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: PsiParams = params(ctx.cfg, "psi")?;
    let space = ctx.cfg.space(&p.space)?;
    let mut fs = Vec::new();
    for name in &p.sequence {
        fs.push(ctx.objs.rep(name)?);
    }
    if let Some(g) = &p.generate {
        if !g.template.contains("{p}") || g.from > g.to {
            return Err(CliError::Config("generate needs a `{p}` template and from ≤ to".into()));
        }
        for k in g.from..=g.to {
            let src = g.template.replace("{p}", &format!("({k})"));
            let f = Representative::parse(&src, space.family.dim()).map_err(|e| CliError::object(&src, e))?;
            fs.push(f.with_claim(space.clone()));
        }
    }
    if fs.is_empty() {
        return Err(CliError::Config("psi needs a non-empty `sequence` or `generate`".into()));
    }
    let f_limit = match p.limit.as_deref() {
        None => None,
        Some("zero") => Some(Representative::constant(Complex64::default(), space.family.dim())),
        Some(name) => Some(ctx.objs.rep(name)?),
    };
    let cert = construct_psi(&PsiInput { space, fs, f_limit, schedule: p.schedule, grid: ctx.grid() })?;
    let nu: Vec<NuRow> = cert.nu.iter().enumerate().map(|(i, v)| NuRow { r: i + 1, nu: *v }).collect();
    out.csv("nu.csv", &nu)?;
    let q0: Vec<Q0Row> = cert
        .schedule
        .iter()
        .enumerate()
        .map(|(m, eps)| {
            let v = cert.verification.get(m);
            Q0Row {
                eps: *eps,
                q0: cert.q0[m],
                q0_psi: cert.q0_psi.get(m).copied(),
                checked: v.map(|v| v.checked),
                violations: v.map(|v| v.violations),
                worst_ratio: v.map(|v| v.worst_ratio),
            }
        })
        .collect();
    out.csv("q0.csv", &q0)?;
    let verdict = (!cert.verified).then(|| "ψ-bound verification failed on the grid".to_string());
    out.report(prov, &cert)?;
    Ok(verdict)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainParams {
    base: SpaceSpec,
    #[serde(default = "three_steps")]
    steps: usize,
    corpus: Vec<String>,
    #[serde(default)]
    options: Option<ChainOptions>,
}

fn three_steps() -> usize {
    3
}

#[derive(Serialize)]
struct StabilityRow {
    element: String,
    entry: Option<usize>,
    inclusions_hold: bool,
    ok: bool,
}

pub fn chain(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: ChainParams = params(ctx.cfg, "chain")?;
    let base = ctx.cfg.space(&p.base)?;
    let corpus = p.corpus.iter().map(|n| ctx.objs.rep(n)).collect::<Result<Vec<_>, _>>()?;
    let mut opts = p.options.unwrap_or_default();
    opts.grid.seed = ctx.seed;
    let chain = build_chain(&base, p.steps, &opts)?;
    let certs = chain_certificates(&chain, &corpus, &ctx.grid())?;
    let rows: Vec<StabilityRow> = certs
        .stability
        .iter()
        .map(|s| StabilityRow {
            element: p.corpus[s.element].clone(),
            entry: s.entry,
            inclusions_hold: s.inclusions_hold,
            ok: s.ok,
        })
        .collect();
    out.csv("stability.csv", &rows)?;
    let verdict = (!certs.passed).then(|| "chain certificates failed".to_string());
    #[derive(Serialize)]
    struct R {
        corpus: Vec<String>,
        chain: holgen::SpaceChain,
        certificates: holgen::topology::ChainCertificates,
    }
    out.report(prov, &R { corpus: p.corpus, chain, certificates: certs })?;
    Ok(verdict)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HullSide {
    generators: Vec<String>,
    weights: Vec<Weight>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Probe {
    x: Vec<f64>,
    xi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HullParams {
    #[serde(flatten)]
    first: HullSide,
    #[serde(default)]
    product: Option<HullSide>,
    #[serde(default)]
    probes: Vec<Probe>,
}

#[derive(Serialize)]
struct HullSummary {
    member: bool,
    mass: f64,
    element: Option<String>,
    values: Vec<Option<Complex64>>,
}

#[derive(Serialize)]
struct HullResult {
    hull: HullSummary,
    product: Option<HullSummary>,
    /// Largest `|(Σλx)(Σμy) − Σ λ_iμ_j x_i y_j|` over the probes.
    product_error: Option<f64>,
}

pub fn hull_cmd(ctx: &mut Ctx, out: &mut Out, prov: &Provenance) -> Result<Verdict, CliError> {
    let p: HullParams = params(ctx.cfg, "hull")?;
    let side = |ctx: &mut Ctx, s: &HullSide| -> Result<_, CliError> {
        let gens = s.generators.iter().map(|n| ctx.objs.rep(n)).collect::<Result<Vec<_>, _>>()?;
        let w = s.weights.iter().map(|w| Ok(Complex64::new(w.value()?, 0.0))).collect::<Result<Vec<_>, CliError>>()?;
        Ok((hull(gens), w))
    };
    let summarize = |ctx: &Ctx, m: holgen::topology::HullMembership<Representative>| -> Result<HullSummary, CliError> {
        let values = match &m.element {
            Some(e) => p.probes.iter().map(|q| ctx.eval_real(e, &q.x, q.xi).map(Some)).collect::<Result<_, _>>()?,
            None => vec![None; p.probes.len()],
        };
        Ok(HullSummary { member: m.member, mass: m.mass, element: m.element.map(|e| e.to_string()), values })
    };
    let (h1, w1) = side(ctx, &p.first)?;
    let first = summarize(ctx, hull_member(&h1, &w1)?)?;
    let (product, product_error) = match &p.product {
        Some(s) => {
            let (h2, w2) = side(ctx, s)?;
            let second = hull_member(&h2, &w2)?;
            let hp = hull_product(&h1, &h2)?;
            let prod = summarize(ctx, hull_member(&hp, &product_weights(&w1, &w2))?)?;
            let second_values = match &second.element {
                Some(e) => p.probes.iter().map(|q| ctx.eval_real(e, &q.x, q.xi).map(Some)).collect::<Result<Vec<_>, _>>()?,
                None => vec![None; p.probes.len()],
            };
            let err = first
                .values
                .iter()
                .zip(&second_values)
                .zip(&prod.values)
                .filter_map(|((a, b), ab)| Some((a.as_ref()? * b.as_ref()? - ab.as_ref()?).norm()))
                .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
            (Some(prod), err)
        }
        None => (None, None),
    };
    let verdict = if !first.member {
        Some(format!("weights have ℓ¹ mass {} > 1", first.mass))
    } else {
        product.as_ref().filter(|s| !s.member).map(|s| format!("product weights have ℓ¹ mass {} > 1", s.mass))
    };
    out.report(prov, &HullResult { hull: first, product, product_error })?;
    Ok(verdict)
}

fn check_expect(expect: &Option<String>, allowed: &[&str]) -> Result<(), CliError> {
    match expect {
        Some(e) if !allowed.contains(&e.as_str()) => {
            Err(CliError::Config(format!("expect must be one of {allowed:?}, got `{e}`")))
        }
        _ => Ok(()),
    }
}
