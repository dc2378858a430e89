use crate::CliError;
use holgen::embedding::{default_family, embed, DistributionTerm};
use holgen::{
    ClassicalObject, Complex64, MollifierSpec, Precision, RealFunction, Representative, ShrinkingFamily, SpaceIndex,
    WeightFunction,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level run configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "default_family")]
    pub family: ShrinkingFamily,
    #[serde(default)]
    pub mollifier: MollifierSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub objects: BTreeMap<String, ObjectDef>,
    /// Command-specific parameters, checked by each command.
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub budget: usize,
    pub floor: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { budget: 2000, floor: 1e-8 }
    }
}

/// `(n, φ)` on the configured family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub n: u32,
    #[serde(default)]
    pub phi: WeightFunction,
}

/// A named object. References name other entries of `objects`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectDef {
    /// Closed-form representative in the expression grammar.
    Expr {
        src: String,
        n: u32,
        #[serde(default)]
        phi: WeightFunction,
        #[serde(default = "one")]
        dim: usize,
    },
    Classical { object: ClassicalObject },
    /// CSV samples `(λ, f(λ))` embedded as `D^order f`.
    Table {
        csv: PathBuf,
        #[serde(default)]
        order: u32,
    },
    Sum { of: Vec<String> },
    Product { of: Vec<String> },
    Linear { terms: Vec<(Weight, String)> },
    Derivative {
        of: String,
        #[serde(default)]
        axis: usize,
    },
}

fn one() -> usize {
    1
}

/// Real scalar written as a number, a decimal string or a fraction `"p/q"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Number(f64),
    Text(String),
}

impl Weight {
    pub fn value(&self) -> Result<f64, CliError> {
        match self {
            Weight::Number(v) => Ok(*v),
            Weight::Text(s) => parse_rational(s),
        }
    }
}

pub fn parse_rational(s: &str) -> Result<f64, CliError> {
    let bad = || CliError::Config(format!("weight `{s}` is neither a number nor a fraction p/q"));
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0.0 {
                return Err(CliError::Config(format!("weight `{s}` has a zero denominator")));
            }
            p / q
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Parsed configuration together with its raw bytes.
pub struct Loaded {
    pub config: RunConfig,
    pub raw: Vec<u8>,
    pub dir: PathBuf,
    pub name: String,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_slice(&raw).map_err(|e| {
        CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })?;
    if config.version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported config version {} (expected {SCHEMA_VERSION})",
            config.version
        )));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Loaded { config, raw, dir, name })
}

impl RunConfig {
    /// Structural checks run before any command.
    pub fn validate(&self) -> Result<(), CliError> {
        self.family.validate().map_err(|e| CliError::Config(format!("family: {e}")))?;
        self.mollifier.validate().map_err(|e| CliError::Config(format!("mollifier: {e}")))?;
        if self.grid.budget == 0 {
            return Err(CliError::Config("grid.budget must be positive".into()));
        }
        if !(self.grid.floor > 0.0 && self.grid.floor < 1.0) {
            return Err(CliError::Config("grid.floor must lie in (0, 1)".into()));
        }
        for (name, def) in &self.objects {
            for r in def.references() {
                if !self.objects.contains_key(r) {
                    return Err(CliError::Config(format!("object `{name}` references unknown object `{r}`")));
                }
            }
            if let ObjectDef::Linear { terms } = def {
                for (w, _) in terms {
                    w.value().map_err(|e| CliError::Config(format!("object `{name}`: {e}")))?;
                }
            }
        }
        Ok(())
    }

    pub fn space(&self, s: &SpaceSpec) -> Result<SpaceIndex, CliError> {
        s.phi.validate().map_err(|e| CliError::Config(format!("space weight: {e}")))?;
        Ok(SpaceIndex::new(s.n, s.phi.clone(), self.family.clone()))
    }
}

impl ObjectDef {
    fn references(&self) -> Vec<&String> {
        match self {
            ObjectDef::Sum { of } | ObjectDef::Product { of } => of.iter().collect(),
            ObjectDef::Linear { terms } => terms.iter().map(|(_, r)| r).collect(),
            ObjectDef::Derivative { of, .. } => vec![of],
            _ => Vec::new(),
        }
    }
}

/// A resolved object: its representative and, for embeddings, the embedding bound.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub rep: Representative,
    pub bound: Option<holgen::embedding::EmbeddingBound>,
}

/// Resolves named objects on demand, with cycle detection.
pub struct Objects<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    done: BTreeMap<String, Resolved>,
    active: BTreeSet<String>,
}

impl<'a> Objects<'a> {
    pub fn new(cfg: &'a RunConfig, dir: &'a Path) -> Self {
        Objects { cfg, dir, done: BTreeMap::new(), active: BTreeSet::new() }
    }

    pub fn get(&mut self, name: &str) -> Result<Resolved, CliError> {
        if let Some(r) = self.done.get(name) {
            return Ok(r.clone());
        }
        let def = self
            .cfg
            .objects
            .get(name)
            .ok_or_else(|| CliError::Config(format!("unknown object `{name}`")))?
            .clone();
        if !self.active.insert(name.to_string()) {
            return Err(CliError::Config(format!("object `{name}` refers to itself")));
        }
        let r = self.build(name, &def);
        self.active.remove(name);
        let r = r?;
        self.done.insert(name.to_string(), r.clone());
        Ok(r)
    }

    pub fn rep(&mut self, name: &str) -> Result<Representative, CliError> {
        Ok(self.get(name)?.rep)
    }

    fn build(&mut self, name: &str, def: &ObjectDef) -> Result<Resolved, CliError> {
        let ctx = |e: holgen::Error| CliError::object(name, e);
        let cfg = self.cfg;
        let plain = |rep| Resolved { rep, bound: None };
        match def {
            ObjectDef::Expr { src, n, phi, dim } => {
                phi.validate().map_err(ctx)?;
                let space = SpaceIndex::new(*n, phi.clone(), cfg.family.clone());
                Ok(plain(Representative::parse(src, *dim).map_err(ctx)?.with_claim(space)))
            }
            ObjectDef::Classical { object } => {
                let e = embed(object, &cfg.mollifier, &cfg.family).map_err(ctx)?;
                Ok(Resolved { rep: e.representative, bound: e.bound })
            }
            ObjectDef::Table { csv, order } => {
                let f = read_table(&self.dir.join(csv)).map_err(|e| CliError::Config(format!("object `{name}`: {e}")))?;
                let obj = ClassicalObject::CompactDistribution { terms: vec![DistributionTerm { order: *order, f }] };
                let e = embed(&obj, &cfg.mollifier, &cfg.family).map_err(ctx)?;
                Ok(Resolved { rep: e.representative, bound: e.bound })
            }
            ObjectDef::Sum { of } | ObjectDef::Product { of } => {
                let mut parts = of.iter();
                let first = parts.next().ok_or_else(|| CliError::Config(format!("object `{name}` combines no objects")))?;
                let mut acc = self.rep(first)?;
                for p in parts {
                    let g = self.rep(p)?;
                    acc = match def {
                        ObjectDef::Sum { .. } => acc.add(&g),
                        _ => acc.mul(&g),
                    }
                    .map_err(ctx)?;
                }
                Ok(plain(acc))
            }
            ObjectDef::Linear { terms } => {
                let mut acc: Option<Representative> = None;
                for (w, r) in terms {
                    let g = self.rep(r)?.scale(Complex64::new(w.value()?, 0.0));
                    acc = Some(match acc {
                        Some(a) => a.add(&g).map_err(ctx)?,
                        None => g,
                    });
                }
                acc.map(plain).ok_or_else(|| CliError::Config(format!("object `{name}` has no terms")))
            }
            ObjectDef::Derivative { of, axis } => Ok(plain(self.rep(of)?.differentiate(*axis).map_err(ctx)?)),
        }
    }
}

/// Two-column CSV `λ, f(λ)`; a non-numeric first row is taken as a header.
pub fn read_table(path: &Path) -> Result<RealFunction, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        if rec.len() != 2 {
            return Err(format!("{}:{}: expected 2 columns, found {}", path.display(), i + 1, rec.len()));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ if i == 0 => continue,
            _ => return Err(format!("{}:{}: non-numeric entry", path.display(), i + 1)),
        }
    }
    let f = RealFunction::Table { xs, ys };
    f.validate().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(f)
}

/// Deserialize the `params` block of a command.
pub fn params<T: for<'de> Deserialize<'de>>(cfg: &RunConfig, command: &str) -> Result<T, CliError> {
    let v = if cfg.params.is_null() { Value::Object(Default::default()) } else { cfg.params.clone() };
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("params for `{command}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_weights() {
        assert_eq!(parse_rational("1/2").unwrap(), 0.5);
        assert_eq!(parse_rational(" -3 / 4 ").unwrap(), -0.75);
        assert_eq!(parse_rational("0.125").unwrap(), 0.125);
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("half").is_err());
    }

    #[test]
    fn cycles_are_config_errors() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"version": 1, "objects": {"a": {"kind": "sum", "of": ["b"]}, "b": {"kind": "derivative", "of": "a"}}}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let dir = PathBuf::new();
        let mut objs = Objects::new(&cfg, &dir);
        assert!(matches!(objs.get("a"), Err(CliError::Config(m)) if m.contains("itself")));
    }

    #[test]
    fn dangling_references_fail_validation() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"version": 1, "objects": {"a": {"kind": "product", "of": ["a", "zz"]}}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }
}
