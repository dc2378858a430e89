//! Holomorphic generalized functions on shrinking sector domains: the spaces
//! `H_{n,φ}`, the embedding of classical objects, diagnostics on
//! representatives and generalized numbers, and the topology of the inductive limit.

pub mod ddouble;
pub mod error;
pub mod expr;
pub mod domains;
pub mod weight;
pub mod quadrature;
pub mod algebra;
pub mod embedding;
pub mod fit;
pub mod diagnostics;
pub mod topology;

pub use algebra::{NormCertificate, Precision, Representative, SpaceIndex};
pub use diagnostics::{Association, GeneralizedNumber, LaurentSeries, NullVerdict, TestFunction};
pub use domains::{CompactBox, FamilyKind, GridPoint, Omega, SampleGrid, SampleOptions, SectorDomain, ShrinkingFamily, Side};
pub use embedding::{ClassicalObject, Embedded, MollifierSpec, RealFunction};
pub use error::{Error, Result};
pub use expr::Expr;
pub use num_complex::Complex64;
pub use topology::{L1Hull, PsiCertificate, SpaceChain};
pub use weight::{PsiWeight, WeightFunction};
