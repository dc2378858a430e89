//! Shared fixtures for the criterion benches.

use holgen::embedding::{default_family, embed_compact, DistributionTerm};
use holgen::{MollifierSpec, RealFunction, Representative, SampleGrid, SampleOptions, SectorDomain, SpaceIndex};

/// Embedding of the unit bump on `[−1, 1]` and its claimed space.
pub fn bump() -> (Representative, SpaceIndex) {
    let f = RealFunction::unit_bump(0.0, 1.0).expect("valid bump");
    let e = embed_compact(&[DistributionTerm { order: 0, f }], &MollifierSpec::default(), &default_family())
        .expect("bump embeds");
    (e.representative, e.space)
}

pub fn grid(f: &Representative, space: &SpaceIndex, budget: usize) -> SampleGrid {
    let opts: SampleOptions = f.grid_options(budget, 1e-8, 0);
    SectorDomain::new(space.n, space.family.clone()).and_then(|d| d.sample(&opts)).expect("grid samples")
}
