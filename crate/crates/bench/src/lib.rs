//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use smallnoise_core::{DriftModel, InitialLaw, MomentTrajectory, Scheme, SdeSpec, TimeGrid};

pub fn double_well(epsilon: f64) -> SdeSpec {
    SdeSpec::new(
        DriftModel::DoubleWell1D,
        DMatrix::from_element(1, 1, 1.0),
        epsilon,
        InitialLaw::Dirac(DVector::from_element(1, 0.5)),
    )
    .expect("valid double-well spec")
}

pub fn lorenz(epsilon: f64) -> SdeSpec {
    SdeSpec::new(
        DriftModel::lorenz63(),
        DMatrix::identity(3, 3),
        epsilon,
        InitialLaw::Dirac(DVector::from_vec(vec![1.0, 1.0, 20.0])),
    )
    .expect("valid Lorenz spec")
}

pub fn factored(spec: &SdeSpec, grid: &TimeGrid) -> MomentTrajectory {
    let (m0, c0) = spec.initial().moments();
    MomentTrajectory::euler(spec.drift(), grid, &m0, &c0, spec.sigma(), Scheme::Factored)
        .expect("stable trajectory")
}
