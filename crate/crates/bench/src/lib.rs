//! Shared fixtures for the benchmarks.

use tumorfield::fem::NodalField;
use tumorfield::initial::InitialConditions;
use tumorfield::mesh::Mesh;
use tumorfield::model::ModelParams;
use tumorfield::stepper::{SchemeConfig, State};

pub fn mesh(n: usize) -> Mesh {
    Mesh::structured(n).expect("valid resolution")
}

pub fn reference_state(mesh: &Mesh) -> State {
    InitialConditions::default().evaluate(mesh, &ModelParams::default())
}

pub fn smooth_field(mesh: &Mesh) -> NodalField {
    NodalField::from_fn(mesh, |p| {
        (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).cos() + 1.0
    })
}

pub fn short_scheme() -> SchemeConfig {
    SchemeConfig {
        dt: 0.01,
        t_end: 0.01,
        ..SchemeConfig::default()
    }
}
