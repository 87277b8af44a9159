//! Finite element engine for a multi-species phase-field model of tumor
//! growth with nutrient transport, necrosis, matrix-degrading enzymes and
//! extracellular matrix (ECM) erosion.
//!
//! The model couples a Cahn--Hilliard equation for the tumor volume
//! fraction (with convex/concave splitting of the double-well energy) to
//! reaction-diffusion equations for nutrient and enzyme concentrations,
//! a pointwise necrosis law and an ECM decay law. Haptotaxis enters as an
//! adhesion flux that is either the local ECM gradient or a nonlocal
//! convolution with an odd compactly supported kernel.
//!
//! Time integration is semi-implicit backward Euler; each step is decoupled
//! into a sequence of linear subsolves iterated Gauss--Seidel style until
//! the tumor increment drops below a tolerance.

pub mod diagnostics;
pub mod fem;
pub mod initial;
pub mod mesh;
pub mod model;
pub mod nonlocal;
pub mod sparse;
pub mod stepper;

pub use fem::NodalField;
pub use mesh::{Mesh, Side};
pub use model::ModelParams;
pub use nonlocal::{ConvolutionStencil, HaptotaxisMode, KernelSpec, OmegaMode};
pub use sparse::{CsrMatrix, SolveReport};
pub use stepper::{SchemeConfig, State, StepReport, Stepper};
