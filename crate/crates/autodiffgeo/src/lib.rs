//! Differentiable geometry toolkit and adjoint-method gradient engine for
//! shape optimization on rectilinear grids.
//!
//! The crate is organized around a small reverse-mode automatic-differentiation
//! tape over scalar fields ([`tape`]), a family of `[0,1]`-bounded boundary
//! nonlinearities ([`nonlin`]), closed-form differentiable shape primitives
//! ([`shapes`]) and effective Boolean logic ([`boolean`]). Shape graphs are
//! sampled onto grids by [`raster`], which also hosts the exact
//! volumetric-averaging oracle and finite-difference material Jacobians used
//! for verification. [`adjoint`] assembles objective gradients from field
//! products, [`fdfd`] is a minimal 2D frequency-domain Helmholtz solver with
//! PML, and [`optimize`] runs gradient-based design loops and the
//! gradient-time benchmarks. [`scene`] and [`testbeds`] provide the config
//! schema and the two built-in experiment setups used by the CLI.

pub mod adjoint;
pub mod boolean;
pub mod design;
pub mod error;
pub mod fdfd;
pub mod grid;
pub mod io;
pub mod nonlin;
pub mod optimize;
pub mod raster;
pub mod scene;
pub mod shapes;
pub mod tape;
pub mod testbeds;
pub mod threads;

pub use design::DesignVector;
pub use error::{Error, Result};
pub use grid::{GridSpec, MaterialGrid};
pub use nonlin::{Nonlinearity, NonlinKind};
pub use tape::{Graph, NodeId};
