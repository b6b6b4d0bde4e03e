//! # folio
//!
//! A desk-scale laboratory for finite metric measure spaces `(X, d, m, x̄)`.
//!
//! The crate builds finite spaces, transports measures between them,
//! partitions them into quotients and checks which structure survives the
//! projection: Wasserstein distances, relative entropy, graph Dirichlet
//! energies, Laplacian spectra and the heat flow.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`space`] | finite spaces, axiom validation, measures and densities |
//! | [`transport`] | exact and entropic optimal transport, 1-D geodesics |
//! | [`foliation`] | disintegration, quotients, foliation certificates, pullbacks |
//! | [`spectral`] | weighted graphs, q-energies, spectra, q-spectral gaps |
//! | [`flows`] | heat semigroup, entropy slope, EDE and convexity audits |
//! | [`generators`] | products, orbits, warped products, spheres, Gaussian line |
//! | [`experiment`] | named batch experiments behind a registry |
//!
//! Interchangeable numerical back ends (OT solvers, eigensolvers, heat
//! propagators, experiments) sit behind traits and are looked up by name in
//! a [`registry::Registry`].

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod experiment;
pub mod flows;
pub mod foliation;
pub mod generators;
pub mod io;
pub mod registry;
pub mod space;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use foliation::{Certification, FoliationBundle, Partition};
pub use space::{DensityVector, FiniteMMSpace, ProbVector};
pub use spectral::{GraphOperator, Spectrum};
pub use transport::TransportPlan;
