//! Desk-scale workbench for the kinetic theory of quantum many-particle
//! systems on finite-dimensional one-particle spaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`op`] — labeled dense operators on tensor products of identical
//!   one-particle spaces: tensor products, embeddings, partial traces,
//!   trace norms, symmetrization, and unitary propagation.
//! - [`comb`] — set partitions, dissections of linearly ordered sets,
//!   compositions, and Möbius coefficients indexing every expansion.
//! - [`correlations`] — initial correlation families, their connected
//!   (Möbius-inverted) components, and cluster correlation operators.
//! - [`dynamics`] — Hamiltonians, von Neumann evolution groups and
//!   generators, cumulants of groups, scattering cumulants, and the
//!   generated evolution operators solved from kinetic cluster expansions.
//! - [`hierarchy`] — the marginal-hierarchy solution series with correlated
//!   initial data, the generalized kinetic equation (series and ODE forms),
//!   and marginal functionals of the one-particle state.
//! - [`meanfield`] — the interaction-scaling limit: the modified Vlasov
//!   equation with freely evolved initial correlations, its iteration
//!   series, and empirical trace-norm convergence ladders.
//! - [`continuum`] — pure-state limit equations on a periodic 1-D grid:
//!   Hartree, cubic NLS, and the nonlocal-coupling cubic equation.
//! - [`scenario`], [`report`], [`runner`] — declarative experiment
//!   configuration, dispatch, and JSON/CSV reporting.

pub mod comb;
pub mod continuum;
pub mod correlations;
pub mod dynamics;
pub mod hierarchy;
pub mod integrate;
pub mod meanfield;
pub mod op;
pub mod probe;
pub mod report;
pub mod runner;
pub mod scenario;

pub use correlations::CorrelationFamily;
pub use dynamics::{HamiltonianSpec, System};
pub use op::{C64, Label, LabeledOperator, OneParticleSpace};
