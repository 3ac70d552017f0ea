//! Trigonometric Galerkin discretization on the rectangle `(0, L) x (-depth, 0)`.
//!
//! Velocity uses `sin(k pi x / L) cos(m pi (z + depth) / depth)` with `k, m >= 1`,
//! temperature uses `cos(k pi x / L) cos(m pi (z + depth) / depth)` with `k, m >= 0`.
//! Both families satisfy the lateral, top and bottom boundary conditions termwise,
//! and the velocity family has zero vertical mean, so expanding in it is the
//! projection onto the constrained space. Basis functions have unit amplitude;
//! norms carry the mode masses explicitly.

mod domain;
mod field;
mod grid;
mod state;

use std::sync::Arc;

pub use domain::DomainSpec;
pub use field::{phi_of_v, Field, Parity, TField, Trig, VField, THETA_PARITY, T_PARITY, V_PARITY};
pub use grid::{Collocation, DEFAULT_PAD};
pub use state::{inner, norms, Norms, State};

use crate::error::Result;

/// Domain plus precomputed transform tables, shared cheaply between workers.
#[derive(Clone, Debug)]
pub struct Space {
    grid: Arc<Collocation>,
}

impl Space {
    pub fn new(domain: DomainSpec) -> Result<Self> {
        Space::with_pad(domain, DEFAULT_PAD)
    }

    pub fn with_pad(domain: DomainSpec, pad: f64) -> Result<Self> {
        Ok(Space {
            grid: Arc::new(Collocation::new(domain, pad)?),
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        self.grid.domain()
    }

    pub fn grid(&self) -> &Collocation {
        &self.grid
    }

    pub fn pad(&self) -> f64 {
        self.grid.pad()
    }
}
