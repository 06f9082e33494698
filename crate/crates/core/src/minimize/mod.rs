//! Derivative-free local minimizers behind a common trait, registered by name.
//!
//! The estimator looks its minimizer up in a [`MinimizerRegistry`] using the
//! `method` string of its fit configuration, so new variants can be added
//! without touching the fitting code.

mod nelder_mead;

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nelder_mead::{NelderMead, SimplexCoefficients};

/// Stopping rules shared by all minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
    /// Converged once every vertex lies within this (max-norm) distance of the best.
    pub x_tolerance: f64,
    /// ...and every vertex value lies within this of the best value.
    pub f_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            x_tolerance: 1e-6,
            f_tolerance: 1e-12,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

pub trait Minimizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn minimize(&self, objective: &dyn Fn(&[f64]) -> f64, start: &[f64], options: &MinimizeOptions) -> Minimum;
}

impl fmt::Debug for dyn Minimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Minimizer({})", self.name())
    }
}

pub struct MinimizerRegistry {
    entries: Vec<(&'static str, Arc<dyn Minimizer>)>,
}

impl MinimizerRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Registry holding every built-in minimizer.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(NelderMead::standard()));
        r.register(Arc::new(NelderMead::adaptive()));
        r
    }

    /// Adds `minimizer`, replacing any earlier entry with the same name.
    pub fn register(&mut self, minimizer: Arc<dyn Minimizer>) {
        let name = minimizer.name();
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, minimizer));
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Minimizer>> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| Arc::clone(m))
            .ok_or_else(|| Error::UnknownMinimizer {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }
}

impl Default for MinimizerRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// Process-wide registry of the built-in minimizers.
pub fn builtin() -> &'static MinimizerRegistry {
    static REGISTRY: OnceLock<MinimizerRegistry> = OnceLock::new();
    REGISTRY.get_or_init(MinimizerRegistry::with_builtins)
}
