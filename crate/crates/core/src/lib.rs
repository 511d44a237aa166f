//! Entropic fluctuations of repeated quantum measurement processes.
//!
//! Instruments are finite families of CP maps `{Φ_a}` on `M_d(ℂ)` whose sum
//! is unital. Together with an invariant state `ρ` and an involution `θ` of
//! the alphabet they define path measures `ℙ_T` and their outcome
//! reversals `ℙ̂_T = ℙ_T ∘ Θ_T`. The crate evaluates these measures exactly
//! for moderate `T`, and builds entropy production, Rényi pressures, rate
//! functions and hypothesis-testing exponents on top.

pub mod error;
pub mod operator;
pub mod instrument;
pub mod reversal;
pub mod pathspace;
pub mod entropic;
pub mod fluctuation;
pub mod hypotest;
pub mod assumptions;
pub mod format;

pub use error::{Error, Result};
