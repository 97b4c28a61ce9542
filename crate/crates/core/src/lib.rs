//! Dynamics of `N` identical `M`-level emitters in the occupation-number
//! basis of Liouville space.
//!
//! A permutation-symmetric density matrix is stored as coefficients over
//! count vectors `{n_pq}` (emitters in the matrix unit `|p⟩⟨q|`). Collective
//! superoperators become bosonic bilinears on these vectors, so the basis
//! grows polynomially with `N`.
//!
//! ```
//! use superfock::dynamics::IntegratorConfig;
//! use superfock::scenarios::{run_compact, CompactEmissionParams};
//!
//! let run = run_compact(&CompactEmissionParams::new(1, 1.0, 2.0), &IntegratorConfig::default()).unwrap();
//! assert!((run.p2.last().unwrap() - (-2.0f64).exp()).abs() < 1e-6);
//! ```

pub mod basis;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod numeric;
pub mod observables;
pub mod oracle;
pub mod scenarios;
pub mod sparse;
pub mod states;
pub mod superops;
