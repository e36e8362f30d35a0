//! Simultaneous-diagonalization precoding for downlink MIMO rate-splitting
//! multiple access.
//!
//! The common message is precoded through a higher-order generalized SVD of
//! the effective channels of the users that decode it, the private messages
//! through block diagonalization. Stream powers are allocated by successive
//! convex approximation of the weighted sum rate, and the set of users that
//! decode the common message is chosen by exhaustive search.
//!
//! ```no_run
//! use sdrsma::channel::{generate_channels, ChannelConfig};
//! use sdrsma::optimizer::{subset_search, SearchOptions};
//!
//! let cfg = ChannelConfig::reference_correlated(0.8, 7);
//! let channels = generate_channels(&cfg).unwrap();
//! let weights = vec![0.25; 4];
//! let best = subset_search(&channels, &weights, 1000.0, &SearchOptions::default()).unwrap();
//! println!("winner {}: {:.2} bpcu", best.winner.label(), best.report.sum_rate);
//! ```

pub mod channel;
pub mod decompositions;
mod error;
pub mod io;
pub mod optimizer;
pub mod oracle;
pub mod precoder;
pub mod rates;
pub mod rng;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
