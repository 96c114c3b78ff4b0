pub mod bnb;
pub mod branch;
pub mod error;
pub mod eval;
pub mod features;
pub mod lp;
pub mod milp;
pub mod qnet;
pub mod retro;
pub mod train;

pub use error::{Error, Result};
