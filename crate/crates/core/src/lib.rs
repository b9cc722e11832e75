//! Perpetual game call option on an asset whose dividend indicator is hidden.
//!
//! The buyer may exercise for `(x - K)^+`; the seller may cancel by paying
//! that amount plus a penalty. Both observe only the price, so the state is
//! the price together with the posterior probability that dividends are paid.

pub mod cli_io;
pub mod closed_form;
pub mod error;
pub mod game_eval;
pub mod model;
pub mod path_engine;
pub mod report;
mod roots;
pub mod vi_solver;

pub use error::{Error, Result};
