//! File formats, oracles, verification suite and command-line driver for
//! `ispec-core`.

pub mod config;
pub mod expr;
pub mod io;
pub mod oracles;
pub mod verify;
