//! Pipeline behind the `vineloc` command: simulate sessions, build maps,
//! localize, evaluate, run the cross-season matrix and filter maps by
//! long-term stability.

pub mod cli;
pub mod config;
pub mod pipeline;
