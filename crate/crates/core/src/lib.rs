//! Marine invasion pathway risk: climate matching between ports coupled with
//! AIS-derived vessel mobility.

pub mod ais;
pub mod climate;
pub mod clustering;
pub mod error;
pub mod forecast;
pub mod io;
pub mod mobility;
pub mod pipeline;
pub mod registry;
pub mod risk;
pub mod similarity;

pub use error::{Error, Result};
