pub mod cli;
pub mod data;
pub mod dps;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod ring;
pub mod series;
