pub mod cli;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod output;
pub mod pmp;
pub mod propagate;
pub mod qaoa;
pub mod tbqcp;
