pub mod case;
pub mod cli;
pub mod circuit;
pub mod contingency;
pub mod linalg;
pub mod montecarlo;
pub mod solver;
pub mod stats;
