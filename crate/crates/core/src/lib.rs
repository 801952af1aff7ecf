pub mod baselines;
pub mod bench;
pub mod estimate;
pub mod fkors;
pub mod harness;
pub mod market;
pub mod reward;
pub mod rng;
pub mod simplex;
