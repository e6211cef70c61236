pub mod corpus;
pub mod directions;
pub mod distill;
pub mod eval;
pub mod generator;
pub mod io;
pub mod numerics;
pub mod pipeline;
pub mod rng;
