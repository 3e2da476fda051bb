pub mod casestudy;
pub mod corpus;
pub mod datagen;
pub mod expr;
pub mod fit;
pub mod rng;
pub mod nn;
pub mod train;
