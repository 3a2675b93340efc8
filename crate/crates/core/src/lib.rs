pub mod agent;
pub mod cli;
pub mod config;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod patches;
pub mod pgm;
pub mod poincare;
pub mod raster;
pub mod seeds;
pub mod svg;
pub mod synth;
