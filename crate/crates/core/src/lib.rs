pub mod brdf;
pub mod imageproc;
pub mod io;
pub mod render;
pub mod dataset;
pub mod nn;
pub mod cli;
pub mod estimator;
