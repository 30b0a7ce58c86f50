pub mod boxfile;
pub mod raster;
pub mod binio;
pub mod features;
pub mod lexicon;
pub mod training;
pub mod bundle;
pub mod recognize;
pub mod config;
pub mod eval;
pub mod synth;
pub mod pipeline;
