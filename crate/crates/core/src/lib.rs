pub mod json;
pub mod layout;
pub mod raster;
pub mod structure;
pub mod synth;
pub mod tools;
pub mod dsl;
pub mod llm;
pub mod agent;
pub mod eval;
