pub mod cluster;
pub mod convlstm;
pub mod eval;
pub mod kv;
pub mod logistic;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod tucker;
