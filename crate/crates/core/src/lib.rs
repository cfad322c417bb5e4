pub mod analysis;
pub mod bitstream;
pub mod cli;
pub mod data;
pub mod entropy;
pub mod encoder;
pub mod error;
pub mod image;
pub mod models;
pub mod nn;
pub mod optim;
pub mod rangecoder;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use image::{Convention, Image};
pub use tensor::Tensor;
