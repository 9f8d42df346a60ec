pub mod anharmonic;
pub mod cli;
pub mod doktorov;
pub mod error;
pub mod focksim;
pub mod model;
pub mod oracle;
pub mod sampling;
pub mod signs;
pub mod spectrum;
