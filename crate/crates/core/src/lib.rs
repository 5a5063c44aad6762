pub mod analysis;
pub mod cli;
pub mod angle;
pub mod mbqc;
pub mod protocol;
pub mod qsim;

pub use angle::Angle;
