pub mod cli;
pub mod cluster;
pub mod data;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod trainer;
