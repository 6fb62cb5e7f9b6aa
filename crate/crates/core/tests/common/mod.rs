pub mod detector;
pub mod oracles;
