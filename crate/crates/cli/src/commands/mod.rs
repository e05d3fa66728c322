pub mod describe;
pub mod eval;
pub mod extract;
pub mod generate;
pub mod sweep;
pub mod synth;
pub mod train;
