pub mod eval;
pub mod gen_data;
pub mod preset;
pub mod sample;
pub mod sweep;
pub mod train;
