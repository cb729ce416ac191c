pub mod decode;
pub mod eval;
pub mod gradcheck;
pub mod synth;
pub mod trace;
pub mod train;
