pub mod bench;
pub mod eval;
pub mod gradcam;
pub mod inspect;
pub mod train;
