pub mod eval;
pub mod export_curves;
pub mod gen_data;
pub mod train;
pub mod validate;
