pub mod analyze;
pub mod evaluate;
pub mod extract;
pub mod generate;
pub mod train;
