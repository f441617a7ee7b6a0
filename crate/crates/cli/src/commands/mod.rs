pub mod benchmark;
pub mod evaluate;
pub mod gen_data;
pub mod pipeline;
pub mod report;
pub mod simulate;
pub mod train;
