pub mod caption;
pub mod evaluate;
pub mod ingest;
pub mod predict;
pub mod train;
