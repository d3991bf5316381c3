pub mod gen_pool;
pub mod report;
pub mod run_study;

pub use gen_pool::{gen_pool, load_pool, PoolManifest, POOL_DIR};
pub use report::report;
pub use run_study::run_study;
