pub mod cli;
pub mod log;
pub mod node;
pub mod scenario;
pub mod sim;
pub mod workload;
