pub mod scenario;
pub mod pipeline;
