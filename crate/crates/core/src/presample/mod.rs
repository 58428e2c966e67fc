//! Inference-time prompt expansion over a pluggable text generator.

pub mod backend;
pub mod http;
pub mod mock;
pub mod pipeline;

pub use backend::{generate, Backend, BackendError, GenRequest, GenResponse};
pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{mock_generate, MockBackend};
pub use pipeline::{
    aggregate, parse_generation, run_cycle, run_task, CycleError, CycleMode, CycleResult,
    PipelineConfig, PresampleError, Step,
};
