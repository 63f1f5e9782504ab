//! Pass-level cycle-exact simulator and analytical cost model for a
//! reconfigurable CNN convolution accelerator.
//!
//! The accelerator consists of `U + 1` cascaded convolution units (CUs),
//! each holding `N` processing elements (3 for regular CUs, 4 for the last
//! one), fed by a pipelined input bus with feedback paths and backed by a
//! pair of per-CU SRAMs so output drain overlaps computation. Four operating
//! modes cover the layer shapes found in ResNet-50 and VGGNet-16:
//!
//! * 3x3 serial-accumulation mode (one input feature streamed per cycle,
//!   filter rows chained across the three PEs of a CU),
//! * standard 1x1 mode (features resident in PE registers, weights stream
//!   through the pipeline),
//! * register-resident 1x1 mode for tiny feature maps (weights resident,
//!   features stream),
//! * row-decomposed mode for filters wider than 3 (each filter plane split
//!   into width-<=3 row pieces executed in the row-wise 3x3 mode).
//!
//! The crate provides:
//!
//! * [`netmodel`]: layer/network descriptors, ResNet-50 and VGG-16 builders,
//!   structured channel pruning,
//! * [`oracle`]: an exact-integer direct-convolution reference with MAC
//!   instrumentation,
//! * [`costmodel`]: closed-form per-mode cycle / DRAM-traffic / utilization
//!   equations and per-layer cost aggregation,
//! * [`simulator`]: pass-level execution of each dataflow producing
//!   bit-exact outputs and measured counters,
//! * [`report`]: CSV/JSON report emission used by the `convsim` CLI.

pub mod costmodel;
pub mod netmodel;
pub mod oracle;
pub mod report;
pub mod simulator;
pub mod tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer config `{name}`: {reason}")]
    InvalidLayer { name: String, reason: String },
    #[error("invalid architecture config: {0}")]
    InvalidArch(String),
    #[error("unsupported shape for {mode}: {reason}")]
    UnsupportedShape { mode: &'static str, reason: String },
    #[error("invalid prune spec: {0}")]
    InvalidPruneSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
