//! Vector-symbolic algebra, CA-90 compressed codebooks, and a cycle-level
//! simulator for a tiled VSA accelerator driven by pipelined instruction
//! words.

pub mod codebook;
pub mod codegen;
pub mod hdc;
pub mod isa;
pub mod kernels;
pub mod rng;
pub mod sim;
pub mod workloads;
