//! Browser environment for LLM web agents: a devtools-protocol driver,
//! bid-augmented observations, a high-level action grammar, a locally served
//! task suite with oracles, a configurable agent and an evaluation harness.

pub mod driver;
pub mod observation;
pub mod actions;
pub mod chat;
pub mod env;
pub mod tasks;
pub mod agent;
pub mod harness;
