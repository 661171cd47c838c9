//! Round-based simulator of retrieval-augmented semantic communication
//! among bandwidth-constrained agents.
//!
//! Agents hold partial views of multimodal scenes and refine them by
//! retrieving semantic patches over a shared wireless channel. A
//! centralized scheduler decides, each round, how many patches every
//! agent may fetch. The crate provides:
//!
//! - [`model`]: scenes, patches, tasks and the coverage-based success model
//! - [`channel`]: Shannon-capacity bit budgets and per-round accounting
//! - [`store`]: exact top-k cosine retrieval and per-agent caches
//! - [`protocol`]: the context-block wire format and a versioned repository
//! - [`scheduler`]: the round-based decision process and baseline policies
//! - [`rl`]: a from-scratch MLP stack with DQN and PPO schedulers
//! - [`harness`]: experiment orchestration, metrics and self-checks

pub mod channel;
pub mod harness;
pub mod model;
pub mod protocol;
pub mod rl;
pub mod scheduler;
pub mod seeds;
pub mod store;

pub use channel::{shannon_capacity, ChannelModel, FadingModel, RoundBudget};
pub use model::{generate_scene, AgentView, Patch, Scene, SceneParams, Task};
pub use protocol::{ContextBlock, Repository};
pub use scheduler::{Allocation, EnvConfig, EnvState, SchedulerEnv, StepOutcome};
pub use store::{LocalCache, PatchIndex};
