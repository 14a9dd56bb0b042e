//! Episodic power-tuning environment over the simulator, and the line
//! protocol that exposes it to an external agent over stdin/stdout.

mod env;
pub mod protocol;

pub use env::{
    decode_action, ActionId, EnvConfig, EnvError, EnvSettings, Environment, Observation, PowerAction, RanEnv,
    StepInfo, StepResult, Transition,
};
pub use protocol::{serve_stdio, Message, ProtocolClient, ProtocolError, Prompt};
