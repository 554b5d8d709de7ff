//! Speed-up Zig-Zag sampling.
//!
//! A piecewise-deterministic Markov process that moves along `dX/dt = θ s(X)`
//! with a position-dependent speed `s`, flipping velocity components at the
//! rates `λ_i = [θ_i (s ∂_i U − ∂_i s)]^+ + γ_i`. With `s ≡ 1` it reduces to
//! the classical Zig-Zag process. When `s` grows fast enough the flow
//! explodes in finite time, which the samplers handle exactly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod efficiency;
pub mod error;
pub mod events;
pub mod flow;
pub mod io;
pub mod numerics;
pub mod sampler;
pub mod speed;
pub mod targets;
pub mod transform1d;

pub use error::{Result, SuzzError};
pub use efficiency::{inverse_efficiency, EfficiencyReport, KConvention, Observable};
pub use events::{ArrivalSampler, Strategy};
pub use flow::LineFlow;
pub use sampler::{Event, EventChain, Guards, Sampler, Skeleton};
pub use speed::{RateSpec, SpeedFunction};
pub use targets::Target;
pub use transform1d::{equivalence_check, SpaceTransform};
