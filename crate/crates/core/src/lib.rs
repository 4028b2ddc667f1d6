//! Distributed zero-forcing precoding for the network MIMO channel when every
//! transmitter holds its own imperfect estimate of the multi-user channel.
//!
//! The crate covers channel and CSI models, the local precoders computed at
//! each transmitter, Monte-Carlo rate simulation, closed-form degrees of
//! freedom, and feedback-budget allocation.

pub mod channel;
pub mod csi;
pub mod doftheory;
pub mod error;
pub mod feedback_alloc;
pub mod numerics;
pub mod precoders;
pub mod ratesim;
pub mod tolerance;

pub use channel::{sample_channel, ChannelRealization, RngSeed};
pub use csi::{BitMatrix, BitSource, Codebook, CsiModel, CsiScalingMatrix, HierCodebook, TxCsi};
pub use doftheory::{DofReport, PassiveSet};
pub use error::{Error, Result};
pub use numerics::{CMat, CVec, C64};
pub use precoders::{ApzfVariant, PrecoderMatrix, Scheme};
pub use ratesim::{RateCurve, SimConfig};
