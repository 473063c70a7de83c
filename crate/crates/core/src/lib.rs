//! Three-party honest-majority secure computation engine that classifies a
//! secret-shared video with a secret-shared convolutional network, built on
//! replicated secret sharing over `Z_{2^64}` with fixed-point arithmetic.
//!
//! No server ever sees the video pixels, the model parameters, the selected
//! frames, or the resulting label; the servers exchange only re-randomized
//! shares whose message sizes depend on public shapes alone.

pub mod containers;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod preproc;
pub mod protocols;
pub mod ring;
pub mod runner;
pub mod sharing;
pub mod transport;
pub mod video;

pub use error::{Error, Result};
pub use nn::ModelSpec;
pub use oracle::PlainTensor;
pub use preproc::PreprocBudget;
pub use protocols::SessionContext;
pub use ring::{FixedPointCodec, RingElement, DEFAULT_FRAC_BITS};
pub use sharing::{ReplicatedShare, ShareTensor, ZeroShareSource};
pub use transport::{Channel, PartyId, SessionId, Transcript};
