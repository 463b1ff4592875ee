//! Named, independent random streams.
//!
//! Every stochastic consumer draws from its own ChaCha stream so that turning
//! one feature on or off leaves the other consumers' sequences untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamId {
    Channel,
    App,
    AgentInit,
    AgentExplore,
    AgentReplay,
    NotificationLoss,
    /// Free-form stream for tests and tools.
    Custom(u32),
}

impl StreamId {
    fn word(self) -> u64 {
        match self {
            StreamId::Channel => 1,
            StreamId::App => 2,
            StreamId::AgentInit => 3,
            StreamId::AgentExplore => 4,
            StreamId::AgentReplay => 5,
            StreamId::NotificationLoss => 6,
            StreamId::Custom(n) => (1 << 32) | n as u64,
        }
    }
}

pub type RngStream = ChaCha8Rng;

pub fn stream(seed: u64, id: StreamId) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.word());
    rng
}
