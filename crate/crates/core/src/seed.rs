//! Counter-based seed derivation.
//!
//! Every random quantity is keyed by `(master_seed, stream, index)`:
//!
//! ```text
//! derive_seed(m, s, i) = splitmix64(splitmix64(m ^ s.tag()) ^ splitmix64(i + GOLDEN))
//! ```
//!
//! so a realization's draws never depend on which worker produced it or on
//! how many other realizations were requested.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    NoisePhases,
    Detuning,
    /// Per-run seeds handed to the noise and dephasing specs by the engine.
    RunNoise,
    RunDetuning,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::NoisePhases => 0x6E6F_6973_6570_6831,
            Stream::Detuning => 0x6465_7475_6E69_6E67,
            Stream::RunNoise => 0x7275_6E2D_6E6F_6973,
            Stream::RunDetuning => 0x7275_6E2D_6465_7475,
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.tag()) ^ splitmix64(index.wrapping_add(GOLDEN)))
}
