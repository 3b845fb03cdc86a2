//! Fountain-coded reliable stream transport.
//!
//! The crate is organised bottom-up:
//!
//! * [`soliton`]: Ideal and Robust Soliton degree distributions.
//! * [`lt_codec`]: LT encoder and incremental peeling decoder.
//! * [`gf256`] and [`rlnc_codec`]: dense random linear coding over GF(2^8),
//!   used as the TCP/NC-style baseline and as an elimination oracle.
//! * [`wire`]: bit-exact packet formats.
//! * [`transport`]: sender and receiver state machines (sans-IO).
//! * [`netsim`]: deterministic discrete-event simulator and an ARQ baseline.
//! * [`datagram`]: runs the transport over real UDP sockets.
//! * [`bench`]: scenario files, sweeps and codec microbenchmarks.
//!
//! Data-parallel loops (sweep points, Monte-Carlo trials) go through
//! [`exec::Execution`], backed by rayon when the `parallel` feature is on.

pub mod bench;
pub mod datagram;
pub mod exec;
pub mod gf256;
pub mod lt_codec;
pub mod netsim;
pub mod rlnc_codec;
pub mod soliton;
pub mod transport;
pub mod wire;

/// Simulated or wall-clock time in microseconds.
pub type Micros = u64;
