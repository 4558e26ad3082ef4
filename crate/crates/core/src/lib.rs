//! Link-level simulation of OTFS over doubly-selective channels with a
//! truncated-channel turbo receiver.
//!
//! Delay-Doppler vectors are column-major over the `M x N` grid: element
//! `l + k M` is delay bin `l`, Doppler bin `k`. All DFTs are unitary and the
//! TF domain is reached with `F_N ⊗ F_M`. Bit LLRs are `ln P(0) / P(1)`.

pub mod channel;
pub mod equalizer;
pub mod error;
pub mod fec_chain;
pub mod grid_ops;
pub mod harness;
pub mod mapping;
pub mod modem;
pub mod oracle;
pub mod receiver;

pub use channel::{sample_paths, truncate, truncation_bandwidth, ChannelPath, ChannelRealization, DopplerMode, FrameGeometry, PowerDelayProfile, TimeVariation, TruncatedChannel};
pub use equalizer::{mlsqr, mmse_equalize, sinr_from_omega, EqualizerOutput, MlsqrEqualizer, MlsqrSettings};
pub use error::{OtfsError, Result};
pub use fec_chain::{maxlog_bcjr, ConvCode, Decoded, Interleaver};
pub use grid_ops::{BlockMatrix, CMatrix, DdGrid, Direction, KronDft, LinearOperator, SparseMatrix, Structure, C64};
pub use mapping::Constellation;
pub use modem::{add_awgn, OtfsModem};
pub use receiver::{mmse_detect, sic_cancel_tf, tte_sic_detect, Detection, FrameCoding, SicReference, TfResidualChannel, TteSicConfig};
