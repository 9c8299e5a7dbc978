//! Desk-scale laboratory for time-frequency speech enhancement: the audio
//! front-end, mask and spectral training objectives with analytic gradients,
//! a small feedforward estimator, an enhancement pipeline, proxy quality
//! metrics, and a deterministic synthetic corpus generator.

pub mod checkpoint;
pub mod dsp;
pub mod enhance;
pub mod estimator;
pub mod gradcheck;
pub mod metrics;
pub mod objectives;
pub mod signalmodel;
pub mod synthdata;
pub mod wav;
