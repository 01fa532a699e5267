//! Finite-horizon regret-optimal controller synthesis against α-stealthy
//! attacks, built on system-level parameterization and semidefinite
//! programming.

pub mod data_driven;
pub mod error;
pub mod io;
pub mod lifted;
pub mod linalg;
pub mod regret;
pub mod scalar;
pub mod sdp;
pub mod sls;
pub mod synthesis;

pub use error::{Error, Result};
pub use scalar::Real;

pub type LtvSystemF64 = lifted::LtvSystem<f64>;
pub type LiftedSystemF64 = lifted::LiftedSystem<f64>;
pub type SlsResponseF64 = sls::SlsResponse<f64>;
pub type ClosedLoopMapsF64 = sls::ClosedLoopMaps<f64>;
pub type ClairvoyantDataF64 = sls::ClairvoyantData<f64>;
pub type SdpProblemF64 = sdp::SdpProblem<f64>;
pub type SdpSolutionF64 = sdp::SdpSolution<f64>;
pub type RegretCertificateF64 = regret::RegretCertificate<f64>;
pub type SynthesisResultF64 = synthesis::SynthesisResult<f64>;
pub type SignalRecordF64 = data_driven::SignalRecord<f64>;
