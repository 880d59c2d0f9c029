//! Raw-sinogram denoising toolkit for fan-beam X-ray CT.
//!
//! The crate covers the whole evaluation chain:
//!
//! * [`phantom`] — analytic fan-beam projection of disk phantoms and a
//!   photon-counting noise model, plus dataset generation;
//! * [`reconstruct`] — fan-to-parallel rebinning, ramp filtering and
//!   backprojection;
//! * [`denoise`] — Gaussian filtering, BM3D and a blind-spot trainable
//!   network (N2V / N2V2 variants);
//! * [`metrics`] — PSNR, ΔPSNR, noise-map statistics, autocorrelation maps
//!   and boxplot summaries;
//! * [`harness`] — averaged references, cross-validation folds and the
//!   experiment runner producing an [`harness::EvalReport`].
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default); see [`Exec`].

pub mod denoise;
pub mod error;
pub mod exec;
pub mod harness;
pub mod manifest;
pub mod metrics;
pub mod phantom;
pub mod reconstruct;
pub mod rng;
pub mod serde_float;
pub mod sinogram;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Exec;
pub use manifest::{DatasetManifest, SampleRef};
pub use sinogram::{Sinogram, SinogramMeta};
