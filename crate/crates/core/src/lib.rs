//! B-mode ultrasound simulation from labeled segmentation volumes.
//!
//! The pipeline mirrors how a scanner forms an image:
//!
//! 1. [`anatomy`] turns a dense segmentation into a sparse, ray-traceable
//!    scene: tiled label grid, per-tissue narrow-band signed distance
//!    functions, and acoustic properties.
//! 2. [`transducer`] places a virtual probe and lays out the scanline fan.
//! 3. [`pathtracer`] runs Monte Carlo acoustic path tracing, accumulating
//!    the echo intensity returned to the transducer along each scanline.
//! 4. [`scatterfield`] populates tissue with sub-resolution scatterers and
//!    weights them by the beam profile.
//! 5. [`rfsynth`] convolves the intensity-gated scatterer train with a
//!    cosine-modulated point spread function and detects the envelope.
//! 6. [`postproc`] applies TGC, log compression, reject, and scan
//!    conversion to produce the display image.
//!
//! [`phantom`] builds virtual calibration phantoms (wires, lesions,
//! artefact spheres) and [`metrics`] measures distance accuracy, lesion
//! contrast, and speckle statistics against their ground truth.
//! [`pipeline`] ties the stages together for batch runs.

pub mod anatomy;
pub mod error;
pub mod math;
pub mod metrics;
pub mod pathtracer;
pub mod phantom;
pub mod pipeline;
pub mod postproc;
pub mod rfsynth;
pub mod rng;
pub mod scatterfield;
pub mod transducer;

pub use error::{Result, SimError};
