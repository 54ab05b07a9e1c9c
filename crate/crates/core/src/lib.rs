//! Scene-decoupled cinematic video generation at desk scale.
//!
//! The crate covers the whole pipeline: camera geometry and pose metrics,
//! equirectangular panoramas and their perspective context views, camera
//! trajectory generation, a procedural ray-traced scene simulator producing
//! paired videos with and without a dynamic subject, an implicit 3D scene
//! encoder interface, and a small context-conditioned diffusion transformer
//! trained with rectified flow.

pub mod dit;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod panorama;
pub mod runs;
pub mod scene;
pub mod tape;
pub mod trajectory_gen;

pub use error::{Error, Result};
