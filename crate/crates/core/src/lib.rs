//! Isomorphic surface meshes from unordered point clouds.
//!
//! A fixed spherical reference mesh (a geodesic icosphere) is deformed onto an
//! input cloud in three stages: one network for the whole shape, 32 networks
//! for overlapping spherical caps, then shape-adaptive regions derived from
//! polynomial block fits. Every output shares the reference connectivity, so
//! meshes of different objects are vertex-to-vertex comparable.
//!
//! ```no_run
//! use isomesh::{fixtures, pipeline::{PipelineConfig, run_pipeline}};
//!
//! let cloud = fixtures::sphere_cloud(1.0, 2500);
//! let result = run_pipeline(&cloud, &PipelineConfig::default()).unwrap();
//! println!("{} vertices", result.final_mesh().vertex_count());
//! ```

pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod spatial;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{LocalRegion, PointCloud, TriangleMesh, UnitVector3, Vec3};
pub use metrics::{pm_distance, NoiseSpec, PmReport};
pub use nn::{Mlp, TrainConfig};
pub use pipeline::{PipelineConfig, PipelineResult};
