//! Ground-truth synthesis from recorded rendering traces.

pub mod correspondence;
pub mod instance;
pub mod io;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod scene;
pub mod shader;
pub mod tracking;
pub mod trace;
