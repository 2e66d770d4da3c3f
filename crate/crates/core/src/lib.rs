pub mod features;
pub mod gaussians;
pub mod linalg3;
pub mod metrics;
pub mod neighborhood;
pub mod renderer;
pub mod io;
pub mod scene;
pub mod trainer;
