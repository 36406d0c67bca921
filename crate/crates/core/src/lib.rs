//! Symmetric distortion distance between genus-zero triangle meshes.

pub mod align;
pub mod energy;
pub mod experiment;
pub mod flatten;
pub mod io;
pub mod mesh;
pub mod mobius;
pub mod oracle;
pub mod shapes;
pub mod sparse;
pub mod sphere;

#[cfg(test)]
mod proptests;
