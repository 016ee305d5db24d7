//! Doped crystal spheres and neighbour search.

mod ensemble;
mod lattice;
mod neighbors;

pub use ensemble::{
    count_sites_in_sphere, generate_continuous, generate_ensemble, site_position, DopedEnsemble,
    EnsembleSource, Ion, Vec3,
};
pub use lattice::{y2sio5, LatticeDefinition, LatticeSite, Y2SIO5_LATTICE};
pub use neighbors::{brute_force_neighbors, Neighbor, NeighborIndex, NeighborSet};
