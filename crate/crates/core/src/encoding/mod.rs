//! Input encodings: a 2D multi-resolution hash grid for horizontal positions
//! and a real spherical-harmonics basis for view directions.

mod hashgrid;
mod sh;

pub use hashgrid::{hash_index, vertex_index, Bounds2, EncodeTape, HashGrid, HashGridConfig, HASH_PRIMES};
pub use sh::{encode_direction_sh, encode_direction_sh_backward, sh_len};
