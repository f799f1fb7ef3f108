//! HD-Index: approximate k-nearest-neighbor search over high-dimensional
//! vectors using several Hilbert-ordered trees whose leaves carry distances
//! to a small set of reference objects.

pub mod borda;
pub mod distance;
pub mod error;
pub mod eval;
pub mod hilbert;
pub mod index;
pub mod ingest;
pub mod neighbors;
pub mod persist;
pub mod query;
pub mod rdbtree;
pub mod refsel;
pub mod types;

pub use error::{Error, Result};
pub use index::{HDIndex, IndexConfig};
pub use query::QueryStats;
pub use refsel::{ReferenceSet, SelectionMethod};
pub use types::{
    Dataset, Domain, FilterMode, Neighbor, ObjectId, QueryParams, ResultSet, VectorRecord,
};
