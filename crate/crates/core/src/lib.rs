#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buffet;
pub mod draw;
pub mod error;
pub mod levy;
pub mod multivar;
pub mod posterior;
pub mod quad;
pub mod rng;
pub mod scores;
pub mod special;
pub mod verify;

pub use error::{IbpError, Result};
pub use levy::{LevyDensity, LevyKind, Rate, TiltedLevy};
pub use quad::{Point, Support};
pub use rng::SeedLineage;
pub use scores::ScoreModel;
