//! Certified lower bounds for the dimension of distance sets of planar
//! self-similar sets, together with empirical oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod check;
pub mod derotation;
pub mod dimension;
pub mod distance;
pub mod fixtures;
pub mod geometry;
pub mod grid;
pub mod ifs;
pub mod projection;
pub mod separation;
pub mod specfile;

pub use certify::{certify, Budgets, Certificate, CertifyError};
pub use check::{check_certificate, CheckReport};
pub use geometry::{Interval, Point};
pub use ifs::{Angle, Ball, IfsError, IfsSystem, IsometryType, Similitude, Word, WordMap};
pub use specfile::{SpecError, SpecFile};

use thiserror::Error;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ifs(#[from] IfsError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Dimension(#[from] dimension::DimensionError),
    #[error(transparent)]
    Separation(#[from] separation::SeparationError),
    #[error(transparent)]
    Derotation(#[from] derotation::DerotationError),
    #[error(transparent)]
    Projection(#[from] projection::ProjectionError),
    #[error(transparent)]
    Distance(#[from] distance::DistanceError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

impl Error {
    /// Short machine-readable kind, used for structured error output.
    pub fn kind(&self) -> String {
        match self {
            Error::Ifs(_) => "ifs".into(),
            Error::Spec(_) => "spec".into(),
            Error::Dimension(_) => "dimension".into(),
            Error::Separation(_) => "separation".into(),
            Error::Derotation(_) => "derotation".into(),
            Error::Projection(_) => "projection".into(),
            Error::Distance(_) => "distance".into(),
            Error::Certify(e) => format!("certify.{}", e.stage),
        }
    }
}
