//! Numerics for step-2 Carnot groups: group arithmetic, intrinsic graphs over the
//! splitting G = W . V, the intrinsic gradient D^phi phi, characteristic lines,
//! the area formula, group mollification and cone geometry.

pub mod area;
pub mod calculus;
pub mod characteristics;
pub mod cone;
pub mod error;
pub mod expr;
pub mod graph;
pub mod group;
pub mod mollify;
pub mod quadrature;
pub mod testfns;

pub use error::{Error, Result};
pub use graph::{BasePoint, DomainBox, GraphFunction};
pub use group::{Group, GroupF32, GroupStructure, Point, StandardGroup};
