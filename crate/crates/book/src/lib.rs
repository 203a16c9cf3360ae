//! Guide chapters compiled as doc tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/grid.md")]
pub mod grid {}
#[doc = include_str!("../../../book/src/algebra.md")]
pub mod algebra {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}
#[doc = include_str!("../../../book/src/coercivity.md")]
pub mod coercivity {}
#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
