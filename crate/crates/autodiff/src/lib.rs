//! Dense f64 tensors plus a taped reverse-mode autodiff engine.
//!
//! The crate is deliberately small: a [`Tensor`] is a flat `Vec<f64>` with a
//! shape, a [`Tape`] records primitive applications in topological order, and
//! [`Tape::backward`] walks the records once in reverse to accumulate
//! gradients. Every primitive has an analytic backward that is validated
//! against central finite differences via [`gradcheck`].
//!
//! Tapes are single-owner values and are not shareable across threads.

pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use gradcheck::{gradcheck, rel_err, GradcheckReport};
pub use ops::OpKind;
pub use tape::{Gradients, Precision, Tape, Val};
pub use tensor::Tensor;
