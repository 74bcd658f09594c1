//! Small dense autodiff library: a recording tape, named parameters, MLP and
//! LSTM layers, Adam, gradient checking and a binary checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use error::{NnError, Result};
pub use gradcheck::{grad_check, grad_check_piecewise, GradCheckConfig, GradCheckReport};
pub use layers::{Activation, Dense, LstmCell, Mlp};
pub use optim::{adam_step, clip_gradients, lr_schedule, Adam};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Mat, Tape, Var};
