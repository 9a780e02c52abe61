//! Library entry points behind the CLI subcommands.

mod dump_attn;
mod eval;
mod gradcheck;
mod train;

pub use dump_attn::{cmd_dump_attn, dump_bundle};
pub use eval::{cmd_eval, evaluate_model, Split, PCK_RADIUS_FRAC};
pub use gradcheck::{cmd_gradcheck, run as run_gradcheck, Selector};
pub use train::{cmd_train, train_model, TrainOutcome};
