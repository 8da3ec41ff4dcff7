//! Checks of the tail, Jacobian and mixing conditions, observable
//! constructors and the end-to-end experiment.

pub mod cmt;
pub mod experiment;
pub mod jacobian;
pub mod observable;
pub mod tails;

pub use cmt::{cmt_limit, cmt_sum, cmt_weighted};
pub use experiment::{glocal_experiment, run_checks, Pipeline, Stage, StageError};
pub use jacobian::{check_eq_j, derivative_profile, jacobian, jj_condition, JacobianOptions};
pub use observable::{make_global_pwc, make_pw_meanzero, GlobalObservable, ObservableKind, Profile, PwcOptions, PwcRule};
pub use tails::{check_eq_y, TailOptions};
