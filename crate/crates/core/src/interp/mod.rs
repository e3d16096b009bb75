//! Reference interpreter, brute-force kernel oracles and result comparison.

pub mod diff;
pub mod exec;
pub mod oracle;
pub mod trace;
pub mod value;

pub use diff::{diff_check, DiffReport, Policy};
pub use exec::{run, run_function, Interp, Observer};
pub use oracle::{oracle_eval, OracleParams};
pub use trace::{run_traced, ExecTrace};
pub use value::{BufView, Dense, RValue, Scalar};
