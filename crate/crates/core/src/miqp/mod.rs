//! Binary program built from the LD3F affine map, solved by branch-and-bound.

mod bnb;
mod lp_format;
mod program;
mod qp;
mod simplex;

pub use bnb::{branch_and_bound, irreducible_rows, BnbOptions, BnbResult, BnbStatus, Branching, Relaxation};
pub use lp_format::{export_lp, lp_string, parse_lp, write_lp, LpConstraint, LpModel};
pub use program::{build_program, BinaryProgram, Objective, Row, RowKind, Sense};
pub use qp::{QpProblem, QpRelaxation};
pub use simplex::{solve_lp, LpRow, LpSolution, LpStatus};
