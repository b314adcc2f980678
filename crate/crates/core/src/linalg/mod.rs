//! Dense kernels shared by the batch and streaming decompositions.

mod cholesky;
mod cond;
mod eig;
mod givens;
mod gs;
mod precision;
mod qr;
mod triangular;
mod truncated;

pub use cholesky::{cholesky_append_row, gram_chol_augment, spd_right_divide, spd_solve};
pub use cond::cond_estimate_tri;
pub use eig::{eig_real, RealEig, C64};
pub use givens::{
    apply_rotations_to_columns, apply_rotations_to_rows, apply_rotations_to_vector, givens,
    retriangularize_append, AppendMode, GivensRotation, Retriangularized,
};
pub(crate) use gs::{append_column, check_gs_tolerances};
pub use gs::{gs_update, GsOutcome};
pub use precision::{round_precision, PrecisionMode};
pub use qr::{qr_thin, tq_factor};
pub use triangular::{Orientation, Triangular};
pub use truncated::{cond2, norm2, trunc_svd, trunc_sym_eig, SymEig, TruncSvd};
