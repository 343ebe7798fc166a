//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All metric code is written against [`Real`], which is satisfied by `f32`
//! and `f64`. Embedding clouds are stored as `f32` (the on-disk precision)
//! and widened to the analysis scalar on demand.

use nalgebra::{DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the analysis routines.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + std::iter::Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count.
    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Subtract the column means from every row.
pub(crate) fn center_columns<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    let n = T::from_count(x.nrows());
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.iter().copied().sum::<T>() / n;
        for v in col.iter_mut() {
            *v -= mean;
        }
    }
    out
}

/// Build a row-major `rows × cols` matrix from nested rows.
pub fn matrix_from_rows<T: Real>(rows: &[Vec<T>]) -> DMatrix<T> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, d, |i, j| rows[i][j])
}
