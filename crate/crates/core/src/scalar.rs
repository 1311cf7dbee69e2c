use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the numeric routines are generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Component-wise mean of equal-length vectors. Returns `None` for an empty input.
pub fn mean_vectors<'a, T, I>(rows: I) -> Option<Vec<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a [T]>,
{
    let mut iter = rows.into_iter();
    let mut acc = iter.next()?.to_vec();
    let mut count = 1usize;
    for row in iter {
        debug_assert_eq!(row.len(), acc.len());
        for (a, &r) in acc.iter_mut().zip(row) {
            *a = *a + r;
        }
        count += 1;
    }
    let n = T::from_usize_lossy(count);
    for a in &mut acc {
        *a = *a / n;
    }
    Some(acc)
}

pub fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

pub fn l2_norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_two_rows() {
        let a = [1.0f64, 2.0];
        let b = [3.0f64, 6.0];
        let m = mean_vectors([&a[..], &b[..]]).unwrap();
        assert_eq!(m, vec![2.0, 4.0]);
    }

    #[test]
    fn mean_of_nothing() {
        assert!(mean_vectors::<f32, _>(std::iter::empty()).is_none());
    }

    #[test]
    fn generic_over_f32() {
        let v = [3.0f32, 4.0];
        assert_eq!(l2_norm(&v), 5.0);
    }
}
