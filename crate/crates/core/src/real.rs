use std::cell::RefCell;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type of a network. Training runs in `f32`; `f64`
/// is used where numerical verification needs the extra precision.
pub trait Real:
    LinalgScalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn to_f32_lossy(self) -> f32 {
        self.to_f32().unwrap_or(f32::NAN)
    }

    /// Runs `f` on a reused thread-local buffer of `len` elements. Contents
    /// are unspecified on entry. `slot` selects one of [`SCRATCH_SLOTS`]
    /// independent buffers; nesting the same slot panics.
    fn with_scratch<T>(slot: usize, len: usize, f: impl FnOnce(&mut [Self]) -> T) -> T;
}

pub const SCRATCH_SLOTS: usize = 2;

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn with_scratch<T>(slot: usize, len: usize, f: impl FnOnce(&mut [Self]) -> T) -> T {
                thread_local! {
                    static SCRATCH: [RefCell<Vec<$t>>; SCRATCH_SLOTS] = Default::default();
                }
                SCRATCH.with(|slots| {
                    let mut buf = slots[slot].borrow_mut();
                    if buf.len() < len {
                        buf.resize(len, 0.0);
                    }
                    f(&mut buf[..len])
                })
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
