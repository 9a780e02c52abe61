use std::fmt::Debug;
use std::iter::Sum;

/// Element type of the tensor engine.
///
/// Precision is chosen when tensors are constructed: `f32` for training,
/// `f64` for gradient-check builds. Everything downstream is generic over
/// this trait so the same module code runs in either precision.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Debug + Send + Sync + Sum + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for converting a literal into the engine scalar type.
pub fn scl<S: Scalar>(v: f64) -> S {
    S::from_f64_lossy(v)
}
