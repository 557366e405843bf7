use candle_core::Tensor;

use crate::complexity::NetworkCost;
use crate::error::{Error, Result};
use crate::layers::ParamStore;

/// A video classifier taking `(B, 3, T, H, W)` clips and returning `(B, n)`
/// pre-activation logits.
pub trait VideoNetwork: Send + Sync {
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor>;

    fn store(&self) -> &ParamStore;

    /// Expected per-sample input `(3, T, H, W)`.
    fn input_shape(&self) -> [usize; 4];

    /// Width of the pooled feature vector entering the head.
    fn feature_width(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn cost(&self) -> Result<NetworkCost>;
}

pub(crate) fn check_input(x: &Tensor, expected: [usize; 4], context: &str) -> Result<()> {
    let dims = x.dims();
    if dims.len() != 5 || dims[1..] != expected {
        let want = format!("(B, {}, {}, {}, {})", expected[0], expected[1], expected[2], expected[3]);
        return Err(Error::Shape {
            context: context.to_string(),
            expected: want,
            actual: format!("{dims:?}"),
        });
    }
    Ok(())
}
