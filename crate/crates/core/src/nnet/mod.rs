//! The two-stage planner network: a fully-convolutional encoder–decoder that
//! regresses a goal heatmap, and a small MLP that turns the selected goal and
//! a pooled scene embedding into waypoints.
//!
//! Everything is generic over [`Real`] so the same code trains in `f32` and is
//! checked against finite differences in `f64`.

mod checkpoint;
mod kinematic;
mod model;
pub mod ops;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use kinematic::{goal_arc, kinematic_fallback, kinematic_fallback_to, KinematicConfig};
pub use model::{decode_waypoints, encode_waypoints, head_baseline, Embedding, FcnOutput, HeadOutput, Model, ParamLayer, TRAJ_OUTPUTS};
pub use train::{
    batch_indices, sample_loss, train_step, AdamState, StepStats, TrainConfig, TrainSample,
};

pub use crate::heatmap::argmax_goal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point element type of the network.
pub trait Real:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;

    /// Row-major `C (+)= op(A) · op(B)` with `op(A)` of shape `m × k` and
    /// `op(B)` of shape `k × n`. A transposed operand is stored as its
    /// untransposed shape (`k × m`, `n × k`).
    #[allow(clippy::too_many_arguments)]
    fn matmul(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    );
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn of(x: f64) -> Self {
                x as $t
            }

            fn f64(self) -> f64 {
                self as f64
            }

            fn matmul(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_t: bool,
                b: &[Self],
                b_t: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(m, k, a_t);
                let (rsb, csb) = strides(k, n, b_t);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the bounds above cover every element addressed by
                // the given dimensions and strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Channel widths: output block, then the three encoder levels.
    pub widths: [usize; 4],
    pub head_hidden: usize,
    pub init_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            widths: [8, 12, 24, 32],
            head_hidden: 64,
            init_seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.iter().any(|w| *w == 0) || self.head_hidden == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        Ok(())
    }
}
