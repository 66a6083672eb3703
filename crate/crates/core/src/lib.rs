// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ddpg;
pub mod envs;
pub mod harness;
pub mod intrinsic;
pub mod nn;
pub mod polter;
