//! Block-sparse tensor trains for regression on homogeneous polynomial spaces.

pub mod block;
pub mod error;
pub mod linalg;
pub mod poly;
pub mod regression;
pub mod space;
pub mod symmetric;
pub mod tensor;
pub mod tt;

pub use block::{
    build_augmented, build_block_structure, build_block_structure_with_dims, degree_operator_apply,
    dof_count, group_ranks, local_rank_bound, AugmentedBlockSparseTT, BlockSparseTT,
    BlockStructure,
};
pub use error::{Error, Result};
pub use poly::{eval_dictionary, Dictionary, DictionaryKind};
pub use space::{space_dimension, variation_constant, SpaceDescriptor, VariationConstant};
pub use symmetric::{
    coefficient_to_symmetric, restrict_locality, symmetric_to_coefficient, SymmetricTensor,
};
pub use tensor::DenseTensor;
pub use tt::{dense_to_tt, tt_rank, tt_to_dense, Orthogonality, Side, TensorTrain};
