//! The compiled model graph: factors, conditional densities and gradients,
//! block targets and predictive propagation.

mod dist;
mod env;
mod expr;
mod model;
mod predict;
mod target;

pub use dist::{ArgShape, ChildDomain, Dist};
pub use env::Env;
pub use expr::{backprop, eval, CExpr, Func, VecRef};
pub use model::{build_graph, Arg, ChildMode, Factor, FactorId, Instance, ModelGraph, NodeKind, Support, VarId, VarNode};
pub use predict::{input_slot, plates, predict_at, DagNode, PredictOptions, Prediction, PredictionDag};
pub use target::BlockTarget;

pub(crate) use dist::dirichlet_draw;
pub(crate) use expr::{flat_index, mentioned, vec_mentioned};
