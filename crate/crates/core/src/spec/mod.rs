//! The declarative model language: lexing, parsing, static checks, data
//! loading, printing and block planning.

pub(crate) mod ast;
pub(crate) mod check;
pub(crate) mod data;
mod lexer;
mod parser;
mod plan;
mod printer;
mod templates;

pub use ast::*;
pub use check::{check, dist_arity, parse_spec, FUNCTIONS};
pub use data::DataSet;
pub use plan::{assign_blocks, default_kernel, kernel_known, BlockPlan, PlannedBlock, KERNELS};
pub use printer::{print_expr, print_spec, print_type};
pub use templates::{load_template, template_names, Template, TEMPLATES};
