use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{ModelSpec, Span};
use crate::error::Diagnostic;
use crate::graph::{mentioned, vec_mentioned, Arg, CExpr, ChildMode, Dist, Func, ModelGraph, NodeKind, Support, VarId, VecRef};
use crate::kernels::transform::Transform;
use crate::stateful::KernelSpec;

/// Kernels a `block` line may request.
pub const KERNELS: [&str; 12] = [
    "nuts",
    "joint_nuts",
    "slice",
    "binary_gibbs",
    "categorical_gibbs",
    "hmm",
    "stick_breaking",
    "normal_gibbs",
    "beta_gibbs",
    "dirichlet_gibbs",
    "gamma_gibbs",
    "inv_gamma_gibbs",
];

pub fn kernel_known(name: &str) -> bool {
    KERNELS.contains(&name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedBlock {
    pub name: String,
    pub params: Vec<String>,
    pub kernel: KernelSpec,
    /// Unconstrained parameterization per parameter (`None` for discrete ones).
    pub transforms: Vec<Option<Transform>>,
    pub explicit: bool,
}

/// Ordered block assignment covering every unknown exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub blocks: Vec<PlannedBlock>,
}

impl BlockPlan {
    pub fn block_of(&self, param: &str) -> Option<&PlannedBlock> {
        self.blocks.iter().find(|b| b.params.iter().any(|p| p == param))
    }
}

fn prior_factor(graph: &ModelGraph, v: VarId) -> Option<Dist> {
    graph.var(v).factor.map(|f| graph.factors[f].dist)
}

pub fn default_kernel(graph: &ModelGraph, v: VarId) -> &'static str {
    let node = graph.var(v);
    match (node.support, prior_factor(graph, v)) {
        (_, Some(Dist::Hmm)) => "hmm",
        (_, Some(Dist::StickBreaking)) => "stick_breaking",
        (Support::Integer { lower: Some(0), upper: Some(1) }, Some(Dist::Bernoulli)) => "binary_gibbs",
        (Support::Integer { .. }, _) => "categorical_gibbs",
        _ => "nuts",
    }
}

fn is_elem_of(e: &CExpr, v: VarId) -> bool {
    matches!(e, CExpr::Elem(x, _) if *x == v)
}

fn mentions(arg: &Arg, v: VarId) -> bool {
    let mut m = Vec::new();
    match arg {
        Arg::Scalar(e) => mentioned(e, &mut m),
        Arg::Vector(r) => vec_mentioned(r, &mut m),
        Arg::Matrix(x) => m.push(*x),
    }
    m.contains(&v)
}

/// Checks that the factors around `v` have the structure `kernel` relies on.
fn compatible(graph: &ModelGraph, v: VarId, kernel: &str) -> Result<(), String> {
    let node = graph.var(v);
    let prior = prior_factor(graph, v);
    let children: Vec<_> = graph
        .touching(&[v])
        .into_iter()
        .map(|(f, _)| f)
        .filter(|&f| Some(f) != node.factor)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|f| &graph.factors[f])
        .collect();
    let scalar_in = |dist: Dist, pos: usize, check: &dyn Fn(&CExpr) -> bool| {
        children.iter().all(|f| {
            f.dist == dist
                && f.args.iter().enumerate().all(|(k, a)| match a {
                    Arg::Scalar(e) if k == pos => check(e),
                    other => !mentions(other, v),
                })
        })
    };
    let vector_in = |dist: Dist| {
        children
            .iter()
            .all(|f| f.dist == dist && matches!(&f.args[0], Arg::Vector(VecRef::Var(x)) if *x == v))
    };
    let continuous = node.is_continuous();
    let ok = match kernel {
        "nuts" | "joint_nuts" => continuous,
        "slice" => continuous && node.support != Support::Simplex,
        "binary_gibbs" => matches!(node.support, Support::Integer { lower: Some(0), upper: Some(1) }),
        "categorical_gibbs" => matches!(node.support, Support::Integer { lower: Some(_), upper: Some(_) }),
        "hmm" => prior == Some(Dist::Hmm),
        "stick_breaking" => prior == Some(Dist::StickBreaking) && vector_in(Dist::Categorical),
        "dirichlet_gibbs" => {
            prior == Some(Dist::Dirichlet) && node.shape.len() == 1 && vector_in(Dist::Categorical)
        }
        "normal_gibbs" => {
            continuous
                && node.support == Support::Real
                && prior == Some(Dist::Normal)
                && scalar_in(Dist::Normal, 0, &|e| is_elem_of(e, v))
                && children.iter().all(|f| f.mode == ChildMode::Elements)
        }
        "inv_gamma_gibbs" => {
            node.shape.is_empty()
                && prior == Some(Dist::InvGamma)
                && scalar_in(Dist::Normal, 1, &|e| {
                    matches!(e, CExpr::Func(Func::Sqrt, inner) if is_elem_of(inner, v))
                })
        }
        "beta_gibbs" => node.shape.is_empty() && prior == Some(Dist::Beta) && scalar_in(Dist::Bernoulli, 0, &|e| is_elem_of(e, v)),
        "gamma_gibbs" => node.shape.is_empty() && prior == Some(Dist::Gamma) && scalar_in(Dist::Poisson, 0, &|e| is_elem_of(e, v)),
        other => return Err(format!("unknown kernel `{other}`")),
    };
    let prior_free = node
        .factor
        .map(|f| !graph.factors[f].args.iter().any(|a| mentions(a, v)))
        .unwrap_or(true);
    if ok && prior_free {
        Ok(())
    } else {
        Err(format!(
            "kernel `{kernel}` is incompatible with `{}` (its support or surrounding factors do not fit)",
            node.name
        ))
    }
}

/// Assigns every unknown to a block: explicit requests first, then defaults
/// (NUTS for continuous, categorical/binary Gibbs for finite discrete,
/// forward-filtering backward-sampling for state paths, stick-breaking for
/// truncated process weights). Conjugate Gibbs is never chosen by default.
pub fn assign_blocks(spec: &ModelSpec, graph: &ModelGraph) -> Result<BlockPlan, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut planned: BTreeMap<String, PlannedBlock> = BTreeMap::new();
    let transform_of = |v: VarId| {
        let n = graph.var(v);
        n.is_continuous().then(|| n.support.transform(n.len(), n.row_len())).flatten()
    };

    for b in spec.blocks() {
        let mut ids = Vec::new();
        for p in &b.params {
            match graph.id(p) {
                Ok(v) => ids.push(v),
                Err(_) => diags.push(Diagnostic::new("E0004", b.span.line, b.span.column, format!("`{p}` is not declared"))),
            }
        }
        if b.kernel != "joint_nuts" && ids.len() > 1 {
            diags.push(incompatible(b.span, format!("kernel `{}` updates one parameter; use joint_nuts to group", b.kernel)));
            continue;
        }
        for &v in &ids {
            if let Err(m) = compatible(graph, v, &b.kernel) {
                diags.push(incompatible(b.span, m));
            }
        }
        let name = b.params.join("_");
        planned.insert(
            b.params[0].clone(),
            PlannedBlock {
                name,
                params: b.params.clone(),
                kernel: KernelSpec {
                    name: b.kernel.clone(),
                    settings: b.settings.iter().cloned().collect(),
                },
                transforms: ids.iter().map(|&v| transform_of(v)).collect(),
                explicit: true,
            },
        );
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    // Declaration order, optionally overridden by `order`.
    let mut order: Vec<String> = spec.order().map(|o| o.to_vec()).unwrap_or_default();
    for v in graph.unknowns() {
        let name = &graph.var(v).name;
        if !order.contains(name) {
            order.push(name.clone());
        }
    }
    let mut blocks = Vec::new();
    let mut covered = std::collections::BTreeSet::new();
    for name in order {
        if covered.contains(&name) {
            continue;
        }
        let block = match planned.remove(&name) {
            Some(b) => b,
            None => match planned.values().find(|b| b.params.contains(&name)).cloned() {
                Some(b) => {
                    planned.remove(&b.params[0]);
                    b
                }
                None => {
                    let v = graph.id(&name).expect("declared unknown");
                    PlannedBlock {
                        name: name.clone(),
                        params: vec![name.clone()],
                        kernel: KernelSpec::new(default_kernel(graph, v)),
                        transforms: vec![transform_of(v)],
                        explicit: false,
                    }
                }
            },
        };
        covered.extend(block.params.iter().cloned());
        blocks.push(block);
    }
    debug_assert!(graph.unknowns().all(|v| graph.var(v).kind != NodeKind::Observed));
    Ok(BlockPlan { blocks })
}

fn incompatible(span: Span, msg: String) -> Diagnostic {
    Diagnostic::new("E0011", span.line, span.column, msg)
}
