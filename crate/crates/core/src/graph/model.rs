use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::dist::{ArgShape, ChildDomain, Dist};
use super::env::Env;
use super::expr::{
    backprop, eval, mentioned, reads, substitute_loop, vec_backprop, vec_mentioned, vec_reads,
    vec_slice, CExpr, Func, VecRef,
};
use crate::error::{Diagnostic, Error, Result};
use crate::kernels::transform::Transform;
use crate::spec::ast::{self, BaseType, Dim, Expr, ModelSpec, Role, Span};
use crate::spec::check::dependency_edges;
use crate::spec::data::DataSet;
use crate::stateful::{Value, ValueKind};

pub type VarId = usize;
pub type FactorId = usize;
/// One factor evaluated at one loop index (1-based).
pub type Instance = (FactorId, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Observed,
    Parameter,
    Latent,
    Deterministic,
    /// Data without a factor: covariates and known auxiliaries.
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Real,
    Lower { lower: f64 },
    Upper { upper: f64 },
    Interval { lower: f64, upper: f64 },
    Simplex,
    Integer { lower: Option<i64>, upper: Option<i64> },
}

impl Support {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Support::Integer { .. })
    }

    pub fn contains(&self, values: &[f64], row: usize) -> bool {
        match *self {
            Support::Real => true,
            Support::Lower { lower } => values.iter().all(|&v| v > lower),
            Support::Upper { upper } => values.iter().all(|&v| v < upper),
            Support::Interval { lower, upper } => values.iter().all(|&v| v > lower && v < upper),
            Support::Simplex => values.chunks(row.max(1)).all(|r| {
                r.iter().all(|&v| v >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() <= super::dist::SUM_TOL
            }),
            Support::Integer { lower, upper } => values.iter().all(|&v| {
                v.fract() == 0.0
                    && lower.is_none_or(|l| v >= l as f64)
                    && upper.is_none_or(|u| v <= u as f64)
            }),
        }
    }

    /// Unconstrained parameterization for a value of `len` entries in rows of `row`.
    pub fn transform(&self, len: usize, row: usize) -> Option<Transform> {
        Some(match *self {
            Support::Real => Transform::Identity,
            Support::Lower { lower } => Transform::Lower { lower },
            Support::Upper { upper } => Transform::Upper { upper },
            Support::Interval { lower, upper } => Transform::Interval { a: lower, b: upper },
            Support::Simplex => Transform::Simplex {
                k: row,
                rows: len / row.max(1),
            },
            Support::Integer { .. } => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarNode {
    pub name: String,
    pub kind: NodeKind,
    pub value_kind: ValueKind,
    pub shape: Vec<usize>,
    /// Size name of each dimension, when declared through a size.
    pub dims: Vec<Option<String>>,
    pub support: Support,
    pub parents: Vec<VarId>,
    pub factor: Option<FactorId>,
    /// Defining expression of a derived quantity (with `Loop` for its index).
    pub body: Option<CExpr>,
    pub init: Option<Vec<f64>>,
}

impl VarNode {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries per row: the simplex length, or the column count of a matrix.
    pub fn row_len(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 if self.support == Support::Simplex => self.shape[0],
            1 => 1,
            _ => self.shape[1],
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.value_kind == ValueKind::Real
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self.kind, NodeKind::Parameter | NodeKind::Latent)
    }
}

/// How a factor's child is split into instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChildMode {
    /// One instance per scalar element.
    Elements,
    /// One instance per matrix row.
    Rows,
    /// A single instance covering the whole value.
    Whole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Arg {
    Scalar(CExpr),
    Vector(VecRef),
    Matrix(VarId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub label: String,
    pub dist: Dist,
    pub child: VarId,
    pub mode: ChildMode,
    pub args: Vec<Arg>,
    pub line: usize,
}

impl Factor {
    pub fn count(&self, env: &Env) -> usize {
        let n = env.values[self.child].len();
        match self.mode {
            ChildMode::Elements => n,
            ChildMode::Rows => n / env.cols[self.child].max(1),
            ChildMode::Whole => 1,
        }
    }

    /// Flat `(start, len)` of the child at instance `i` (1-based).
    pub fn child_range(&self, env: &Env, i: usize) -> (usize, usize) {
        match self.mode {
            ChildMode::Elements => (i - 1, 1),
            ChildMode::Rows => {
                let c = env.cols[self.child];
                ((i - 1) * c, c)
            }
            ChildMode::Whole => (0, env.values[self.child].len()),
        }
    }
}

/// The compiled model: variables, factors, and instance-level dependency indexes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelGraph {
    pub name: String,
    pub vars: Vec<VarNode>,
    pub factors: Vec<Factor>,
    pub sizes: BTreeMap<String, usize>,
    by_name: BTreeMap<String, VarId>,
    base: Env,
    var_touch: Vec<Vec<Instance>>,
    elem_touch: Vec<Vec<Vec<Instance>>>,
    gradient_fault: Option<FactorId>,
}

fn spec_err(code: &str, span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(code, span.line, span.column, msg)
}

struct Compiler<'a> {
    spec: &'a ModelSpec,
    sizes: &'a BTreeMap<String, usize>,
    ids: &'a BTreeMap<String, VarId>,
    vars: &'a [VarNode],
    lets: BTreeMap<String, CExpr>,
}

impl Compiler<'_> {
    fn let_body(&mut self, name: &str) -> std::result::Result<CExpr, Diagnostic> {
        if let Some(b) = self.lets.get(name) {
            return Ok(b.clone());
        }
        let decl = self.spec.lets().find(|l| l.name == name).expect("declared let").clone();
        let body = self.scalar(&decl.body, decl.index.as_deref())?;
        self.lets.insert(name.to_string(), body.clone());
        Ok(body)
    }

    fn var(&self, name: &str, span: Span) -> std::result::Result<VarId, Diagnostic> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| spec_err("E0004", span, format!("undeclared name `{name}`")))
    }

    fn scalar(&mut self, e: &Expr, idx: Option<&str>) -> std::result::Result<CExpr, Diagnostic> {
        Ok(match e {
            Expr::Num(v, _) => CExpr::Const(*v),
            Expr::Ident(n, s) => {
                if Some(n.as_str()) == idx {
                    CExpr::Loop
                } else if let Some(&k) = self.sizes.get(n) {
                    CExpr::Const(k as f64)
                } else if self.spec.lets().any(|l| &l.name == n && l.index.is_none()) {
                    self.let_body(n)?
                } else {
                    let v = self.var(n, *s)?;
                    if !self.vars[v].shape.is_empty() {
                        return Err(spec_err("E0009", *s, format!("`{n}` is not scalar here; index it")));
                    }
                    CExpr::Elem(v, vec![])
                }
            }
            Expr::Index(n, items, s) => {
                let compiled = items
                    .iter()
                    .map(|x| self.scalar(x, idx))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                if self.spec.lets().any(|l| &l.name == n && l.index.is_some()) {
                    if compiled.len() != 1 {
                        return Err(spec_err("E0009", *s, format!("`{n}` takes one index")));
                    }
                    let body = self.let_body(n)?;
                    substitute_loop(&body, &compiled[0])
                } else {
                    let v = self.var(n, *s)?;
                    if compiled.len() != self.vars[v].shape.len() {
                        return Err(spec_err(
                            "E0009",
                            *s,
                            format!(
                                "`{n}` has {} dimension(s) but {} index(es) were given",
                                self.vars[v].shape.len(),
                                compiled.len()
                            ),
                        ));
                    }
                    CExpr::Elem(v, compiled)
                }
            }
            Expr::Binary(op, a, b) => CExpr::Bin(*op, Box::new(self.scalar(a, idx)?), Box::new(self.scalar(b, idx)?)),
            Expr::Neg(a) => CExpr::Neg(Box::new(self.scalar(a, idx)?)),
            Expr::Call(f, args, s) => match (f.as_str(), args.as_slice()) {
                ("sqrt", [a]) => CExpr::Func(Func::Sqrt, Box::new(self.scalar(a, idx)?)),
                ("exp", [a]) => CExpr::Func(Func::Exp, Box::new(self.scalar(a, idx)?)),
                ("log", [a]) => CExpr::Func(Func::Log, Box::new(self.scalar(a, idx)?)),
                ("dot", [a, b]) => CExpr::Dot(self.vector(a, idx)?, self.vector(b, idx)?),
                _ => return Err(spec_err("E0004", *s, format!("unknown function `{f}`"))),
            },
            Expr::List(_, s) => return Err(spec_err("E0009", *s, "a list is not a scalar")),
        })
    }

    fn vector(&mut self, e: &Expr, idx: Option<&str>) -> std::result::Result<VecRef, Diagnostic> {
        match e {
            Expr::Ident(n, s) => {
                let v = self.var(n, *s)?;
                if self.vars[v].shape.len() != 1 {
                    return Err(spec_err("E0009", *s, format!("`{n}` is not a vector")));
                }
                Ok(VecRef::Var(v))
            }
            Expr::Index(n, items, s) if items.len() == 1 => {
                let v = self.var(n, *s)?;
                if self.vars[v].shape.len() != 2 {
                    return Err(spec_err("E0009", *s, format!("`{n}[..]` is not a matrix row")));
                }
                Ok(VecRef::Row(v, Box::new(self.scalar(&items[0], idx)?)))
            }
            Expr::List(..) => e
                .as_numbers()
                .map(VecRef::Const)
                .ok_or_else(|| spec_err("E0009", e.span(), "vector literals must be numeric")),
            _ => Err(spec_err("E0009", e.span(), "expected a vector argument")),
        }
    }

    fn matrix(&self, e: &Expr) -> std::result::Result<VarId, Diagnostic> {
        match e {
            Expr::Ident(n, s) => {
                let v = self.var(n, *s)?;
                if self.vars[v].shape.len() != 2 {
                    return Err(spec_err("E0009", *s, format!("`{n}` is not a matrix")));
                }
                Ok(v)
            }
            _ => Err(spec_err("E0009", e.span(), "expected a matrix argument")),
        }
    }
}

/// Rewrites distribution sugar into catalog factors.
fn desugar(
    spec: &ModelSpec,
    dist: &ast::DistCall,
) -> std::result::Result<(Dist, Vec<Expr>), Diagnostic> {
    let a = &dist.args;
    match dist.name.as_str() {
        "linear_normal" => Ok((
            Dist::Normal,
            vec![Expr::Call("dot".into(), vec![a[0].clone(), a[1].clone()], dist.span), a[2].clone()],
        )),
        "mixture_normal" => {
            let pick = |e: &Expr| match e {
                Expr::Ident(n, s) if spec.var(n).is_some_and(|v| v.ty.dims.len() == 1) => {
                    Expr::Index(n.clone(), vec![a[0].clone()], *s)
                }
                other => other.clone(),
            };
            Ok((Dist::Normal, vec![pick(&a[1]), pick(&a[2])]))
        }
        name => Dist::from_name(name)
            .map(|d| (d, a.clone()))
            .ok_or_else(|| spec_err("E0006", dist.span, format!("unknown distribution `{name}`"))),
    }
}

fn resolve_sizes(spec: &ModelSpec, data: &DataSet) -> std::result::Result<BTreeMap<String, usize>, Diagnostic> {
    let mut sizes = BTreeMap::new();
    for s in spec.sizes() {
        if let Some(v) = s.value {
            sizes.insert(s.name.clone(), v);
        } else if let Some(v) = data.get(&s.name).and_then(Value::as_real) {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(spec_err("E0009", s.span, format!("size `{}` must be a positive integer", s.name)));
            }
            sizes.insert(s.name.clone(), v as usize);
        }
    }
    // Infer the rest from data shapes and inline literals.
    for v in spec.vars().filter(|v| v.role == Role::Data) {
        let shape = match (data.get(&v.name), &v.value) {
            (Some(val), _) => val.shape(),
            (None, Some(lit)) => literal_shape(lit),
            _ => continue,
        };
        for (k, d) in v.ty.dims.iter().enumerate() {
            if let (Dim::Size(n), Some(&len)) = (d, shape.get(k)) {
                sizes.entry(n.clone()).or_insert(len);
            }
        }
    }
    for s in spec.sizes() {
        if !sizes.contains_key(&s.name) {
            return Err(spec_err("E0009", s.span, format!("size `{}` cannot be determined from the data", s.name)));
        }
    }
    Ok(sizes)
}

fn literal_shape(e: &Expr) -> Vec<usize> {
    match e {
        Expr::List(items, _) => {
            let mut s = vec![items.len()];
            if let Some(first) = items.first() {
                s.extend(literal_shape(first));
            }
            s
        }
        _ => vec![],
    }
}

fn support_of(decl: &ast::VarDecl, prior: Option<(Dist, &[Expr])>) -> Support {
    let ty = &decl.ty;
    match ty.base {
        BaseType::Simplex => return Support::Simplex,
        BaseType::Int => {
            return Support::Integer {
                lower: ty.lower.map(|v| v as i64),
                upper: ty.upper.map(|v| v as i64),
            }
        }
        BaseType::Real => {}
    }
    match (ty.lower, ty.upper) {
        (Some(lower), Some(upper)) => return Support::Interval { lower, upper },
        (Some(lower), None) => return Support::Lower { lower },
        (None, Some(upper)) => return Support::Upper { upper },
        _ => {}
    }
    let Some((dist, args)) = prior else {
        return Support::Real;
    };
    match dist.child_domain() {
        ChildDomain::Positive => {
            let lower = if dist == Dist::HalfCauchy { args[0].as_number().unwrap_or(0.0) } else { 0.0 };
            Support::Lower { lower }
        }
        ChildDomain::UnitInterval => Support::Interval { lower: 0.0, upper: 1.0 },
        ChildDomain::Bounded => match (args[0].as_number(), args[1].as_number()) {
            (Some(lower), Some(upper)) => Support::Interval { lower, upper },
            _ => Support::Real,
        },
        _ => Support::Real,
    }
}

fn domain_ok(domain: ChildDomain, node: &VarNode) -> bool {
    let int = node.value_kind == ValueKind::Int;
    match domain {
        ChildDomain::Real | ChildDomain::Positive | ChildDomain::UnitInterval | ChildDomain::Bounded => !int,
        ChildDomain::Simplex => node.support == Support::Simplex,
        ChildDomain::Binary | ChildDomain::Category | ChildDomain::Count | ChildDomain::StatePath => int,
    }
}

/// Compiles a checked spec plus data into a model graph.
pub fn build_graph(spec: &ModelSpec, data: &DataSet) -> Result<ModelGraph> {
    let sizes = resolve_sizes(spec, data).map_err(|d| Error::Spec(vec![d]))?;
    let factors_ast = spec.factors();
    let mut diags = Vec::new();

    // Variables (declared unknowns and data first, then derived quantities).
    let mut vars = Vec::new();
    let mut ids = BTreeMap::new();
    let shape_of = |dims: &[Dim]| -> (Vec<usize>, Vec<Option<String>>) {
        dims.iter()
            .map(|d| match d {
                Dim::Size(n) => (sizes[n], Some(n.clone())),
                Dim::Fixed(k) => (*k, None),
            })
            .unzip()
    };
    for decl in spec.vars() {
        let (shape, dims) = shape_of(&decl.ty.dims);
        let has_factor = factors_ast.iter().any(|f| f.target == decl.name);
        let kind = match decl.role {
            Role::Data if has_factor => NodeKind::Observed,
            Role::Data => NodeKind::Input,
            Role::Param => NodeKind::Parameter,
            Role::Latent => NodeKind::Latent,
        };
        let prior = factors_ast
            .iter()
            .find(|f| f.target == decl.name)
            .and_then(|f| desugar(spec, &f.dist).ok());
        let support = support_of(decl, prior.as_ref().map(|(d, a)| (*d, a.as_slice())));
        let init = match &decl.init {
            Some(lit) => {
                let vals = lit.as_numbers().unwrap_or_default();
                if vals.len() != shape.iter().product::<usize>() {
                    diags.push(spec_err("E0009", decl.span, format!("init for `{}` has {} values, expected {}", decl.name, vals.len(), shape.iter().product::<usize>())));
                }
                Some(vals)
            }
            None => None,
        };
        ids.insert(decl.name.clone(), vars.len());
        vars.push(VarNode {
            name: decl.name.clone(),
            kind,
            value_kind: if decl.ty.base == BaseType::Int { ValueKind::Int } else { ValueKind::Real },
            shape,
            dims,
            support,
            parents: vec![],
            factor: None,
            body: None,
            init,
        });
    }
    for l in spec.lets() {
        let (shape, dims) = shape_of(&l.ty.dims);
        ids.insert(l.name.clone(), vars.len());
        vars.push(VarNode {
            name: l.name.clone(),
            kind: NodeKind::Deterministic,
            value_kind: ValueKind::Real,
            shape,
            dims,
            support: Support::Real,
            parents: vec![],
            factor: None,
            body: None,
            init: None,
        });
    }
    for (parent, child, _) in dependency_edges(spec) {
        let (p, c) = (ids[&parent], ids[&child]);
        if !vars[c].parents.contains(&p) {
            vars[c].parents.push(p);
        }
    }

    // Values: data from the data set or inline literals, zeros elsewhere.
    let mut values = Vec::with_capacity(vars.len());
    for node in &vars {
        let decl = spec.var(&node.name);
        let n = node.len();
        let vals = match decl {
            Some(d) if d.role == Role::Data => {
                let supplied = data.get(&d.name).map(Value::to_flat).or_else(|| d.value.as_ref().and_then(Expr::as_numbers));
                match supplied {
                    Some(v) if v.len() == n => v,
                    Some(v) => {
                        return Err(Error::Data(format!("`{}` has {} values, expected {n} for shape {:?}", d.name, v.len(), node.shape)))
                    }
                    None => return Err(Error::Data(format!("no values supplied for data `{}`", d.name))),
                }
            }
            _ => vec![0.0; n],
        };
        if decl.is_some_and(|d| d.role == Role::Data) {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(node.name.clone()));
            }
            if !node.support.contains(&vals, node.row_len()) {
                return Err(Error::Data(format!("data `{}` lies outside its declared support", node.name)));
            }
        }
        values.push(vals);
    }
    let cols = vars.iter().map(|v| if v.shape.len() == 2 { v.shape[1] } else { 1 }).collect();
    let base = Env { values, cols };

    // Factors and derived bodies.
    let mut compiler = Compiler {
        spec,
        sizes: &sizes,
        ids: &ids,
        vars: &vars,
        lets: BTreeMap::new(),
    };
    let mut bodies = Vec::new();
    for l in spec.lets() {
        match compiler.let_body(&l.name) {
            Ok(b) => bodies.push((ids[&l.name], b)),
            Err(d) => diags.push(d),
        }
    }
    let mut factors = Vec::new();
    for f in &factors_ast {
        let child = ids[&f.target];
        let (dist, args) = match desugar(spec, &f.dist) {
            Ok(x) => x,
            Err(d) => {
                diags.push(d);
                continue;
            }
        };
        let node = &vars[child];
        if !domain_ok(dist.child_domain(), node) {
            diags.push(spec_err("E0009", f.span, format!("`{}` cannot have a {} distribution", node.name, dist.name())));
            continue;
        }
        let mode = match (dist.is_vector_valued(), node.shape.len(), f.index.is_some()) {
            (false, 2, true) => {
                diags.push(spec_err("E0009", f.span, "index matrix elements with two indices is not supported in factor targets"));
                continue;
            }
            (false, _, _) => ChildMode::Elements,
            (true, 1, false) => ChildMode::Whole,
            (true, 2, _) if dist == Dist::Dirichlet => ChildMode::Rows,
            _ => {
                diags.push(spec_err("E0009", f.span, format!("{} needs a whole vector target", dist.name())));
                continue;
            }
        };
        let mut compiled = Vec::new();
        let idx = f.index.as_deref();
        for (shape, e) in dist.arg_shapes().iter().zip(&args) {
            let r = match shape {
                ArgShape::Scalar => compiler.scalar(e, idx).map(Arg::Scalar),
                ArgShape::Vector => compiler.vector(e, idx).map(Arg::Vector),
                ArgShape::Matrix => compiler.matrix(e).map(Arg::Matrix),
            };
            match r {
                Ok(a) => compiled.push(a),
                Err(d) => diags.push(d),
            }
        }
        if compiled.len() != args.len() {
            continue;
        }
        let target = match &f.index {
            Some(i) => format!("{}[{i}]", f.target),
            None => f.target.clone(),
        };
        factors.push(Factor {
            label: format!("{target} ~ {}", f.dist.name),
            dist,
            child,
            mode,
            args: compiled,
            line: f.span.line,
        });
    }
    if !diags.is_empty() {
        return Err(Error::Spec(diags));
    }
    for (id, body) in bodies {
        vars[id].body = Some(body);
    }
    for (fid, f) in factors.iter().enumerate() {
        vars[f.child].factor = Some(fid);
    }

    // Every unknown must influence some observation.
    let mut children: Vec<Vec<VarId>> = vec![Vec::new(); vars.len()];
    for (c, node) in vars.iter().enumerate() {
        for &p in &node.parents {
            children[p].push(c);
        }
    }
    for (v, node) in vars.iter().enumerate() {
        if !node.is_unknown() {
            continue;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        let mut reaches = false;
        while let Some(x) = stack.pop() {
            if vars[x].kind == NodeKind::Observed {
                reaches = true;
                break;
            }
            for &c in &children[x] {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        if !reaches {
            let span = spec.var(&node.name).map(|d| d.span).unwrap_or_default();
            diags.push(spec_err(
                "E0014",
                span,
                format!("`{}` is a dead parameter: nothing observed depends on it", node.name),
            ));
        }
    }
    if !diags.is_empty() {
        return Err(Error::Spec(diags));
    }

    let mut graph = ModelGraph {
        name: spec.name.clone(),
        vars,
        factors,
        sizes,
        by_name: ids,
        base,
        var_touch: vec![],
        elem_touch: vec![],
        gradient_fault: None,
    };
    graph.index_touches();
    Ok(graph)
}

impl ModelGraph {
    fn index_touches(&mut self) {
        let n = self.vars.len();
        let mut var_touch: Vec<BTreeSet<Instance>> = vec![BTreeSet::new(); n];
        let mut elem_touch: Vec<Vec<BTreeSet<Instance>>> = self
            .vars
            .iter()
            .map(|v| if v.is_unknown() { vec![BTreeSet::new(); v.len()] } else { vec![] })
            .collect();
        let vars = &self.vars;
        let fixed = |v: VarId| matches!(vars[v].kind, NodeKind::Observed | NodeKind::Input);
        let env = &self.base;
        for (fid, f) in self.factors.iter().enumerate() {
            for i in 1..=f.count(env) {
                let mut r = Vec::new();
                let (s, l) = f.child_range(env, i);
                r.push((f.child, Some((s, l))));
                for a in &f.args {
                    match a {
                        Arg::Scalar(e) => reads(e, env, i, &fixed, &mut r),
                        Arg::Vector(v) => vec_reads(v, env, i, &fixed, &mut r),
                        Arg::Matrix(v) => r.push((*v, None)),
                    }
                }
                for (v, range) in r {
                    var_touch[v].insert((fid, i));
                    let slots = &mut elem_touch[v];
                    if slots.is_empty() {
                        continue;
                    }
                    match range {
                        Some((s, l)) => (s..(s + l).min(slots.len())).for_each(|k| {
                            slots[k].insert((fid, i));
                        }),
                        None => slots.iter_mut().for_each(|set| {
                            set.insert((fid, i));
                        }),
                    }
                }
            }
        }
        self.var_touch = var_touch.into_iter().map(|s| s.into_iter().collect()).collect();
        self.elem_touch = elem_touch
            .into_iter()
            .map(|v| v.into_iter().map(|s| s.into_iter().collect()).collect())
            .collect();
    }

    pub fn id(&self, name: &str) -> Result<VarId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn var(&self, id: VarId) -> &VarNode {
        &self.vars[id]
    }

    /// Data values with zeros for every unknown.
    pub fn base_env(&self) -> &Env {
        &self.base
    }

    pub fn unknowns(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.vars.len()).filter(|&v| self.vars[v].is_unknown())
    }

    /// Factor instances involving any element of `targets`, each listed once.
    pub fn touching(&self, targets: &[VarId]) -> Vec<Instance> {
        let mut set = BTreeSet::new();
        for &t in targets {
            set.extend(self.var_touch[t].iter().copied());
        }
        set.into_iter().collect()
    }

    /// Factor instances involving element `elem` of `var`.
    pub fn touching_element(&self, var: VarId, elem: usize) -> &[Instance] {
        &self.elem_touch[var][elem]
    }

    /// Every instance of every factor.
    pub fn all_instances(&self) -> Vec<Instance> {
        let mut out = Vec::new();
        for (fid, f) in self.factors.iter().enumerate() {
            out.extend((1..=f.count(&self.base)).map(|i| (fid, i)));
        }
        out
    }

    /// Variables whose values enter the conditional density of `targets`.
    pub fn markov_blanket(&self, targets: &[VarId]) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        for (fid, _) in self.touching(targets) {
            let f = &self.factors[fid];
            out.insert(f.child);
            for a in &f.args {
                let mut m = Vec::new();
                match a {
                    Arg::Scalar(e) => mentioned(e, &mut m),
                    Arg::Vector(r) => vec_mentioned(r, &mut m),
                    Arg::Matrix(v) => m.push(*v),
                }
                out.extend(m);
            }
        }
        for t in targets {
            out.remove(t);
        }
        out
    }

    fn factor_error(&self, fid: FactorId, message: impl Into<String>) -> Error {
        Error::Factor {
            factor: self.factors[fid].label.clone(),
            message: message.into(),
        }
    }

    /// Log-density of one instance, optionally accumulating its gradient.
    pub fn instance_logp(
        &self,
        (fid, i): Instance,
        env: &Env,
        grad: Option<&mut dyn FnMut(VarId, usize, f64)>,
    ) -> Result<f64> {
        let f = &self.factors[fid];
        let (start, len) = f.child_range(env, i);
        let x = env.values[f.child]
            .get(start..start + len)
            .ok_or_else(|| self.factor_error(fid, "instance out of range"))?;
        let mut scalars = [0.0f64; 3];
        for (k, a) in f.args.iter().enumerate() {
            if let Arg::Scalar(e) = a {
                scalars[k] = eval(e, env, i);
            }
        }
        let mut slices: [&[f64]; 3] = [&[]; 3];
        for (k, a) in f.args.iter().enumerate() {
            slices[k] = match a {
                Arg::Scalar(_) => std::slice::from_ref(&scalars[k]),
                Arg::Vector(r) => vec_slice(env, r, i).ok_or_else(|| self.factor_error(fid, "vector index out of range"))?,
                Arg::Matrix(v) => &env.values[*v],
            };
        }
        let args = &slices[..f.args.len()];
        f.dist
            .check_normalization(x, args)
            .map_err(|m| self.factor_error(fid, m))?;
        let lp = match grad {
            None => f.dist.logpdf(x, args),
            Some(sink) => {
                let mut gx = vec![0.0; len];
                let mut gargs: Vec<Vec<f64>> = args.iter().map(|a| vec![0.0; a.len()]).collect();
                let lp = {
                    let mut refs: Vec<&mut [f64]> = gargs.iter_mut().map(|g| g.as_mut_slice()).collect();
                    f.dist.logpdf_grad(x, args, &mut gx, &mut refs)
                };
                let sign = if self.gradient_fault == Some(fid) { -1.0 } else { 1.0 };
                if lp.is_finite() {
                    for (k, g) in gx.iter().enumerate() {
                        if *g != 0.0 {
                            sink(f.child, start + k, sign * g);
                        }
                    }
                    for (a, g) in f.args.iter().zip(&gargs) {
                        match a {
                            Arg::Scalar(e) => backprop(e, env, i, sign * g[0], sink),
                            Arg::Vector(r) => vec_backprop(r, env, i, g, sign, sink),
                            Arg::Matrix(v) => {
                                for (k, gv) in g.iter().enumerate() {
                                    if *gv != 0.0 {
                                        sink(*v, k, sign * gv);
                                    }
                                }
                            }
                        }
                    }
                }
                lp
            }
        };
        if lp.is_nan() {
            return Err(self.factor_error(fid, "log-density is NaN (invalid argument values)"));
        }
        Ok(lp)
    }

    /// Child values and evaluated arguments of one instance.
    pub fn instance_values(&self, (fid, i): Instance, env: &Env) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let f = &self.factors[fid];
        let (start, len) = f.child_range(env, i);
        let x = env.values[f.child]
            .get(start..start + len)
            .ok_or_else(|| self.factor_error(fid, "instance out of range"))?
            .to_vec();
        let mut args = Vec::with_capacity(f.args.len());
        for a in &f.args {
            args.push(match a {
                Arg::Scalar(e) => vec![eval(e, env, i)],
                Arg::Vector(r) => vec_slice(env, r, i)
                    .ok_or_else(|| self.factor_error(fid, "vector index out of range"))?
                    .to_vec(),
                Arg::Matrix(v) => env.values[*v].clone(),
            });
        }
        Ok((x, args))
    }

    pub fn sum_logp(&self, env: &Env, instances: &[Instance]) -> Result<f64> {
        let mut total = 0.0;
        for &inst in instances {
            total += self.instance_logp(inst, env, None)?;
            if total == f64::NEG_INFINITY {
                return Ok(total);
            }
        }
        Ok(total)
    }

    pub fn sum_logp_grad(
        &self,
        env: &Env,
        instances: &[Instance],
        sink: &mut dyn FnMut(VarId, usize, f64),
    ) -> Result<f64> {
        let mut total = 0.0;
        for &inst in instances {
            total += self.instance_logp(inst, env, Some(&mut *sink))?;
        }
        Ok(total)
    }

    /// Sum of every factor touching `targets`, on the constrained scale.
    /// Targets outside their support give `-inf`.
    pub fn conditional_logdensity(&self, targets: &[&str], env: &Env) -> Result<f64> {
        let ids = targets.iter().map(|t| self.id(t)).collect::<Result<Vec<_>>>()?;
        for &v in &ids {
            let node = &self.vars[v];
            if !node.support.contains(&env.values[v], node.row_len()) {
                return Ok(f64::NEG_INFINITY);
            }
        }
        self.sum_logp(env, &self.touching(&ids))
    }

    /// Gradient of the conditional log-density in unconstrained coordinates,
    /// Jacobian adjustment included, at the point stored in `env`.
    pub fn conditional_gradient(&self, targets: &[&str], env: &Env) -> Result<Vec<f64>> {
        let ids = targets.iter().map(|t| self.id(t)).collect::<Result<Vec<_>>>()?;
        let mut target = super::target::BlockTarget::new(self, &ids)?;
        let u = target.read(env)?;
        let mut scratch = env.clone();
        let mut grad = vec![0.0; u.len()];
        target.logp_grad(self, &u, &mut scratch, &mut grad)?;
        Ok(grad)
    }

    /// Joint log-density over all factors.
    pub fn joint_logdensity(&self, env: &Env) -> Result<f64> {
        self.sum_logp(env, &self.all_instances())
    }

    /// Factor labels, in declaration order.
    pub fn factor_labels(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.label.as_str()).collect()
    }

    #[doc(hidden)]
    /// Flips the sign of one factor's gradient contributions (for fault-injection tests).
    pub fn inject_gradient_fault(&mut self, factor: FactorId) {
        self.gradient_fault = Some(factor);
    }

    /// Observed nodes whose factor is evaluated elementwise (one scalar per unit).
    pub fn exchangeable_observed(&self) -> Vec<VarId> {
        (0..self.vars.len())
            .filter(|&v| {
                let n = &self.vars[v];
                n.kind == NodeKind::Observed
                    && n.shape.len() == 1
                    && n.factor.is_some_and(|f| self.factors[f].mode == ChildMode::Elements)
            })
            .collect()
    }

    /// Value of a variable from an environment, typed as declared.
    pub fn value_of(&self, v: VarId, env: &Env) -> Value {
        let node = &self.vars[v];
        let flat = &env.values[v];
        let mut shape = node.shape.clone();
        if let Some(first) = shape.first_mut() {
            let row: usize = node.shape[1..].iter().product();
            *first = flat.len() / row.max(1);
        }
        Value::from_flat(node.value_kind, &shape, flat).expect("consistent shape")
    }
}
