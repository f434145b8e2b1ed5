use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::parser::parse_syntax;
use super::plan::kernel_known;
use crate::error::Diagnostic;
use crate::graph::Dist;

pub const FUNCTIONS: [(&str, usize); 4] = [("sqrt", 1), ("exp", 1), ("log", 1), ("dot", 2)];

/// Distribution names accepted in factor statements: the catalog plus sugar.
pub fn dist_arity(name: &str) -> Option<usize> {
    match name {
        "linear_normal" | "mixture_normal" => Some(3),
        _ => Dist::from_name(name).map(|d| d.arg_shapes().len()),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Size,
    Var(Role),
    Let,
}

fn diag(code: &str, span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(code, span.line, span.column, msg)
}

/// Parses and semantically checks a model source. Never panics; every
/// problem found is reported with its line, column and code.
pub fn parse_spec(src: &str) -> Result<ModelSpec, Vec<Diagnostic>> {
    let (spec, mut diags) = parse_syntax(src);
    if let Some(spec) = &spec {
        diags.extend(check(spec));
    }
    match spec {
        Some(s) if diags.is_empty() => Ok(s),
        _ => {
            diags.sort_by_key(|d| (d.line, d.column));
            Err(diags)
        }
    }
}

pub fn check(spec: &ModelSpec) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut names: BTreeMap<String, Kind> = BTreeMap::new();
    let mut declare = |name: &str, kind: Kind, span: Span, diags: &mut Vec<Diagnostic>| {
        if names.contains_key(name) || FUNCTIONS.iter().any(|(f, _)| *f == name) {
            diags.push(diag("E0005", span, format!("`{name}` is declared more than once")));
        } else {
            names.insert(name.to_string(), kind);
        }
    };
    for item in &spec.items {
        match item {
            Item::Size(s) => declare(&s.name, Kind::Size, s.span, &mut diags),
            Item::Var(v) => declare(&v.name, Kind::Var(v.role), v.span, &mut diags),
            Item::Let(l) => declare(&l.name, Kind::Let, l.span, &mut diags),
            _ => {}
        }
    }

    let check_type = |ty: &TypeSpec, span: Span, diags: &mut Vec<Diagnostic>| {
        for d in &ty.dims {
            if let Dim::Size(n) = d {
                if names.get(n) != Some(&Kind::Size) {
                    diags.push(diag("E0004", span, format!("undeclared size `{n}`")));
                }
            }
        }
        if ty.dims.len() > 2 {
            diags.push(diag("E0009", span, "at most two dimensions are supported"));
        }
        if let (Some(l), Some(u)) = (ty.lower, ty.upper) {
            if !(u > l) {
                diags.push(diag("E0009", span, "upper bound must exceed lower bound"));
            }
        }
        if ty.base == BaseType::Simplex && (ty.dims.is_empty() || ty.lower.is_some() || ty.upper.is_some()) {
            diags.push(diag("E0009", span, "simplex needs a length and takes no bounds"));
        }
    };

    let check_expr = |e: &Expr, index: Option<&str>, diags: &mut Vec<Diagnostic>| {
        walk(e, &mut |x| match x {
            Expr::Ident(n, s) | Expr::Index(n, _, s) => {
                let ok = Some(n.as_str()) == index || names.contains_key(n);
                if !ok {
                    diags.push(diag("E0004", *s, format!("undeclared name `{n}`")));
                }
            }
            Expr::Call(f, args, s) => match FUNCTIONS.iter().find(|(n, _)| n == f) {
                None => diags.push(diag("E0004", *s, format!("unknown function `{f}`"))),
                Some((_, arity)) if *arity != args.len() => diags.push(diag(
                    "E0009",
                    *s,
                    format!("`{f}` takes {arity} argument(s), got {}", args.len()),
                )),
                _ => {}
            },
            _ => {}
        });
    };

    let mut factor_count: BTreeMap<&str, usize> = BTreeMap::new();
    for item in &spec.items {
        match item {
            Item::Size(_) => {}
            Item::Var(v) => {
                check_type(&v.ty, v.span, &mut diags);
                match v.role {
                    Role::Param if v.ty.base == BaseType::Int => {
                        diags.push(diag("E0009", v.span, format!("parameter `{}` must be continuous; declare discrete unknowns as latent", v.name)))
                    }
                    Role::Latent if v.ty.base == BaseType::Int && (v.ty.lower.is_none() || v.ty.upper.is_none()) => {
                        diags.push(diag("E0009", v.span, format!("discrete latent `{}` needs lower and upper bounds", v.name)))
                    }
                    Role::Data if v.init.is_some() => {
                        diags.push(diag("E0009", v.span, "data cannot have an init value"))
                    }
                    Role::Param | Role::Latent if v.value.is_some() => {
                        diags.push(diag("E0009", v.span, format!("`{}` is unknown and cannot be assigned; use `init`", v.name)))
                    }
                    _ => {}
                }
                for lit in v.value.iter().chain(&v.init) {
                    if lit.as_numbers().is_none() {
                        diags.push(diag("E0009", lit.span(), "expected a numeric literal or list"));
                    }
                }
            }
            Item::Let(l) => {
                check_type(&l.ty, l.span, &mut diags);
                if l.ty.base != BaseType::Real {
                    diags.push(diag("E0009", l.span, "derived quantities must be real"));
                }
                if l.index.is_some() != (l.ty.dims.len() == 1) {
                    diags.push(diag("E0009", l.span, "an indexed `let` needs exactly one dimension"));
                }
                check_expr(&l.body, l.index.as_deref(), &mut diags);
            }
            Item::Factor(_) | Item::Block(_) | Item::Order(..) => {}
        }
    }

    for f in spec.factors() {
        match names.get(&f.target) {
            Some(Kind::Var(_)) => *factor_count.entry(spec.var(&f.target).map(|v| v.name.as_str()).unwrap_or("")).or_default() += 1,
            Some(_) => diags.push(diag("E0009", f.span, format!("`{}` is not a random variable", f.target))),
            None => diags.push(diag("E0004", f.span, format!("undeclared name `{}`", f.target))),
        }
        match dist_arity(&f.dist.name) {
            None => diags.push(diag(
                "E0006",
                f.dist.span,
                format!("unknown distribution `{}`", f.dist.name),
            )),
            Some(n) if n != f.dist.args.len() => diags.push(diag(
                "E0009",
                f.dist.span,
                format!("`{}` takes {n} argument(s), got {}", f.dist.name, f.dist.args.len()),
            )),
            _ => {}
        }
        if let (Some(i), Some(v)) = (&f.index, spec.var(&f.target)) {
            if v.ty.dims.is_empty() {
                diags.push(diag("E0009", f.span, format!("`{}` is scalar and cannot be indexed", v.name)));
            }
            if names.contains_key(i) {
                diags.push(diag("E0005", f.span, format!("loop index `{i}` shadows a declaration")));
            }
        }
        for a in &f.dist.args {
            check_expr(a, f.index.as_deref(), &mut diags);
        }
    }

    for v in spec.vars() {
        let n = factor_count.get(v.name.as_str()).copied().unwrap_or(0);
        if v.role != Role::Data && n == 0 {
            diags.push(diag("E0010", v.span, format!("`{}` has no prior", v.name)));
        }
        if n > 1 {
            diags.push(diag("E0010", v.span, format!("`{}` has {n} factors; exactly one is allowed", v.name)));
        }
    }

    let mut blocked = BTreeSet::new();
    for b in spec.blocks() {
        if !kernel_known(&b.kernel) {
            diags.push(diag("E0008", b.span, format!("unknown kernel `{}`", b.kernel)));
        }
        for p in &b.params {
            match names.get(p) {
                Some(Kind::Var(Role::Param | Role::Latent)) => {
                    if !blocked.insert(p.clone()) {
                        diags.push(diag("E0005", b.span, format!("`{p}` is assigned to more than one block")));
                    }
                }
                _ => diags.push(diag("E0004", b.span, format!("`{p}` is not a declared parameter or latent"))),
            }
        }
    }

    let orders: Vec<_> = spec
        .items
        .iter()
        .filter_map(|i| match i {
            Item::Order(o, s) => Some((o, *s)),
            _ => None,
        })
        .collect();
    if orders.len() > 1 {
        diags.push(diag("E0012", orders[1].1, "only one `order` directive is allowed"));
    }
    if let Some((order, span)) = orders.first() {
        let mut seen = BTreeSet::new();
        for n in order.iter() {
            if !matches!(names.get(n), Some(Kind::Var(Role::Param | Role::Latent))) {
                diags.push(diag("E0012", *span, format!("`{n}` in order is not a parameter or latent")));
            }
            if !seen.insert(n) {
                diags.push(diag("E0012", *span, format!("`{n}` appears twice in order")));
            }
        }
    }

    if diags.is_empty() {
        if let Some((cycle, span)) = find_cycle(spec) {
            diags.push(diag("E0007", span, format!("dependency cycle: {}", cycle.join(" -> "))));
        }
    }
    diags
}

pub(crate) fn walk(e: &Expr, f: &mut impl FnMut(&Expr)) {
    f(e);
    match e {
        Expr::Index(_, items, _) | Expr::Call(_, items, _) | Expr::List(items, _) => {
            items.iter().for_each(|x| walk(x, f))
        }
        Expr::Binary(_, a, b) => {
            walk(a, f);
            walk(b, f);
        }
        Expr::Neg(a) => walk(a, f),
        Expr::Num(..) | Expr::Ident(..) => {}
    }
}

/// Parent edges between random variables and derived quantities.
pub(crate) fn dependency_edges(spec: &ModelSpec) -> Vec<(String, String, Span)> {
    let nodes: BTreeSet<&str> = spec
        .vars()
        .map(|v| v.name.as_str())
        .chain(spec.lets().map(|l| l.name.as_str()))
        .collect();
    let mut edges = Vec::new();
    let mut push = |reads: Vec<String>, child: &str, span: Span, index: Option<&str>| {
        for r in reads {
            if nodes.contains(r.as_str()) && Some(r.as_str()) != index {
                edges.push((r, child.to_string(), span));
            }
        }
    };
    for l in spec.lets() {
        let mut reads = Vec::new();
        l.body.names(&mut reads);
        push(reads, &l.name, l.span, l.index.as_deref());
    }
    for f in spec.factors() {
        let mut reads = Vec::new();
        f.dist.args.iter().for_each(|a| a.names(&mut reads));
        push(reads, &f.target, f.span, f.index.as_deref());
    }
    edges
}

fn find_cycle(spec: &ModelSpec) -> Option<(Vec<String>, Span)> {
    let edges = dependency_edges(spec);
    let mut adj: BTreeMap<&str, Vec<(&str, Span)>> = BTreeMap::new();
    for (a, b, s) in &edges {
        adj.entry(a.as_str()).or_default().push((b.as_str(), *s));
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    fn dfs<'a>(
        n: &'a str,
        adj: &BTreeMap<&'a str, Vec<(&'a str, Span)>>,
        state: &mut BTreeMap<&'a str, u8>,
        stack: &mut Vec<&'a str>,
    ) -> Option<(Vec<String>, Span)> {
        state.insert(n, 1);
        stack.push(n);
        for &(m, span) in adj.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            match state.get(m).copied().unwrap_or(0) {
                1 => {
                    let start = stack.iter().position(|&x| x == m).unwrap_or(0);
                    let mut cyc: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                    cyc.push(m.to_string());
                    return Some((cyc, span));
                }
                0 => {
                    if let Some(c) = dfs(m, adj, state, stack) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        stack.pop();
        state.insert(n, 2);
        None
    }
    let keys: Vec<&str> = adj.keys().copied().collect();
    for k in keys {
        if state.get(k).copied().unwrap_or(0) == 0 {
            if let Some(c) = dfs(k, &adj, &mut state, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_distribution_is_located() {
        let src = "model m\nparam sigma : real<lower=0>\nsigma ~ notadist(1)\n";
        let diags = parse_spec(src).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, "E0006");
        assert_eq!((diags[0].line, diags[0].column), (3, 9));
    }

    #[test]
    fn empty_source_is_no_model() {
        let diags = parse_spec("").unwrap_err();
        assert_eq!(diags[0].code, "E0003");
        let diags = parse_spec("  # only a comment\n").unwrap_err();
        assert_eq!(diags[0].code, "E0003");
    }

    #[test]
    fn self_edge_is_a_cycle() {
        let diags = parse_spec("model m\nparam t : real ~ normal(t, 1)\n").unwrap_err();
        assert_eq!(diags[0].code, "E0007");
        assert!(diags[0].message.contains("t -> t"));
    }

    #[test]
    fn undeclared_and_duplicate() {
        let diags = parse_spec("model m\nparam a : real ~ normal(b, 1)\nparam a : real ~ normal(0, 1)\n").unwrap_err();
        let codes: Vec<_> = diags.iter().map(|d| d.code.as_str()).collect();
        assert!(codes.contains(&"E0004"));
        assert!(codes.contains(&"E0005"));
    }
}
