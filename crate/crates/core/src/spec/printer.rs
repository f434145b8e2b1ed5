use std::fmt::Write;

use super::ast::*;

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Num(v, _) => num(*v),
        Expr::Ident(n, _) => n.clone(),
        Expr::Index(n, idx, _) => format!("{n}[{}]", join(idx)),
        Expr::Call(n, args, _) => format!("{n}({})", join(args)),
        Expr::List(items, _) => format!("[{}]", join(items)),
        Expr::Neg(a) => match **a {
            Expr::Binary(..) | Expr::Neg(_) => format!("-({})", print_expr(a)),
            _ => format!("-{}", print_expr(a)),
        },
        Expr::Binary(op, a, b) => {
            let side = |x: &Expr, right: bool| {
                let s = print_expr(x);
                match x {
                    Expr::Binary(inner, ..)
                        if inner.precedence() < op.precedence()
                            || (right && inner.precedence() == op.precedence()) =>
                    {
                        format!("({s})")
                    }
                    _ => s,
                }
            };
            format!("{} {} {}", side(a, false), op.symbol(), side(b, true))
        }
    }
}

fn join(items: &[Expr]) -> String {
    items.iter().map(print_expr).collect::<Vec<_>>().join(", ")
}

pub fn print_type(t: &TypeSpec) -> String {
    let mut s = match t.base {
        BaseType::Real => "real",
        BaseType::Int => "int",
        BaseType::Simplex => "simplex",
    }
    .to_string();
    let mut bounds = Vec::new();
    if let Some(l) = t.lower {
        bounds.push(format!("lower={}", num(l)));
    }
    if let Some(u) = t.upper {
        bounds.push(format!("upper={}", num(u)));
    }
    if !bounds.is_empty() {
        let _ = write!(s, "<{}>", bounds.join(", "));
    }
    if !t.dims.is_empty() {
        let dims: Vec<String> = t
            .dims
            .iter()
            .map(|d| match d {
                Dim::Size(n) => n.clone(),
                Dim::Fixed(k) => k.to_string(),
            })
            .collect();
        let _ = write!(s, "[{}]", dims.join(", "));
    }
    s
}

fn print_dist(d: &DistCall) -> String {
    format!("{}({})", d.name, join(&d.args))
}

/// Renders a spec back to source text that parses to an equal spec.
pub fn print_spec(spec: &ModelSpec) -> String {
    let mut out = format!("model {}\n", spec.name);
    for item in &spec.items {
        match item {
            Item::Size(s) => match s.value {
                Some(v) => writeln!(out, "size {} = {v}", s.name),
                None => writeln!(out, "size {}", s.name),
            },
            Item::Var(v) => {
                let mut line = format!("{} {} : {}", v.role.keyword(), v.name, print_type(&v.ty));
                if let Some(val) = &v.value {
                    let _ = write!(line, " = {}", print_expr(val));
                }
                if let Some(p) = &v.prior {
                    let _ = write!(line, " ~ {}", print_dist(p));
                }
                if let Some(i) = &v.init {
                    let _ = write!(line, " init {}", print_expr(i));
                }
                writeln!(out, "{line}")
            }
            Item::Let(l) => {
                let idx = l.index.as_ref().map(|i| format!("[{i}]")).unwrap_or_default();
                writeln!(
                    out,
                    "let {}{idx} : {} = {}",
                    l.name,
                    print_type(&l.ty),
                    print_expr(&l.body)
                )
            }
            Item::Factor(f) => {
                let idx = f.index.as_ref().map(|i| format!("[{i}]")).unwrap_or_default();
                writeln!(out, "{}{idx} ~ {}", f.target, print_dist(&f.dist))
            }
            Item::Block(b) => {
                let params = if b.params.len() == 1 {
                    b.params[0].clone()
                } else {
                    format!("({})", b.params.join(", "))
                };
                let settings = if b.settings.is_empty() {
                    String::new()
                } else {
                    let s: Vec<String> = b
                        .settings
                        .iter()
                        .map(|(k, v)| format!("{k}={}", num(*v)))
                        .collect();
                    format!("({})", s.join(", "))
                };
                writeln!(out, "block {params} : {}{settings}", b.kernel)
            }
            Item::Order(names, _) => writeln!(out, "order {}", names.join(", ")),
        }
        .expect("writing to a String");
    }
    out
}
