use serde::{Deserialize, Serialize};

use super::env::Env;
use super::VarId;
use crate::spec::ast::BinOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
}

/// A vector-valued argument: a whole vector, one row of a matrix, or a literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VecRef {
    Var(VarId),
    Row(VarId, Box<CExpr>),
    Const(Vec<f64>),
}

/// Compiled scalar expression. `Loop` is the 1-based index of the enclosing
/// statement; element indices are 1-based expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CExpr {
    Const(f64),
    Loop,
    Elem(VarId, Vec<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Neg(Box<CExpr>),
    Func(Func, Box<CExpr>),
    Dot(VecRef, VecRef),
}

fn index_of(x: f64) -> Option<usize> {
    (x >= 1.0 && x.fract() == 0.0).then(|| x as usize - 1)
}

/// Flat position of `var[idx...]`, or `None` when out of range.
pub(crate) fn flat_index(env: &Env, var: VarId, idx: &[CExpr], i: usize) -> Option<usize> {
    let len = env.values[var].len();
    let pos = match idx {
        [] => 0,
        [a] => index_of(eval(a, env, i))?,
        [a, b] => {
            let cols = env.cols[var];
            let c = index_of(eval(b, env, i))?;
            if c >= cols {
                return None;
            }
            index_of(eval(a, env, i))? * cols + c
        }
        _ => return None,
    };
    (pos < len).then_some(pos)
}

/// Start and length of the slice a vector reference points at.
pub(crate) fn vec_range(env: &Env, r: &VecRef, i: usize) -> Option<(usize, usize)> {
    match r {
        VecRef::Var(v) => Some((0, env.values[*v].len())),
        VecRef::Row(v, row) => {
            let cols = env.cols[*v];
            let start = index_of(eval(row, env, i))? * cols;
            (start + cols <= env.values[*v].len()).then_some((start, cols))
        }
        VecRef::Const(c) => Some((0, c.len())),
    }
}

pub(crate) fn vec_slice<'a>(env: &'a Env, r: &'a VecRef, i: usize) -> Option<&'a [f64]> {
    let (s, n) = vec_range(env, r, i)?;
    Some(match r {
        VecRef::Var(v) | VecRef::Row(v, _) => &env.values[*v][s..s + n],
        VecRef::Const(c) => &c[s..s + n],
    })
}

/// Evaluates `e` for loop index `i`; malformed indexing yields NaN.
pub fn eval(e: &CExpr, env: &Env, i: usize) -> f64 {
    match e {
        CExpr::Const(c) => *c,
        CExpr::Loop => i as f64,
        CExpr::Elem(v, idx) => match flat_index(env, *v, idx, i) {
            Some(p) => env.values[*v][p],
            None => f64::NAN,
        },
        CExpr::Bin(op, a, b) => {
            let (x, y) = (eval(a, env, i), eval(b, env, i));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            }
        }
        CExpr::Neg(a) => -eval(a, env, i),
        CExpr::Func(f, a) => {
            let x = eval(a, env, i);
            match f {
                Func::Sqrt => x.sqrt(),
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
            }
        }
        CExpr::Dot(a, b) => match (vec_slice(env, a, i), vec_slice(env, b, i)) {
            (Some(x), Some(y)) if x.len() == y.len() => x.iter().zip(y).map(|(p, q)| p * q).sum(),
            _ => f64::NAN,
        },
    }
}

/// Reverse-mode pass: adds `adj * d e / d var[k]` through `sink(var, k, value)`.
pub fn backprop(e: &CExpr, env: &Env, i: usize, adj: f64, sink: &mut dyn FnMut(VarId, usize, f64)) {
    if adj == 0.0 {
        return;
    }
    match e {
        CExpr::Const(_) | CExpr::Loop => {}
        CExpr::Elem(v, idx) => {
            if let Some(p) = flat_index(env, *v, idx, i) {
                sink(*v, p, adj);
            }
        }
        CExpr::Bin(op, a, b) => match op {
            BinOp::Add => {
                backprop(a, env, i, adj, sink);
                backprop(b, env, i, adj, sink);
            }
            BinOp::Sub => {
                backprop(a, env, i, adj, sink);
                backprop(b, env, i, -adj, sink);
            }
            BinOp::Mul => {
                let (x, y) = (eval(a, env, i), eval(b, env, i));
                backprop(a, env, i, adj * y, sink);
                backprop(b, env, i, adj * x, sink);
            }
            BinOp::Div => {
                let (x, y) = (eval(a, env, i), eval(b, env, i));
                backprop(a, env, i, adj / y, sink);
                backprop(b, env, i, -adj * x / (y * y), sink);
            }
        },
        CExpr::Neg(a) => backprop(a, env, i, -adj, sink),
        CExpr::Func(f, a) => {
            let x = eval(a, env, i);
            let d = match f {
                Func::Sqrt => 0.5 / x.sqrt(),
                Func::Exp => x.exp(),
                Func::Log => 1.0 / x,
            };
            backprop(a, env, i, adj * d, sink);
        }
        CExpr::Dot(a, b) => {
            let (Some(x), Some(y)) = (vec_slice(env, a, i), vec_slice(env, b, i)) else {
                return;
            };
            let (x, y) = (x.to_vec(), y.to_vec());
            vec_backprop(a, env, i, &y, adj, sink);
            vec_backprop(b, env, i, &x, adj, sink);
        }
    }
}

/// Routes `adj * grad[k]` to the elements a vector reference covers.
pub fn vec_backprop(
    r: &VecRef,
    env: &Env,
    i: usize,
    grad: &[f64],
    adj: f64,
    sink: &mut dyn FnMut(VarId, usize, f64),
) {
    let (VecRef::Var(v) | VecRef::Row(v, _)) = r else {
        return;
    };
    if let Some((start, _)) = vec_range(env, r, i) {
        for (k, g) in grad.iter().enumerate() {
            if *g != 0.0 {
                sink(*v, start + k, adj * g);
            }
        }
    }
}

/// Element reads of an expression at loop index `i`: `(var, Some(range))` for
/// statically known positions, `(var, None)` when the position depends on
/// unknowns. `fixed` says which variables never change during sampling.
pub(crate) fn reads(
    e: &CExpr,
    env: &Env,
    i: usize,
    fixed: &dyn Fn(VarId) -> bool,
    out: &mut Vec<(VarId, Option<(usize, usize)>)>,
) {
    match e {
        CExpr::Const(_) | CExpr::Loop => {}
        CExpr::Elem(v, idx) => {
            let known = idx.iter().all(|x| is_static(x, fixed));
            let pos = if known { flat_index(env, *v, idx, i).map(|p| (p, 1)) } else { None };
            out.push((*v, pos));
            idx.iter().for_each(|x| reads(x, env, i, fixed, out));
        }
        CExpr::Bin(_, a, b) => {
            reads(a, env, i, fixed, out);
            reads(b, env, i, fixed, out);
        }
        CExpr::Neg(a) | CExpr::Func(_, a) => reads(a, env, i, fixed, out),
        CExpr::Dot(a, b) => {
            vec_reads(a, env, i, fixed, out);
            vec_reads(b, env, i, fixed, out);
        }
    }
}

pub(crate) fn vec_reads(
    r: &VecRef,
    env: &Env,
    i: usize,
    fixed: &dyn Fn(VarId) -> bool,
    out: &mut Vec<(VarId, Option<(usize, usize)>)>,
) {
    match r {
        VecRef::Var(v) => out.push((*v, None)),
        VecRef::Row(v, row) => {
            let pos = if is_static(row, fixed) { vec_range(env, r, i) } else { None };
            out.push((*v, pos));
            reads(row, env, i, fixed, out);
        }
        VecRef::Const(_) => {}
    }
}

fn is_static(e: &CExpr, fixed: &dyn Fn(VarId) -> bool) -> bool {
    match e {
        CExpr::Const(_) | CExpr::Loop => true,
        CExpr::Elem(v, idx) => fixed(*v) && idx.iter().all(|x| is_static(x, fixed)),
        CExpr::Bin(_, a, b) => is_static(a, fixed) && is_static(b, fixed),
        CExpr::Neg(a) | CExpr::Func(_, a) => is_static(a, fixed),
        CExpr::Dot(..) => false,
    }
}

/// Replaces `Loop` with `with` (used to inline indexed derived quantities).
pub(crate) fn substitute_loop(e: &CExpr, with: &CExpr) -> CExpr {
    let sub = |x: &CExpr| Box::new(substitute_loop(x, with));
    let sub_vec = |r: &VecRef| match r {
        VecRef::Row(v, row) => VecRef::Row(*v, sub(row)),
        other => other.clone(),
    };
    match e {
        CExpr::Loop => with.clone(),
        CExpr::Const(_) => e.clone(),
        CExpr::Elem(v, idx) => CExpr::Elem(*v, idx.iter().map(|x| substitute_loop(x, with)).collect()),
        CExpr::Bin(op, a, b) => CExpr::Bin(*op, sub(a), sub(b)),
        CExpr::Neg(a) => CExpr::Neg(sub(a)),
        CExpr::Func(f, a) => CExpr::Func(*f, sub(a)),
        CExpr::Dot(a, b) => CExpr::Dot(sub_vec(a), sub_vec(b)),
    }
}

/// Variables an expression mentions (indices included).
pub(crate) fn mentioned(e: &CExpr, out: &mut Vec<VarId>) {
    match e {
        CExpr::Const(_) | CExpr::Loop => {}
        CExpr::Elem(v, idx) => {
            out.push(*v);
            idx.iter().for_each(|x| mentioned(x, out));
        }
        CExpr::Bin(_, a, b) => {
            mentioned(a, out);
            mentioned(b, out);
        }
        CExpr::Neg(a) | CExpr::Func(_, a) => mentioned(a, out),
        CExpr::Dot(a, b) => {
            vec_mentioned(a, out);
            vec_mentioned(b, out);
        }
    }
}

pub(crate) fn vec_mentioned(r: &VecRef, out: &mut Vec<VarId>) {
    match r {
        VecRef::Var(v) => out.push(*v),
        VecRef::Row(v, row) => {
            out.push(*v);
            mentioned(row, out);
        }
        VecRef::Const(_) => {}
    }
}
