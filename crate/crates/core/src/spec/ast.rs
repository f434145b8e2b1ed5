use serde::{Deserialize, Serialize};

/// Source position (1-based). Positions never take part in equality, so a
/// printed and reparsed spec compares equal to the original.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Span {
    pub fn new(line: usize, column: usize) -> Self {
        Self { line, column }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64, Span),
    Ident(String, Span),
    Index(String, Vec<Expr>, Span),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(String, Vec<Expr>, Span),
    List(Vec<Expr>, Span),
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Num(_, s) | Expr::Ident(_, s) | Expr::Index(_, _, s) => *s,
            Expr::Call(_, _, s) | Expr::List(_, s) => *s,
            Expr::Binary(_, a, _) => a.span(),
            Expr::Neg(a) => a.span(),
        }
    }

    /// Every identifier read by the expression, including indexed bases.
    pub fn names(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(..) => {}
            Expr::Ident(n, _) => out.push(n.clone()),
            Expr::Index(n, idx, _) => {
                out.push(n.clone());
                idx.iter().for_each(|e| e.names(out));
            }
            Expr::Binary(_, a, b) => {
                a.names(out);
                b.names(out);
            }
            Expr::Neg(a) => a.names(out),
            Expr::Call(_, args, _) | Expr::List(args, _) => args.iter().for_each(|e| e.names(out)),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Expr::Num(v, _) => Some(*v),
            Expr::Neg(a) => a.as_number().map(|v| -v),
            _ => None,
        }
    }

    /// Flattens numeric literals and (nested) lists of them.
    pub fn as_numbers(&self) -> Option<Vec<f64>> {
        match self {
            Expr::List(items, _) => {
                let mut out = Vec::new();
                for it in items {
                    out.extend(it.as_numbers()?);
                }
                Some(out)
            }
            other => other.as_number().map(|v| vec![v]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseType {
    Real,
    Int,
    Simplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Dim {
    Size(String),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub base: BaseType,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub dims: Vec<Dim>,
}

impl TypeSpec {
    pub fn real() -> Self {
        Self {
            base: BaseType::Real,
            lower: None,
            upper: None,
            dims: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Data,
    Param,
    Latent,
}

impl Role {
    pub fn keyword(self) -> &'static str {
        match self {
            Role::Data => "data",
            Role::Param => "param",
            Role::Latent => "latent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistCall {
    pub name: String,
    pub args: Vec<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDecl {
    pub name: String,
    pub value: Option<usize>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub role: Role,
    pub name: String,
    pub ty: TypeSpec,
    pub value: Option<Expr>,
    pub prior: Option<DistCall>,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetDecl {
    pub name: String,
    pub index: Option<String>,
    pub ty: TypeSpec,
    pub body: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStmt {
    pub target: String,
    pub index: Option<String>,
    pub dist: DistCall,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStmt {
    pub params: Vec<String>,
    pub kernel: String,
    pub settings: Vec<(String, f64)>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Item {
    Size(SizeDecl),
    Var(VarDecl),
    Let(LetDecl),
    Factor(FactorStmt),
    Block(BlockStmt),
    Order(Vec<String>, Span),
}

/// A parsed model: declarations, factors and block requests in source order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub items: Vec<Item>,
}

impl ModelSpec {
    pub fn sizes(&self) -> impl Iterator<Item = &SizeDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Size(s) => Some(s),
            _ => None,
        })
    }

    pub fn vars(&self) -> impl Iterator<Item = &VarDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Var(v) => Some(v),
            _ => None,
        })
    }

    pub fn lets(&self) -> impl Iterator<Item = &LetDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Let(l) => Some(l),
            _ => None,
        })
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockStmt> {
        self.items.iter().filter_map(|i| match i {
            Item::Block(b) => Some(b),
            _ => None,
        })
    }

    pub fn order(&self) -> Option<&[String]> {
        self.items.iter().find_map(|i| match i {
            Item::Order(o, _) => Some(o.as_slice()),
            _ => None,
        })
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars().find(|v| v.name == name)
    }

    /// All factor statements, with inline priors expanded to whole-variable factors.
    pub fn factors(&self) -> Vec<FactorStmt> {
        let mut out = Vec::new();
        for item in &self.items {
            match item {
                Item::Var(v) => {
                    if let Some(p) = &v.prior {
                        out.push(FactorStmt {
                            target: v.name.clone(),
                            index: None,
                            dist: p.clone(),
                            span: p.span,
                        });
                    }
                }
                Item::Factor(f) => out.push(f.clone()),
                _ => {}
            }
        }
        out
    }

    pub fn count(&self, role: Role) -> usize {
        self.vars().filter(|v| v.role == role).count()
    }
}
