use super::ast::*;
use super::lexer::{lex, Tok, Token};
use crate::error::Diagnostic;

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let s = self.span();
        let found = match self.peek() {
            Tok::Ident(n) => format!("`{n}`"),
            Tok::Num(v) => format!("`{v}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        };
        Err(Diagnostic::new(
            "E0002",
            s.line,
            s.column,
            format!("{}, found {found}", msg.into()),
        ))
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> PResult<()> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            self.error(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(n) => {
                let s = self.span();
                self.pos += 1;
                Ok((n, s))
            }
            _ => self.error("expected identifier"),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(n) if n == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.pos += 1;
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => self.error("expected end of line"),
        }
    }

    fn skip_line(&mut self) {
        while !matches!(self.peek(), Tok::Newline | Tok::Eof) {
            self.pos += 1;
        }
        if matches!(self.peek(), Tok::Newline) {
            self.pos += 1;
        }
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = self.eat_sym('-');
        match *self.peek() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(if neg { -v } else { v })
            }
            _ => self.error("expected number"),
        }
    }

    fn type_spec(&mut self) -> PResult<TypeSpec> {
        let (base, span) = self.ident()?;
        let base = match base.as_str() {
            "real" => BaseType::Real,
            "int" => BaseType::Int,
            "simplex" => BaseType::Simplex,
            other => {
                return Err(Diagnostic::new(
                    "E0002",
                    span.line,
                    span.column,
                    format!("unknown type `{other}` (expected real, int or simplex)"),
                ))
            }
        };
        let mut ty = TypeSpec {
            base,
            lower: None,
            upper: None,
            dims: vec![],
        };
        if self.eat_sym('<') {
            loop {
                let (key, ks) = self.ident()?;
                self.expect_sym('=')?;
                let v = self.signed_number()?;
                match key.as_str() {
                    "lower" => ty.lower = Some(v),
                    "upper" => ty.upper = Some(v),
                    _ => {
                        return Err(Diagnostic::new(
                            "E0002",
                            ks.line,
                            ks.column,
                            format!("unknown bound `{key}`"),
                        ))
                    }
                }
                if !self.eat_sym(',') {
                    break;
                }
            }
            self.expect_sym('>')?;
        }
        if self.eat_sym('[') {
            loop {
                match self.peek().clone() {
                    Tok::Ident(n) => {
                        self.pos += 1;
                        ty.dims.push(Dim::Size(n));
                    }
                    Tok::Num(v) if v >= 1.0 && v.fract() == 0.0 => {
                        self.pos += 1;
                        ty.dims.push(Dim::Fixed(v as usize));
                    }
                    _ => return self.error("expected a size name or positive integer"),
                }
                if !self.eat_sym(',') {
                    break;
                }
            }
            self.expect_sym(']')?;
        }
        Ok(ty)
    }

    fn dist_call(&mut self) -> PResult<DistCall> {
        let (name, span) = self.ident()?;
        self.expect_sym('(')?;
        let args = self.expr_list(')')?;
        Ok(DistCall { name, args, span })
    }

    fn expr_list(&mut self, close: char) -> PResult<Vec<Expr>> {
        let mut out = Vec::new();
        if self.eat_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.eat_sym(close) {
                return Ok(out);
            }
            self.expect_sym(',')?;
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v, span))
            }
            Tok::Ident(n) => {
                self.pos += 1;
                if self.eat_sym('[') {
                    let idx = self.expr_list(']')?;
                    Ok(Expr::Index(n, idx, span))
                } else if self.eat_sym('(') {
                    let args = self.expr_list(')')?;
                    Ok(Expr::Call(n, args, span))
                } else {
                    Ok(Expr::Ident(n, span))
                }
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Tok::Sym('[') => {
                self.pos += 1;
                Ok(Expr::List(self.expr_list(']')?, span))
            }
            _ => self.error("expected expression"),
        }
    }

    fn statement(&mut self, name: &mut Option<String>) -> PResult<Option<Item>> {
        let span = self.span();
        let head = match self.peek().clone() {
            Tok::Newline => {
                self.pos += 1;
                return Ok(None);
            }
            Tok::Ident(h) => h,
            _ => return self.error("expected a statement"),
        };
        let item = match head.as_str() {
            "model" => {
                self.pos += 1;
                let (n, s) = self.ident()?;
                if name.is_some() {
                    return Err(Diagnostic::new(
                        "E0005",
                        s.line,
                        s.column,
                        "model name declared more than once",
                    ));
                }
                *name = Some(n);
                self.end_of_line()?;
                return Ok(None);
            }
            "size" => {
                self.pos += 1;
                let (n, _) = self.ident()?;
                let value = if self.eat_sym('=') {
                    let v = self.signed_number()?;
                    if v < 1.0 || v.fract() != 0.0 {
                        return self.error("size must be a positive integer");
                    }
                    Some(v as usize)
                } else {
                    None
                };
                Item::Size(SizeDecl {
                    name: n,
                    value,
                    span,
                })
            }
            "data" | "param" | "latent" => {
                self.pos += 1;
                let role = match head.as_str() {
                    "data" => Role::Data,
                    "param" => Role::Param,
                    _ => Role::Latent,
                };
                let (n, _) = self.ident()?;
                self.expect_sym(':')?;
                let ty = self.type_spec()?;
                let value = if self.eat_sym('=') {
                    Some(self.expr()?)
                } else {
                    None
                };
                let prior = if self.eat_sym('~') {
                    Some(self.dist_call()?)
                } else {
                    None
                };
                let init = if self.keyword("init") {
                    Some(self.expr()?)
                } else {
                    None
                };
                Item::Var(VarDecl {
                    role,
                    name: n,
                    ty,
                    value,
                    prior,
                    init,
                    span,
                })
            }
            "let" => {
                self.pos += 1;
                let (n, _) = self.ident()?;
                let index = if self.eat_sym('[') {
                    let (i, _) = self.ident()?;
                    self.expect_sym(']')?;
                    Some(i)
                } else {
                    None
                };
                self.expect_sym(':')?;
                let ty = self.type_spec()?;
                self.expect_sym('=')?;
                let body = self.expr()?;
                Item::Let(LetDecl {
                    name: n,
                    index,
                    ty,
                    body,
                    span,
                })
            }
            "block" => {
                self.pos += 1;
                let mut params = Vec::new();
                if self.eat_sym('(') {
                    loop {
                        params.push(self.ident()?.0);
                        if self.eat_sym(')') {
                            break;
                        }
                        self.expect_sym(',')?;
                    }
                } else {
                    params.push(self.ident()?.0);
                }
                self.expect_sym(':')?;
                let (kernel, _) = self.ident()?;
                let mut settings = Vec::new();
                if self.eat_sym('(') && !self.eat_sym(')') {
                    loop {
                        let (k, _) = self.ident()?;
                        self.expect_sym('=')?;
                        settings.push((k, self.signed_number()?));
                        if self.eat_sym(')') {
                            break;
                        }
                        self.expect_sym(',')?;
                    }
                }
                Item::Block(BlockStmt {
                    params,
                    kernel,
                    settings,
                    span,
                })
            }
            "order" => {
                self.pos += 1;
                let mut names = vec![self.ident()?.0];
                while self.eat_sym(',') {
                    names.push(self.ident()?.0);
                }
                Item::Order(names, span)
            }
            _ => {
                let (target, _) = self.ident()?;
                let index = if self.eat_sym('[') {
                    let (i, _) = self.ident()?;
                    self.expect_sym(']')?;
                    Some(i)
                } else {
                    None
                };
                self.expect_sym('~')?;
                let dist = self.dist_call()?;
                Item::Factor(FactorStmt {
                    target,
                    index,
                    dist,
                    span,
                })
            }
        };
        self.end_of_line()?;
        Ok(Some(item))
    }
}

/// Parses source text into a syntax tree without semantic checks.
pub fn parse_syntax(src: &str) -> (Option<ModelSpec>, Vec<Diagnostic>) {
    let (toks, mut diags) = lex(src);
    let mut p = Parser { toks, pos: 0 };
    let mut name = None;
    let mut items = Vec::new();
    while !matches!(p.peek(), Tok::Eof) {
        match p.statement(&mut name) {
            Ok(Some(item)) => items.push(item),
            Ok(None) => {}
            Err(d) => {
                diags.push(d);
                p.skip_line();
            }
        }
    }
    if items.is_empty() && name.is_none() && diags.is_empty() {
        diags.push(Diagnostic::new("E0003", 1, 1, "no model: the source is empty"));
        return (None, diags);
    }
    let Some(name) = name else {
        diags.push(Diagnostic::new(
            "E0003",
            1,
            1,
            "no model: missing `model <name>` declaration",
        ));
        return (None, diags);
    };
    (Some(ModelSpec { name, items }), diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_declarations() {
        let src = "model m\nsize N\ndata y : real[N]\nparam s : real<lower=0> ~ half_cauchy(0, 1)\ny[i] ~ normal(0, s)\n";
        let (spec, diags) = parse_syntax(src);
        assert!(diags.is_empty(), "{diags:?}");
        let spec = spec.unwrap();
        assert_eq!(spec.items.len(), 4);
        assert_eq!(spec.var("s").unwrap().ty.lower, Some(0.0));
    }

    #[test]
    fn recovers_after_syntax_error() {
        let (_, diags) = parse_syntax("model m\nparam : real\nparam x : real ~ normal(0 1)\n");
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].line, 2);
        assert_eq!(diags[1].line, 3);
    }

    #[test]
    fn precedence() {
        let (spec, _) = parse_syntax("model m\nlet t : real = a + b * c\n");
        let spec = spec.unwrap();
        let l = spec.lets().next().unwrap();
        assert!(matches!(&l.body, Expr::Binary(BinOp::Add, _, rhs) if matches!(**rhs, Expr::Binary(BinOp::Mul, ..))));
    }
}
