use super::ast::Span;
use crate::error::Diagnostic;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

const SYMBOLS: &str = "()[]<>,:~=+-*/";

/// Splits source text into tokens. Unknown characters become diagnostics and
/// are skipped, so lexing never fails outright.
pub fn lex(src: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for (ln, line) in src.lines().enumerate() {
        let line_no = ln + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let span = Span::new(line_no, i + 1);
            if c == '#' {
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    span,
                });
            } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                match text.parse::<f64>() {
                    Ok(v) => out.push(Token {
                        tok: Tok::Num(v),
                        span,
                    }),
                    Err(_) => diags.push(Diagnostic::new(
                        "E0001",
                        line_no,
                        start + 1,
                        format!("malformed number `{text}`"),
                    )),
                }
            } else if SYMBOLS.contains(c) {
                out.push(Token {
                    tok: Tok::Sym(c),
                    span,
                });
                i += 1;
            } else {
                diags.push(Diagnostic::new(
                    "E0001",
                    line_no,
                    i + 1,
                    format!("unexpected character `{c}`"),
                ));
                i += 1;
            }
        }
        out.push(Token {
            tok: Tok::Newline,
            span: Span::new(line_no, chars.len() + 1),
        });
    }
    let last = src.lines().count() + 1;
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(last, 1),
    });
    (out, diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_numbers_and_symbols() {
        let (toks, diags) = lex("param tau : real<lower=0> ~ half_cauchy(0, 2.5e1) # c");
        assert!(diags.is_empty());
        assert!(toks.iter().any(|t| t.tok == Tok::Num(25.0)));
        assert!(toks.iter().any(|t| t.tok == Tok::Sym('~')));
    }

    #[test]
    fn bad_character_is_reported() {
        let (_, diags) = lex("x @ y");
        assert_eq!(diags.len(), 1);
        assert_eq!((diags[0].line, diags[0].column), (1, 3));
    }
}
