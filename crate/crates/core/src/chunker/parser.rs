//! Recursive-descent parser for the supported C-like subset.
//!
//! Only statement structure matters here: expressions are skipped by
//! balancing delimiters. Every statement must begin its own line and every
//! `if`/`else`/`while`/`for` body must be a braced block.

use super::lexer::{Token, TokenKind};
use super::{ChunkError, LOG_CALL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Span {
    pub first_line: u32,
    pub last_line: u32,
}

#[derive(Debug, Clone)]
pub(crate) enum Stmt {
    Simple(Span),
    /// An injected `RESID_LOG(...)` call.
    Log(Span),
    If {
        cond: Span,
        then_body: Vec<Stmt>,
        else_body: Option<Vec<Stmt>>,
    },
    Loop {
        header: Span,
        body: Vec<Stmt>,
    },
    Block(Vec<Stmt>),
}

#[derive(Debug, Clone)]
pub(crate) struct Function {
    pub body: Vec<Stmt>,
}

const UNSUPPORTED: [&str; 5] = ["switch", "goto", "do", "case", "default"];

struct Parser<'a> {
    file: &'a str,
    tokens: &'a [Token],
    pos: usize,
}

pub(crate) fn parse(file: &str, tokens: &[Token]) -> Result<Vec<Function>, ChunkError> {
    Parser {
        file,
        tokens,
        pos: 0,
    }
    .program()
}

impl<'a> Parser<'a> {
    fn err_at(&self, tok: Option<&Token>, message: impl Into<String>) -> ChunkError {
        let (line, col) = tok
            .or_else(|| self.tokens.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        ChunkError::Syntax {
            file: self.file.to_string(),
            line,
            col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<&'a Token, ChunkError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(t)
            }
            other => Err(self.err_at(other, format!("expected {what}"))),
        }
    }

    fn program(mut self) -> Result<Vec<Function>, ChunkError> {
        let mut functions = Vec::new();
        while let Some(start) = self.peek() {
            // A top-level item ends at `;` (declaration) or opens a function body.
            let mut depth = 0usize;
            let mut prev: Option<&Token> = None;
            loop {
                let Some(t) = self.next() else {
                    return Err(self.err_at(Some(start), "unterminated top-level declaration"));
                };
                match t.kind {
                    TokenKind::LParen | TokenKind::LBracket => depth += 1,
                    TokenKind::RParen | TokenKind::RBracket => depth = depth.saturating_sub(1),
                    TokenKind::RBrace => {
                        return Err(self.err_at(Some(t), "unbalanced braces: unexpected '}'"))
                    }
                    TokenKind::Semi if depth == 0 => break,
                    TokenKind::LBrace if depth == 0 => {
                        if !prev.is_some_and(|p| p.kind == TokenKind::RParen) {
                            return Err(self.err_at(
                                Some(t),
                                "unsupported top-level block (only function definitions)",
                            ));
                        }
                        let body = self.block_body(t)?;
                        functions.push(Function { body });
                        break;
                    }
                    _ => {}
                }
                prev = Some(t);
            }
        }
        Ok(functions)
    }

    /// Statements up to the `}` matching the already-consumed `open`.
    fn block_body(&mut self, open: &Token) -> Result<Vec<Stmt>, ChunkError> {
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                None => {
                    return Err(self.err_at(
                        Some(open),
                        format!(
                            "unbalanced braces: '{{' opened at {}:{} is never closed",
                            open.line, open.col
                        ),
                    ))
                }
                Some(t) if t.kind == TokenKind::RBrace => {
                    self.pos += 1;
                    return Ok(stmts);
                }
                Some(_) => stmts.push(self.statement()?),
            }
        }
    }

    fn braced(&mut self, what: &str) -> Result<Vec<Stmt>, ChunkError> {
        let open = self.expect(TokenKind::LBrace, &format!("'{{' to open the {what} body"))?;
        self.block_body(open)
    }

    /// Consumes a parenthesized group and returns the closing token.
    fn parens(&mut self) -> Result<&'a Token, ChunkError> {
        let open = self.expect(TokenKind::LParen, "'('")?;
        let mut depth = 1usize;
        while let Some(t) = self.next() {
            match t.kind {
                TokenKind::LParen => depth += 1,
                TokenKind::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(t);
                    }
                }
                TokenKind::LBrace | TokenKind::RBrace => {
                    return Err(self.err_at(Some(t), "unexpected brace inside parentheses"))
                }
                _ => {}
            }
        }
        Err(self.err_at(Some(open), "unclosed '('"))
    }

    fn statement(&mut self) -> Result<Stmt, ChunkError> {
        let start = self.peek().expect("caller checked");
        if !start.line_start {
            return Err(self.err_at(Some(start), "each statement must start on its own line"));
        }
        if let TokenKind::Ident(word) = &start.kind {
            if UNSUPPORTED.contains(&word.as_str()) {
                return Err(self.err_at(Some(start), format!("unsupported construct '{word}'")));
            }
            match word.as_str() {
                "if" => return self.if_statement(),
                "while" | "for" => {
                    self.pos += 1;
                    let close = self.parens()?;
                    let header = Span {
                        first_line: start.line,
                        last_line: close.line,
                    };
                    let body = self.braced(word)?;
                    return Ok(Stmt::Loop { header, body });
                }
                "else" => return Err(self.err_at(Some(start), "'else' without 'if'")),
                _ => {}
            }
        }
        if start.kind == TokenKind::LBrace {
            self.pos += 1;
            return Ok(Stmt::Block(self.block_body(start)?));
        }
        self.simple(start)
    }

    fn if_statement(&mut self) -> Result<Stmt, ChunkError> {
        let start = self.next().expect("caller checked");
        let close = self.parens()?;
        let cond = Span {
            first_line: start.line,
            last_line: close.line,
        };
        let then_body = self.braced("if")?;
        let else_body =
            match self.peek() {
                Some(t) if t.is_ident("else") => {
                    self.pos += 1;
                    match self.peek() {
                        Some(t) if t.kind == TokenKind::LBrace => Some(self.braced("else")?),
                        other => return Err(self.err_at(
                            other,
                            "'else' must be followed by a braced block (write `else { if ... }`)",
                        )),
                    }
                }
                _ => None,
            };
        Ok(Stmt::If {
            cond,
            then_body,
            else_body,
        })
    }

    fn simple(&mut self, start: &'a Token) -> Result<Stmt, ChunkError> {
        let is_log = start.is_ident(LOG_CALL);
        let mut depth = 0usize;
        while let Some(t) = self.next() {
            match t.kind {
                TokenKind::LParen | TokenKind::LBracket | TokenKind::LBrace => depth += 1,
                TokenKind::RParen | TokenKind::RBracket => depth = depth.saturating_sub(1),
                TokenKind::RBrace => {
                    if depth == 0 {
                        return Err(self.err_at(Some(t), "expected ';' before '}'"));
                    }
                    depth -= 1;
                }
                TokenKind::Semi if depth == 0 => {
                    let span = Span {
                        first_line: start.line,
                        last_line: t.line,
                    };
                    return Ok(if is_log {
                        Stmt::Log(span)
                    } else {
                        Stmt::Simple(span)
                    });
                }
                _ => {}
            }
        }
        Err(self.err_at(Some(start), "statement is missing its terminating ';'"))
    }
}

#[cfg(test)]
mod tests {
    use super::super::lexer::tokenize;
    use super::*;

    fn parse_src(src: &str) -> Result<Vec<Function>, ChunkError> {
        parse("t.c", &tokenize("t.c", src)?)
    }

    fn message(src: &str) -> String {
        match parse_src(src) {
            Err(ChunkError::Syntax { message, .. }) => message,
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn parses_functions_and_declarations() {
        let f = parse_src(
            "int g = 3;\nint f(int);\nint main() {\n  x = 1;\n  if (x) {\n    y = 2;\n  }\n}\n",
        )
        .unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].body.len(), 2);
        assert!(matches!(
            f[0].body[1],
            Stmt::If {
                else_body: None,
                ..
            }
        ));
    }

    #[test]
    fn rejects_unsupported_shapes() {
        assert!(message("int f() {\n  x = 1; y = 2;\n}").contains("own line"));
        assert!(message("int f() {\n  if (x) {\n  } else if (y) {\n  }\n}").contains("braced"));
        assert!(message("int f() {\n  if (x)\n    y = 1;\n}").contains("'{'"));
        assert!(message("int f() {\n  switch (x) {\n  }\n}").contains("switch"));
        assert!(message("int f() {\n  x = 1;\n").contains("never closed"));
        assert!(message("}\n").contains("unexpected '}'"));
        assert!(message("struct s {\n  int a;\n};").contains("top-level"));
        assert!(message("int f() {\n  x = 1\n}").contains("';'"));
    }

    #[test]
    fn initializer_braces_stay_in_statement() {
        let f = parse_src("int f() {\n  int a[2] = {1, 2};\n}\n").unwrap();
        assert!(matches!(f[0].body[..], [Stmt::Simple(_)]));
    }
}
