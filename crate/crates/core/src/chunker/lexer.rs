use super::ChunkError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Ident(String),
    Number,
    Str,
    Char,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Op,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub line: u32,
    pub col: u32,
    /// No other token precedes this one on its line.
    pub line_start: bool,
}

impl Token {
    pub fn is_ident(&self, word: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(w) if w == word)
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

pub(crate) fn tokenize(file: &str, text: &str) -> Result<Vec<Token>, ChunkError> {
    let mut cur = Cursor {
        chars: text.char_indices().peekable(),
        line: 1,
        col: 1,
    };
    let mut tokens: Vec<Token> = Vec::new();
    let err = |line, col, message: String| ChunkError::Syntax {
        file: file.to_string(),
        line,
        col,
        message,
    };

    while let Some(c) = cur.peek() {
        let (line, col) = (cur.line, cur.col);
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' {
            let mut ahead = cur.chars.clone();
            ahead.next();
            match ahead.peek().map(|&(_, c)| c) {
                Some('/') => {
                    while cur.peek().is_some_and(|c| c != '\n') {
                        cur.bump();
                    }
                    continue;
                }
                Some('*') => {
                    cur.bump();
                    cur.bump();
                    let mut closed = false;
                    while let Some(c) = cur.bump() {
                        if c == '*' && cur.peek() == Some('/') {
                            cur.bump();
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        return Err(err(line, col, "unterminated block comment".into()));
                    }
                    continue;
                }
                _ => {}
            }
        }

        let kind = match c {
            '"' | '\'' => {
                cur.bump();
                let mut closed = false;
                while let Some(ch) = cur.bump() {
                    match ch {
                        '\\' => {
                            cur.bump();
                        }
                        '\n' => break,
                        q if q == c => {
                            closed = true;
                            break;
                        }
                        _ => {}
                    }
                }
                if !closed {
                    let what = if c == '"' { "string" } else { "character" };
                    return Err(err(line, col, format!("unterminated {what} literal")));
                }
                if c == '"' {
                    TokenKind::Str
                } else {
                    TokenKind::Char
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(ch) = cur
                    .peek()
                    .filter(|ch| ch.is_ascii_alphanumeric() || *ch == '_')
                {
                    word.push(ch);
                    cur.bump();
                }
                TokenKind::Ident(word)
            }
            c if c.is_ascii_digit() || (c == '.' && next_is_digit(&cur)) => {
                let mut prev = '\0';
                while let Some(ch) = cur.peek() {
                    let exponent_sign = (ch == '+' || ch == '-') && matches!(prev, 'e' | 'E');
                    if !(ch.is_ascii_alphanumeric() || ch == '.' || exponent_sign) {
                        break;
                    }
                    prev = ch;
                    cur.bump();
                }
                TokenKind::Number
            }
            '#' => {
                return Err(err(
                    line,
                    col,
                    "preprocessor directives are not supported".into(),
                ))
            }
            '(' | ')' | '{' | '}' | '[' | ']' | ';' => {
                cur.bump();
                match c {
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    _ => TokenKind::Semi,
                }
            }
            c if "+-*/%=<>!&|^~?:.,".contains(c) => {
                cur.bump();
                TokenKind::Op
            }
            other => return Err(err(line, col, format!("unexpected character {other:?}"))),
        };
        let line_start = tokens.last().is_none_or(|t| t.line < line);
        tokens.push(Token {
            kind,
            line,
            col,
            line_start,
        });
    }
    Ok(tokens)
}

fn next_is_digit(cur: &Cursor<'_>) -> bool {
    let mut ahead = cur.chars.clone();
    ahead.next();
    ahead.peek().is_some_and(|&(_, c)| c.is_ascii_digit())
}
