use std::fmt;

use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum TokenKind {
    Ident(String),
    /// Decimal literal; `integral` is true when written without a fraction.
    Number { value: f64, integral: bool },
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Less,
    Greater,
    Equals,
    Minus,
    Semicolon,
    Newline,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "`{s}`"),
            TokenKind::Number { value, .. } => write!(f, "number {value}"),
            TokenKind::LBracket => f.write_str("`[`"),
            TokenKind::RBracket => f.write_str("`]`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Less => f.write_str("`<`"),
            TokenKind::Greater => f.write_str("`>`"),
            TokenKind::Equals => f.write_str("`=`"),
            TokenKind::Minus => f.write_str("`-`"),
            TokenKind::Semicolon => f.write_str("`;`"),
            TokenKind::Newline => f.write_str("end of line"),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

/// Splits `text` into tokens. Lines and columns are 1-based and offset by
/// `first_line - 1` so that sections of a larger file report file positions.
pub(crate) fn tokenize(text: &str, first_line: usize) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut line = first_line;
    let mut chars = text.chars().peekable();
    let mut column = 1;

    while let Some(&c) = chars.peek() {
        let start = column;
        let simple = match c {
            '[' => Some(TokenKind::LBracket),
            ']' => Some(TokenKind::RBracket),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            ',' => Some(TokenKind::Comma),
            '<' => Some(TokenKind::Less),
            '>' => Some(TokenKind::Greater),
            '=' => Some(TokenKind::Equals),
            '-' => Some(TokenKind::Minus),
            ';' => Some(TokenKind::Semicolon),
            _ => None,
        };
        if let Some(kind) = simple {
            chars.next();
            column += 1;
            tokens.push(Token { kind, line, column: start });
            continue;
        }
        match c {
            '\n' => {
                chars.next();
                tokens.push(Token { kind: TokenKind::Newline, line, column: start });
                line += 1;
                column = 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                        column += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token { kind: TokenKind::Ident(ident), line, column: start });
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut literal = String::new();
                let mut seen_dot = false;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        literal.push(c);
                    } else if c == '.' && !seen_dot {
                        seen_dot = true;
                        literal.push(c);
                    } else {
                        break;
                    }
                    chars.next();
                    column += 1;
                }
                let value: f64 = literal.parse().map_err(|_| ParseError {
                    line,
                    column: start,
                    message: format!("malformed number `{literal}`"),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number { value, integral: !seen_dot },
                    line,
                    column: start,
                });
            }
            other => {
                return Err(ParseError {
                    line,
                    column: start,
                    message: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    tokens.push(Token { kind: TokenKind::Eof, line, column });
    Ok(tokens)
}

/// Cursor over a token stream shared by the constraint and spec parsers.
pub(crate) struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(tokens: Vec<Token>) -> Self {
        Cursor { tokens, pos: 0 }
    }

    pub fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    pub fn next(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    pub fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    pub fn error(&self, expected: &str) -> ParseError {
        let tok = self.peek();
        ParseError {
            line: tok.line,
            column: tok.column,
            message: format!("expected {expected}, found {}", tok.kind),
        }
    }

    pub fn expect(&mut self, kind: TokenKind, expected: &str) -> Result<Token, ParseError> {
        if self.at(&kind) {
            Ok(self.next())
        } else {
            Err(self.error(expected))
        }
    }

    pub fn skip_separators(&mut self) {
        while matches!(self.peek().kind, TokenKind::Newline | TokenKind::Semicolon) {
            self.next();
        }
    }

    /// Parses `L[j,k]` with 1-based integer indices, returning the indices as written.
    pub fn cell_indices(&mut self) -> Result<(usize, usize, Token), ParseError> {
        let head = self.peek().clone();
        match &head.kind {
            TokenKind::Ident(s) if s == "L" => {
                self.next();
            }
            _ => return Err(self.error("cell `L[j,k]`")),
        }
        self.expect(TokenKind::LBracket, "`[`")?;
        let j = self.index()?;
        self.expect(TokenKind::Comma, "`,`")?;
        let k = self.index()?;
        self.expect(TokenKind::RBracket, "`]`")?;
        Ok((j, k, head))
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Number { value, integral: true } => {
                self.next();
                if value < 1.0 {
                    return Err(ParseError {
                        line: tok.line,
                        column: tok.column,
                        message: "cell indices are 1-based; index must be at least 1".into(),
                    });
                }
                Ok(value as usize)
            }
            _ => Err(self.error("integer index")),
        }
    }
}
