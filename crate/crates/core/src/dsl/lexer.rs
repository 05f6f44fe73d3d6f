use super::ast::Span;
use super::error::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Dot,
    Ellipsis,
    Star,
    Assign,
    ColonAssign,
    Pipe,
    OrOr,
    AndAnd,
    Bang,
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Slash,
    Arrow,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Dot => ".",
            Tok::Ellipsis => "...",
            Tok::Star => "*",
            Tok::Assign => "=",
            Tok::ColonAssign => ":=",
            Tok::Pipe => "|",
            Tok::OrOr => "||",
            Tok::AndAnd => "&&",
            Tok::Bang => "!",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Slash => "/",
            Tok::Arrow => "->",
            Tok::Ident(_) => "identifier",
            Tok::Int(_) => "integer",
            Tok::Str(_) => "string",
            Tok::Eof => "end of input",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn span(&self) -> Span {
        Span { line: self.line, col: self.col }
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') => {
                    let mut ahead = self.chars.clone();
                    ahead.next();
                    match ahead.next() {
                        Some('/') => {
                            while let Some(c) = self.bump() {
                                if c == '\n' {
                                    break;
                                }
                            }
                        }
                        Some('*') => {
                            let start = self.span();
                            self.bump();
                            self.bump();
                            let mut prev = '\0';
                            loop {
                                match self.bump() {
                                    Some('/') if prev == '*' => break,
                                    Some(c) => prev = c,
                                    None => return Err(ParseError::at(start, "unterminated block comment")),
                                }
                            }
                        }
                        _ => return Ok(()),
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn string(&mut self, start: Span) -> Result<Tok, ParseError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(ParseError::at(start, "unterminated string literal")),
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => {
                    let esc = self.span();
                    match self.bump() {
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some('r') => s.push('\r'),
                        _ => return Err(ParseError::at(esc, "invalid escape sequence")),
                    }
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        self.skip_trivia()?;
        let span = self.span();
        let Some(c) = self.bump() else {
            return Ok(Token { tok: Tok::Eof, span });
        };
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '*' => Tok::Star,
            '+' => Tok::Plus,
            '/' => Tok::Slash,
            '.' => {
                let mut ahead = self.chars.clone();
                if ahead.next() == Some('.') && ahead.next() == Some('.') {
                    self.bump();
                    self.bump();
                    Tok::Ellipsis
                } else {
                    Tok::Dot
                }
            }
            '=' => {
                if self.eat('=') {
                    Tok::EqEq
                } else {
                    Tok::Assign
                }
            }
            ':' => {
                if self.eat('=') {
                    Tok::ColonAssign
                } else {
                    return Err(ParseError::at(span, "unexpected character `:`").expecting(&[":="]));
                }
            }
            '|' => {
                if self.eat('|') {
                    Tok::OrOr
                } else {
                    Tok::Pipe
                }
            }
            '&' => {
                if self.eat('&') {
                    Tok::AndAnd
                } else {
                    return Err(ParseError::at(span, "unexpected character `&`").expecting(&["&&"]));
                }
            }
            '!' => {
                if self.eat('=') {
                    Tok::Ne
                } else {
                    Tok::Bang
                }
            }
            '<' => {
                if self.eat('=') {
                    Tok::Le
                } else {
                    Tok::Lt
                }
            }
            '>' => {
                if self.eat('=') {
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            '-' => {
                if self.eat('>') {
                    Tok::Arrow
                } else {
                    Tok::Minus
                }
            }
            '"' => self.string(span)?,
            c if c.is_ascii_digit() => {
                let mut digits = String::from(c);
                while let Some(d) = self.peek().filter(char::is_ascii_digit) {
                    digits.push(d);
                    self.bump();
                }
                match digits.parse::<i64>() {
                    Ok(i) => Tok::Int(i),
                    Err(_) => return Err(ParseError::at(span, "integer literal out of range")),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::from(c);
                while let Some(d) = self.peek().filter(|d| d.is_ascii_alphanumeric() || *d == '_') {
                    word.push(d);
                    self.bump();
                }
                Tok::Ident(word)
            }
            other => return Err(ParseError::at(span, format!("unexpected character {other:?}"))),
        };
        Ok(Token { tok, span })
    }
}

/// Splits `src` into tokens, ending with `Eof`.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer { chars: src.chars().peekable(), line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let done = t.tok == Tok::Eof;
        out.push(t);
        if done {
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn maximal_munch() {
        assert_eq!(
            toks("a|b||c->d-e ... . := == != <= >="),
            vec![
                Tok::Ident("a".into()),
                Tok::Pipe,
                Tok::Ident("b".into()),
                Tok::OrOr,
                Tok::Ident("c".into()),
                Tok::Arrow,
                Tok::Ident("d".into()),
                Tok::Minus,
                Tok::Ident("e".into()),
                Tok::Ellipsis,
                Tok::Dot,
                Tok::ColonAssign,
                Tok::EqEq,
                Tok::Ne,
                Tok::Le,
                Tok::Ge,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_positions() {
        let t = tokenize("// hi\n  /* x\n y */ foo").unwrap();
        assert_eq!(t[0].tok, Tok::Ident("foo".into()));
        assert_eq!(t[0].span, Span { line: 3, col: 7 });
    }

    #[test]
    fn lexical_errors() {
        assert!(tokenize("\"abc").is_err());
        assert!(tokenize("/* never closed").is_err());
        assert!(tokenize("99999999999999999999").is_err());
        assert!(tokenize("a & b").is_err());
        assert!(tokenize("#").is_err());
    }
}
