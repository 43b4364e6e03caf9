use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Nat(u64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    PathSep,
    Semi,
    Dot,
    Assign,
    Op(&'static str),
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Nat(n) => format!("`{n}`"),
            TokenKind::Str(s) => format!("{s:?}"),
            TokenKind::LBrace => "`{`".into(),
            TokenKind::RBrace => "`}`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::LBracket => "`[`".into(),
            TokenKind::RBracket => "`]`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Colon => "`:`".into(),
            TokenKind::PathSep => "`::`".into(),
            TokenKind::Semi => "`;`".into(),
            TokenKind::Dot => "`.`".into(),
            TokenKind::Assign => "`=`".into(),
            TokenKind::Op(op) => format!("`{op}`"),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
}

pub fn tokenize(src: &str) -> (Vec<Token>, Vec<ParseError>) {
    let mut tokens = Vec::new();
    let mut errors = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars[i];
            i += 1;
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let peek = chars.get(i + 1).copied();
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '-' && peek == Some('-') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let push = |tokens: &mut Vec<Token>, kind| tokens.push(Token { kind, line: tl, column: tc });
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(bump!());
            }
            push(&mut tokens, TokenKind::Ident(s));
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(bump!());
            }
            match s.parse::<u64>() {
                Ok(n) => push(&mut tokens, TokenKind::Nat(n)),
                Err(_) => errors.push(ParseError::new(tl, tc, format!("number `{s}` is too large"), "a natural number")),
            }
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            let mut closed = false;
            while i < chars.len() {
                let ch = bump!();
                match ch {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\n' => break,
                    '\\' if i < chars.len() => {
                        let esc = bump!();
                        match esc {
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            '"' => s.push('"'),
                            '\\' => s.push('\\'),
                            other => {
                                errors.push(ParseError::new(
                                    line,
                                    col - 1,
                                    format!("unknown escape `\\{other}`"),
                                    "one of \\n \\t \\\" \\\\",
                                ));
                            }
                        }
                    }
                    other => s.push(other),
                }
            }
            if closed {
                push(&mut tokens, TokenKind::Str(s));
            } else {
                errors.push(ParseError::new(tl, tc, "unterminated string literal", "closing `\"`"));
            }
            continue;
        }
        let two: Option<&'static str> = match (c, peek) {
            ('=', Some('=')) => Some("=="),
            ('!', Some('=')) => Some("!="),
            ('<', Some('=')) => Some("<="),
            ('>', Some('=')) => Some(">="),
            (':', Some(':')) => Some("::"),
            _ => None,
        };
        if let Some(op) = two {
            bump!();
            bump!();
            let kind = if op == "::" { TokenKind::PathSep } else { TokenKind::Op(op) };
            push(&mut tokens, kind);
            continue;
        }
        let kind = match c {
            '{' => Some(TokenKind::LBrace),
            '}' => Some(TokenKind::RBrace),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            '[' => Some(TokenKind::LBracket),
            ']' => Some(TokenKind::RBracket),
            ',' => Some(TokenKind::Comma),
            ':' => Some(TokenKind::Colon),
            ';' => Some(TokenKind::Semi),
            '.' => Some(TokenKind::Dot),
            '=' => Some(TokenKind::Assign),
            '<' => Some(TokenKind::Op("<")),
            '>' => Some(TokenKind::Op(">")),
            _ => None,
        };
        bump!();
        match kind {
            Some(kind) => push(&mut tokens, kind),
            None => errors.push(ParseError::new(tl, tc, format!("unexpected character `{c}`"), "a token")),
        }
    }
    tokens.push(Token { kind: TokenKind::Eof, line, column: col });
    (tokens, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based() {
        let (toks, errs) = tokenize("enum A {\n  x -- c\n}");
        assert!(errs.is_empty());
        assert_eq!((toks[0].line, toks[0].column), (1, 1));
        assert_eq!(toks[3].kind, TokenKind::Ident("x".into()));
        assert_eq!((toks[3].line, toks[3].column), (2, 3));
        assert_eq!(toks.last().unwrap().kind, TokenKind::Eof);
    }

    #[test]
    fn operators_and_strings() {
        let (toks, errs) = tokenize(r#"a <= "I'm \"PG\" 13" :: !="#);
        assert!(errs.is_empty());
        let kinds: Vec<_> = toks.into_iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TokenKind::Ident("a".into()),
                TokenKind::Op("<="),
                TokenKind::Str("I'm \"PG\" 13".into()),
                TokenKind::PathSep,
                TokenKind::Op("!="),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn unterminated_string_reported() {
        let (_, errs) = tokenize("\"abc");
        assert_eq!(errs.len(), 1);
        assert_eq!((errs[0].line, errs[0].column), (1, 1));
    }
}
