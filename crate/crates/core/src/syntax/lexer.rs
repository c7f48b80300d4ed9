use super::{Error, Pos};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    // keywords
    Val,
    Type,
    Invariant,
    Forall,
    Exists,
    True,
    False,
    In,
    // punctuation
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Colon,
    ColonColon,
    Assign,
    FatArrow,
    Implies,
    Iff,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Bang,
    AndAnd,
    OrOr,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(i) => format!("integer `{i}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::Val => "val",
            Tok::Type => "type",
            Tok::Invariant => "invariant",
            Tok::Forall => "forall",
            Tok::Exists => "exists",
            Tok::True => "true",
            Tok::False => "false",
            Tok::In => "in",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::Colon => ":",
            Tok::ColonColon => "::",
            Tok::Assign => "=",
            Tok::FatArrow => "=>",
            Tok::Implies => "==>",
            Tok::Iff => "<==>",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Bang => "!",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Ident(_) | Tok::Int(_) | Tok::Str(_) | Tok::Eof => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const PUNCT: &[(&str, Tok)] = &[
    ("<==>", Tok::Iff),
    ("==>", Tok::Implies),
    ("::", Tok::ColonColon),
    ("=>", Tok::FatArrow),
    ("==", Tok::EqEq),
    ("!=", Tok::NotEq),
    ("<=", Tok::Le),
    (">=", Tok::Ge),
    ("&&", Tok::AndAnd),
    ("||", Tok::OrOr),
    ("(", Tok::LParen),
    (")", Tok::RParen),
    ("[", Tok::LBracket),
    ("]", Tok::RBracket),
    ("{", Tok::LBrace),
    ("}", Tok::RBrace),
    (",", Tok::Comma),
    (".", Tok::Dot),
    (":", Tok::Colon),
    ("=", Tok::Assign),
    ("<", Tok::Lt),
    (">", Tok::Gt),
    ("+", Tok::Plus),
    ("-", Tok::Minus),
    ("*", Tok::Star),
    ("/", Tok::Slash),
    ("%", Tok::Percent),
    ("!", Tok::Bang),
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, Error> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        let pos = Pos::new(line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let tok = match word.as_str() {
                "val" => Tok::Val,
                "type" => Tok::Type,
                "invariant" => Tok::Invariant,
                "forall" => Tok::Forall,
                "exists" => Tok::Exists,
                "true" => Tok::True,
                "false" => Tok::False,
                "in" => Tok::In,
                _ => Tok::Ident(word),
            };
            out.push(Token { tok, pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let value = digits
                .parse::<i64>()
                .map_err(|_| Error::parse(pos, format!("integer literal `{digits}` out of range")))?;
            out.push(Token {
                tok: Tok::Int(value),
                pos,
            });
            continue;
        }
        if c == '"' {
            advance(&mut i, &mut line, &mut col, 1);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(Error::parse(pos, "unterminated string literal")),
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, 1);
                        break;
                    }
                    Some('\\') => {
                        let escaped = match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(Error::parse(Pos::new(line, col), "invalid escape")),
                        };
                        s.push(escaped);
                        advance(&mut i, &mut line, &mut col, 2);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, 1);
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        let rest = &chars[i..];
        let matched = PUNCT.iter().find(|(text, _)| {
            let t: Vec<char> = text.chars().collect();
            rest.len() >= t.len() && rest[..t.len()] == t[..]
        });
        match matched {
            Some((text, tok)) => {
                out.push(Token {
                    tok: tok.clone(),
                    pos,
                });
                advance(&mut i, &mut line, &mut col, text.len());
            }
            None => return Err(Error::parse(pos, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos::new(line, col),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn longest_operator_wins() {
        assert_eq!(
            toks("a <==> b ==> c => d == e"),
            vec![
                Tok::Ident("a".into()),
                Tok::Iff,
                Tok::Ident("b".into()),
                Tok::Implies,
                Tok::Ident("c".into()),
                Tok::FatArrow,
                Tok::Ident("d".into()),
                Tok::EqEq,
                Tok::Ident("e".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_positions() {
        let t = tokenize("// header\n  val x").unwrap();
        assert_eq!(t[0].tok, Tok::Val);
        assert_eq!(t[0].pos, Pos::new(2, 3));
        assert_eq!(t[1].pos.col, 7);
    }

    #[test]
    fn bad_character() {
        let err = tokenize("val x = #").unwrap_err();
        assert_eq!(err.to_string(), "1:9: unexpected character `#`");
    }
}
