//! Tokenizer for the surface syntax. Newlines terminate statements except
//! inside parentheses, brackets, and braces.

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    // keywords
    Function,
    End,
    If,
    Elseif,
    Else,
    While,
    For,
    In,
    Return,
    TypeKw,
    Abstract,
    Bitstype,
    QuoteKw,
    Global,
    True,
    False,
    // punctuation and operators
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Newline,
    Dot,
    Dots,     // ...
    Arrow,    // ->
    ColonCol, // ::
    Colon,
    Subtype, // <:
    At,      // @
    Assign,  // =
    AndAnd,
    OrOr,
    Op(String), // + - * / ^ % == != < <= > >= !
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug)]
pub struct ParseError {
    pub msg: String,
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "syntax error at {}:{}: {}", self.line, self.col, self.msg)
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut depth: i32 = 0; // newline suppression inside (), [], {}
    macro_rules! push {
        ($t:expr, $l:expr, $c:expr) => {
            out.push(Token { tok: $t, line: $l, col: $c })
        };
    }
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        match c {
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                if depth == 0 {
                    let after_newline =
                        matches!(out.last(), Some(Token { tok: Tok::Newline, .. }) | None);
                    if !after_newline {
                        push!(Tok::Newline, l0, c0);
                    }
                }
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '"' => {
                i += 1;
                col += 1;
                let mut s = String::new();
                loop {
                    if i >= chars.len() {
                        return Err(ParseError {
                            msg: "unterminated string literal".into(),
                            line: l0,
                            col: c0,
                        });
                    }
                    match chars[i] {
                        '"' => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        '\\' => {
                            i += 1;
                            col += 1;
                            let e = chars.get(i).copied().unwrap_or('"');
                            s.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                '\\' => '\\',
                                '"' => '"',
                                other => other,
                            });
                            i += 1;
                            col += 1;
                        }
                        ch => {
                            if ch == '\n' {
                                line += 1;
                                col = 1;
                            }
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                push!(Tok::Str(s), l0, c0);
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut is_float = false;
                if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                    is_float = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        is_float = true;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                col += (i - start) as u32;
                if is_float {
                    let x: f64 = text.parse().map_err(|_| ParseError {
                        msg: format!("bad number {text}"),
                        line: l0,
                        col: c0,
                    })?;
                    push!(Tok::Float(x), l0, c0);
                } else {
                    let n: i64 = text.parse().map_err(|_| ParseError {
                        msg: format!("integer literal {text} too large"),
                        line: l0,
                        col: c0,
                    })?;
                    push!(Tok::Int(n), l0, c0);
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '!')
                {
                    // `!` is legal inside identifiers only as a trailing
                    // character of function names like `isempty!`; stop if
                    // the next char cannot continue an identifier.
                    if chars[i] == '!'
                        && !(i + 1 < chars.len()
                            && (chars[i + 1].is_alphanumeric() || chars[i + 1] == '_'))
                    {
                        break;
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += (i - start) as u32;
                let tok = match text.as_str() {
                    "function" => Tok::Function,
                    "end" => Tok::End,
                    "if" => Tok::If,
                    "elseif" => Tok::Elseif,
                    "else" => Tok::Else,
                    "while" => Tok::While,
                    "for" => Tok::For,
                    "in" => Tok::In,
                    "return" => Tok::Return,
                    "type" => Tok::TypeKw,
                    "abstract" => Tok::Abstract,
                    "bitstype" => Tok::Bitstype,
                    "quote" => Tok::QuoteKw,
                    "global" => Tok::Global,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(text),
                };
                push!(tok, l0, c0);
            }
            '(' | '[' | '{' => {
                depth += 1;
                push!(
                    match c {
                        '(' => Tok::LParen,
                        '[' => Tok::LBracket,
                        _ => Tok::LBrace,
                    },
                    l0,
                    c0
                );
                i += 1;
                col += 1;
            }
            ')' | ']' | '}' => {
                depth -= 1;
                push!(
                    match c {
                        ')' => Tok::RParen,
                        ']' => Tok::RBracket,
                        _ => Tok::RBrace,
                    },
                    l0,
                    c0
                );
                i += 1;
                col += 1;
            }
            ',' => {
                push!(Tok::Comma, l0, c0);
                i += 1;
                col += 1;
            }
            ';' => {
                push!(Tok::Semi, l0, c0);
                i += 1;
                col += 1;
            }
            '.' => {
                if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') {
                    push!(Tok::Dots, l0, c0);
                    i += 3;
                    col += 3;
                } else {
                    push!(Tok::Dot, l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            ':' => {
                if chars.get(i + 1) == Some(&':') {
                    push!(Tok::ColonCol, l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Colon, l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    push!(Tok::Arrow, l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Op("-".into()), l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            '<' => {
                if chars.get(i + 1) == Some(&':') {
                    push!(Tok::Subtype, l0, c0);
                    i += 2;
                    col += 2;
                } else if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Op("<=".into()), l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Op("<".into()), l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Op(">=".into()), l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Op(">".into()), l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            '=' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Op("==".into()), l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Assign, l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Op("!=".into()), l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Op("!".into()), l0, c0);
                    i += 1;
                    col += 1;
                }
            }
            '&' => {
                if chars.get(i + 1) == Some(&'&') {
                    push!(Tok::AndAnd, l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    return Err(ParseError {
                        msg: "unsupported construct: bitwise &".into(),
                        line: l0,
                        col: c0,
                    });
                }
            }
            '|' => {
                if chars.get(i + 1) == Some(&'|') {
                    push!(Tok::OrOr, l0, c0);
                    i += 2;
                    col += 2;
                } else {
                    return Err(ParseError {
                        msg: "unsupported construct: bitwise |".into(),
                        line: l0,
                        col: c0,
                    });
                }
            }
            '@' => {
                push!(Tok::At, l0, c0);
                i += 1;
                col += 1;
            }
            '+' | '*' | '/' | '^' | '%' => {
                push!(Tok::Op(c.to_string()), l0, c0);
                i += 1;
                col += 1;
            }
            other => {
                return Err(ParseError {
                    msg: format!("unexpected character {other:?}"),
                    line: l0,
                    col: c0,
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
