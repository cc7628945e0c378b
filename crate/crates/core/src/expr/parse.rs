//! Recursive-descent parser for coordinate expressions.
//!
//! Precedence, loosest first: `+ -` then `* /` then unary minus then `^`.
//! Binary operators associate to the left. The exponent of `^` must be a
//! positive integer literal.

use super::Expr;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    EmptyInput,
    UnexpectedEnd,
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnknownIdentifier(String),
    VariableOutOfRange { index: usize, n: usize },
    BadExponent(String),
    BadNumber(String),
    ArityMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the coordinate string.
    pub offset: usize,
    /// Coordinate index (zero-based) when parsing a whole field.
    pub coordinate: Option<usize>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ParseErrorKind::*;
        if let Some(c) = self.coordinate {
            write!(f, "coordinate {}: ", c + 1)?;
        }
        match &self.kind {
            EmptyInput => write!(f, "empty expression"),
            UnexpectedEnd => write!(
                f,
                "syntax error at offset {}: unexpected end of input",
                self.offset
            ),
            UnexpectedChar(c) => write!(
                f,
                "syntax error at offset {}: unexpected character '{c}'",
                self.offset
            ),
            UnexpectedToken(t) => write!(
                f,
                "syntax error at offset {}: unexpected '{t}'",
                self.offset
            ),
            UnknownIdentifier(s) => write!(f, "unknown identifier '{s}' at offset {}", self.offset),
            VariableOutOfRange { index, n } => write!(
                f,
                "variable x{index} at offset {} is out of range for dimension {n}",
                self.offset
            ),
            BadExponent(s) => write!(
                f,
                "exponent at offset {} must be a positive integer literal, found '{s}'",
                self.offset
            ),
            BadNumber(s) => write!(f, "malformed number '{s}' at offset {}", self.offset),
            ArityMismatch { expected, got } => {
                write!(f, "field has {got} coordinates, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Num(_, s) | Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::Caret => "^".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::End => "<end>".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |kind, offset| ParseError {
        kind,
        offset,
        coordinate: None,
    };
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let t = match c {
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'^' => Tok::Caret,
                    b'(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                out.push((t, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| err(ParseErrorKind::BadNumber(s.to_string()), start))?;
                out.push((Tok::Num(v, s.to_string()), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(err(ParseErrorKind::UnexpectedChar(ch), i));
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, kind: ParseErrorKind, offset: usize) -> ParseError {
        ParseError {
            kind,
            offset,
            coordinate: None,
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Tok::End => self.error(ParseErrorKind::UnexpectedEnd, self.offset()),
            t => self.error(ParseErrorKind::UnexpectedToken(t.text()), self.offset()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let (tok, off) = self.bump();
            let k = match &tok {
                Tok::Num(v, s) => {
                    if v.fract() == 0.0 && *v >= 1.0 && *v <= u32::MAX as f64 && !s.contains('.') {
                        *v as u32
                    } else {
                        return Err(self.error(ParseErrorKind::BadExponent(s.clone()), off));
                    }
                }
                Tok::End => return Err(self.error(ParseErrorKind::UnexpectedEnd, off)),
                t => return Err(self.error(ParseErrorKind::BadExponent(t.text()), off)),
            };
            base = Expr::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let off = self.offset();
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected());
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = function(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.unexpected());
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.unexpected());
                    }
                    self.bump();
                    return Ok(func(Box::new(arg)));
                }
                self.variable(&name, off).map(Expr::Var)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn variable(&self, name: &str, off: usize) -> Result<usize, ParseError> {
        let alias = match name {
            "x" => Some(1),
            "y" => Some(2),
            "z" => Some(3),
            _ => None,
        };
        let index = match alias {
            Some(i) if self.n <= 3 => i,
            Some(_) => {
                return Err(self.error(ParseErrorKind::UnknownIdentifier(name.into()), off));
            }
            None => match name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                Some(i) if !name[1..].starts_with('0') => i,
                _ => return Err(self.error(ParseErrorKind::UnknownIdentifier(name.into()), off)),
            },
        };
        if index == 0 || index > self.n {
            return Err(self.error(ParseErrorKind::VariableOutOfRange { index, n: self.n }, off));
        }
        Ok(index - 1)
    }
}

fn function(name: &str) -> Option<fn(Box<Expr>) -> Expr> {
    match name {
        "sin" => Some(Expr::Sin),
        "cos" => Some(Expr::Cos),
        "exp" => Some(Expr::Exp),
        _ => None,
    }
}

/// Parse one coordinate expression over variables `x1..xn`.
pub fn parse_expr(text: &str, n: usize) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::EmptyInput,
            offset: 0,
            coordinate: None,
        });
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, n };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(e)
}

/// Parse the `n` coordinate expressions of a vector field.
pub fn parse_field<S: AsRef<str>>(coords: &[S], n: usize) -> Result<Vec<Expr>, ParseError> {
    if coords.len() != n {
        return Err(ParseError {
            kind: ParseErrorKind::ArityMismatch {
                expected: n,
                got: coords.len(),
            },
            offset: 0,
            coordinate: None,
        });
    }
    coords
        .iter()
        .enumerate()
        .map(|(i, s)| {
            parse_expr(s.as_ref(), n).map_err(|mut e| {
                e.coordinate = Some(i);
                e
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Expr::*;

    #[test]
    fn working_example_drift() {
        let e = parse_expr("1 + y^2", 2).unwrap();
        assert_eq!(
            e,
            Add(Box::new(Const(1.0)), Box::new(Pow(Box::new(Var(1)), 2)))
        );
        assert_eq!(parse_expr("0", 2).unwrap(), Const(0.0));
    }

    #[test]
    fn unbalanced_paren_offset() {
        let err = parse_expr("(x +", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(err.offset, 4);
        assert!(err.to_string().contains("offset 4"));
    }

    #[test]
    fn precedence_and_associativity() {
        let x = [2.0, 3.0, 5.0];
        let v = |s: &str| parse_expr(s, 3).unwrap().eval(&x).unwrap();
        assert_eq!(v("-x^2"), -4.0);
        assert_eq!(v("x - y - z"), -6.0);
        assert_eq!(v("z / x / y"), 5.0 / 6.0);
        assert_eq!(v("x^2^3"), 64.0);
        assert_eq!(v("1 + 2*x3"), 11.0);
        assert_eq!(v("2*-x"), -4.0);
        assert_eq!(v("sin(0)+cos(0)+exp(0)"), 2.0);
        assert_eq!(v("1.5e1 + x"), 17.0);
    }

    #[test]
    fn identifier_errors() {
        let e = parse_expr("x + w", 2).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("w".into()));
        assert_eq!(e.offset, 4);
        let e = parse_expr("x3", 2).unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::VariableOutOfRange { index: 3, n: 2 }
        );
        let e = parse_expr("z", 2).unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::VariableOutOfRange { index: 3, n: 2 }
        );
        // Aliases only for n <= 3.
        assert!(matches!(
            parse_expr("x", 4).unwrap_err().kind,
            ParseErrorKind::UnknownIdentifier(_)
        ));
        assert_eq!(parse_expr("x4", 4).unwrap(), Var(3));
        assert!(parse_expr("x0", 4).is_err());
    }

    #[test]
    fn exponent_rules() {
        assert!(matches!(
            parse_expr("x^-1", 1).unwrap_err().kind,
            ParseErrorKind::BadExponent(_)
        ));
        assert!(matches!(
            parse_expr("x^0", 1).unwrap_err().kind,
            ParseErrorKind::BadExponent(_)
        ));
        assert!(matches!(
            parse_expr("x^1.5", 1).unwrap_err().kind,
            ParseErrorKind::BadExponent(_)
        ));
        assert!(matches!(
            parse_expr("x^y", 2).unwrap_err().kind,
            ParseErrorKind::BadExponent(_)
        ));
    }

    #[test]
    fn misc_syntax_errors() {
        assert_eq!(
            parse_expr("  ", 1).unwrap_err().kind,
            ParseErrorKind::EmptyInput
        );
        let e = parse_expr("x $ 1", 1).unwrap_err();
        assert_eq!((e.kind, e.offset), (ParseErrorKind::UnexpectedChar('$'), 2));
        let e = parse_expr("x )", 1).unwrap_err();
        assert_eq!(e.offset, 2);
        assert!(parse_expr("sin x", 1).is_err());
        assert!(parse_expr("(x))", 1).is_err());
    }

    #[test]
    fn field_arity() {
        let f = parse_field(&["1+y^2", "0"], 2).unwrap();
        assert_eq!(f.len(), 2);
        let e = parse_field(&["0"], 2).unwrap_err();
        assert_eq!(
            e.kind,
            ParseErrorKind::ArityMismatch {
                expected: 2,
                got: 1
            }
        );
        let e = parse_field(&["0", "x +"], 2).unwrap_err();
        assert_eq!(e.coordinate, Some(1));
    }
}
