use super::{ExprError, Func, Node, ScalarFieldExpr};

/// Exponents that are integers of at most this magnitude are expanded into
/// repeated multiplication.
const MAX_INT_POWER: f64 = 64.0;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
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
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let t = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ExprError::Syntax {
                        offset: start,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((t, start));
            i += c.len_utf8();
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    names: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(match self.unary()? {
                Node::Const(c) => Node::Const(-c),
                other => Node::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        self.bump();
        let exp = self.unary()?;
        Ok(match exp {
            Node::Const(c) if c.fract() == 0.0 && c.abs() <= MAX_INT_POWER => Node::PowInt(Box::new(base), c as i32),
            e => Node::Pow(Box::new(base), Box::new(e)),
        })
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                if self.bump() != Tok::RParen {
                    return Err(ExprError::Syntax {
                        offset: self.toks[self.pos.saturating_sub(1)].1,
                        message: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    if self.bump() != Tok::LParen {
                        return Err(ExprError::Syntax {
                            offset,
                            message: format!("`{name}` must be followed by `(`"),
                        });
                    }
                    let arg = self.expr()?;
                    if self.bump() != Tok::RParen {
                        return self.syntax("expected `)`");
                    }
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                self.variable(name, offset)
            }
            Tok::End => Err(ExprError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
            t => Err(ExprError::Syntax {
                offset,
                message: format!("unexpected token {t:?}"),
            }),
        }
    }

    fn variable(&self, name: String, offset: usize) -> Result<Node, ExprError> {
        if let Some(i) = self.names.iter().position(|n| *n == name) {
            return Ok(Node::Var(i));
        }
        if let Some(digits) = name.strip_prefix('u') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| ExprError::UnknownIdentifier {
                    name: name.clone(),
                    offset,
                })?;
                if index == 0 || index > self.dim {
                    return Err(ExprError::DimensionExceeded { index, dim: self.dim });
                }
                return Ok(Node::Var(index - 1));
            }
        }
        Err(ExprError::UnknownIdentifier { name, offset })
    }
}

/// Parses `src` as a scalar field on an m-dimensional chart with variables
/// `u1..um`.
pub fn parse(src: &str, dim: usize) -> Result<ScalarFieldExpr, ExprError> {
    parse_with_names(src, dim, &[])
}

/// Like [`parse`], additionally accepting `names[i]` as an alias of `u{i+1}`.
pub fn parse_with_names(src: &str, dim: usize, names: &[&str]) -> Result<ScalarFieldExpr, ExprError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        dim,
        names,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return p.syntax("trailing input");
    }
    Ok(ScalarFieldExpr::from_node(root, dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_error_reports_offset() {
        match parse("u1 + * u2", 2) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("(u1", 1), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("u1 u1", 1), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("", 1), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("u1 # 2", 1), Err(ExprError::Syntax { offset: 3, .. })));
    }

    #[test]
    fn unknown_identifier_and_dimension() {
        assert_eq!(
            parse("foo + 1", 3),
            Err(ExprError::UnknownIdentifier {
                name: "foo".into(),
                offset: 0
            })
        );
        assert_eq!(parse("u8", 7), Err(ExprError::DimensionExceeded { index: 8, dim: 7 }));
        assert!(matches!(
            parse("u0", 7),
            Err(ExprError::DimensionExceeded { index: 0, .. })
        ));
    }

    #[test]
    fn aliases_resolve_to_coordinates() {
        let e = parse_with_names("x1*t2 + u1", 3, &["x1", "x2", "t2"]).unwrap();
        assert_eq!(e.eval(&[2.0, 5.0, 3.0]).unwrap(), 8.0);
    }

    #[test]
    fn scientific_notation() {
        let e = parse("1.5e-3 + 2E2 + .5", 1).unwrap();
        assert!((e.eval(&[0.0]).unwrap() - 200.5015).abs() < 1e-12);
    }

    #[test]
    fn integer_exponent_is_expanded() {
        let e = parse("u1^3", 1).unwrap();
        assert!(matches!(e.root(), Node::PowInt(_, 3)));
        // Integer powers are defined for negative bases.
        assert_eq!(e.eval(&[-2.0]).unwrap(), -8.0);
        assert_eq!(e.grad(&[-2.0]).unwrap(), vec![12.0]);
    }
}
