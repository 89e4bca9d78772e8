//! Infix parameter expressions: `$k` inputs, `%k` shared definitions,
//! literals, `+ - * /`, unary minus and `sqrt sin cos acos square atan2`.

use qtape::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Byte offset into the expression text.
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Input(usize),
    Def(usize),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos, msg: String| Err(ParseError { pos, msg });
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            i += 1;
            while i < bytes.len() {
                let d = bytes[i] as char;
                let exp_sign = (d == '+' || d == '-') && matches!(bytes[i - 1], b'e' | b'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            match src[start..i].parse::<f64>() {
                Ok(v) => out.push((start, Tok::Num(v))),
                Err(_) => return err(start, format!("malformed number `{}`", &src[start..i])),
            }
        } else if c == '$' || c == '%' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let Ok(k) = src[start + 1..i].parse::<usize>() else {
                return err(start, format!("`{c}` must be followed by an index"));
            };
            out.push((start, if c == '$' { Tok::Input(k) } else { Tok::Def(k) }));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/(),".contains(c) {
            out.push((start, Tok::Op(c)));
            i += 1;
        } else {
            return err(start, format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    num_inputs: usize,
    defs: &'a [Expr],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos: self.pos(), msg: msg.into() })
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if self.peek() == Some(&Tok::Op(op)) {
            self.at += 1;
            Ok(())
        } else {
            self.fail(format!("expected `{op}`"))
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.at += 1;
            let rhs = self.product()?;
            lhs = if op == '+' { lhs + rhs } else { lhs - rhs };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { lhs * rhs } else { lhs / rhs };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() != Some(&Tok::Op('-')) {
            return self.atom();
        }
        self.at += 1;
        // A minus glued to a literal is a negative literal, not a negation.
        let minus_at = self.toks[self.at - 1].0;
        if let Some((p, tok)) = self.toks.get(self.at) {
            if *p == minus_at + 1 {
                match tok {
                    Tok::Num(v) => {
                        let v = -*v;
                        self.at += 1;
                        return Ok(Expr::constant(v));
                    }
                    Tok::Ident(name) if name == "inf" => {
                        self.at += 1;
                        return Ok(Expr::constant(f64::NEG_INFINITY));
                    }
                    _ => {}
                }
            }
        }
        Ok(-self.unary()?)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let Some((pos, tok)) = self.toks.get(self.at).cloned() else {
            return self.fail("unexpected end of expression");
        };
        self.at += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::constant(v)),
            Tok::Input(k) if k < self.num_inputs => Ok(Expr::input(k)),
            Tok::Input(k) => Err(ParseError { pos, msg: format!("input ${k} out of range ({} inputs)", self.num_inputs) }),
            Tok::Def(k) => match self.defs.get(k) {
                Some(e) => Ok(e.clone()),
                None => Err(ParseError { pos, msg: format!("definition %{k} is not defined yet") }),
            },
            Tok::Op('(') => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Op(c) => Err(ParseError { pos, msg: format!("unexpected `{c}`") }),
            Tok::Ident(name) => {
                match name.as_str() {
                    "pi" => return Ok(Expr::constant(std::f64::consts::PI)),
                    "inf" => return Ok(Expr::constant(f64::INFINITY)),
                    "NaN" => return Ok(Expr::constant(f64::NAN)),
                    _ => {}
                }
                let arity = match name.as_str() {
                    "sqrt" | "sin" | "cos" | "acos" | "square" => 1,
                    "atan2" => 2,
                    _ => return Err(ParseError { pos, msg: format!("unknown function `{name}`") }),
                };
                self.expect('(')?;
                let a = self.sum()?;
                let b = if arity == 2 {
                    self.expect(',')?;
                    Some(self.sum()?)
                } else {
                    None
                };
                self.expect(')')?;
                Ok(match (name.as_str(), b) {
                    ("sqrt", _) => a.sqrt(),
                    ("sin", _) => a.sin(),
                    ("cos", _) => a.cos(),
                    ("acos", _) => a.acos(),
                    ("square", _) => a.square(),
                    (_, Some(x)) => a.atan2(&x),
                    _ => unreachable!("arity checked above"),
                })
            }
        }
    }
}

/// Parses `src` with inputs `$0..$num_inputs` and definitions `%0..`.
pub fn parse_expr(src: &str, num_inputs: usize, defs: &[Expr]) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0, end: src.len(), num_inputs, defs };
    let e = p.sum()?;
    if p.at < p.toks.len() {
        return p.fail("unexpected trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Expr {
        parse_expr(s, 3, &[]).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("1 - 2 - 3").evaluate(&[]).unwrap(), -4.0);
        assert_eq!(parse("8 / 2 / 2").evaluate(&[]).unwrap(), 2.0);
        assert_eq!(parse("1 + 2 * 3").evaluate(&[]).unwrap(), 7.0);
        assert_eq!(parse("-$0 * $1").evaluate(&[2.0, 3.0]).unwrap(), -6.0);
        assert_eq!(parse("atan2(1, 1) * 4").evaluate(&[]).unwrap(), std::f64::consts::PI);
    }

    #[test]
    fn minus_literals_versus_negation() {
        assert_eq!(parse("-0.5"), Expr::constant(-0.5));
        assert_eq!(parse("-(0.5)"), -Expr::constant(0.5));
        assert_eq!(parse("$0 - -0.5"), Expr::input(0) - Expr::constant(-0.5));
        assert_eq!(parse("- 0.5"), -Expr::constant(0.5));
    }

    #[test]
    fn display_round_trips() {
        let x = Expr::input(0);
        let y = Expr::input(1);
        let cases = [
            (&x - &(&y - 1.0)) * -2.0,
            -(-(&x * &y)),
            (x.sin().square() + 0.25).sqrt() / (y.cos() - Expr::constant(-0.0)),
            y.atan2(&(-&x)).acos(),
            -Expr::constant(-3.5e-9),
        ];
        for e in cases {
            assert_eq!(parse(&e.to_string()), e, "{e}");
        }
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_expr("$0 + foo($1)", 2, &[]).unwrap_err();
        assert_eq!(e.pos, 5);
        assert!(e.msg.contains("foo"));
        assert_eq!(parse_expr("$4", 2, &[]).unwrap_err().pos, 0);
        assert_eq!(parse_expr("($0", 1, &[]).unwrap_err().pos, 3);
        assert!(parse_expr("%0", 1, &[]).is_err());
        assert!(parse_expr("1 2", 1, &[]).is_err());
        assert!(parse_expr("", 1, &[]).is_err());
    }
}
