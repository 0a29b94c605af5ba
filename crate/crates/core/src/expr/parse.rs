//! Recursive-descent parser for the infix expression grammar.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := ("-" | "+") unary | power
//! power   := primary ("^" exponent)?
//! exponent:= ["-" | "+"] INT | "(" ["-" | "+"] INT ")"
//! primary := NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")"
//! ```

use alloc::string::{String, ToString};

use super::{Chart, Expr, Func, Num, Rational};
use crate::error::{Error, Result};

const FUNCS: [(&str, Func); 5] = [
    ("sin", Func::Sin),
    ("cos", Func::Cos),
    ("exp", Func::Exp),
    ("ln", Func::Ln),
    ("log", Func::Ln),
];

pub(crate) fn is_reserved(name: &str) -> bool {
    FUNCS.iter().any(|(n, _)| *n == name)
}

/// Parse `text` against the coordinates of `chart`.
pub fn parse(text: &str, chart: &Chart) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        chart,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    chart: &'a Chart,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = acc.add(&self.term()?);
            } else if self.eat(b'-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = acc.mul(&self.unary()?);
            } else if self.peek() == Some(b'/') {
                let at = self.pos;
                self.pos += 1;
                let rhs = self.unary()?;
                acc = acc.div(&rhs).map_err(|_| Error::Syntax {
                    offset: at,
                    message: "division by zero".into(),
                })?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(self.unary()?.neg());
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let at = self.pos;
        let k = if self.eat(b'(') {
            let k = self.signed_int()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)`"));
            }
            k
        } else {
            self.signed_int()?
        };
        base.powi(k).map_err(|_| Error::Syntax {
            offset: at,
            message: "zero raised to a negative power".into(),
        })
    }

    fn signed_int(&mut self) -> Result<i32> {
        let neg = if self.eat(b'-') {
            true
        } else {
            self.eat(b'+');
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer exponent"));
        }
        let digits = core::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let v: i32 = digits.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: "exponent out of range".into(),
        })?;
        Ok(if neg { -v } else { v })
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let int_len = digits(self);
        let mut is_float = false;
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            is_float = true;
            if digits(self) == 0 && int_len == 0 {
                self.pos = start;
                return Err(self.err("malformed number"));
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            } else {
                is_float = true;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if is_float {
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: "malformed number".into(),
            })?;
            Ok(Expr::float(v))
        } else {
            let v: i128 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: "integer literal out of range".into(),
            })?;
            Ok(Expr::num(Num::Rat(Rational::from_integer(v))))
        }
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name: String = core::str::from_utf8(&self.src[start..self.pos]).expect("ascii").into();
        if let Some((_, func)) = FUNCS.iter().find(|(n, _)| *n == name) {
            if !self.eat(b'(') {
                return Err(self.err("expected `(` after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)`"));
            }
            return Expr::func(*func, arg).map_err(|_| Error::Syntax {
                offset: start,
                message: "function argument outside its domain".into(),
            });
        }
        match self.chart.index_of(&name) {
            Some(i) => Ok(self.chart.var(i)),
            None => Err(Error::UndeclaredVariable { name, offset: start }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart::new(&["x", "p0", "p1", "q0"]).unwrap()
    }

    #[test]
    fn trailing_operator_reports_offset() {
        match parse("p1 *", &chart()) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_variable() {
        match parse("x + w", &chart()) {
            Err(Error::UndeclaredVariable { name, offset }) => {
                assert_eq!(name, "w");
                assert_eq!(offset, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence() {
        let c = chart();
        let a = parse("-x^2 + 2*p0/p1", &c).unwrap();
        let v = a.eval(&[3.0, 1.5, 0.5, 0.0]).unwrap();
        assert!((v - (-9.0 + 6.0)).abs() < 1e-14);
        let b = parse("x^(-2) * x^2", &c).unwrap();
        assert!(b.is_one());
        let lit = parse("1.5e-1 + 3", &c).unwrap();
        assert_eq!(lit.as_num().unwrap().to_f64(), 3.15);
    }

    #[test]
    fn functions() {
        let c = chart();
        let e = parse("sin(x)^2 + cos(x)^2", &c).unwrap();
        assert!((e.eval(&[0.7, 0.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(parse("sin x", &c).is_err());
        assert!(parse("1/0", &c).is_err());
    }

    #[test]
    fn display_round_trips() {
        let c = chart();
        for s in [
            "x*p0 - 3/4*p1^3 + 1",
            "-x/(p0 + 1)^2",
            "exp(-x)*sin(2*p0) - 0.25",
            "x^(-3)",
            "-(x + p1)*q0/p0",
            "1e-12*x - 2.5e20",
        ] {
            let e = parse(s, &c).unwrap();
            let back = parse(&e.to_string(), &c).unwrap();
            assert_eq!(e, back, "{s} -> {e}");
        }
    }
}
