use core::fmt;

use num_traits::{One, Signed};

use super::{split_coeff, Expr, Node, Num};

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_POW: u8 = 3;

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Rat(r) if r.denom().is_one() => write!(f, "{}", r.numer()),
            Num::Rat(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Num::Float(v) => write!(f, "{v:?}"),
        }
    }
}

fn num_prec(n: Num) -> u8 {
    match n {
        Num::Rat(r) if r.is_negative() => PREC_ADD,
        Num::Rat(r) if !r.denom().is_one() => PREC_MUL,
        Num::Float(v) if v < 0.0 || v.is_nan() => PREC_ADD,
        _ => u8::MAX,
    }
}

fn prec(e: &Expr) -> u8 {
    match e.node() {
        Node::Num(n) => num_prec(*n),
        Node::Var { .. } | Node::Func(..) => u8::MAX,
        Node::Add(_) => PREC_ADD,
        Node::Mul(_) => PREC_MUL,
        Node::Pow(_, k) if *k < 0 => PREC_MUL,
        Node::Pow(..) => PREC_POW,
    }
}

fn write_at(e: &Expr, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        write_node(e, f)?;
        write!(f, ")")
    } else {
        write_node(e, f)
    }
}

fn write_node(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e.node() {
        Node::Num(n) => write!(f, "{n}"),
        Node::Var { name, .. } => write!(f, "{name}"),
        Node::Func(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Pow(b, k) if *k < 0 => {
            write!(f, "1/")?;
            write_at(b, f, PREC_POW + 1)?;
            if *k != -1 {
                write!(f, "^{}", -k)?;
            }
            Ok(())
        }
        Node::Pow(b, k) => {
            write_at(b, f, PREC_POW + 1)?;
            write!(f, "^{k}")
        }
        Node::Add(ts) => {
            for (i, t) in ts.iter().enumerate() {
                let (c, _) = split_coeff(t);
                let negative = i > 0 && (c.is_negative() || t.as_num().is_some_and(Num::is_negative));
                if negative {
                    write!(f, " - ")?;
                    write_at(&t.neg(), f, PREC_MUL)?;
                } else {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write_at(t, f, PREC_ADD)?;
                }
            }
            Ok(())
        }
        Node::Mul(fs) => {
            let (mut coeff, start) = match fs[0].as_num() {
                Some(n) => (n, 1),
                None => (Num::int(1), 0),
            };
            if coeff.is_negative() {
                write!(f, "-")?;
                coeff = coeff.neg();
            }
            let mut first = true;
            if !coeff.is_one() {
                write!(f, "{coeff}")?;
                first = false;
            }
            for fac in fs[start..]
                .iter()
                .filter(|x| !matches!(x.node(), Node::Pow(_, k) if *k < 0))
            {
                if !first {
                    write!(f, "*")?;
                }
                write_at(fac, f, PREC_POW)?;
                first = false;
            }
            if first {
                write!(f, "1")?;
            }
            for fac in &fs[start..] {
                if let Node::Pow(b, k) = fac.node() {
                    if *k < 0 {
                        write!(f, "/")?;
                        write_at(b, f, PREC_POW + 1)?;
                        if *k != -1 {
                            write!(f, "^{}", -k)?;
                        }
                    }
                }
            }
            Ok(())
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(self, f)
    }
}
