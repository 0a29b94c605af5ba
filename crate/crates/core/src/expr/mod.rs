//! Symbolic scalar expressions over the coordinates of a chart.
//!
//! Expressions are immutable, reference counted trees kept in a light
//! canonical form: sums and products are flattened and sorted, like terms and
//! equal bases are collected, products are distributed over sums and small
//! positive powers of sums are expanded. Rational constants stay exact;
//! floats only enter through float literals and through evaluation. There is
//! no further simplification (no trigonometric identities, no cancellation
//! of rational functions).

mod display;
mod parse;
pub mod tape;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::hash::{Hash, Hasher};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub use parse::parse;
pub use tape::Tape;

pub type Rational = Ratio<i128>;

/// Largest positive power of a sum that is expanded eagerly.
const EXPAND_POW_LIMIT: i32 = 12;

/// Ordered, uniquely named coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    names: Vec<String>,
}

impl Chart {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Chart> {
        if names.is_empty() {
            return Err(Error::InvalidChart("a chart needs at least one coordinate".into()));
        }
        let mut out: Vec<String> = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            let valid = n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid || parse::is_reserved(n) {
                return Err(Error::InvalidChart(alloc::format!(
                    "`{n}` is not a valid coordinate name"
                )));
            }
            if out.iter().any(|o| o == n) {
                return Err(Error::InvalidChart(alloc::format!("duplicate coordinate `{n}`")));
            }
            out.push(n.to_string());
        }
        Ok(Chart { names: out })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn var(&self, index: usize) -> Expr {
        Expr::var(index, &self.names[index])
    }

    pub fn var_named(&self, name: &str) -> Result<Expr> {
        self.index_of(name)
            .map(|i| self.var(i))
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn parse(&self, text: &str) -> Result<Expr> {
        parse(text, self)
    }

    /// A chart whose first coordinates are `self`'s followed by `extra`.
    pub fn extended<S: AsRef<str>>(&self, extra: &[S]) -> Result<Chart> {
        let mut names: Vec<String> = self.names.clone();
        names.extend(extra.iter().map(|s| s.as_ref().to_string()));
        Chart::new(&names)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Num {
    Rat(Rational),
    Float(f64),
}

impl Num {
    pub fn int(v: i128) -> Num {
        Num::Rat(Rational::from_integer(v))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Num::Rat(r) => r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN),
            Num::Float(f) => f,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Num::Rat(r) => r.is_zero(),
            Num::Float(f) => f == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Num::Rat(r) => r.is_one(),
            Num::Float(f) => f == 1.0,
        }
    }

    pub fn is_negative(self) -> bool {
        match self {
            Num::Rat(r) => r.is_negative(),
            Num::Float(f) => f < 0.0,
        }
    }

    pub fn add(self, o: Num) -> Num {
        match (self, o) {
            (Num::Rat(a), Num::Rat(b)) => Num::Rat(a + b),
            _ => Num::Float(self.to_f64() + o.to_f64()),
        }
    }

    pub fn mul(self, o: Num) -> Num {
        match (self, o) {
            (Num::Rat(a), Num::Rat(b)) => Num::Rat(a * b),
            _ => Num::Float(self.to_f64() * o.to_f64()),
        }
    }

    pub fn neg(self) -> Num {
        match self {
            Num::Rat(a) => Num::Rat(-a),
            Num::Float(f) => Num::Float(-f),
        }
    }

    fn powi(self, k: i32) -> Option<Num> {
        match self {
            Num::Rat(r) => {
                if r.is_zero() && k < 0 {
                    return None;
                }
                Some(Num::Rat(r.pow(k)))
            }
            Num::Float(f) => {
                if f == 0.0 && k < 0 {
                    return None;
                }
                Some(Num::Float(libm::pow(f, k as f64)))
            }
        }
    }

    fn bits(self) -> (u8, u128, u128) {
        match self {
            Num::Rat(r) => (0, *r.numer() as u128, *r.denom() as u128),
            Num::Float(f) => (1, f.to_bits() as u128, 0),
        }
    }
}

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        self.bits() == other.bits()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Num(Num),
    Var { index: usize, name: Arc<str> },
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, i32),
    Func(Func, Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    hash: u64,
    size: usize,
}

/// A symbolic scalar expression. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Expr(Arc<Inner>);

struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x100_0000_01b3);
        }
    }
}

fn node_hash(node: &Node) -> (u64, usize) {
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    let mut size = 1;
    match node {
        Node::Num(n) => {
            0u8.hash(&mut h);
            n.bits().hash(&mut h);
        }
        Node::Var { index, .. } => {
            1u8.hash(&mut h);
            index.hash(&mut h);
        }
        Node::Add(ts) | Node::Mul(ts) => {
            (if matches!(node, Node::Add(_)) { 2u8 } else { 3u8 }).hash(&mut h);
            for t in ts {
                t.0.hash.hash(&mut h);
                size += t.0.size;
            }
        }
        Node::Pow(b, k) => {
            4u8.hash(&mut h);
            b.0.hash.hash(&mut h);
            k.hash(&mut h);
            size += b.0.size;
        }
        Node::Func(f, a) => {
            5u8.hash(&mut h);
            f.hash(&mut h);
            a.0.hash.hash(&mut h);
            size += a.0.size;
        }
    }
    (h.finish(), size)
}

fn rank(node: &Node) -> u8 {
    match node {
        Node::Num(_) => 0,
        Node::Var { .. } => 1,
        Node::Add(_) => 2,
        Node::Mul(_) => 3,
        Node::Pow(..) => 4,
        Node::Func(..) => 5,
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    /// Total order: variables and constants by value, then everything else by
    /// structural hash with a structural tie-break.
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (a, b) = (&self.0.node, &other.0.node);
        match (a, b) {
            (Node::Var { index: i, .. }, Node::Var { index: j, .. }) => return i.cmp(j),
            (Node::Num(x), Node::Num(y)) => return x.bits().cmp(&y.bits()),
            _ => {}
        }
        rank(a)
            .cmp(&rank(b))
            .then(self.0.hash.cmp(&other.0.hash))
            .then_with(|| structural_cmp(a, b))
    }
}

fn structural_cmp(a: &Node, b: &Node) -> Ordering {
    match (a, b) {
        (Node::Num(x), Node::Num(y)) => x.bits().cmp(&y.bits()),
        (Node::Var { index: i, .. }, Node::Var { index: j, .. }) => i.cmp(j),
        (Node::Add(x), Node::Add(y)) | (Node::Mul(x), Node::Mul(y)) => x.cmp(y),
        (Node::Pow(x, i), Node::Pow(y, j)) => x.cmp(y).then(i.cmp(j)),
        (Node::Func(f, x), Node::Func(g, y)) => f.cmp(g).then_with(|| x.cmp(y)),
        _ => rank(a).cmp(&rank(b)),
    }
}

impl Expr {
    fn from_node(node: Node) -> Expr {
        let (hash, size) = node_hash(&node);
        Expr(Arc::new(Inner { node, hash, size }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    /// Number of nodes in the tree (shared subtrees counted repeatedly).
    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn num(n: Num) -> Expr {
        Expr::from_node(Node::Num(n))
    }

    pub fn int(v: i128) -> Expr {
        Expr::num(Num::int(v))
    }

    pub fn rational(n: i128, d: i128) -> Expr {
        Expr::num(Num::Rat(Rational::new(n, d)))
    }

    pub fn float(v: f64) -> Expr {
        Expr::num(Num::Float(v))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn var(index: usize, name: &str) -> Expr {
        Expr::from_node(Node::Var {
            index,
            name: Arc::from(name),
        })
    }

    pub fn as_num(&self) -> Option<Num> {
        match self.node() {
            Node::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num().is_some_and(Num::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_num().is_some_and(Num::is_one)
    }

    pub fn add(&self, o: &Expr) -> Expr {
        Expr::sum(vec![self.clone(), o.clone()])
    }

    pub fn sub(&self, o: &Expr) -> Expr {
        Expr::sum(vec![self.clone(), o.neg()])
    }

    pub fn mul(&self, o: &Expr) -> Expr {
        Expr::product(vec![self.clone(), o.clone()])
    }

    pub fn neg(&self) -> Expr {
        self.scale(Num::int(-1))
    }

    pub fn scale(&self, c: Num) -> Expr {
        Expr::product(vec![Expr::num(c), self.clone()])
    }

    pub fn div(&self, o: &Expr) -> Result<Expr> {
        Ok(self.mul(&o.powi(-1)?))
    }

    /// Canonical n-ary sum.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut constant = Num::int(0);
        let mut collected: BTreeMap<Expr, Num> = BTreeMap::new();
        let mut stack = terms;
        while let Some(t) = stack.pop() {
            match t.node() {
                Node::Add(inner) => stack.extend(inner.iter().cloned()),
                Node::Num(n) => constant = constant.add(*n),
                _ => {
                    let (c, rest) = split_coeff(&t);
                    let entry = collected.entry(rest).or_insert(Num::int(0));
                    *entry = entry.add(c);
                }
            }
        }
        let mut out: Vec<Expr> = collected
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(rest, c)| attach_coeff(c, rest))
            .collect();
        if !constant.is_zero() {
            out.insert(0, Expr::num(constant));
        }
        match out.len() {
            0 => Expr::num(if let Num::Float(_) = constant {
                Num::Float(0.0)
            } else {
                Num::int(0)
            }),
            1 => out.pop().expect("one term"),
            _ => Expr::from_node(Node::Add(out)),
        }
    }

    /// Canonical n-ary product; distributes over sums.
    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        flatten_mul(factors, &mut flat);
        if let Some(pos) = flat.iter().position(|f| matches!(f.node(), Node::Add(_))) {
            let sum = flat.swap_remove(pos);
            let rest = Expr::product(flat);
            let Node::Add(terms) = sum.node() else { unreachable!() };
            return Expr::sum(
                terms
                    .iter()
                    .map(|t| Expr::product(vec![t.clone(), rest.clone()]))
                    .collect(),
            );
        }
        let mut coeff = Num::int(1);
        let mut bases: BTreeMap<Expr, i32> = BTreeMap::new();
        for f in flat {
            match f.node() {
                Node::Num(n) => coeff = coeff.mul(*n),
                Node::Pow(b, k) => *bases.entry(b.clone()).or_insert(0) += *k,
                _ => *bases.entry(f.clone()).or_insert(0) += 1,
            }
        }
        if coeff.is_zero() {
            return Expr::num(coeff);
        }
        let mut out: Vec<Expr> = Vec::with_capacity(bases.len() + 1);
        for (b, k) in bases {
            match k {
                0 => {}
                1 => out.push(b),
                _ => out.push(Expr::from_node(Node::Pow(b, k))),
            }
        }
        if out.is_empty() {
            return Expr::num(coeff);
        }
        if !coeff.is_one() {
            out.insert(0, Expr::num(coeff));
        }
        if out.len() == 1 {
            return out.pop().expect("one factor");
        }
        Expr::from_node(Node::Mul(out))
    }

    /// Integer power. Errors on `0^k` with `k < 0`.
    pub fn powi(&self, k: i32) -> Result<Expr> {
        if k == 0 {
            return Ok(Expr::one());
        }
        if k == 1 {
            return Ok(self.clone());
        }
        match self.node() {
            Node::Num(n) => n.powi(k).map(Expr::num).ok_or_else(|| Error::Domain {
                expr: self.to_string(),
                reason: "division by zero",
            }),
            Node::Pow(b, j) => b.powi(j * k),
            Node::Mul(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                for f in fs {
                    out.push(f.powi(k)?);
                }
                Ok(Expr::product(out))
            }
            Node::Add(_) if k > 0 && k <= EXPAND_POW_LIMIT => {
                let mut acc = self.clone();
                for _ in 1..k {
                    acc = acc.mul(self);
                }
                Ok(acc)
            }
            _ => Ok(Expr::from_node(Node::Pow(self.clone(), k))),
        }
    }

    pub fn func(f: Func, arg: Expr) -> Result<Expr> {
        if let Some(n) = arg.as_num() {
            match n {
                Num::Rat(r) if r.is_zero() => match f {
                    Func::Sin => return Ok(Expr::zero()),
                    Func::Cos | Func::Exp => return Ok(Expr::one()),
                    Func::Ln => {
                        return Err(Error::Domain {
                            expr: "ln(0)".into(),
                            reason: "logarithm of a non-positive value",
                        })
                    }
                },
                Num::Rat(r) if r.is_one() && f == Func::Ln => return Ok(Expr::zero()),
                Num::Float(v) => {
                    let out = match f {
                        Func::Sin => libm::sin(v),
                        Func::Cos => libm::cos(v),
                        Func::Exp => libm::exp(v),
                        Func::Ln => {
                            if v <= 0.0 {
                                return Err(Error::Domain {
                                    expr: alloc::format!("ln({v:?})"),
                                    reason: "logarithm of a non-positive value",
                                });
                            }
                            libm::log(v)
                        }
                    };
                    return Ok(Expr::float(out));
                }
                Num::Rat(r) if r.is_negative() && f == Func::Ln => {
                    return Err(Error::Domain {
                        expr: alloc::format!("ln({})", Expr::num(n)),
                        reason: "logarithm of a non-positive value",
                    })
                }
                _ => {}
            }
        }
        Ok(Expr::from_node(Node::Func(f, arg)))
    }

    pub fn sin(&self) -> Expr {
        Expr::func(Func::Sin, self.clone()).expect("sin is total")
    }

    pub fn cos(&self) -> Expr {
        Expr::func(Func::Cos, self.clone()).expect("cos is total")
    }

    pub fn exp(&self) -> Expr {
        Expr::func(Func::Exp, self.clone()).expect("exp is total")
    }

    pub fn ln(&self) -> Result<Expr> {
        Expr::func(Func::Ln, self.clone())
    }

    /// Exact partial derivative with respect to chart coordinate `var`.
    pub fn diff(&self, var: usize) -> Expr {
        match self.node() {
            Node::Num(_) => Expr::zero(),
            Node::Var { index, .. } => {
                if *index == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(ts) => Expr::sum(ts.iter().map(|t| t.diff(var)).collect()),
            Node::Mul(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for i in 0..fs.len() {
                    let d = fs[i].diff(var);
                    if d.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(fs.len());
                    for (j, f) in fs.iter().enumerate() {
                        factors.push(if j == i { d.clone() } else { f.clone() });
                    }
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Node::Pow(b, k) => {
                let db = b.diff(var);
                if db.is_zero() {
                    return Expr::zero();
                }
                let lower = b.powi(k - 1).expect("symbolic base");
                Expr::product(vec![Expr::int(*k as i128), lower, db])
            }
            Node::Func(f, a) => {
                let da = a.diff(var);
                if da.is_zero() {
                    return Expr::zero();
                }
                let outer = match f {
                    Func::Sin => a.cos(),
                    Func::Cos => a.sin().neg(),
                    Func::Exp => self.clone(),
                    Func::Ln => a.powi(-1).expect("symbolic argument"),
                };
                outer.mul(&da)
            }
        }
    }

    /// Indices of the variables occurring in the expression.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self.node() {
            Node::Num(_) => {}
            Node::Var { index, .. } => out.push(*index),
            Node::Add(ts) | Node::Mul(ts) => ts.iter().for_each(|t| t.collect_vars(out)),
            Node::Pow(b, _) => b.collect_vars(out),
            Node::Func(_, a) => a.collect_vars(out),
        }
    }

    /// Replace variable `i` by `values[i]`.
    pub fn substitute(&self, values: &[Expr]) -> Result<Expr> {
        Ok(match self.node() {
            Node::Num(_) => self.clone(),
            Node::Var { index, name } => values
                .get(*index)
                .cloned()
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?,
            Node::Add(ts) => {
                let mut out = Vec::with_capacity(ts.len());
                for t in ts {
                    out.push(t.substitute(values)?);
                }
                Expr::sum(out)
            }
            Node::Mul(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                for f in fs {
                    out.push(f.substitute(values)?);
                }
                Expr::product(out)
            }
            Node::Pow(b, k) => b.substitute(values)?.powi(*k)?,
            Node::Func(f, a) => Expr::func(*f, a.substitute(values)?)?,
        })
    }

    /// Evaluate at a point of the chart.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let tape = Tape::compile(core::slice::from_ref(self), point.len());
        Ok(tape.eval(point, &0.0)?[0])
    }

    /// Taylor coefficients of the expression at `point` up to total degree
    /// `order`, as a jet in all chart coordinates.
    pub fn eval_jet(&self, point: &[f64], order: usize) -> Result<crate::jet::Jet> {
        let table = crate::jet::MonomialTable::new(point.len(), order);
        let inputs: Vec<crate::jet::Jet> = point
            .iter()
            .enumerate()
            .map(|(i, &v)| crate::jet::Jet::variable(&table, i, v))
            .collect();
        let tape = Tape::compile(core::slice::from_ref(self), point.len());
        let zero = crate::jet::Jet::constant(&table, 0.0);
        Ok(tape.eval(&inputs, &zero)?.pop().expect("one output"))
    }
}

fn flatten_mul(factors: Vec<Expr>, out: &mut Vec<Expr>) {
    for f in factors {
        match f.node() {
            Node::Mul(inner) => flatten_mul(inner.clone(), out),
            _ => out.push(f),
        }
    }
}

fn split_coeff(e: &Expr) -> (Num, Expr) {
    if let Node::Mul(fs) = e.node() {
        if let Some(n) = fs[0].as_num() {
            let rest = if fs.len() == 2 {
                fs[1].clone()
            } else {
                Expr::from_node(Node::Mul(fs[1..].to_vec()))
            };
            return (n, rest);
        }
    }
    (Num::int(1), e.clone())
}

fn attach_coeff(c: Num, rest: Expr) -> Expr {
    if c.is_one() {
        return rest;
    }
    let mut fs = vec![Expr::num(c)];
    match rest.node() {
        Node::Mul(inner) => fs.extend(inner.iter().cloned()),
        _ => fs.push(rest),
    }
    Expr::from_node(Node::Mul(fs))
}
