use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{Expr, Func, Node};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Var(usize),
    Add(Vec<usize>),
    Mul(Vec<usize>),
    Pow(usize, i32),
    Func(Func, usize),
}

/// A list of expressions compiled to straight-line code with shared
/// subexpressions evaluated once.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    exprs: Vec<Expr>,
    outputs: Vec<usize>,
    nvars: usize,
}

impl Tape {
    pub fn compile(exprs: &[Expr], nvars: usize) -> Tape {
        let mut t = Tape {
            ops: Vec::new(),
            exprs: Vec::new(),
            outputs: Vec::with_capacity(exprs.len()),
            nvars,
        };
        let mut seen: BTreeMap<Expr, usize> = BTreeMap::new();
        for e in exprs {
            let slot = t.emit(e, &mut seen);
            t.outputs.push(slot);
        }
        t
    }

    fn emit(&mut self, e: &Expr, seen: &mut BTreeMap<Expr, usize>) -> usize {
        if let Some(&s) = seen.get(e) {
            return s;
        }
        let op = match e.node() {
            Node::Num(n) => Op::Const(n.to_f64()),
            Node::Var { index, .. } => Op::Var(*index),
            Node::Add(ts) => Op::Add(ts.iter().map(|t| self.emit(t, seen)).collect()),
            Node::Mul(fs) => Op::Mul(fs.iter().map(|f| self.emit(f, seen)).collect()),
            Node::Pow(b, k) => Op::Pow(self.emit(b, seen), *k),
            Node::Func(f, a) => Op::Func(*f, self.emit(a, seen)),
        };
        self.ops.push(op);
        self.exprs.push(e.clone());
        let slot = self.ops.len() - 1;
        seen.insert(e.clone(), slot);
        slot
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluate every output. `zero` fixes the shape of constants.
    pub fn eval<S: Scalar>(&self, inputs: &[S], zero: &S) -> Result<Vec<S>> {
        if inputs.len() < self.nvars {
            return Err(Error::Dimension {
                expected: self.nvars,
                got: inputs.len(),
            });
        }
        let mut vals: Vec<S> = Vec::with_capacity(self.ops.len());
        for (slot, op) in self.ops.iter().enumerate() {
            let fault = |f: crate::scalar::DomainFault| Error::Domain {
                expr: self.exprs[slot].to_string(),
                reason: f.reason(),
            };
            let v = match op {
                Op::Const(c) => zero.constant_like(*c),
                Op::Var(i) => inputs.get(*i).cloned().ok_or(Error::Dimension {
                    expected: i + 1,
                    got: inputs.len(),
                })?,
                Op::Add(ts) => {
                    let mut acc = vals[ts[0]].clone();
                    for &t in &ts[1..] {
                        acc = acc.add(&vals[t]);
                    }
                    acc
                }
                Op::Mul(fs) => {
                    let mut acc = vals[fs[0]].clone();
                    for &f in &fs[1..] {
                        acc = acc.mul(&vals[f]);
                    }
                    acc
                }
                Op::Pow(b, k) => vals[*b].powi(*k).map_err(fault)?,
                Op::Func(f, a) => {
                    let a = &vals[*a];
                    match f {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                        Func::Ln => a.ln().map_err(fault)?,
                    }
                }
            };
            vals.push(v);
        }
        Ok(self.outputs.iter().map(|&s| vals[s].clone()).collect())
    }

    pub fn eval_f64(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.eval(point, &0.0)
    }
}
