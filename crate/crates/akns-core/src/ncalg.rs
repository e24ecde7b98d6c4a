//! Exact noncommutative differential-polynomial algebra.
//!
//! Polynomials are formal sums of words in the symbols d^k(u), d^k(u.hat)
//! plus four auxiliary dressing blocks A, B, C, D, with Gaussian-rational
//! coefficients and an optional identity part. Shapes are abstract (N and M
//! are never assumed equal), so a word is valid exactly when its factors
//! chain: u is M x N, u.hat is N x M, A is N x N, B is N x M, C is M x N,
//! D is M x M.
//!
//! Canonical form: terms live in a BTreeMap keyed by (length, factor list)
//! lexicographic order with zero coefficients pruned, so equal polynomials
//! compare bit-equal and `==` is the symbolic acceptance test.

use crate::fd::FdScheme;
use crate::grid::GridField;
use crate::scalar::{gr_display, gr_is_zero, gr_one, gr_to_c64, gr_zero, GaussRat};
use crate::{CMat, Error, Result};
use std::collections::{BTreeMap, VecDeque};
use std::fmt;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Base {
    U,
    Uhat,
    AuxA,
    AuxB,
    AuxC,
    AuxD,
}

impl Base {
    pub fn is_aux(self) -> bool {
        !matches!(self, Base::U | Base::Uhat)
    }

    fn name(self) -> &'static str {
        match self {
            Base::U => "u",
            Base::Uhat => "u.hat",
            Base::AuxA => "A",
            Base::AuxB => "B",
            Base::AuxC => "C",
            Base::AuxD => "D",
        }
    }
}

/// Abstract matrix dimension tag.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dim {
    N,
    M,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Shape {
    MN,
    NM,
    NN,
    MM,
    /// Scalar multiple of the identity; composes with anything, binds no size.
    Scalar,
}

impl Shape {
    pub fn dims(self) -> Option<(Dim, Dim)> {
        match self {
            Shape::MN => Some((Dim::M, Dim::N)),
            Shape::NM => Some((Dim::N, Dim::M)),
            Shape::NN => Some((Dim::N, Dim::N)),
            Shape::MM => Some((Dim::M, Dim::M)),
            Shape::Scalar => None,
        }
    }

    pub fn is_square(self) -> bool {
        matches!(self, Shape::NN | Shape::MM | Shape::Scalar)
    }

    fn from_dims(rows: Dim, cols: Dim) -> Shape {
        match (rows, cols) {
            (Dim::M, Dim::N) => Shape::MN,
            (Dim::N, Dim::M) => Shape::NM,
            (Dim::N, Dim::N) => Shape::NN,
            (Dim::M, Dim::M) => Shape::MM,
        }
    }

    pub fn compose(self, other: Shape) -> Result<Shape> {
        match (self.dims(), other.dims()) {
            (None, _) => Ok(other),
            (_, None) => Ok(self),
            (Some((r, c)), Some((r2, c2))) => {
                if c == r2 {
                    Ok(Shape::from_dims(r, c2))
                } else {
                    Err(Error::ShapeMismatch(format!(
                        "{:?} cannot left-multiply {:?}",
                        self, other
                    )))
                }
            }
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Shape::MN => "MxN",
            Shape::NM => "NxM",
            Shape::NN => "NxN",
            Shape::MM => "MxM",
            Shape::Scalar => "scalar",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Symbol {
    pub base: Base,
    pub deriv: u32,
}

impl Symbol {
    pub fn new(base: Base, deriv: u32) -> Symbol {
        Symbol { base, deriv }
    }

    pub fn shape(self) -> Shape {
        match self.base {
            Base::U => Shape::MN,
            Base::Uhat => Shape::NM,
            Base::AuxA => Shape::NN,
            Base::AuxB => Shape::NM,
            Base::AuxC => Shape::MN,
            Base::AuxD => Shape::MM,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.deriv == 0 {
            f.write_str(self.base.name())
        } else {
            write!(f, "d{}({})", self.deriv, self.base.name())
        }
    }
}

/// Ordered factor list. Ordering is (length, factors) lexicographic, the
/// canonical term order.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn new(factors: Vec<Symbol>) -> Result<Word> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter(
                "empty word; use the identity part instead".into(),
            ));
        }
        let _ = word_shape(&factors)?;
        Ok(Word(factors))
    }

    pub fn factors(&self) -> &[Symbol] {
        &self.0
    }

    pub fn shape(&self) -> Shape {
        word_shape(&self.0).expect("word validated at construction")
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn word_shape(factors: &[Symbol]) -> Result<Shape> {
    let mut shape = factors[0].shape();
    for s in &factors[1..] {
        shape = shape.compose(s.shape())?;
    }
    Ok(shape)
}

/// Noncommutative differential polynomial with a declared shape.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NcPoly {
    shape: Shape,
    id_coeff: GaussRat,
    terms: BTreeMap<Word, GaussRat>,
}

impl NcPoly {
    pub fn zero(shape: Shape) -> NcPoly {
        NcPoly {
            shape,
            id_coeff: gr_zero(),
            terms: BTreeMap::new(),
        }
    }

    /// c times the identity; square and scalar shapes only.
    pub fn identity(shape: Shape, coeff: GaussRat) -> Result<NcPoly> {
        if !shape.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "identity part needs a square shape, got {}",
                shape
            )));
        }
        let mut p = NcPoly::zero(shape);
        p.id_coeff = coeff;
        Ok(p)
    }

    pub fn symbol(base: Base, deriv: u32) -> NcPoly {
        let s = Symbol::new(base, deriv);
        let mut terms = BTreeMap::new();
        terms.insert(Word(vec![s]), gr_one());
        NcPoly {
            shape: s.shape(),
            id_coeff: gr_zero(),
            terms,
        }
    }

    pub fn word(coeff: GaussRat, factors: Vec<Symbol>) -> Result<NcPoly> {
        let w = Word::new(factors)?;
        let shape = w.shape();
        let mut p = NcPoly::zero(shape);
        p.accumulate(w, coeff);
        p.prune();
        Ok(p)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn id_coeff(&self) -> &GaussRat {
        &self.id_coeff
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &GaussRat)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        gr_is_zero(&self.id_coeff) && self.terms.is_empty()
    }

    pub fn contains_aux(&self) -> bool {
        self.terms
            .keys()
            .any(|w| w.0.iter().any(|s| s.base.is_aux()))
    }

    pub(crate) fn accumulate(&mut self, w: Word, c: GaussRat) {
        let entry = self.terms.entry(w).or_insert_with(gr_zero);
        *entry = entry.clone() + c;
    }

    pub(crate) fn prune(&mut self) {
        self.terms.retain(|_, c| !gr_is_zero(c));
    }

    /// Re-collects terms and drops zeros. The representation is already
    /// canonical after every operation; this exists so idempotence is a
    /// testable property rather than an article of faith.
    pub fn normalize(&self) -> NcPoly {
        let mut out = NcPoly::zero(self.shape);
        out.id_coeff = self.id_coeff.clone();
        for (w, c) in &self.terms {
            out.accumulate(w.clone(), c.clone());
        }
        out.prune();
        out
    }

    pub fn add(&self, other: &NcPoly) -> Result<NcPoly> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "cannot add {} and {}",
                self.shape, other.shape
            )));
        }
        let mut out = self.clone();
        out.id_coeff = out.id_coeff + other.id_coeff.clone();
        for (w, c) in &other.terms {
            out.accumulate(w.clone(), c.clone());
        }
        out.prune();
        Ok(out)
    }

    pub fn sub(&self, other: &NcPoly) -> Result<NcPoly> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> NcPoly {
        self.scale(&(gr_zero() - gr_one()))
    }

    pub fn scale(&self, c: &GaussRat) -> NcPoly {
        let mut out = NcPoly::zero(self.shape);
        if gr_is_zero(c) {
            return out;
        }
        out.id_coeff = self.id_coeff.clone() * c.clone();
        for (w, wc) in &self.terms {
            out.terms.insert(w.clone(), wc.clone() * c.clone());
        }
        out
    }

    /// Stable text form, e.g. "u.hat * d1(u)". Identity part prints first,
    /// then words in canonical order; coefficients 1 and -1 print bare.
    pub fn pretty(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut parts = Vec::new();
        if !gr_is_zero(&self.id_coeff) {
            parts.push(format!("{}id", coeff_prefix(&self.id_coeff)));
        }
        for (w, c) in &self.terms {
            let body = w
                .0
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(" * ");
            parts.push(format!("{}{}", coeff_prefix(c), body));
        }
        parts.join(" + ")
    }

    /// Numeric realization on a sampled field at one grid index; derivatives
    /// become finite differences of the stated scheme. Auxiliary bases have
    /// no grid samples and refuse to evaluate.
    pub fn eval(&self, field: &GridField, x_index: usize, fd: &FdScheme) -> Result<CMat> {
        let (rows, cols) = self.numeric_dims(field)?;
        let mut acc = CMat::zeros(rows, cols);
        if !gr_is_zero(&self.id_coeff) {
            let c = gr_to_c64(&self.id_coeff);
            for i in 0..rows {
                acc[(i, i)] += c;
            }
        }
        for (w, c) in &self.terms {
            let mut prod = eval_symbol(&w.0[0], field, x_index, fd)?;
            for s in &w.0[1..] {
                prod = prod * eval_symbol(s, field, x_index, fd)?;
            }
            acc += prod * gr_to_c64(c);
        }
        Ok(acc)
    }

    fn numeric_dims(&self, field: &GridField) -> Result<(usize, usize)> {
        let (r, c) = self.shape.dims().ok_or_else(|| {
            Error::InvalidParameter("scalar shape binds no numeric size".into())
        })?;
        let len = |d: Dim| match d {
            Dim::N => field.n_dim,
            Dim::M => field.m_dim,
        };
        Ok((len(r), len(c)))
    }

    /// Largest total degree over words, with deg(d^k u) = deg(d^k u.hat)
    /// = k + 1. None when any auxiliary factor is present.
    pub fn homogeneous_weight(&self) -> Option<u32> {
        if self.contains_aux() {
            return None;
        }
        let mut weight = None;
        if !gr_is_zero(&self.id_coeff) {
            weight = Some(0);
        }
        for w in self.terms.keys() {
            let this: u32 = w.0.iter().map(|s| s.deriv + 1).sum();
            match weight {
                None => weight = Some(this),
                Some(prev) if prev == this => {}
                Some(_) => return None,
            }
        }
        weight
    }
}

fn coeff_prefix(c: &GaussRat) -> String {
    let one = gr_one();
    let minus_one = gr_zero() - gr_one();
    if *c == one {
        String::new()
    } else if *c == minus_one {
        "-".into()
    } else {
        format!("{} ", gr_display(c))
    }
}

fn eval_symbol(s: &Symbol, field: &GridField, x_index: usize, fd: &FdScheme) -> Result<CMat> {
    let samples = match s.base {
        Base::U => &field.u,
        Base::Uhat => &field.uhat,
        _ => return Err(Error::UnevaluableSymbol(s.to_string())),
    };
    fd.matrix_deriv(samples, x_index, s.deriv as usize, field.grid.dx)
}

pub fn nc_mul(a: &NcPoly, b: &NcPoly) -> Result<NcPoly> {
    let shape = a.shape.compose(b.shape)?;
    let mut out = NcPoly::zero(shape);
    out.id_coeff = a.id_coeff.clone() * b.id_coeff.clone();
    if !gr_is_zero(&a.id_coeff) {
        for (w, c) in &b.terms {
            out.accumulate(w.clone(), a.id_coeff.clone() * c.clone());
        }
    }
    if !gr_is_zero(&b.id_coeff) {
        for (w, c) in &a.terms {
            out.accumulate(w.clone(), c.clone() * b.id_coeff.clone());
        }
    }
    for (wa, ca) in &a.terms {
        for (wb, cb) in &b.terms {
            let mut factors = wa.0.clone();
            factors.extend_from_slice(&wb.0);
            // Junction validity follows from the shape compose above, but a
            // word-level check keeps the invariant local.
            let w = Word::new(factors)?;
            out.accumulate(w, ca.clone() * cb.clone());
        }
    }
    out.prune();
    Ok(out)
}

/// Leibniz derivative; the identity part differentiates to zero.
pub fn nc_derive(p: &NcPoly) -> NcPoly {
    let mut out = NcPoly::zero(p.shape);
    for (w, c) in &p.terms {
        for pos in 0..w.0.len() {
            let mut factors = w.0.clone();
            factors[pos].deriv += 1;
            out.accumulate(Word(factors), c.clone());
        }
    }
    out.prune();
    out
}

pub fn nc_eval(p: &NcPoly, field: &GridField, x_index: usize, fd: &FdScheme) -> Result<CMat> {
    p.eval(field, x_index, fd)
}

/// First-derivative rewrite rules for the auxiliary blocks, d(A) etc.
/// Higher derivatives follow by Leibniz on the rule bodies.
pub struct AuxRules {
    pub da: NcPoly,
    pub db: NcPoly,
    pub dc: NcPoly,
    pub dd: NcPoly,
}

impl AuxRules {
    /// Rules for a dressing of the zero seed: d(K) = Q K blockwise, with
    /// B = -u.hat and C = u identified. d(A) = u.hat u, d(B) = u.hat D,
    /// d(C) = u A, d(D) = -u u.hat.
    pub fn vacuum_dressing() -> AuxRules {
        let sym = |b| Symbol::new(b, 0);
        let w = |v: Vec<Symbol>| NcPoly::word(gr_one(), v).expect("static rule");
        AuxRules {
            da: w(vec![sym(Base::Uhat), sym(Base::U)]),
            db: w(vec![sym(Base::Uhat), sym(Base::AuxD)]),
            dc: w(vec![sym(Base::U), sym(Base::AuxA)]),
            dd: w(vec![sym(Base::U), sym(Base::Uhat)]).neg(),
        }
    }

    /// Rules from the first-order dressing constraint system with weights
    /// (w1, w2): w1 d(A) = h B C, w1 d(B) = h B D, w2 d(C) = -h C A,
    /// w2 d(D) = -h C B, h = w1 - w2.
    pub fn constr2(w1: &GaussRat, w2: &GaussRat) -> Result<AuxRules> {
        if gr_is_zero(w1) || gr_is_zero(w2) {
            return Err(Error::InvalidParameter("constr2 rules need w1, w2 != 0".into()));
        }
        let h = w1.clone() - w2.clone();
        let sym = |b| Symbol::new(b, 0);
        let w = |v: Vec<Symbol>| NcPoly::word(gr_one(), v).expect("static rule");
        let hw1 = h.clone() / w1.clone();
        let hw2 = h / w2.clone();
        Ok(AuxRules {
            da: w(vec![sym(Base::AuxB), sym(Base::AuxC)]).scale(&hw1),
            db: w(vec![sym(Base::AuxB), sym(Base::AuxD)]).scale(&hw1),
            dc: w(vec![sym(Base::AuxC), sym(Base::AuxA)]).scale(&hw2).neg(),
            dd: w(vec![sym(Base::AuxC), sym(Base::AuxB)]).scale(&hw2).neg(),
        })
    }

    pub(crate) fn rule(&self, base: Base) -> &NcPoly {
        match base {
            Base::AuxA => &self.da,
            Base::AuxB => &self.db,
            Base::AuxC => &self.dc,
            Base::AuxD => &self.dd,
            _ => unreachable!("rule lookup on a field symbol"),
        }
    }
}

/// Rewrites every derived auxiliary factor d^k(X), k >= 1, through the rule
/// set until only underived auxiliaries remain. Terminates because each
/// rewrite strictly lowers the total derivative order carried by auxiliary
/// factors.
pub fn apply_derivative_rules(p: &NcPoly, rules: &AuxRules) -> Result<NcPoly> {
    let mut out = NcPoly::zero(p.shape);
    out.id_coeff = p.id_coeff.clone();
    let mut queue: VecDeque<(Word, GaussRat)> = p
        .terms
        .iter()
        .map(|(w, c)| (w.clone(), c.clone()))
        .collect();
    while let Some((w, c)) = queue.pop_front() {
        let pos = w
            .0
            .iter()
            .position(|s| s.base.is_aux() && s.deriv >= 1);
        match pos {
            None => out.accumulate(w, c),
            Some(pos) => {
                let s = w.0[pos];
                let mut repl = rules.rule(s.base).clone();
                for _ in 1..s.deriv {
                    repl = nc_derive(&repl);
                }
                let spliced = splice(&w, pos, pos + 1, &repl)?;
                out.id_coeff = out.id_coeff + c.clone() * spliced.id_coeff.clone();
                for (w2, c2) in &spliced.terms {
                    queue.push_back((w2.clone(), c.clone() * c2.clone()));
                }
            }
        }
    }
    out.prune();
    Ok(out)
}

/// Replaces factors [from, to) of a word with a polynomial, multiplying the
/// untouched prefix and suffix back on.
pub fn splice(w: &Word, from: usize, to: usize, replacement: &NcPoly) -> Result<NcPoly> {
    let mut acc = replacement.clone();
    if from > 0 {
        let pre = NcPoly::word(gr_one(), w.0[..from].to_vec())?;
        acc = nc_mul(&pre, &acc)?;
    }
    if to < w.0.len() {
        let post = NcPoly::word(gr_one(), w.0[to..].to_vec())?;
        acc = nc_mul(&acc, &post)?;
    }
    Ok(acc)
}
