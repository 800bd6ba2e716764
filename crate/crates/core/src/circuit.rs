//! Circuit data model and the line-oriented `NSFC 1` text format.
//!
//! ```text
//! NSFC 1
//! QUBITS 2
//! PARAM p
//! H 0
//! CNOT 0 1
//! DEPOL2 0 1 p
//! CHANNEL {0.9: II, 0.1: ZZ} @ [0, 1]
//! M ZZ 0 1 -> +1 AS parity
//! ```
//!
//! Qubit indices in ops always refer to the declared register, even after a `TRACEOUT`.

use std::collections::{BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use crate::engine::GeneralChannel;
use crate::error::{check_index, Error, Result};
use crate::gate::Gate;
use crate::noise::NoiseChannel;
use crate::param::{Assignment, Expr, Weight};
use crate::pauli::PauliString;
use crate::tableau::StabilizerTableau;

/// `%.17g`: enough digits to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Depol1 { q: usize, p: Weight },
    Depol2 { a: usize, b: usize, p: Weight },
    /// `(1 - p) I + p P` with `P` given on `qubits`.
    Corr { qubits: Vec<usize>, op: PauliString, p: Weight },
    Literal { qubits: Vec<usize>, terms: Vec<(Weight, PauliString)> },
}

impl ChannelSpec {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            ChannelSpec::Depol1 { q, .. } => vec![*q],
            ChannelSpec::Depol2 { a, b, .. } => vec![*a, *b],
            ChannelSpec::Corr { qubits, .. } | ChannelSpec::Literal { qubits, .. } => qubits.clone(),
        }
    }

    fn weights(&self) -> Vec<&Weight> {
        match self {
            ChannelSpec::Depol1 { p, .. } | ChannelSpec::Depol2 { p, .. } | ChannelSpec::Corr { p, .. } => vec![p],
            ChannelSpec::Literal { terms, .. } => terms.iter().map(|(w, _)| w).collect(),
        }
    }

    fn map_weights(&self, f: &impl Fn(&Weight) -> Result<Weight>) -> Result<Self> {
        Ok(match self {
            ChannelSpec::Depol1 { q, p } => ChannelSpec::Depol1 { q: *q, p: f(p)? },
            ChannelSpec::Depol2 { a, b, p } => ChannelSpec::Depol2 { a: *a, b: *b, p: f(p)? },
            ChannelSpec::Corr { qubits, op, p } => ChannelSpec::Corr { qubits: qubits.clone(), op: op.clone(), p: f(p)? },
            ChannelSpec::Literal { qubits, terms } => ChannelSpec::Literal {
                qubits: qubits.clone(),
                terms: terms.iter().map(|(w, op)| Ok((f(w)?, op.clone()))).collect::<Result<_>>()?,
            },
        })
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.weights().into_iter().flat_map(|w| w.params()).collect()
    }

    /// Channel on an `n`-qubit register, with declared indices passed through `map`.
    pub fn build(&self, n: usize, map: &QubitMap) -> Result<NoiseChannel> {
        let qs = self.qubits().iter().map(|&q| map.get(q)).collect::<Result<Vec<_>>>()?;
        match self {
            ChannelSpec::Depol1 { p, .. } => NoiseChannel::depolarizing1(qs[0], p.clone(), n),
            ChannelSpec::Depol2 { p, .. } => NoiseChannel::depolarizing2(qs[0], qs[1], p.clone(), n),
            ChannelSpec::Corr { op, p, .. } => NoiseChannel::correlated(op.embed(n, &qs)?, p.clone()),
            ChannelSpec::Literal { terms, .. } => {
                let full = terms.iter().map(|(w, op)| Ok((w.clone(), op.embed(n, &qs)?))).collect::<Result<_>>()?;
                NoiseChannel::new(n, full, "CHANNEL")
            }
        }
    }

    /// Literal spec for an arbitrary channel, restricted to the support of its terms.
    pub fn from_channel(ch: &NoiseChannel) -> Result<Self> {
        if ch.terms().iter().any(|t| t.negative) {
            return Err(Error::Unsupported("channel with negative weights has no text form".into()));
        }
        let mut support = BTreeSet::new();
        for t in ch.terms() {
            support.extend(t.op.support());
        }
        if support.is_empty() {
            support.insert(0);
        }
        let qubits: Vec<usize> = support.into_iter().collect();
        let terms = ch.terms().iter().map(|t| Ok((t.weight.clone(), t.op.restrict(&qubits)?))).collect::<Result<_>>()?;
        Ok(ChannelSpec::Literal { qubits, terms })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneralSpec {
    Rz { q: usize, theta: f64 },
    T(usize),
    Tdg(usize),
}

impl GeneralSpec {
    pub fn qubit(&self) -> usize {
        match *self {
            GeneralSpec::Rz { q, .. } | GeneralSpec::T(q) | GeneralSpec::Tdg(q) => q,
        }
    }

    pub fn build(&self, n: usize, map: &QubitMap) -> Result<GeneralChannel> {
        let q = map.get(self.qubit())?;
        match *self {
            GeneralSpec::Rz { theta, .. } => GeneralChannel::rz(q, theta, n),
            GeneralSpec::T(_) => GeneralChannel::t(q, n),
            GeneralSpec::Tdg(_) => GeneralChannel::tdg(q, n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub qubits: Vec<usize>,
    /// Signed Pauli on `qubits`.
    pub basis: PauliString,
    pub forced: Option<i8>,
    pub label: String,
}

impl Measurement {
    /// Measurement of a full-register observable on its support.
    pub fn of(obs: &PauliString, forced: Option<i8>, label: &str) -> Result<Self> {
        if obs.is_identity() {
            return Err(Error::IdentityObservable);
        }
        let qubits = obs.support();
        Ok(Self { basis: obs.restrict(&qubits)?, qubits, forced, label: label.to_string() })
    }

    pub fn observable(&self, n: usize, map: &QubitMap) -> Result<PauliString> {
        let qs = self.qubits.iter().map(|&q| map.get(q)).collect::<Result<Vec<_>>>()?;
        self.basis.embed(n, &qs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Gate(Gate),
    Channel(ChannelSpec),
    Measure(Measurement),
    TraceOut(usize),
    General(GeneralSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub n: usize,
    pub params: Vec<String>,
    /// Starting stabilizer state; `|0...0>` when absent.
    pub initial: Option<StabilizerTableau>,
    pub ops: Vec<Op>,
}

/// Declared qubit index to position in the current register.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitMap {
    slots: Vec<Option<usize>>,
    active: usize,
}

impl QubitMap {
    pub fn new(n: usize) -> Self {
        Self { slots: (0..n).map(Some).collect(), active: n }
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn get(&self, q: usize) -> Result<usize> {
        check_index(q, self.slots.len())?;
        self.slots[q].ok_or_else(|| Error::Unsupported(format!("qubit {q} was traced out")))
    }

    /// Marks `q` as removed and returns its current position.
    pub fn remove(&mut self, q: usize) -> Result<usize> {
        let pos = self.get(q)?;
        self.slots[q] = None;
        for s in self.slots.iter_mut().flatten() {
            if *s > pos {
                *s -= 1;
            }
        }
        self.active -= 1;
        Ok(pos)
    }

    /// Declared indices still present, in register order.
    pub fn remaining(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&q| self.slots[q].is_some()).collect()
    }
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        Self { n, params: Vec::new(), initial: None, ops: Vec::new() }
    }

    pub fn with_params(mut self, params: &[&str]) -> Self {
        self.params = params.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn gate(&mut self, g: Gate) -> &mut Self {
        self.ops.push(Op::Gate(g));
        self
    }

    pub fn channel(&mut self, spec: ChannelSpec) -> &mut Self {
        self.ops.push(Op::Channel(spec));
        self
    }

    /// Appends a measurement of `obs`, labelled `m<k>` for the `k`-th measurement.
    pub fn measure(&mut self, obs: &PauliString, forced: Option<i8>) -> Result<&mut Self> {
        let label = format!("m{}", self.measurement_count());
        self.ops.push(Op::Measure(Measurement::of(obs, forced, &label)?));
        Ok(self)
    }

    pub fn trace_out(&mut self, q: usize) -> &mut Self {
        self.ops.push(Op::TraceOut(q));
        self
    }

    pub fn general(&mut self, spec: GeneralSpec) -> &mut Self {
        self.ops.push(Op::General(spec));
        self
    }

    pub fn measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.ops.iter().filter_map(|op| match op {
            Op::Measure(m) => Some(m),
            _ => None,
        })
    }

    pub fn measurement_count(&self) -> usize {
        self.measurements().count()
    }

    pub fn initial_tableau(&self) -> Result<StabilizerTableau> {
        match &self.initial {
            Some(t) => Ok(t.clone()),
            None => StabilizerTableau::new_computational(self.n),
        }
    }

    /// Register size after all trace-outs.
    pub fn final_qubits(&self) -> usize {
        self.n - self.ops.iter().filter(|op| matches!(op, Op::TraceOut(_))).count()
    }

    pub fn is_symbolic(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Channel(c) if c.weights().iter().any(|w| !w.is_numeric())))
    }

    pub fn params_used(&self) -> BTreeSet<String> {
        self.ops
            .iter()
            .flat_map(|op| match op {
                Op::Channel(c) => c.params(),
                _ => BTreeSet::new(),
            })
            .collect()
    }

    /// Copy with every channel weight evaluated under `a`.
    pub fn instantiate(&self, a: &Assignment) -> Result<Self> {
        let ops = self
            .ops
            .iter()
            .map(|op| match op {
                Op::Channel(c) => Ok(Op::Channel(c.map_weights(&|w| w.instantiate(a))?)),
                other => Ok(other.clone()),
            })
            .collect::<Result<_>>()?;
        Ok(Self { ops, ..self.clone() })
    }

    /// Checks indices, labels and parameter declarations.
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = &self.initial {
            if t.num_qubits() != self.n {
                return Err(Error::Dimension { expected: self.n, actual: t.num_qubits() });
            }
        }
        let declared: HashSet<&str> = self.params.iter().map(|s| s.as_str()).collect();
        let mut labels = HashSet::new();
        let mut map = QubitMap::new(self.n);
        for op in &self.ops {
            match op {
                Op::Gate(g) => {
                    g.validate(self.n)?;
                    for q in g.qubits() {
                        map.get(q)?;
                    }
                }
                Op::Channel(c) => {
                    let qs = c.qubits();
                    check_distinct(&qs, self.n)?;
                    for q in qs {
                        map.get(q)?;
                    }
                    if let Some(p) = c.params().into_iter().find(|p| !declared.contains(p.as_str())) {
                        return Err(Error::UnboundParameter(p));
                    }
                }
                Op::Measure(m) => {
                    check_distinct(&m.qubits, self.n)?;
                    if m.basis.num_qubits() != m.qubits.len() {
                        return Err(Error::Dimension { expected: m.qubits.len(), actual: m.basis.num_qubits() });
                    }
                    if m.basis.is_identity() {
                        return Err(Error::IdentityObservable);
                    }
                    if !labels.insert(m.label.as_str()) {
                        return Err(Error::Unsupported(format!("duplicate record label {}", m.label)));
                    }
                    for &q in &m.qubits {
                        map.get(q)?;
                    }
                }
                Op::TraceOut(q) => {
                    map.remove(*q)?;
                }
                Op::General(g) => {
                    map.get(g.qubit())?;
                }
            }
        }
        Ok(())
    }
}

fn check_distinct(qs: &[usize], n: usize) -> Result<()> {
    let mut seen = HashSet::new();
    for &q in qs {
        check_index(q, n)?;
        if !seen.insert(q) {
            return Err(Error::RepeatedQubit(q));
        }
    }
    Ok(())
}

fn write_expr(out: &mut String, e: &Expr) {
    let bin = |out: &mut String, l: &Expr, op: char, r: &Expr| {
        out.push('(');
        write_expr(out, l);
        out.push(op);
        write_expr(out, r);
        out.push(')');
    };
    match e {
        Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
            let _ = write!(out, "({})", format_f64(*c));
        }
        Expr::Const(c) => out.push_str(&format_f64(*c)),
        Expr::Param(p) => out.push_str(p),
        Expr::Add(l, r) => bin(out, l, '+', r),
        Expr::Sub(l, r) => bin(out, l, '-', r),
        Expr::Mul(l, r) => bin(out, l, '*', r),
        Expr::Div(l, r) => bin(out, l, '/', r),
        Expr::Neg(inner) => {
            out.push_str("(-");
            write_expr(out, inner);
            out.push(')');
        }
    }
}

/// Weight in a form the parser reads back as the same value tree.
pub fn format_weight(w: &Weight) -> String {
    let mut s = String::new();
    match w {
        Weight::Num(v) => write_expr(&mut s, &Expr::Const(*v)),
        Weight::Sym(e) => write_expr(&mut s, e),
    }
    s
}

fn letters(p: &PauliString) -> String {
    let s = p.to_string();
    if p.is_negative() {
        s
    } else {
        s[1..].to_string()
    }
}

fn join(qs: &[usize], sep: &str) -> String {
    qs.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(sep)
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Gate(g) => write!(f, "{g}"),
            Op::Channel(ChannelSpec::Depol1 { q, p }) => write!(f, "DEPOL1 {q} {}", format_weight(p)),
            Op::Channel(ChannelSpec::Depol2 { a, b, p }) => write!(f, "DEPOL2 {a} {b} {}", format_weight(p)),
            Op::Channel(ChannelSpec::Corr { qubits, op, p }) => {
                write!(f, "CORR {} {} {}", letters(op), join(qubits, " "), format_weight(p))
            }
            Op::Channel(ChannelSpec::Literal { qubits, terms }) => {
                let body: Vec<String> = terms.iter().map(|(w, op)| format!("{}: {}", format_weight(w), letters(op))).collect();
                write!(f, "CHANNEL {{{}}} @ [{}]", body.join(", "), join(qubits, ", "))
            }
            Op::Measure(m) => {
                write!(f, "M {} {}", letters(&m.basis), join(&m.qubits, " "))?;
                if let Some(o) = m.forced {
                    write!(f, " -> {}", if o > 0 { "+1" } else { "-1" })?;
                }
                write!(f, " AS {}", m.label)
            }
            Op::TraceOut(q) => write!(f, "TRACEOUT {q}"),
            Op::General(GeneralSpec::Rz { q, theta }) => write!(f, "RZ {q} {}", format_f64(*theta)),
            Op::General(GeneralSpec::T(q)) => write!(f, "T {q}"),
            Op::General(GeneralSpec::Tdg(q)) => write!(f, "TDG {q}"),
        }
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "NSFC 1")?;
        writeln!(f, "QUBITS {}", self.n)?;
        if !self.params.is_empty() {
            writeln!(f, "PARAM {}", self.params.join(" "))?;
        }
        if let Some(t) = &self.initial {
            writeln!(f, "STATE")?;
            for d in t.destabilizers() {
                writeln!(f, "{d}")?;
            }
            writeln!(f, "---")?;
            for s in t.stabilizers() {
                writeln!(f, "{s}")?;
            }
            writeln!(f, "END")?;
        }
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- parsing

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    col: usize,
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

fn tokenize(src: &str, col0: usize) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    for (i, c) in src.chars().enumerate() {
        let col = col0 + i;
        if c.is_whitespace() || ",{}[]:@".contains(c) {
            if !cur.is_empty() {
                out.push(Tok { text: std::mem::take(&mut cur), col: start });
            }
            if !c.is_whitespace() {
                out.push(Tok { text: c.to_string(), col });
            }
        } else {
            if cur.is_empty() {
                start = col;
            }
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(Tok { text: cur, col: start });
    }
    out
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Splits `NAME(args)` into the directive and argument tokens; other lines tokenize plainly.
fn split_line(text: &str, line: usize) -> Result<Vec<Tok>> {
    let leading = text.chars().take_while(|c| c.is_whitespace()).count();
    let trimmed: String = text.chars().skip(leading).collect();
    let name_len = trimmed.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').count();
    if name_len > 0 && trimmed.chars().nth(name_len) == Some('(') {
        let body: String = trimmed.chars().skip(name_len + 1).collect();
        let body = body.trim_end();
        let Some(inner) = body.strip_suffix(')') else {
            return Err(perr(line, leading + trimmed.trim_end().chars().count() + 1, "expected ')'"));
        };
        let mut toks = vec![Tok { text: trimmed.chars().take(name_len).collect(), col: leading + 1 }];
        toks.extend(tokenize(inner, leading + name_len + 2));
        return Ok(toks);
    }
    Ok(tokenize(text, 1))
}

struct Cursor<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<&'a Tok> {
        let t = self.toks.get(self.pos).ok_or_else(|| perr(self.line, self.end_col, format!("expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn skip_commas(&mut self) {
        while matches!(self.peek(), Some(t) if t.text == ",") {
            self.pos += 1;
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        let t = self.next(&format!("'{s}'"))?;
        if t.text != s {
            return Err(perr(self.line, t.col, format!("expected '{s}', found '{}'", t.text)));
        }
        Ok(())
    }

    fn at(&self, s: &str) -> bool {
        matches!(self.peek(), Some(t) if t.text == s)
    }

    fn done(&self) -> Result<()> {
        match self.peek() {
            Some(t) => Err(perr(self.line, t.col, format!("unexpected '{}'", t.text))),
            None => Ok(()),
        }
    }
}

fn is_index(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Parser {
    declared_n: Option<usize>,
    max_index: Option<usize>,
    params: Vec<String>,
}

impl Parser {
    fn index(&mut self, c: &mut Cursor) -> Result<usize> {
        let t = c.next("qubit index")?;
        if !is_index(&t.text) {
            return Err(perr(c.line, t.col, format!("expected qubit index, found '{}'", t.text)));
        }
        let q: usize = t.text.parse().map_err(|_| perr(c.line, t.col, "qubit index too large"))?;
        if let Some(n) = self.declared_n {
            if q >= n {
                return Err(perr(c.line, t.col, format!("qubit index {q} out of range for {n} qubits")));
            }
        }
        self.max_index = Some(self.max_index.map_or(q, |m| m.max(q)));
        c.skip_commas();
        Ok(q)
    }

    /// Leading index tokens, leaving at least `reserve` non-comma tokens unread.
    fn indices(&mut self, c: &mut Cursor, reserve: usize) -> Result<Vec<(usize, usize)>> {
        let mut qs = Vec::new();
        let left = |c: &Cursor| c.toks[c.pos..].iter().filter(|t| t.text != ",").count();
        while matches!(c.peek(), Some(t) if is_index(&t.text)) && left(c) > reserve {
            let col = c.peek().unwrap().col;
            qs.push((self.index(c)?, col));
        }
        Ok(qs)
    }

    fn pauli(&self, c: &mut Cursor) -> Result<(PauliString, usize)> {
        let t = c.next("Pauli string")?;
        let p: PauliString =
            t.text.parse().map_err(|_| perr(c.line, t.col, format!("invalid Pauli string '{}'", t.text)))?;
        if p.num_qubits() == 0 {
            return Err(perr(c.line, t.col, "empty Pauli string"));
        }
        c.skip_commas();
        Ok((p, t.col))
    }

    fn weight(&self, c: &mut Cursor) -> Result<Weight> {
        let t = c.next("weight")?;
        let w = ExprParser { s: t.text.as_bytes(), pos: 0, line: c.line, col: t.col, params: &self.params }.parse()?;
        c.skip_commas();
        Ok(w)
    }

    /// Qubits for a local operator: explicit list, or the whole register when omitted.
    fn placement(&mut self, c: &mut Cursor, p: &PauliString, pcol: usize, explicit: Vec<(usize, usize)>) -> Result<Vec<usize>> {
        if explicit.is_empty() {
            self.max_index = Some(self.max_index.map_or(p.num_qubits() - 1, |m| m.max(p.num_qubits() - 1)));
            if let Some(n) = self.declared_n {
                if p.num_qubits() != n {
                    return Err(perr(c.line, pcol, format!("Pauli string has {} qubits, register has {n}", p.num_qubits())));
                }
            }
            return Ok((0..p.num_qubits()).collect());
        }
        if explicit.len() != p.num_qubits() {
            return Err(perr(c.line, pcol, format!("Pauli string has {} qubits but {} indices given", p.num_qubits(), explicit.len())));
        }
        let mut seen = HashSet::new();
        for &(q, col) in &explicit {
            if !seen.insert(q) {
                return Err(perr(c.line, col, format!("repeated qubit {q}")));
            }
        }
        Ok(explicit.into_iter().map(|(q, _)| q).collect())
    }
}

struct ExprParser<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
    params: &'a [String],
}

impl ExprParser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        perr(self.line, self.col + self.pos, msg)
    }

    fn parse(mut self) -> Result<Weight> {
        let w = self.sum()?;
        if self.pos != self.s.len() {
            return Err(self.err(format!("unexpected '{}'", self.s[self.pos] as char)));
        }
        Ok(w)
    }

    fn sum(&mut self) -> Result<Weight> {
        let mut acc = self.product()?;
        while let Some(&c) = self.s.get(self.pos) {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc = acc + self.product()?;
                }
                b'-' => {
                    self.pos += 1;
                    acc = acc - self.product()?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Weight> {
        let mut acc = self.unary()?;
        while let Some(&c) = self.s.get(self.pos) {
            match c {
                b'*' => {
                    self.pos += 1;
                    acc = acc * self.unary()?;
                }
                b'/' => {
                    self.pos += 1;
                    acc = acc / self.unary()?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Weight> {
        if self.s.get(self.pos) == Some(&b'-') {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Weight> {
        let start = self.pos;
        match self.s.get(self.pos) {
            None => Err(self.err("expected a number or parameter")),
            Some(b'(') => {
                self.pos += 1;
                let w = self.sum()?;
                if self.s.get(self.pos) != Some(&b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(w)
            }
            Some(c) if c.is_ascii_digit() || *c == b'.' => {
                while let Some(&c) = self.s.get(self.pos) {
                    let exp_sign = (c == b'+' || c == b'-') && matches!(self.s.get(self.pos - 1), Some(b'e' | b'E'));
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
                let v: f64 = text.parse().map_err(|_| perr(self.line, self.col + start, format!("invalid number '{text}'")))?;
                Ok(Weight::Num(v))
            }
            Some(c) if c.is_ascii_alphabetic() || *c == b'_' => {
                while matches!(self.s.get(self.pos), Some(c) if c.is_ascii_alphanumeric() || *c == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
                if !self.params.iter().any(|p| p == name) {
                    return Err(perr(self.line, self.col + start, format!("undeclared parameter '{name}'")));
                }
                Ok(Weight::Sym(Arc::new(Expr::Param(name.to_string()))))
            }
            Some(&c) => Err(self.err(format!("unexpected '{}'", c as char))),
        }
    }
}

fn parse_signed_row(text: &str, line: usize) -> Result<PauliString> {
    let t = text.trim();
    let col = text.find(t).unwrap_or(0) + 1;
    t.parse().map_err(|_| perr(line, col, format!("invalid Pauli string '{t}'")))
}

impl std::str::FromStr for Circuit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

/// Parses the text format. The `NSFC 1` header and `QUBITS` are optional; without `QUBITS` the
/// register is sized by the largest index used.
pub fn parse(text: &str) -> Result<Circuit> {
    let mut p = Parser { declared_n: None, max_index: None, params: Vec::new() };
    let mut ops: Vec<(usize, Op)> = Vec::new();
    let mut state_rows: Option<(usize, Vec<PauliString>, Option<Vec<PauliString>>)> = None;
    let mut labels: HashSet<String> = HashSet::new();
    let mut measure_count = 0;
    let mut seen_directive = false;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    while let Some((ln, raw)) = lines.next() {
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let toks = split_line(body, ln)?;
        let end_col = body.trim_end().chars().count() + 1;
        let mut c = Cursor { toks: &toks, pos: 0, line: ln, end_col };
        let head = c.next("directive")?;
        let first = !seen_directive;
        seen_directive = true;
        match head.text.as_str() {
            "NSFC" => {
                if !first {
                    return Err(perr(ln, head.col, "header must be the first line"));
                }
                let v = c.next("format version")?;
                if v.text != "1" {
                    return Err(perr(ln, v.col, format!("unsupported format version '{}'", v.text)));
                }
            }
            "QUBITS" => {
                if p.declared_n.is_some() || !ops.is_empty() || state_rows.is_some() {
                    return Err(perr(ln, head.col, "QUBITS must precede all operations and appear once"));
                }
                let t = c.next("qubit count")?;
                let n: usize = t.text.parse().map_err(|_| perr(ln, t.col, format!("invalid qubit count '{}'", t.text)))?;
                if n == 0 {
                    return Err(perr(ln, t.col, "register must have at least one qubit"));
                }
                p.declared_n = Some(n);
            }
            "PARAM" => {
                while let Some(t) = c.peek() {
                    c.pos += 1;
                    if t.text == "," {
                        continue;
                    }
                    if !is_ident(&t.text) {
                        return Err(perr(ln, t.col, format!("invalid parameter name '{}'", t.text)));
                    }
                    if p.params.contains(&t.text) {
                        return Err(perr(ln, t.col, format!("parameter '{}' declared twice", t.text)));
                    }
                    p.params.push(t.text.clone());
                }
            }
            "STATE" => {
                if state_rows.is_some() || !ops.is_empty() {
                    return Err(perr(ln, head.col, "STATE must precede all operations and appear once"));
                }
                c.done()?;
                let mut first_half = Vec::new();
                let mut second: Option<Vec<PauliString>> = None;
                loop {
                    let Some((ln2, raw2)) = lines.next() else {
                        return Err(perr(ln, head.col, "STATE block without END"));
                    };
                    let b = strip_comment(raw2).trim();
                    match b {
                        "" => continue,
                        "END" => break,
                        "---" => {
                            if second.is_some() {
                                return Err(perr(ln2, 1, "repeated '---'"));
                            }
                            second = Some(Vec::new());
                        }
                        _ => {
                            let row = parse_signed_row(strip_comment(raw2), ln2)?;
                            match &mut second {
                                Some(v) => v.push(row),
                                None => first_half.push(row),
                            }
                        }
                    }
                }
                state_rows = Some((ln, first_half, second));
            }
            name => {
                let op = parse_op(name, head, &mut c, &mut p, &mut labels, &mut measure_count)?;
                c.done()?;
                ops.push((ln, op));
            }
        }
        c.done()?;
    }

    let n = match (p.declared_n, p.max_index) {
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => match &state_rows {
            Some((_, rows, _)) if !rows.is_empty() => rows[0].num_qubits(),
            _ => return Err(perr(1, 1, "empty circuit: declare QUBITS")),
        },
    };
    let initial = match state_rows {
        None => None,
        Some((ln, a, b)) => {
            let bad = |e: Error| perr(ln, 1, format!("invalid STATE block: {e}"));
            let t = match b {
                Some(stabs) => StabilizerTableau::from_rows(&a, &stabs).map_err(bad)?,
                None => StabilizerTableau::from_stabilizers(&a).map_err(bad)?,
            };
            if t.num_qubits() != n {
                return Err(perr(ln, 1, format!("STATE has {} qubits, register has {n}", t.num_qubits())));
            }
            Some(t)
        }
    };
    let circuit = Circuit { n, params: p.params, initial, ops: ops.iter().map(|(_, op)| op.clone()).collect() };
    let mut map = QubitMap::new(n);
    for (ln, op) in &ops {
        let at = |e: Error| perr(*ln, 1, e.to_string());
        match op {
            Op::TraceOut(q) => {
                map.remove(*q).map_err(at)?;
            }
            Op::Gate(g) => {
                for q in g.qubits() {
                    map.get(q).map_err(at)?;
                }
            }
            Op::Channel(ch) => {
                for q in ch.qubits() {
                    map.get(q).map_err(at)?;
                }
            }
            Op::Measure(m) => {
                for &q in &m.qubits {
                    map.get(q).map_err(at)?;
                }
            }
            Op::General(g) => {
                map.get(g.qubit()).map_err(at)?;
            }
        }
    }
    Ok(circuit)
}

fn parse_op(
    name: &str,
    head: &Tok,
    c: &mut Cursor,
    p: &mut Parser,
    labels: &mut HashSet<String>,
    measure_count: &mut usize,
) -> Result<Op> {
    let ln = c.line;
    let one = |c: &mut Cursor, p: &mut Parser, f: fn(usize) -> Gate| -> Result<Op> { Ok(Op::Gate(f(p.index(c)?))) };
    let two = |c: &mut Cursor, p: &mut Parser, f: fn(usize, usize) -> Gate| -> Result<Op> {
        let a = p.index(c)?;
        let col = c.peek().map(|t| t.col).unwrap_or(c.end_col);
        let b = p.index(c)?;
        if a == b {
            return Err(perr(c.line, col, format!("repeated qubit {a}")));
        }
        Ok(Op::Gate(f(a, b)))
    };
    match name {
        "H" => one(c, p, Gate::H),
        "S" => one(c, p, Gate::S),
        "SDG" => one(c, p, Gate::Sdg),
        "X" => one(c, p, Gate::X),
        "Y" => one(c, p, Gate::Y),
        "Z" => one(c, p, Gate::Z),
        "CNOT" | "CX" => two(c, p, Gate::Cnot),
        "CZ" => two(c, p, Gate::Cz),
        "DEPOL1" => {
            let q = p.index(c)?;
            Ok(Op::Channel(ChannelSpec::Depol1 { q, p: p.weight(c)? }))
        }
        "DEPOL2" => {
            let a = p.index(c)?;
            let col = c.peek().map(|t| t.col).unwrap_or(c.end_col);
            let b = p.index(c)?;
            if a == b {
                return Err(perr(ln, col, format!("repeated qubit {a}")));
            }
            Ok(Op::Channel(ChannelSpec::Depol2 { a, b, p: p.weight(c)? }))
        }
        "CORR" => {
            let (op, pcol) = p.pauli(c)?;
            if op.is_negative() || op.is_identity() {
                return Err(perr(ln, pcol, "CORR needs an unsigned non-identity Pauli"));
            }
            let explicit = p.indices(c, 1)?;
            let qubits = p.placement(c, &op, pcol, explicit)?;
            Ok(Op::Channel(ChannelSpec::Corr { qubits, op, p: p.weight(c)? }))
        }
        "CHANNEL" => {
            c.expect("{")?;
            let mut terms = Vec::new();
            let mut width = None;
            let mut pcol0 = head.col;
            while !c.at("}") {
                let w = p.weight_until_colon(c)?;
                c.expect(":")?;
                let (op, pcol) = p.pauli(c)?;
                if op.is_negative() {
                    return Err(perr(ln, pcol, "channel operators are unsigned"));
                }
                if *width.get_or_insert(op.num_qubits()) != op.num_qubits() {
                    return Err(perr(ln, pcol, "channel operators differ in length"));
                }
                pcol0 = pcol;
                terms.push((w, op));
            }
            c.expect("}")?;
            if terms.is_empty() {
                return Err(perr(ln, head.col, "empty channel"));
            }
            let explicit = if c.at("@") {
                c.pos += 1;
                c.expect("[")?;
                let qs = p.indices(c, 0)?;
                c.expect("]")?;
                qs
            } else {
                Vec::new()
            };
            let qubits = p.placement(c, &terms[0].1, pcol0, explicit)?;
            Ok(Op::Channel(ChannelSpec::Literal { qubits, terms }))
        }
        "M" => {
            let (basis, pcol) = p.pauli(c)?;
            if basis.is_identity() {
                return Err(perr(ln, pcol, "cannot measure the identity"));
            }
            let explicit = p.indices(c, 0)?;
            let qubits = p.placement(c, &basis, pcol, explicit)?;
            let mut forced = None;
            if c.at("->") {
                c.pos += 1;
                let t = c.next("outcome")?;
                forced = Some(match t.text.as_str() {
                    "+1" | "1" => 1,
                    "-1" => -1,
                    other => return Err(perr(ln, t.col, format!("outcome must be +1 or -1, found '{other}'"))),
                });
            }
            let label = if c.at("AS") {
                c.pos += 1;
                let t = c.next("record label")?;
                if !is_ident(&t.text) {
                    return Err(perr(ln, t.col, format!("invalid record label '{}'", t.text)));
                }
                t.text.clone()
            } else {
                format!("m{measure_count}")
            };
            if !labels.insert(label.clone()) {
                return Err(perr(ln, head.col, format!("duplicate record label '{label}'")));
            }
            *measure_count += 1;
            Ok(Op::Measure(Measurement { qubits, basis, forced, label }))
        }
        "TRACEOUT" => Ok(Op::TraceOut(p.index(c)?)),
        "RZ" => {
            let q = p.index(c)?;
            let t = c.next("angle")?;
            let w = ExprParser { s: t.text.as_bytes(), pos: 0, line: ln, col: t.col, params: &[] }.parse()?;
            let theta = w.as_num().expect("no parameters allowed");
            Ok(Op::General(GeneralSpec::Rz { q, theta }))
        }
        "T" => Ok(Op::General(GeneralSpec::T(p.index(c)?))),
        "TDG" => Ok(Op::General(GeneralSpec::Tdg(p.index(c)?))),
        other => Err(perr(ln, head.col, format!("unknown directive '{other}'"))),
    }
}

impl Parser {
    /// Weight inside a `CHANNEL {...}` literal, where `:` separates it from the operator.
    fn weight_until_colon(&self, c: &mut Cursor) -> Result<Weight> {
        let t = c.next("weight")?;
        ExprParser { s: t.text.as_bytes(), pos: 0, line: c.line, col: t.col, params: &self.params }.parse()
    }
}
