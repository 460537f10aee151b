//! Boolean control networks with state-flipped control.
//!
//! States are packed into a `u64` index with `x1` as the most significant of
//! the `n` bits, so the index of `(x1, .., xn)` is `sum 2^(n-i) * xi`. Inputs
//! use the same layout over `m` bits.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, ParseError, Result};
use crate::expr::{parse_expr, BoolExpr, CompiledExpr};

pub const MAX_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVec {
    n: usize,
    index: u64,
}

impl StateVec {
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let n = bits.len();
        if n > MAX_NODES {
            return Err(Error::Dimension {
                what: "nodes at most",
                expected: MAX_NODES,
                got: n,
            });
        }
        let index = bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b));
        Ok(Self { n, index })
    }

    pub fn from_index(n: usize, index: u64) -> Result<Self> {
        if n > MAX_NODES || (n < 64 && index >> n != 0) {
            return Err(Error::IndexOutOfRange {
                what: "state index",
                index: index as usize,
                max: if n >= 64 { usize::MAX } else { (1usize << n) - 1 },
            });
        }
        Ok(Self { n, index })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Zero-based state index.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Value of node `i` (1-based).
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!((1..=self.n).contains(&i));
        (self.index >> (self.n - i)) & 1 == 1
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (1..=self.n).map(|i| self.bit(i)).collect()
    }
}

/// Renders `n` bits of `index` with `x1` leftmost.
pub fn bit_string(n: usize, index: u64) -> String {
    (1..=n)
        .map(|i| if (index >> (n - i)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

impl fmt::Display for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bit_string(self.n, self.index))
    }
}

impl FromStr for StateVec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .enumerate()
            .map(|(i, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(ParseError::new(
                    1,
                    i + 1,
                    format!("expected binary digit, found '{other}'"),
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
        StateVec::from_bits(&bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputVec {
    m: usize,
    bits: u64,
}

impl InputVec {
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let s = StateVec::from_bits(bits)?;
        Ok(Self { m: s.n, bits: s.index })
    }

    pub fn from_index(m: usize, bits: u64) -> Result<Self> {
        let s = StateVec::from_index(m, bits)?;
        Ok(Self { m, bits: s.index })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn index(&self) -> u64 {
        self.bits
    }
}

impl fmt::Display for InputVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bit_string(self.m, self.bits))
    }
}

/// The set of nodes negated in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlipMask {
    n: usize,
    mask: u64,
}

impl FlipMask {
    pub fn empty(n: usize) -> Self {
        Self { n, mask: 0 }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &i in indices {
            if i == 0 || i > n {
                return Err(Error::IndexOutOfRange {
                    what: "flip node",
                    index: i,
                    max: n,
                });
            }
            mask |= 1 << (n - i);
        }
        Ok(Self { n, mask })
    }

    /// Mask in the packed state layout.
    pub fn from_raw(n: usize, mask: u64) -> Self {
        Self { n, mask }
    }

    pub fn raw(&self) -> u64 {
        self.mask
    }

    pub fn count(&self) -> u32 {
        self.mask.count_ones()
    }

    pub fn indices(&self) -> Vec<usize> {
        (1..=self.n).filter(|&i| (self.mask >> (self.n - i)) & 1 == 1).collect()
    }
}

impl fmt::Display for FlipMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_index_set(f, &self.indices())
    }
}

fn write_index_set(f: &mut fmt::Formatter<'_>, idx: &[usize]) -> fmt::Result {
    f.write_str("{")?;
    for (k, i) in idx.iter().enumerate() {
        if k > 0 {
            f.write_str(",")?;
        }
        write!(f, "{i}")?;
    }
    f.write_str("}")
}

/// An ordered set of flippable nodes (1-based, ascending, distinct).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FlipSet(Vec<usize>);

impl FlipSet {
    pub fn new(mut nodes: Vec<usize>) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        Self(nodes)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn is_subset_of(&self, other: &FlipSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    /// Bit `i - 1` set for every node `i`; unique per flip set.
    pub fn id_bits(&self) -> u64 {
        self.0.iter().fold(0, |acc, &i| acc | (1 << (i - 1)))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i == 0 || i > n) {
            Some(&i) => Err(Error::IndexOutOfRange {
                what: "flip set node",
                index: i,
                max: n,
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for FlipSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_index_set(f, &self.0)
    }
}

impl FromStr for FlipSet {
    type Err = Error;

    /// Accepts `{1,2}`, `1,2`, `{}` and whitespace variants.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.strip_prefix('{').unwrap_or(t);
        let t = t.strip_suffix('}').unwrap_or(t);
        let mut nodes = Vec::new();
        for part in t.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let i: usize = part.parse().map_err(|_| {
                Error::Parse(ParseError::new(1, 1, format!("bad node index '{part}'")))
            })?;
            if i == 0 {
                return Err(Error::Parse(ParseError::new(1, 1, "node indices are 1-based")));
            }
            nodes.push(i);
        }
        Ok(FlipSet::new(nodes))
    }
}

#[derive(Debug, Clone)]
enum Evaluator {
    Table(CompiledExpr),
    Tree,
}

/// A Boolean control network with `n` nodes and `m` inputs.
#[derive(Debug, Clone)]
pub struct NetworkDef {
    n: usize,
    m: usize,
    updates: Vec<BoolExpr>,
    compiled: Vec<Evaluator>,
}

impl PartialEq for NetworkDef {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m && self.updates == other.updates
    }
}

impl NetworkDef {
    pub fn new(n: usize, m: usize, updates: Vec<BoolExpr>) -> Result<Self> {
        if n == 0 || n > MAX_NODES {
            return Err(Error::InvalidParameter(format!(
                "node count must be in 1..={MAX_NODES}, got {n}"
            )));
        }
        if m > MAX_NODES {
            return Err(Error::InvalidParameter(format!("too many inputs: {m}")));
        }
        if updates.len() != n {
            return Err(Error::Dimension {
                what: "update expressions",
                expected: n,
                got: updates.len(),
            });
        }
        for e in &updates {
            let (max_node, max_input) = e.max_indices();
            if max_node > n {
                return Err(Error::IndexOutOfRange {
                    what: "node variable",
                    index: max_node,
                    max: n,
                });
            }
            if max_input > m {
                return Err(Error::IndexOutOfRange {
                    what: "input variable",
                    index: max_input,
                    max: m,
                });
            }
        }
        let compiled = updates
            .iter()
            .map(|e| CompiledExpr::compile(e, n, m).map_or(Evaluator::Tree, Evaluator::Table))
            .collect();
        Ok(Self {
            n,
            m,
            updates,
            compiled,
        })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> usize {
        self.m
    }

    pub fn updates(&self) -> &[BoolExpr] {
        &self.updates
    }

    /// Value of `x_i(t+1)` for packed `x` and `u`.
    #[inline]
    pub fn eval_node(&self, i: usize, x: u64, u: u64) -> bool {
        match &self.compiled[i - 1] {
            Evaluator::Table(c) => c.eval(x, u),
            Evaluator::Tree => self.updates[i - 1].eval_with(
                &|k| (x >> (self.n - k)) & 1 == 1,
                &|j| (u >> (self.m - j)) & 1 == 1,
            ),
        }
    }

    /// Unflipped successor on packed indices.
    #[inline]
    pub fn next_index(&self, x: u64, u: u64) -> u64 {
        let mut out = 0u64;
        for i in 1..=self.n {
            out = (out << 1) | u64::from(self.eval_node(i, x, u));
        }
        out
    }

    /// Flip first, then update.
    #[inline]
    pub fn step_index(&self, x: u64, u: u64, flip_mask: u64) -> u64 {
        self.next_index(x ^ flip_mask, u)
    }

    pub fn eval_update(&self, x: &StateVec, u: &InputVec) -> Result<StateVec> {
        self.check_dims(x, u)?;
        StateVec::from_index(self.n, self.next_index(x.index(), u.index()))
    }

    pub fn step_flipped(&self, x: &StateVec, u: &InputVec, f: &FlipMask) -> Result<StateVec> {
        let flipped = apply_flip(x, f)?;
        self.eval_update(&flipped, u)
    }

    fn check_dims(&self, x: &StateVec, u: &InputVec) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                what: "state bits",
                expected: self.n,
                got: x.len(),
            });
        }
        if u.len() != self.m {
            return Err(Error::Dimension {
                what: "input bits",
                expected: self.m,
                got: u.len(),
            });
        }
        Ok(())
    }
}

pub fn apply_flip(x: &StateVec, f: &FlipMask) -> Result<StateVec> {
    if f.n != x.len() {
        return Err(Error::Dimension {
            what: "flip mask width",
            expected: x.len(),
            got: f.n,
        });
    }
    StateVec::from_index(x.len(), x.index() ^ f.mask)
}

/// Canonical text form, accepted back by [`parse_network`].
impl fmt::Display for NetworkDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes: {}", self.n)?;
        writeln!(f, "inputs: {}", self.m)?;
        for (i, e) in self.updates.iter().enumerate() {
            writeln!(f, "x{}' = {}", i + 1, e)?;
        }
        Ok(())
    }
}

/// Splits a line at `#` and returns the content with its leading-space offset.
pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn header_value(line: &str, lineno: usize, key: &str) -> std::result::Result<usize, ParseError> {
    let Some((k, v)) = line.split_once(':') else {
        return Err(ParseError::new(lineno, 1, format!("expected '{key}: <count>'")));
    };
    if k.trim() != key {
        return Err(ParseError::new(lineno, 1, format!("expected '{key}:' header")));
    }
    let col = k.len() + 2 + (v.len() - v.trim_start().len());
    v.trim()
        .parse()
        .map_err(|_| ParseError::new(lineno, col, format!("expected a count after '{key}:'")))
}

pub fn parse_network(text: &str) -> Result<NetworkDef> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, strip_comment(l)))
        .filter(|(_, l)| !l.trim().is_empty());

    let (l1, nodes_line) = lines
        .next()
        .ok_or_else(|| ParseError::new(1, 1, "missing 'nodes:' header"))?;
    let n = header_value(nodes_line, l1, "nodes")?;
    let (l2, inputs_line) = lines
        .next()
        .ok_or_else(|| ParseError::new(l1 + 1, 1, "missing 'inputs:' header"))?;
    let m = header_value(inputs_line, l2, "inputs")?;
    if n == 0 || n > MAX_NODES {
        return Err(ParseError::new(l1, 1, format!("node count must be in 1..={MAX_NODES}")).into());
    }

    let mut slots: Vec<Option<BoolExpr>> = vec![None; n];
    let mut last_line = l2;
    for (lineno, line) in lines {
        last_line = lineno;
        let Some((lhs, rhs)) = line.split_once('=') else {
            return Err(ParseError::new(lineno, 1, "expected \"x<i>' = <expr>\"").into());
        };
        let lead = lhs.len() - lhs.trim_start().len();
        let target = lhs.trim();
        let idx = target
            .strip_prefix('x')
            .and_then(|t| t.strip_suffix('\''))
            .and_then(|t| t.trim().parse::<usize>().ok())
            .ok_or_else(|| ParseError::new(lineno, lead + 1, "expected \"x<i>'\" on the left"))?;
        if idx == 0 || idx > n {
            return Err(ParseError::new(
                lineno,
                lead + 1,
                format!("index {idx} out of range 1..={n}"),
            )
            .into());
        }
        let col0 = lhs.len() + 2;
        let expr = parse_expr(rhs, lineno, col0)?;
        let (max_node, max_input) = expr.max_indices();
        if max_node > n {
            return Err(ParseError::new(
                lineno,
                col0,
                format!("index {max_node} out of range: undefined variable x{max_node} (nodes: {n})"),
            )
            .into());
        }
        if max_input > m {
            return Err(ParseError::new(
                lineno,
                col0,
                format!("index {max_input} out of range: undefined variable u{max_input} (inputs: {m})"),
            )
            .into());
        }
        if slots[idx - 1].is_some() {
            return Err(ParseError::new(lineno, lead + 1, format!("x{idx} defined twice")).into());
        }
        slots[idx - 1] = Some(expr);
    }
    let missing: Vec<String> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(i, _)| format!("x{}", i + 1))
        .collect();
    if !missing.is_empty() {
        return Err(ParseError::new(
            last_line,
            1,
            format!(
                "node count mismatch: expected {n} update lines, missing {}",
                missing.join(", ")
            ),
        )
        .into());
    }
    NetworkDef::new(n, m, slots.into_iter().map(Option::unwrap).collect())
}
