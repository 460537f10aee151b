//! Boolean update expressions: AST, precedence parser, canonical printer and
//! a compiled truth-table evaluator used on the hot path.
//!
//! Precedence from tightest to loosest is `!`, `&`, `^`, `|`. Binary
//! operators associate to the left.

use std::fmt;

use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    /// Node variable `x<i>`, 1-based.
    Var(usize),
    /// Control input `u<j>`, 1-based.
    Input(usize),
    Const(bool),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Xor(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    #[allow(clippy::should_implement_trait)]
    pub fn not(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    pub fn and(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Or(Box::new(a), Box::new(b))
    }

    pub fn xor(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Xor(Box::new(a), Box::new(b))
    }

    /// Evaluates with `node(i)` and `input(j)` supplying variable values.
    pub fn eval_with<N, I>(&self, node: &N, input: &I) -> bool
    where
        N: Fn(usize) -> bool,
        I: Fn(usize) -> bool,
    {
        match self {
            BoolExpr::Var(i) => node(*i),
            BoolExpr::Input(j) => input(*j),
            BoolExpr::Const(b) => *b,
            BoolExpr::Not(e) => !e.eval_with(node, input),
            BoolExpr::And(a, b) => a.eval_with(node, input) && b.eval_with(node, input),
            BoolExpr::Or(a, b) => a.eval_with(node, input) || b.eval_with(node, input),
            BoolExpr::Xor(a, b) => a.eval_with(node, input) ^ b.eval_with(node, input),
        }
    }

    /// Largest node and input index referenced, 0 when none.
    pub fn max_indices(&self) -> (usize, usize) {
        let mut acc = (0, 0);
        self.visit(&mut |e| match e {
            BoolExpr::Var(i) => acc.0 = acc.0.max(*i),
            BoolExpr::Input(j) => acc.1 = acc.1.max(*j),
            _ => {}
        });
        acc
    }

    /// Sorted, deduplicated variables referenced by the expression.
    pub fn support(&self) -> Vec<Variable> {
        let mut out = Vec::new();
        self.visit(&mut |e| match e {
            BoolExpr::Var(i) => out.push(Variable::Node(*i)),
            BoolExpr::Input(j) => out.push(Variable::Input(*j)),
            _ => {}
        });
        out.sort();
        out.dedup();
        out
    }

    fn visit<F: FnMut(&BoolExpr)>(&self, f: &mut F) {
        f(self);
        match self {
            BoolExpr::Not(e) => e.visit(f),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) | BoolExpr::Xor(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            BoolExpr::Or(..) => 1,
            BoolExpr::Xor(..) => 2,
            BoolExpr::And(..) => 3,
            BoolExpr::Not(_) => 4,
            _ => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    Node(usize),
    Input(usize),
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &BoolExpr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            BoolExpr::Var(i) => write!(f, "x{i}"),
            BoolExpr::Input(j) => write!(f, "u{j}"),
            BoolExpr::Const(b) => write!(f, "{}", u8::from(*b)),
            BoolExpr::Not(e) => {
                f.write_str("!")?;
                child(f, e, e.precedence() < 4)
            }
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) | BoolExpr::Xor(a, b) => {
                let p = self.precedence();
                let op = match self {
                    BoolExpr::And(..) => " & ",
                    BoolExpr::Or(..) => " | ",
                    _ => " ^ ",
                };
                child(f, a, a.precedence() < p)?;
                f.write_str(op)?;
                child(f, b, b.precedence() <= p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Node(usize),
    Input(usize),
    Const(bool),
    Not,
    And,
    Or,
    Xor,
    LParen,
    RParen,
}

/// Parses a single expression. `line` and `col0` locate the text inside a
/// larger file for error messages (both 1-based).
pub fn parse_expr(text: &str, line: usize, col0: usize) -> Result<BoolExpr, ParseError> {
    let toks = tokenize(text, line, col0)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        line,
        end_col: col0 + text.chars().count(),
    };
    let e = p.or()?;
    if let Some(&(_, col)) = p.toks.get(p.pos) {
        return Err(ParseError::new(line, col, "unexpected trailing token"));
    }
    Ok(e)
}

fn tokenize(text: &str, line: usize, col0: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let col = col0 + i;
        let c = chars[i];
        let tok = match c {
            ' ' | '\t' | '\r' => {
                i += 1;
                continue;
            }
            '!' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '^' => Tok::Xor,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '0' => Tok::Const(false),
            '1' => Tok::Const(true),
            'x' | 'u' => {
                let start = i + 1;
                let mut end = start;
                while end < chars.len() && chars[end].is_ascii_digit() {
                    end += 1;
                }
                if end == start {
                    return Err(ParseError::new(line, col, format!("expected index after '{c}'")));
                }
                let digits: String = chars[start..end].iter().collect();
                let idx: usize = digits
                    .parse()
                    .map_err(|_| ParseError::new(line, col, "index too large"))?;
                if idx == 0 {
                    return Err(ParseError::new(line, col, "indices are 1-based"));
                }
                out.push((if c == 'x' { Tok::Node(idx) } else { Tok::Input(idx) }, col));
                i = end;
                continue;
            }
            other => {
                return Err(ParseError::new(line, col, format!("unexpected character '{other}'")))
            }
        };
        out.push((tok, col));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).map(|t| t.0)
    }

    fn err_here(&self, msg: &str) -> ParseError {
        let col = self.toks.get(self.pos).map_or(self.end_col, |t| t.1);
        ParseError::new(self.line, col, msg)
    }

    fn or(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.xor()?;
        while self.peek() == Some(Tok::Or) {
            self.pos += 1;
            lhs = BoolExpr::or(lhs, self.xor()?);
        }
        Ok(lhs)
    }

    fn xor(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(Tok::Xor) {
            self.pos += 1;
            lhs = BoolExpr::xor(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<BoolExpr, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(Tok::And) {
            self.pos += 1;
            lhs = BoolExpr::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<BoolExpr, ParseError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(BoolExpr::not(self.unary()?))
            }
            Some(Tok::Node(i)) => {
                self.pos += 1;
                Ok(BoolExpr::Var(i))
            }
            Some(Tok::Input(j)) => {
                self.pos += 1;
                Ok(BoolExpr::Input(j))
            }
            Some(Tok::Const(b)) => {
                self.pos += 1;
                Ok(BoolExpr::Const(b))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.or()?;
                if self.peek() != Some(Tok::RParen) {
                    return Err(self.err_here("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            _ => Err(self.err_here("expected operand")),
        }
    }
}

/// Truth table over an expression's support, evaluated by bit gathering.
///
/// State words hold `x1` in the most significant of `n` bits; input words
/// likewise hold `u1` in the most significant of `m` bits.
#[derive(Debug, Clone)]
pub(crate) struct CompiledExpr {
    // (from_input, bit position in the source word), most significant table bit first
    taps: Vec<(bool, u32)>,
    table: Vec<u64>,
}

/// Supports wider than this fall back to tree evaluation.
const MAX_TABLE_SUPPORT: usize = 20;

impl CompiledExpr {
    pub(crate) fn compile(e: &BoolExpr, n: usize, m: usize) -> Option<Self> {
        let support = e.support();
        if support.len() > MAX_TABLE_SUPPORT {
            return None;
        }
        let taps: Vec<(bool, u32)> = support
            .iter()
            .map(|v| match *v {
                Variable::Node(i) => (false, (n - i) as u32),
                Variable::Input(j) => (true, (m - j) as u32),
            })
            .collect();
        let k = support.len();
        let rows = 1usize << k;
        let mut table = vec![0u64; rows.div_ceil(64)];
        for row in 0..rows {
            let value_of = |v: Variable| {
                let pos = support.iter().position(|s| *s == v).expect("in support");
                (row >> (k - 1 - pos)) & 1 == 1
            };
            let bit = e.eval_with(&|i| value_of(Variable::Node(i)), &|j| value_of(Variable::Input(j)));
            if bit {
                table[row >> 6] |= 1 << (row & 63);
            }
        }
        Some(Self { taps, table })
    }

    #[inline]
    pub(crate) fn eval(&self, x: u64, u: u64) -> bool {
        let mut row = 0usize;
        for &(from_input, pos) in &self.taps {
            let w = if from_input { u } else { x };
            row = (row << 1) | ((w >> pos) & 1) as usize;
        }
        (self.table[row >> 6] >> (row & 63)) & 1 == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> BoolExpr {
        parse_expr(s, 1, 1).unwrap()
    }

    #[test]
    fn precedence_not_and_xor_or() {
        assert_eq!(
            p("x1 | x2 ^ x3 & !x4"),
            BoolExpr::or(
                BoolExpr::Var(1),
                BoolExpr::xor(
                    BoolExpr::Var(2),
                    BoolExpr::and(BoolExpr::Var(3), BoolExpr::not(BoolExpr::Var(4)))
                )
            )
        );
        assert_eq!(
            p("(x1 | x2) & u1"),
            BoolExpr::and(BoolExpr::or(BoolExpr::Var(1), BoolExpr::Var(2)), BoolExpr::Input(1))
        );
    }

    #[test]
    fn left_associative() {
        assert_eq!(
            p("x1 & x2 & x3"),
            BoolExpr::and(BoolExpr::and(BoolExpr::Var(1), BoolExpr::Var(2)), BoolExpr::Var(3))
        );
    }

    #[test]
    fn printer_keeps_right_grouping() {
        let e = BoolExpr::and(BoolExpr::Var(1), BoolExpr::and(BoolExpr::Var(2), BoolExpr::Var(3)));
        assert_eq!(e.to_string(), "x1 & (x2 & x3)");
        assert_eq!(p(&e.to_string()), e);
        assert_eq!(p("!(x1 ^ 1)").to_string(), "!(x1 ^ 1)");
    }

    #[test]
    fn errors_carry_columns() {
        let err = parse_expr("x1 & ", 4, 7).unwrap_err();
        assert_eq!((err.line, err.column), (4, 12));
        let err = parse_expr("x1 $ x2", 1, 1).unwrap_err();
        assert_eq!(err.column, 4);
        assert!(parse_expr("x0", 1, 1).is_err());
        assert!(parse_expr("(x1", 1, 1).is_err());
        assert!(parse_expr("x1 x2", 1, 1).is_err());
    }

    #[test]
    fn compiled_matches_tree() {
        let e = p("x1 & (x2 | x3) | !x1 & (x2 ^ x3) ^ u2");
        let (n, m) = (3, 2);
        let c = CompiledExpr::compile(&e, n, m).unwrap();
        for x in 0..8u64 {
            for u in 0..4u64 {
                let tree = e.eval_with(&|i| (x >> (n - i)) & 1 == 1, &|j| (u >> (m - j)) & 1 == 1);
                assert_eq!(c.eval(x, u), tree, "x={x} u={u}");
            }
        }
    }
}
