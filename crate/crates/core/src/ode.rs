//! Autonomous polynomial ODE systems `X' = Σ_k P_k X^{[k]}` and the induced
//! propagation blocks `P^{ij}` used by the map builder.
//!
//! # Text format
//!
//! ```text
//! # Lotka-Volterra
//! x' = -y - x*y
//! y' = x + x*y
//! ```
//!
//! Equations are separated by newlines or `;`, and `#` starts a comment that
//! runs to the end of the line. Each equation is `<name>' = <expr>`. Variables
//! are declared by their left-hand sides in order of appearance, so a
//! right-hand side may mention a variable declared further down. Expressions
//! use decimal literals (`2`, `0.5`, `1e-3`), declared variables, `+`, `-`,
//! `*`, `/` by a constant, `^` with a non-negative integer exponent, and
//! parentheses. Anything else (function calls, division by a variable,
//! fractional powers, the time variable `t` when it is not declared) is
//! rejected as an unsupported expression.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::monomial::{monomial_count, MonomialBasis, MultiIndex, PowerTable};

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialODE {
    names: Vec<String>,
    degree: usize,
    // blocks[k] is n × C(n+k-1, k)
    blocks: Vec<DMatrix<f64>>,
}

impl PolynomialODE {
    /// Builds a system from coefficient blocks `P_0..P_d`.
    pub fn from_blocks(names: Vec<String>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        if blocks.is_empty() {
            return Err(Error::InvalidConfig("at least the constant block is required".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            let cols = monomial_count(n, k);
            if b.nrows() != n || b.ncols() != cols {
                return Err(Error::InvalidConfig(format!(
                    "block {k} has shape {}x{}, expected {n}x{cols}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("coefficient in block {k}")));
            }
        }
        let mut blocks = blocks;
        if blocks.len() < 2 {
            blocks.push(DMatrix::zeros(n, n));
        }
        let degree = blocks.len() - 1;
        Ok(PolynomialODE {
            names,
            degree,
            blocks,
        })
    }

    /// The system `X' = 0` carrying blocks up to `degree`.
    pub fn zero(names: Vec<String>, degree: usize) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        let blocks = (0..=degree.max(1))
            .map(|k| DMatrix::zeros(n, monomial_count(n, k)))
            .collect();
        Self::from_blocks(names, blocks)
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_ode(text)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// Highest right-hand-side degree carried (at least 1).
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn variable_names(&self) -> &[String] {
        &self.names
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn has_constant_terms(&self) -> bool {
        self.blocks[0].iter().any(|&v| v != 0.0)
    }

    /// Evaluates the right-hand side at `x`.
    pub fn eval_rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let table = PowerTable::new(n, self.degree);
        Ok(self.eval_with(&table, x))
    }

    pub(crate) fn eval_with(&self, table: &PowerTable, x: &[f64]) -> Vec<f64> {
        let powers = table.powers(x);
        let mut out = vec![0.0; self.n()];
        for (block, p) in self.blocks.iter().zip(&powers) {
            for (r, o) in out.iter_mut().enumerate() {
                *o += block.row(r).iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    /// Nonzero terms `(β, c)` of equation `row`, lowest degree first.
    pub fn terms(&self, row: usize) -> Vec<(MultiIndex, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for (k, block) in self.blocks.iter().enumerate() {
            let basis = MonomialBasis::new(n, k);
            for (c, alpha) in basis.entries().iter().enumerate() {
                let v = block[(row, c)];
                if v != 0.0 {
                    out.push((alpha.clone(), v));
                }
            }
        }
        out
    }

    /// Block `P^{ij}` with `d/dt X^{[i]} = Σ_j P^{ij} X^{[j]}` along solutions.
    ///
    /// Built by Leibniz differentiation of each degree-`i` monomial:
    /// `d/dt X^α = Σ_m α_m X^{α-e_m} F_m(X)`. Nonzero blocks have
    /// `i - 1 ≤ j ≤ i + d - 1` (the `j = i - 1` block comes from constant
    /// terms only); any other pair gives a zero block.
    pub fn induced_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.n();
        let src = MonomialBasis::new(n, i);
        let dst = MonomialBasis::new(n, j);
        let mut out = DMatrix::zeros(src.len(), dst.len());
        if i == 0 || j + 1 < i || j > i + self.degree - 1 {
            return out;
        }
        let k = j + 1 - i;
        let rhs_basis = MonomialBasis::new(n, k);
        let rhs = &self.blocks[k];
        for (r, alpha) in src.entries().iter().enumerate() {
            for m in 0..n {
                let Some(lower) = alpha.lowered(m) else {
                    continue;
                };
                let mult = alpha.exponents()[m] as f64;
                for (c, beta) in rhs_basis.entries().iter().enumerate() {
                    let coef = rhs[(m, c)];
                    if coef == 0.0 {
                        continue;
                    }
                    let target = lower.product(beta).expect("same dimension");
                    let col = dst.index_of(&target).expect("degree matches by construction");
                    out[(r, col)] += mult * coef;
                }
            }
        }
        out
    }
}

impl fmt::Display for PolynomialODE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (row, name) in self.names.iter().enumerate() {
            write!(f, "{name}' = ")?;
            let terms = self.terms(row);
            if terms.is_empty() {
                write!(f, "0")?;
            }
            for (t, (alpha, c)) in terms.iter().enumerate() {
                let sign = if *c < 0.0 { "-" } else { "+" };
                if t == 0 {
                    if *c < 0.0 {
                        write!(f, "-")?;
                    }
                } else {
                    write!(f, " {sign} ")?;
                }
                let mag = c.abs();
                let factors = monomial_text(alpha, &self.names);
                match (factors.is_empty(), mag == 1.0) {
                    (true, _) => write!(f, "{mag:?}")?,
                    (false, true) => write!(f, "{factors}")?,
                    (false, false) => write!(f, "{mag:?}*{factors}")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn monomial_text(alpha: &MultiIndex, names: &[String]) -> String {
    let mut parts = Vec::new();
    for (m, &e) in alpha.exponents().iter().enumerate() {
        match e {
            0 => {}
            1 => parts.push(names[m].clone()),
            _ => parts.push(format!("{}^{e}", names[m])),
        }
    }
    parts.join("*")
}

impl FromStr for PolynomialODE {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_ode(s)
    }
}

// ---------------------------------------------------------------------------
// Parser

type Poly = BTreeMap<Vec<u32>, f64>;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Prime,
    Eq,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Statement {
    tokens: Vec<Spanned>,
    line: usize,
    column: usize,
}

fn lex_line(line: &str, line_no: usize) -> Result<Vec<Vec<Spanned>>> {
    let chars: Vec<char> = line.chars().collect();
    let mut statements = vec![Vec::new()];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        let push = |statements: &mut Vec<Vec<Spanned>>, tok| {
            statements.last_mut().unwrap().push(Spanned {
                tok,
                line: line_no,
                column,
            })
        };
        match c {
            '#' => break,
            ';' => {
                statements.push(Vec::new());
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            '+' => {
                push(&mut statements, Tok::Plus);
                i += 1;
            }
            '-' => {
                push(&mut statements, Tok::Minus);
                i += 1;
            }
            '*' => {
                push(&mut statements, Tok::Star);
                i += 1;
            }
            '/' => {
                push(&mut statements, Tok::Slash);
                i += 1;
            }
            '^' => {
                push(&mut statements, Tok::Caret);
                i += 1;
            }
            '(' => {
                push(&mut statements, Tok::LParen);
                i += 1;
            }
            ')' => {
                push(&mut statements, Tok::RParen);
                i += 1;
            }
            '\'' => {
                push(&mut statements, Tok::Prime);
                i += 1;
            }
            '=' => {
                push(&mut statements, Tok::Eq);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    column,
                    message: format!("invalid number `{text}`"),
                })?;
                push(&mut statements, Tok::Num(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                push(&mut statements, Tok::Ident(text));
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    column,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(statements)
}

/// Parses the ODE text format described in the module docs.
pub fn parse_ode(text: &str) -> Result<PolynomialODE> {
    let mut statements = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        for tokens in lex_line(line, idx + 1)? {
            if let Some(first) = tokens.first() {
                statements.push(Statement {
                    line: first.line,
                    column: first.column,
                    tokens,
                });
            }
        }
    }
    if statements.is_empty() {
        return Err(Error::EmptySystem);
    }

    let mut names: Vec<String> = Vec::new();
    let mut rhs_tokens: Vec<&[Spanned]> = Vec::new();
    for st in &statements {
        let t = &st.tokens;
        let ok = t.len() >= 3
            && matches!(t[0].tok, Tok::Ident(_))
            && t[1].tok == Tok::Prime
            && t[2].tok == Tok::Eq;
        if !ok {
            return Err(Error::Parse {
                line: st.line,
                column: st.column,
                message: "expected `<name>' = <expression>`".into(),
            });
        }
        let Tok::Ident(name) = &t[0].tok else { unreachable!() };
        if names.contains(name) {
            return Err(Error::Parse {
                line: st.line,
                column: st.column,
                message: format!("variable `{name}` has more than one equation"),
            });
        }
        names.push(name.clone());
        rhs_tokens.push(&t[3..]);
    }

    let n = names.len();
    let mut polys = Vec::with_capacity(n);
    for (st, toks) in statements.iter().zip(rhs_tokens) {
        if toks.is_empty() {
            return Err(Error::Parse {
                line: st.line,
                column: st.column,
                message: "missing right-hand side".into(),
            });
        }
        let mut p = ExprParser {
            toks,
            pos: 0,
            names: &names,
            end: (st.line, st.tokens.last().map(|t| t.column + 1).unwrap_or(1)),
        };
        let poly = p.expr()?;
        if p.pos != toks.len() {
            let t = &toks[p.pos];
            return Err(Error::Parse {
                line: t.line,
                column: t.column,
                message: "unexpected token after expression".into(),
            });
        }
        polys.push(poly);
    }

    let degree = polys
        .iter()
        .flat_map(|p| p.iter())
        .filter(|(_, &c)| c != 0.0)
        .map(|(e, _)| e.iter().map(|&v| v as usize).sum::<usize>())
        .max()
        .unwrap_or(0)
        .max(1);
    let bases: Vec<MonomialBasis> = (0..=degree).map(|k| MonomialBasis::new(n, k)).collect();
    let mut blocks: Vec<DMatrix<f64>> = bases.iter().map(|b| DMatrix::zeros(n, b.len())).collect();
    for (row, poly) in polys.iter().enumerate() {
        for (exps, &c) in poly {
            if c == 0.0 {
                continue;
            }
            let alpha = MultiIndex::new(exps.clone());
            let k = alpha.degree();
            let col = bases[k].index_of(&alpha)?;
            blocks[k][(row, col)] = c;
        }
    }
    PolynomialODE::from_blocks(names, blocks)
}

struct ExprParser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    names: &'a [String],
    end: (usize, usize),
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.column))
            .unwrap_or(self.end)
    }

    fn parse_err(&self, message: impl Into<String>) -> Error {
        let (line, column) = self.here();
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn unsupported(&self, at: (usize, usize), message: impl Into<String>) -> Error {
        Error::Unsupported {
            line: at.0,
            column: at.1,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Poly> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = poly_add(&acc, &rhs, 1.0);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = poly_add(&acc, &rhs, -1.0);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    acc = poly_mul(&acc, &rhs);
                }
                Some(Tok::Slash) => {
                    let at = self.here();
                    self.pos += 1;
                    let rhs = self.unary()?;
                    let Some(c) = constant_value(&rhs) else {
                        return Err(self.unsupported(at, "division by a non-constant expression"));
                    };
                    if c == 0.0 {
                        return Err(self.parse_err("division by zero"));
                    }
                    acc = acc.into_iter().map(|(e, v)| (e, v / c)).collect();
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Poly> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                let inner = self.unary()?;
                Ok(inner.into_iter().map(|(e, v)| (e, -v)).collect())
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Poly> {
        let base = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        let at = self.here();
        self.pos += 1;
        match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 0.0 && *v <= 64.0 => {
                let e = *v as u32;
                self.pos += 1;
                let n = self.names.len();
                let mut acc: Poly = BTreeMap::from([(vec![0; n], 1.0)]);
                for _ in 0..e {
                    acc = poly_mul(&acc, &base);
                }
                Ok(acc)
            }
            Some(Tok::Num(_)) | Some(Tok::Minus) | Some(Tok::LParen) | Some(Tok::Ident(_)) => {
                Err(self.unsupported(at, "exponent must be a non-negative integer literal"))
            }
            _ => Err(self.parse_err("expected exponent after `^`")),
        }
    }

    fn atom(&mut self) -> Result<Poly> {
        let n = self.names.len();
        let at = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(BTreeMap::from([(vec![0; n], v)]))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    return Err(self.unsupported(at, format!("function call `{name}(...)`")));
                }
                match self.names.iter().position(|v| v == &name) {
                    Some(m) => {
                        let mut e = vec![0; n];
                        e[m] = 1;
                        Ok(BTreeMap::from([(e, 1.0)]))
                    }
                    None if name == "t" => Err(self.unsupported(
                        at,
                        "time-dependent right-hand sides are not supported",
                    )),
                    None => Err(Error::Parse {
                        line: at.0,
                        column: at.1,
                        message: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.parse_err("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Tok::Prime) => Err(self.unsupported(
                at,
                "derivatives on the right-hand side; substitute them first",
            )),
            _ => Err(self.parse_err("expected a number, variable or `(`")),
        }
    }
}

fn constant_value(p: &Poly) -> Option<f64> {
    let mut c = 0.0;
    for (e, &v) in p {
        if e.iter().all(|&x| x == 0) {
            c += v;
        } else if v != 0.0 {
            return None;
        }
    }
    Some(c)
}

fn poly_add(a: &Poly, b: &Poly, sign: f64) -> Poly {
    let mut out = a.clone();
    for (e, &v) in b {
        *out.entry(e.clone()).or_insert(0.0) += sign * v;
    }
    out
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ea, &va) in a {
        for (eb, &vb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += va * vb;
        }
    }
    out
}
