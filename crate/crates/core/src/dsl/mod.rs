//! Inequality-constraint language over loading matrices.
//!
//! A constraint model is a list of strict comparisons between loadings,
//! absolute loadings and numeric literals:
//!
//! ```text
//! L[1,1] > abs(L[1,2])      # BMI on the first factor
//! abs(L[2,1]) < -L[2,2]
//! abs(L[7,1]) < 0.3; abs(L[7,2]) < 0.3
//! ```
//!
//! Statements are separated by newlines or `;`, and `#` starts a line comment.
//! Cell indices are 1-based in text. [`expand`] turns the statements into
//! atomic linear inequalities of the form `sum(c * L[j,k]) + d > 0`, which
//! [`satisfies`] evaluates against a loading matrix.

mod lexer;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Cell, UcfmSpec};
use lexer::{tokenize, Cursor, TokenKind};

pub(crate) use lexer::tokenize as lex;
pub(crate) use lexer::{Cursor as TokenCursor, TokenKind as Tok};

/// Lexical, syntactic or semantic error with a 1-based source position.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Operand {
    Cell(Cell),
    /// `abs(L[j,k])`, or `abs(-L[j,k])` when `inner_negated`.
    Abs { cell: Cell, inner_negated: bool },
    Number(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expr {
    pub negated: bool,
    pub operand: Operand,
}

impl Expr {
    pub fn cell(&self) -> Option<Cell> {
        match self.operand {
            Operand::Cell(c) | Operand::Abs { cell: c, .. } => Some(c),
            Operand::Number(_) => None,
        }
    }

    fn is_abs(&self) -> bool {
        matches!(self.operand, Operand::Abs { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    Less,
    Greater,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Statement {
    pub lhs: Expr,
    pub op: Comparison,
    pub rhs: Expr,
}

impl Statement {
    /// Orders the sides as `(greater, lesser)`.
    fn sides(&self) -> (&Expr, &Expr) {
        match self.op {
            Comparison::Greater => (&self.lhs, &self.rhs),
            Comparison::Less => (&self.rhs, &self.lhs),
        }
    }

    /// Checks that the statement expands to a conjunction of linear atoms.
    ///
    /// An absolute value may only enter `greater - lesser` with a negative sign
    /// (`a > abs(b)` or `-abs(b) > a`); the other placements describe a union
    /// of half-spaces.
    fn check_convex(&self) -> std::result::Result<(), String> {
        if self.lhs.cell().is_none() && self.rhs.cell().is_none() {
            return Err("statement must reference at least one cell".into());
        }
        if self.lhs.is_abs() && self.rhs.is_abs() {
            return Err("absolute values on both sides are not supported".into());
        }
        let (greater, lesser) = self.sides();
        let positive_abs =
            (greater.is_abs() && !greater.negated) || (lesser.is_abs() && lesser.negated);
        if positive_abs {
            return Err(
                "absolute value on the larger side is a disjunction; rewrite with abs() on the smaller side"
                    .into(),
            );
        }
        Ok(())
    }
}

/// Parsed constraint model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintAst {
    pub statements: Vec<Statement>,
}

/// One constraint model from a model file (`[model NAME]` section).
#[derive(Clone, Debug, PartialEq)]
pub struct NamedModel {
    pub name: String,
    pub source: String,
    pub ast: ConstraintAst,
}

/// Parses constraint text. Cell indices must be at least 1.
pub fn parse(text: &str) -> Result<ConstraintAst, ParseError> {
    parse_at(text, 1, None)
}

/// Parses constraint text and rejects cells outside a `p x m` loading matrix.
pub fn parse_with_bounds(text: &str, p: usize, m: usize) -> Result<ConstraintAst, ParseError> {
    parse_at(text, 1, Some((p, m)))
}

fn parse_at(
    text: &str,
    first_line: usize,
    bounds: Option<(usize, usize)>,
) -> Result<ConstraintAst, ParseError> {
    let mut cur = Cursor::new(tokenize(text, first_line)?);
    let mut statements = Vec::new();
    cur.skip_separators();
    while !cur.at(&TokenKind::Eof) {
        let start = cur.peek().clone();
        let lhs = parse_expr(&mut cur, bounds)?;
        let op = match cur.peek().kind {
            TokenKind::Less => Comparison::Less,
            TokenKind::Greater => Comparison::Greater,
            _ => return Err(cur.error("`<` or `>`")),
        };
        cur.next();
        let rhs = parse_expr(&mut cur, bounds)?;
        let stmt = Statement { lhs, op, rhs };
        stmt.check_convex().map_err(|message| ParseError {
            line: start.line,
            column: start.column,
            message,
        })?;
        statements.push(stmt);
        if !matches!(
            cur.peek().kind,
            TokenKind::Newline | TokenKind::Semicolon | TokenKind::Eof
        ) {
            return Err(cur.error("`;` or end of line"));
        }
        cur.skip_separators();
    }
    Ok(ConstraintAst { statements })
}

fn parse_expr(cur: &mut Cursor, bounds: Option<(usize, usize)>) -> Result<Expr, ParseError> {
    let negated = if cur.at(&TokenKind::Minus) {
        cur.next();
        true
    } else {
        false
    };
    let tok = cur.peek().clone();
    let operand = match &tok.kind {
        TokenKind::Number { value, .. } => {
            cur.next();
            Operand::Number(*value)
        }
        TokenKind::Ident(name) if name == "abs" => {
            cur.next();
            cur.expect(TokenKind::LParen, "`(`")?;
            let inner_negated = if cur.at(&TokenKind::Minus) {
                cur.next();
                true
            } else {
                false
            };
            let cell = parse_cell(cur, bounds)?;
            cur.expect(TokenKind::RParen, "`)`")?;
            Operand::Abs { cell, inner_negated }
        }
        TokenKind::Ident(name) if name == "L" => Operand::Cell(parse_cell(cur, bounds)?),
        _ => return Err(cur.error("cell `L[j,k]`, `abs(...)` or number")),
    };
    Ok(Expr { negated, operand })
}

fn parse_cell(cur: &mut Cursor, bounds: Option<(usize, usize)>) -> Result<Cell, ParseError> {
    let (j, k, head) = cur.cell_indices()?;
    if let Some((p, m)) = bounds {
        if j > p || k > m {
            return Err(ParseError {
                line: head.line,
                column: head.column,
                message: format!("cell L[{j},{k}] outside the {p}x{m} loading matrix"),
            });
        }
    }
    Ok(Cell::new(j - 1, k - 1))
}

/// Parses a model file made of `[model NAME]` sections.
pub fn parse_model_file(text: &str) -> Result<Vec<NamedModel>, ParseError> {
    let mut models: Vec<(String, usize, String)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let column = line.len() - line.trim_start().len() + 1;
            let inner = rest.strip_suffix(']').ok_or_else(|| ParseError {
                line: line_no,
                column,
                message: "section header must end with `]`".into(),
            })?;
            let name = inner.trim().strip_prefix("model").map(str::trim).unwrap_or("");
            if !inner.trim().starts_with("model ") || name.is_empty() {
                return Err(ParseError {
                    line: line_no,
                    column,
                    message: "expected section header `[model NAME]`".into(),
                });
            }
            if models.iter().any(|(n, _, _)| n == name) {
                return Err(ParseError {
                    line: line_no,
                    column,
                    message: format!("duplicate model name `{name}`"),
                });
            }
            models.push((name.to_string(), line_no + 1, String::new()));
        } else if let Some((_, _, body)) = models.last_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !trimmed.is_empty() && !trimmed.starts_with('#') {
            return Err(ParseError {
                line: line_no,
                column: 1,
                message: "constraints must follow a `[model NAME]` header".into(),
            });
        }
    }
    models
        .into_iter()
        .map(|(name, first_line, source)| {
            let ast = parse_at(&source, first_line, None)?;
            Ok(NamedModel { name, source, ast })
        })
        .collect()
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("-")?;
        }
        match self.operand {
            Operand::Cell(c) => write!(f, "{c}"),
            Operand::Abs { cell, inner_negated: false } => write!(f, "abs({cell})"),
            Operand::Abs { cell, inner_negated: true } => write!(f, "abs(-{cell})"),
            Operand::Number(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            Comparison::Less => "<",
            Comparison::Greater => ">",
        };
        write!(f, "{} {op} {}", self.lhs, self.rhs)
    }
}

/// Canonical text: one statement per line.
pub fn render(ast: &ConstraintAst) -> String {
    let mut out = String::new();
    for stmt in &ast.statements {
        out.push_str(&stmt.to_string());
        out.push('\n');
    }
    out
}

/// Atomic inequality `sum(coef * L[cell]) + constant > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub terms: Vec<(Cell, f64)>,
    pub constant: f64,
}

impl Atom {
    pub fn value(&self, lambda: &DMatrix<f64>) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, (c, w)| acc + w * lambda[(c.row, c.col)])
    }

    pub fn holds(&self, lambda: &DMatrix<f64>) -> bool {
        self.value(lambda) > 0.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (cell, w) in &self.terms {
            let sign = if *w < 0.0 { "-" } else if first { "" } else { "+" };
            let mag = w.abs();
            if mag == 1.0 {
                write!(f, "{sign}{cell}")?;
            } else {
                write!(f, "{sign}{mag}*{cell}")?;
            }
            first = false;
        }
        if self.constant != 0.0 || first {
            let sign = if self.constant < 0.0 { "-" } else if first { "" } else { "+" };
            write!(f, "{sign}{}", self.constant.abs())?;
        }
        f.write_str(" > 0")
    }
}

/// Constraint model in atomic form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub source_text: String,
    pub atoms: Vec<Atom>,
}

impl ConstraintSet {
    /// Constraint set with no atoms; satisfied by every loading matrix.
    pub fn empty() -> Self {
        ConstraintSet { source_text: String::new(), atoms: Vec::new() }
    }

    pub fn union(&self, other: &ConstraintSet) -> ConstraintSet {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        ConstraintSet {
            source_text: format!("{}{}", self.source_text, other.source_text),
            atoms,
        }
    }

    /// Cells referenced by any atom.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> =
            self.atoms.iter().flat_map(|a| a.terms.iter().map(|(c, _)| *c)).collect();
        cells.sort();
        cells.dedup();
        cells
    }
}

/// Linear form accumulated while expanding one statement.
#[derive(Default)]
struct Linear {
    terms: BTreeMap<Cell, f64>,
    constant: f64,
}

impl Linear {
    fn add_cell(&mut self, cell: Cell, w: f64) {
        *self.terms.entry(cell).or_insert(0.0) += w;
    }

    fn into_atom(self) -> Atom {
        Atom {
            terms: self.terms.into_iter().filter(|(_, w)| *w != 0.0).collect(),
            constant: self.constant,
        }
    }
}

/// Expands parsed statements into atoms against the identified model `spec`.
///
/// `a > abs(b)` becomes `a - b > 0` and `a + b > 0`; `abs(b) < c` becomes
/// `c - b > 0` and `c + b > 0`; plain comparisons become a single atom.
pub fn expand(ast: &ConstraintAst, spec: &UcfmSpec) -> Result<ConstraintSet> {
    let mut atoms = Vec::new();
    for stmt in &ast.statements {
        stmt.check_convex()
            .map_err(|msg| Error::Spec(format!("`{stmt}`: {msg}")))?;
        for expr in [&stmt.lhs, &stmt.rhs] {
            if let Some(cell) = expr.cell() {
                if cell.row >= spec.p() || cell.col >= spec.m() {
                    return Err(Error::Spec(format!(
                        "`{stmt}`: cell {cell} outside the {}x{} loading matrix",
                        spec.p(),
                        spec.m()
                    )));
                }
                if spec.is_zero(cell) {
                    return Err(Error::Spec(format!(
                        "`{stmt}`: cell {cell} is fixed at zero in the base model"
                    )));
                }
            }
        }
        let (greater, lesser) = stmt.sides();
        // greater - lesser > 0, split into the linear part and at most one abs term.
        let mut base = Linear::default();
        let mut abs_cell: Option<Cell> = None;
        for (expr, sign) in [(greater, 1.0), (lesser, -1.0)] {
            let s = if expr.negated { -sign } else { sign };
            match expr.operand {
                Operand::Cell(c) => base.add_cell(c, s),
                Operand::Number(v) => base.constant += s * v,
                // check_convex guarantees the abs term carries a negative sign
                Operand::Abs { cell, .. } => abs_cell = Some(cell),
            }
        }
        match abs_cell {
            None => atoms.push(base.into_atom()),
            Some(cell) => {
                for w in [-1.0, 1.0] {
                    let mut lin = Linear { terms: base.terms.clone(), constant: base.constant };
                    lin.add_cell(cell, w);
                    atoms.push(lin.into_atom());
                }
            }
        }
    }
    Ok(ConstraintSet { source_text: render(ast), atoms })
}

/// True iff every atom is strictly positive at `lambda`; ties count as unsatisfied.
pub fn satisfies(lambda: &DMatrix<f64>, cs: &ConstraintSet) -> bool {
    cs.atoms.iter().all(|a| a.holds(lambda))
}

/// Evaluates the statements directly, with `abs` computed as written.
pub fn evaluate_direct(lambda: &DMatrix<f64>, ast: &ConstraintAst) -> bool {
    let value = |e: &Expr| {
        let v = match e.operand {
            Operand::Cell(c) => lambda[(c.row, c.col)],
            Operand::Abs { cell, .. } => lambda[(cell.row, cell.col)].abs(),
            Operand::Number(v) => v,
        };
        if e.negated {
            -v
        } else {
            v
        }
    };
    ast.statements.iter().all(|s| {
        let (l, r) = (value(&s.lhs), value(&s.rhs));
        match s.op {
            Comparison::Less => l < r,
            Comparison::Greater => l > r,
        }
    })
}
