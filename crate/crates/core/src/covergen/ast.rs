//! Syntax tree for the SystemVerilog subset. Parentheses are kept as nodes
//! so printing reproduces the parsed structure exactly.

use super::Span;

#[derive(Clone, Debug, Default)]
pub struct SourceFile {
    pub modules: Vec<Module>,
}

#[derive(Clone, Debug)]
pub struct Module {
    pub name: String,
    pub span: Span,
    pub params: Vec<Param>,
    pub ports: Ports,
    pub items: Vec<Item>,
}

#[derive(Clone, Debug)]
pub enum Ports {
    None,
    /// `module m(a, b);` with directions declared in the body.
    Names(Vec<String>),
    Ansi(Vec<Decl>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

/// One declared name with its optional unpacked dimension and initializer.
#[derive(Clone, Debug)]
pub struct Declarator {
    pub name: String,
    pub unpacked: Option<Range>,
    pub init: Option<Expr>,
}

/// Port, net or variable declaration. `kind` is `wire`, `reg`, `logic` or
/// `integer`.
#[derive(Clone, Debug)]
pub struct Decl {
    pub dir: Option<Direction>,
    pub kind: Option<String>,
    pub signed: bool,
    pub range: Option<Range>,
    pub names: Vec<Declarator>,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub local: bool,
    /// `int`, `integer`, `logic` or `bit`.
    pub ty: Option<String>,
    pub range: Option<Range>,
    pub name: String,
    pub value: Expr,
}

#[derive(Clone, Debug)]
pub enum Item {
    Decl(Decl),
    Params(Vec<Param>),
    Assign(Vec<(Expr, Expr)>),
    Always { kind: String, sens: Option<Sensitivity>, body: Stmt, span: Span },
    Instance { module: String, params: Vec<Conn>, name: String, conns: Vec<Conn> },
}

#[derive(Clone, Debug)]
pub enum Sensitivity {
    /// `@(*)`; `bare` records the `@*` spelling.
    Star { bare: bool },
    List(Vec<(Option<String>, Expr)>),
}

#[derive(Clone, Debug)]
pub enum Conn {
    Named(String, Option<Expr>),
    /// `.name` with no parentheses.
    Implicit(String),
    Wildcard,
    Positional(Expr),
}

#[derive(Clone, Debug)]
pub enum Stmt {
    Block { label: Option<String>, stmts: Vec<Stmt> },
    If { cond: Expr, then: Box<Stmt>, els: Option<Box<Stmt>>, span: Span },
    Case { qualifier: Option<String>, kind: String, sel: Expr, arms: Vec<CaseArm>, span: Span },
    Assign { lhs: Expr, nonblocking: bool, rhs: Expr },
    Null,
}

#[derive(Clone, Debug)]
pub struct CaseArm {
    /// Empty for `default`.
    pub labels: Vec<Expr>,
    pub body: Stmt,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceKind {
    Range,
    Up,
    Down,
}

impl SliceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceKind::Range => ":",
            SliceKind::Up => "+:",
            SliceKind::Down => "-:",
        }
    }
}

#[derive(Clone, Debug)]
pub enum ExprKind {
    Ident(String),
    Number(String),
    Unary(&'static str, Box<Expr>),
    Binary(&'static str, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Paren(Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Slice(Box<Expr>, SliceKind, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Repl(Box<Expr>, Vec<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    /// Visits this node and every subexpression, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Ident(_) | ExprKind::Number(_) => {}
            ExprKind::Unary(_, e) | ExprKind::Paren(e) => e.walk(f),
            ExprKind::Binary(_, a, b) | ExprKind::Index(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Ternary(a, b, c) | ExprKind::Slice(a, _, b, c) => {
                a.walk(f);
                b.walk(f);
                c.walk(f);
            }
            ExprKind::Concat(v) | ExprKind::Call(_, v) => v.iter().for_each(|e| e.walk(f)),
            ExprKind::Repl(n, v) => {
                n.walk(f);
                v.iter().for_each(|e| e.walk(f));
            }
        }
    }
}
