//! Coverpoint extraction: a pre-order walk that records every if condition,
//! ternary condition and case select.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::print;
use super::Span;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverKind {
    IfCond,
    TernaryCond,
    CaseSelect,
    /// Only with [`ExtractOptions::case_arms`].
    CaseArm,
}

impl CoverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverKind::IfCond => "if-cond",
            CoverKind::TernaryCond => "ternary-cond",
            CoverKind::CaseSelect => "case-select",
            CoverKind::CaseArm => "case-arm",
        }
    }

    fn short(self) -> &'static str {
        match self {
            CoverKind::IfCond => "if",
            CoverKind::TernaryCond => "tern",
            CoverKind::CaseSelect => "case",
            CoverKind::CaseArm => "arm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: String,
    pub line: u32,
    pub column: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverpointDesc {
    pub id: u32,
    pub hier_name: String,
    pub kind: CoverKind,
    pub span: SourceSpan,
    #[serde(rename = "static")]
    pub is_static: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExtractOptions {
    /// One extra point per non-default case arm.
    pub case_arms: bool,
}

fn fnv1a(s: &str) -> u32 {
    s.bytes().fold(0x811c_9dc5u32, |h, b| (h ^ b as u32).wrapping_mul(0x0100_0193))
}

/// Accumulates points over several files; ids continue across files.
#[derive(Debug, Default)]
pub struct Extractor {
    opts: ExtractOptions,
    points: Vec<CoverpointDesc>,
}

struct Ctx<'a> {
    file: &'a str,
    module: &'a str,
    params: HashSet<&'a str>,
    scope: Vec<String>,
    seen: HashMap<String, u32>,
}

impl Extractor {
    pub fn new(opts: ExtractOptions) -> Extractor {
        Extractor { opts, points: Vec::new() }
    }

    pub fn file(&mut self, name: &str, ast: &SourceFile) {
        for m in &ast.modules {
            self.module(name, m);
        }
    }

    pub fn finish(self) -> Vec<CoverpointDesc> {
        self.points
    }

    fn module(&mut self, file: &str, m: &Module) {
        let mut params: HashSet<&str> = m.params.iter().map(|p| p.name.as_str()).collect();
        for it in &m.items {
            if let Item::Params(ps) = it {
                params.extend(ps.iter().map(|p| p.name.as_str()));
            }
        }
        let mut cx = Ctx { file, module: &m.name, params, scope: Vec::new(), seen: HashMap::new() };
        for p in &m.params {
            self.scoped(&mut cx, p.name.clone(), |x, cx| x.expr(cx, &p.value));
        }
        if let Ports::Ansi(ds) = &m.ports {
            for d in ds {
                self.decl(&mut cx, d);
            }
        }
        let mut always = 0;
        for it in &m.items {
            match it {
                Item::Decl(d) => self.decl(&mut cx, d),
                Item::Params(ps) => {
                    for p in ps {
                        self.scoped(&mut cx, p.name.clone(), |x, cx| x.expr(cx, &p.value));
                    }
                }
                Item::Assign(v) => {
                    for (l, r) in v {
                        self.scoped(&mut cx, root_name(l), |x, cx| {
                            x.expr(cx, l);
                            x.expr(cx, r);
                        });
                    }
                }
                Item::Always { sens, body, .. } => {
                    let name = match body {
                        Stmt::Block { label: Some(l), .. } => l.clone(),
                        _ => format!("always{always}"),
                    };
                    always += 1;
                    self.scoped(&mut cx, name, |x, cx| {
                        if let Some(Sensitivity::List(l)) = sens {
                            l.iter().for_each(|(_, e)| x.expr(cx, e));
                        }
                        // the label already named this scope
                        match body {
                            Stmt::Block { label: Some(_), stmts } => stmts.iter().for_each(|s| x.stmt(cx, s)),
                            _ => x.stmt(cx, body),
                        }
                    });
                }
                Item::Instance { params, name, conns, .. } => {
                    self.scoped(&mut cx, name.clone(), |x, cx| {
                        for c in params.iter().chain(conns) {
                            if let Conn::Named(_, Some(e)) | Conn::Positional(e) = c {
                                x.expr(cx, e);
                            }
                        }
                    });
                }
            }
        }
    }

    fn scoped(&mut self, cx: &mut Ctx, name: String, f: impl FnOnce(&mut Self, &mut Ctx)) {
        cx.scope.push(name);
        f(self, cx);
        cx.scope.pop();
    }

    fn decl(&mut self, cx: &mut Ctx, d: &Decl) {
        for n in &d.names {
            if let Some(init) = &n.init {
                self.scoped(cx, n.name.clone(), |x, cx| x.expr(cx, init));
            }
        }
    }

    fn point(&mut self, cx: &mut Ctx, kind: CoverKind, span: &Span, text: &str, is_static: bool) {
        let mut hier = format!("{}.{}.{}_{:08x}", cx.module, cx.scope.join("."), kind.short(), fnv1a(text));
        let n = cx.seen.entry(hier.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            hier = format!("{hier}_{}", *n - 1);
        }
        self.points.push(CoverpointDesc {
            id: self.points.len() as u32,
            hier_name: hier,
            kind,
            span: SourceSpan { file: cx.file.to_string(), line: span.line, column: span.col },
            is_static,
        });
    }

    fn expr(&mut self, cx: &mut Ctx, e: &Expr) {
        let mut found = Vec::new();
        e.walk(&mut |n| {
            if let ExprKind::Ternary(c, ..) = &n.kind {
                found.push((n.span.clone(), c.as_ref()));
            }
        });
        for (span, c) in found {
            let st = is_static(c, &cx.params);
            self.point(cx, CoverKind::TernaryCond, &span, &print::expr(c), st);
        }
    }

    fn stmt(&mut self, cx: &mut Ctx, s: &Stmt) {
        match s {
            Stmt::Null => {}
            Stmt::Assign { lhs, rhs, .. } => {
                self.expr(cx, lhs);
                self.expr(cx, rhs);
            }
            Stmt::Block { label: Some(l), stmts } => {
                self.scoped(cx, l.clone(), |x, cx| stmts.iter().for_each(|s| x.stmt(cx, s)));
            }
            Stmt::Block { label: None, stmts } => stmts.iter().for_each(|s| self.stmt(cx, s)),
            Stmt::If { cond, then, els, span } => {
                let st = is_static(cond, &cx.params);
                self.point(cx, CoverKind::IfCond, span, &print::expr(cond), st);
                self.expr(cx, cond);
                self.stmt(cx, then);
                if let Some(e) = els {
                    self.stmt(cx, e);
                }
            }
            Stmt::Case { sel, arms, span, .. } => {
                let sel_static = is_static(sel, &cx.params);
                let sel_text = print::expr(sel);
                self.point(cx, CoverKind::CaseSelect, span, &sel_text, sel_static);
                self.expr(cx, sel);
                for arm in arms {
                    if self.opts.case_arms && !arm.labels.is_empty() {
                        let labels: Vec<String> = arm.labels.iter().map(print::expr).collect();
                        let st = sel_static && arm.labels.iter().all(|l| is_static(l, &cx.params));
                        self.point(cx, CoverKind::CaseArm, &arm.span, &format!("{sel_text}=={}", labels.join(",")), st);
                    }
                    arm.labels.iter().for_each(|l| self.expr(cx, l));
                    self.stmt(cx, &arm.body);
                }
            }
        }
    }
}

fn root_name(e: &Expr) -> String {
    let mut name = None;
    e.walk(&mut |n| {
        if let (None, ExprKind::Ident(s)) = (&name, &n.kind) {
            name = Some(s.clone());
        }
    });
    name.unwrap_or_else(|| "assign".into())
}

/// Static: every identifier is a parameter, so the value never toggles.
pub fn is_static(e: &Expr, params: &HashSet<&str>) -> bool {
    let mut st = true;
    e.walk(&mut |n| {
        if let ExprKind::Ident(s) = &n.kind {
            st &= params.contains(s.as_str());
        }
    });
    st
}

pub fn extract(file: &str, ast: &SourceFile) -> Vec<CoverpointDesc> {
    let mut x = Extractor::new(ExtractOptions::default());
    x.file(file, ast);
    x.finish()
}

/// The default report: static points dropped unless asked for. Ids are kept
/// from the full list.
pub fn emitted(points: &[CoverpointDesc], include_static: bool) -> Vec<CoverpointDesc> {
    points.iter().filter(|p| include_static || !p.is_static).cloned().collect()
}

pub fn emit_json(points: &[CoverpointDesc]) -> String {
    serde_json::to_string_pretty(points).unwrap_or_else(|_| "[]".into())
}

/// One point per line: `id kind hier_name`, plus `static` when flagged.
pub fn emit_text(points: &[CoverpointDesc]) -> String {
    let mut s = String::new();
    for p in points {
        s.push_str(&format!("{} {} {}", p.id, p.kind.as_str(), p.hier_name));
        if p.is_static {
            s.push_str(" static");
        }
        s.push('\n');
    }
    s
}
