//! Canonical pretty-printer. Output re-parses to the same tree.

use std::fmt::Write as _;

use super::ast::*;

pub fn expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn list(s: &mut String, v: &[Expr]) {
    for (i, e) in v.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write_expr(s, e);
    }
}

fn write_expr(s: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Ident(n) | ExprKind::Number(n) => s.push_str(n),
        ExprKind::Unary(op, inner) => {
            s.push_str(op);
            let body = expr(inner);
            // `~ &a` must not lex back as `~&a`
            if body.starts_with(|c: char| "+-!~&|^".contains(c)) {
                s.push(' ');
            }
            s.push_str(&body);
        }
        ExprKind::Binary(op, a, b) => {
            write_expr(s, a);
            let _ = write!(s, " {op} ");
            write_expr(s, b);
        }
        ExprKind::Ternary(c, t, f) => {
            write_expr(s, c);
            s.push_str(" ? ");
            write_expr(s, t);
            s.push_str(" : ");
            write_expr(s, f);
        }
        ExprKind::Paren(inner) => {
            s.push('(');
            write_expr(s, inner);
            s.push(')');
        }
        ExprKind::Index(b, i) => {
            write_expr(s, b);
            s.push('[');
            write_expr(s, i);
            s.push(']');
        }
        ExprKind::Slice(b, k, m, l) => {
            write_expr(s, b);
            s.push('[');
            write_expr(s, m);
            s.push_str(k.as_str());
            write_expr(s, l);
            s.push(']');
        }
        ExprKind::Concat(v) => {
            s.push('{');
            list(s, v);
            s.push('}');
        }
        ExprKind::Repl(n, v) => {
            s.push('{');
            write_expr(s, n);
            s.push('{');
            list(s, v);
            s.push_str("}}");
        }
        ExprKind::Call(name, args) => {
            s.push_str(name);
            s.push('(');
            list(s, args);
            s.push(')');
        }
    }
}

fn range(r: &Option<Range>) -> String {
    match r {
        Some(r) => format!("[{}:{}]", expr(&r.msb), expr(&r.lsb)),
        None => String::new(),
    }
}

fn decl(d: &Decl) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let Some(dir) = d.dir {
        parts.push(dir.as_str().into());
    }
    if let Some(k) = &d.kind {
        parts.push(k.clone());
    }
    if d.signed {
        parts.push("signed".into());
    }
    if d.range.is_some() {
        parts.push(range(&d.range));
    }
    let names: Vec<String> = d
        .names
        .iter()
        .map(|n| {
            let mut s = n.name.clone();
            if n.unpacked.is_some() {
                s.push(' ');
                s.push_str(&range(&n.unpacked));
            }
            if let Some(i) = &n.init {
                s.push_str(" = ");
                s.push_str(&expr(i));
            }
            s
        })
        .collect();
    parts.push(names.join(", "));
    parts.join(" ")
}

fn param(p: &Param) -> String {
    let mut s = String::from(if p.local { "localparam" } else { "parameter" });
    if let Some(t) = &p.ty {
        s.push(' ');
        s.push_str(t);
    }
    if p.range.is_some() {
        s.push(' ');
        s.push_str(&range(&p.range));
    }
    let _ = write!(s, " {} = {}", p.name, expr(&p.value));
    s
}

fn conns(v: &[Conn]) -> String {
    let parts: Vec<String> = v
        .iter()
        .map(|c| match c {
            Conn::Named(n, Some(e)) => format!(".{n}({})", expr(e)),
            Conn::Named(n, None) => format!(".{n}()"),
            Conn::Implicit(n) => format!(".{n}"),
            Conn::Wildcard => ".*".into(),
            Conn::Positional(e) => expr(e),
        })
        .collect();
    parts.join(", ")
}

struct Out {
    s: String,
}

impl Out {
    fn line(&mut self, ind: usize, text: &str) {
        for _ in 0..ind {
            self.s.push_str("  ");
        }
        self.s.push_str(text);
        self.s.push('\n');
    }

    /// Writes `st` with its first line starting with `lead`.
    fn stmt(&mut self, st: &Stmt, ind: usize, lead: &str) {
        match st {
            Stmt::Null => self.line(ind, &format!("{lead};")),
            Stmt::Assign { lhs, nonblocking, rhs } => {
                let op = if *nonblocking { "<=" } else { "=" };
                self.line(ind, &format!("{lead}{} {op} {};", expr(lhs), expr(rhs)));
            }
            Stmt::Block { label, stmts } => {
                match label {
                    Some(l) => self.line(ind, &format!("{lead}begin : {l}")),
                    None => self.line(ind, &format!("{lead}begin")),
                }
                for s in stmts {
                    self.stmt(s, ind + 1, "");
                }
                self.line(ind, "end");
            }
            Stmt::If { cond, then, els, .. } => {
                let head = format!("{lead}if ({})", expr(cond));
                self.nested(then, ind, head);
                if let Some(e) = els {
                    self.nested(e, ind, "else".into());
                }
            }
            Stmt::Case { qualifier, kind, sel, arms, .. } => {
                let q = qualifier.as_ref().map(|q| format!("{q} ")).unwrap_or_default();
                self.line(ind, &format!("{lead}{q}{kind} ({})", expr(sel)));
                for arm in arms {
                    let label = if arm.labels.is_empty() {
                        "default: ".to_string()
                    } else {
                        let l: Vec<String> = arm.labels.iter().map(expr).collect();
                        format!("{}: ", l.join(", "))
                    };
                    self.stmt(&arm.body, ind + 1, &label);
                }
                self.line(ind, "endcase");
            }
        }
    }

    /// A statement following a header such as `if (c)` or `else`.
    fn nested(&mut self, st: &Stmt, ind: usize, head: String) {
        match st {
            Stmt::Block { .. } | Stmt::If { .. } => self.stmt(st, ind, &format!("{head} ")),
            _ => {
                self.line(ind, &head);
                self.stmt(st, ind + 1, "");
            }
        }
    }
}

pub fn file(f: &SourceFile) -> String {
    let mut o = Out { s: String::new() };
    for (k, m) in f.modules.iter().enumerate() {
        if k > 0 {
            o.s.push('\n');
        }
        let mut head = format!("module {}", m.name);
        if !m.params.is_empty() {
            let ps: Vec<String> = m.params.iter().map(param).collect();
            let _ = write!(head, " #({})", ps.join(", "));
        }
        match &m.ports {
            Ports::None => {}
            Ports::Names(n) => {
                let _ = write!(head, " ({})", n.join(", "));
            }
            Ports::Ansi(d) => {
                let ds: Vec<String> = d.iter().map(decl).collect();
                let _ = write!(head, " ({})", ds.join(", "));
            }
        }
        head.push(';');
        o.line(0, &head);
        for it in &m.items {
            match it {
                Item::Decl(d) => o.line(1, &format!("{};", decl(d))),
                Item::Params(ps) => {
                    // later entries share the first one's keyword, type and range
                    let mut s = param(&ps[0]);
                    for p in &ps[1..] {
                        let _ = write!(s, ", {} = {}", p.name, expr(&p.value));
                    }
                    s.push(';');
                    o.line(1, &s);
                }
                Item::Assign(v) => {
                    let parts: Vec<String> = v.iter().map(|(l, r)| format!("{} = {}", expr(l), expr(r))).collect();
                    o.line(1, &format!("assign {};", parts.join(", ")));
                }
                Item::Always { kind, sens, body, .. } => {
                    let mut head = kind.clone();
                    match sens {
                        None => {}
                        Some(Sensitivity::Star { bare: true }) => head.push_str(" @*"),
                        Some(Sensitivity::Star { bare: false }) => head.push_str(" @(*)"),
                        Some(Sensitivity::List(l)) => {
                            let parts: Vec<String> = l
                                .iter()
                                .map(|(edge, e)| match edge {
                                    Some(ed) => format!("{ed} {}", expr(e)),
                                    None => expr(e),
                                })
                                .collect();
                            let _ = write!(head, " @({})", parts.join(" or "));
                        }
                    }
                    o.nested(body, 1, head);
                }
                Item::Instance { module, params, name, conns: c } => {
                    let p = if params.is_empty() { String::new() } else { format!(" #({})", conns(params)) };
                    o.line(1, &format!("{module}{p} {name} ({});", conns(c)));
                }
            }
        }
        o.line(0, "endmodule");
    }
    o.s
}
