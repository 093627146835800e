//! Recursive-descent parser for the subset. Errors are collected; after one,
//! parsing resumes at the next module item.

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::{Span, SvError, SvErrorKind};

const KEYWORDS: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "logic", "integer", "int", "bit", "signed",
    "parameter", "localparam", "assign", "always", "always_comb", "always_ff", "always_latch", "begin", "end", "if",
    "else", "case", "casez", "casex", "endcase", "default", "posedge", "negedge", "or", "unique", "unique0",
    "priority",
];

/// Constructs outside the subset, with the keyword that closes them (if any).
const UNSUPPORTED: &[(&str, Option<&str>)] = &[
    ("generate", Some("endgenerate")),
    ("interface", Some("endinterface")),
    ("class", Some("endclass")),
    ("function", Some("endfunction")),
    ("task", Some("endtask")),
    ("package", Some("endpackage")),
    ("program", Some("endprogram")),
    ("genvar", None),
    ("typedef", None),
    ("initial", None),
    ("for", None),
    ("while", None),
    ("repeat", None),
    ("forever", None),
    ("import", None),
    ("modport", None),
];

const ITEM_START: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "logic", "integer", "parameter", "localparam",
    "assign", "always", "always_comb", "always_ff", "always_latch",
];

const UNARY: &[&str] = &["+", "-", "!", "~", "&", "|", "^", "~&", "~|", "~^", "^~"];

fn binary_prec(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "|" => 3,
        "^" | "~^" | "^~" => 4,
        "&" => 5,
        "==" | "!=" | "===" | "!==" => 6,
        "<" | "<=" | ">" | ">=" => 7,
        "<<" | ">>" | "<<<" | ">>>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        "**" => 11,
        _ => return None,
    })
}

fn join(a: &Span, b: &Span) -> Span {
    Span { line: a.line, col: a.col, start: a.start, end: b.end }
}

type PResult<T> = Result<T, SvError>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    errors: Vec<SvError>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn span(&self) -> Span {
        self.peek().span.clone()
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span.clone()
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(&self.peek().tok, Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        let hit = self.is_op(op);
        if hit {
            self.bump();
        }
        hit
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.bump();
        }
        hit
    }

    fn unexpected(&self, expected: &str) -> SvError {
        let t = self.peek();
        let found = match &t.tok {
            Tok::Ident(s) | Tok::SysIdent(s) | Tok::Number(s) => format!("`{s}`"),
            Tok::Op(o) => format!("`{o}`"),
            Tok::Eof => "end of input".into(),
        };
        SvError { span: t.span.clone(), kind: SvErrorKind::Unexpected { found, expected: expected.into() } }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{op}`")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) && !is_unsupported(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn peek_unsupported(&self) -> Option<(&'static str, Option<&'static str>)> {
        match &self.peek().tok {
            Tok::Ident(s) => UNSUPPORTED.iter().find(|(k, _)| k == s).copied(),
            _ => None,
        }
    }

    /// Records an out-of-subset construct and skips past it.
    fn skip_unsupported(&mut self, kw: &'static str, end: Option<&'static str>) {
        let start = self.bump().span;
        match end {
            Some(end) => {
                let mut depth = 1;
                while !matches!(self.peek().tok, Tok::Eof) {
                    if self.is_kw(kw) {
                        depth += 1;
                    } else if self.is_kw(end) {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    self.bump();
                }
                self.bump();
            }
            None => self.sync_item(),
        }
        self.errors.push(SvError { span: join(&start, &self.prev_span()), kind: SvErrorKind::Unsupported(kw.into()) });
    }

    /// Skips to the start of the next module item.
    fn sync_item(&mut self) {
        loop {
            match &self.peek().tok {
                Tok::Eof => return,
                Tok::Ident(s) if ITEM_START.contains(&s.as_str()) || is_unsupported(s) => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn file(&mut self) -> SourceFile {
        let mut f = SourceFile::default();
        loop {
            if matches!(self.peek().tok, Tok::Eof) {
                return f;
            }
            if let Some((kw, end)) = self.peek_unsupported() {
                self.skip_unsupported(kw, end);
            } else if self.is_kw("module") {
                match self.module() {
                    Ok(m) => f.modules.push(m),
                    Err(e) => {
                        self.errors.push(e);
                        while !matches!(self.peek().tok, Tok::Eof) && !self.eat_kw("endmodule") {
                            self.bump();
                        }
                    }
                }
            } else {
                let e = self.unexpected("`module`");
                self.errors.push(e);
                self.bump();
            }
        }
    }

    fn module(&mut self) -> PResult<Module> {
        let span = self.bump().span;
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat_op("#") {
            self.expect_op("(")?;
            let mut local = false;
            loop {
                if self.eat_kw("parameter") {
                    local = false;
                } else if self.eat_kw("localparam") {
                    local = true;
                }
                params.push(self.param(local)?);
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(")")?;
        }
        let ports = if self.eat_op("(") { self.ports()? } else { Ports::None };
        self.expect_op(";")?;
        let mut items = Vec::new();
        loop {
            if self.eat_kw("endmodule") {
                break;
            }
            if matches!(self.peek().tok, Tok::Eof) {
                return Err(self.unexpected("`endmodule`"));
            }
            if self.is_kw("module") {
                // lost endmodule: close this one and start the next
                let e = self.unexpected("`endmodule`");
                self.errors.push(e);
                break;
            }
            let before = self.pos;
            match self.item() {
                Ok(Some(it)) => items.push(it),
                Ok(None) => {}
                Err(e) => {
                    self.errors.push(e);
                    if self.pos == before {
                        self.bump();
                    }
                    self.sync_item();
                }
            }
        }
        Ok(Module { name, span: join(&span, &self.prev_span()), params, ports, items })
    }

    fn ports(&mut self) -> PResult<Ports> {
        if self.eat_op(")") {
            return Ok(Ports::Names(Vec::new()));
        }
        if matches!(&self.peek().tok, Tok::Ident(s) if !KEYWORDS.contains(&s.as_str())) {
            let mut names = vec![self.ident()?];
            while self.eat_op(",") {
                names.push(self.ident()?);
            }
            self.expect_op(")")?;
            return Ok(Ports::Names(names));
        }
        let mut decls: Vec<Decl> = Vec::new();
        loop {
            if self.starts_decl() {
                let mut d = self.decl_head()?;
                d.names.push(self.declarator()?);
                decls.push(d);
            } else {
                let dl = self.declarator()?;
                match decls.last_mut() {
                    Some(d) => d.names.push(dl),
                    None => return Err(self.unexpected("port direction")),
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok(Ports::Ansi(decls))
    }

    fn starts_decl(&self) -> bool {
        ["input", "output", "inout", "wire", "reg", "logic", "integer"].iter().any(|k| self.is_kw(k))
    }

    fn decl_head(&mut self) -> PResult<Decl> {
        let dir = if self.eat_kw("input") {
            Some(Direction::Input)
        } else if self.eat_kw("output") {
            Some(Direction::Output)
        } else if self.eat_kw("inout") {
            Some(Direction::Inout)
        } else {
            None
        };
        let kind = ["wire", "reg", "logic", "integer"].iter().find(|k| self.is_kw(k)).map(|k| k.to_string());
        if kind.is_some() {
            self.bump();
        }
        let signed = self.eat_kw("signed");
        let range = self.opt_range()?;
        Ok(Decl { dir, kind, signed, range, names: Vec::new() })
    }

    fn declarator(&mut self) -> PResult<Declarator> {
        let name = self.ident()?;
        let unpacked = self.opt_range()?;
        let init = if self.eat_op("=") { Some(self.expr()?) } else { None };
        Ok(Declarator { name, unpacked, init })
    }

    fn opt_range(&mut self) -> PResult<Option<Range>> {
        if !self.eat_op("[") {
            return Ok(None);
        }
        let msb = self.expr()?;
        self.expect_op(":")?;
        let lsb = self.expr()?;
        self.expect_op("]")?;
        Ok(Some(Range { msb, lsb }))
    }

    fn param(&mut self, local: bool) -> PResult<Param> {
        let ty = ["int", "integer", "logic", "bit"].iter().find(|k| self.is_kw(k)).map(|k| k.to_string());
        if ty.is_some() {
            self.bump();
        }
        let range = self.opt_range()?;
        self.param_tail(local, ty, range)
    }

    fn param_tail(&mut self, local: bool, ty: Option<String>, range: Option<Range>) -> PResult<Param> {
        let name = self.ident()?;
        self.expect_op("=")?;
        let value = self.expr()?;
        Ok(Param { local, ty, range, name, value })
    }

    fn item(&mut self) -> PResult<Option<Item>> {
        if let Some((kw, end)) = self.peek_unsupported() {
            self.skip_unsupported(kw, end);
            return Ok(None);
        }
        if self.eat_op(";") {
            return Ok(None);
        }
        if self.starts_decl() {
            let mut d = self.decl_head()?;
            loop {
                d.names.push(self.declarator()?);
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(";")?;
            return Ok(Some(Item::Decl(d)));
        }
        if self.is_kw("parameter") || self.is_kw("localparam") {
            let local = self.bump().tok == Tok::Ident("localparam".into());
            let first = self.param(local)?;
            let mut ps = vec![first];
            while self.eat_op(",") {
                let (ty, range) = (ps[0].ty.clone(), ps[0].range.clone());
                ps.push(self.param_tail(local, ty, range)?);
            }
            self.expect_op(";")?;
            return Ok(Some(Item::Params(ps)));
        }
        if self.eat_kw("assign") {
            let mut v = Vec::new();
            loop {
                let lhs = self.lvalue()?;
                self.expect_op("=")?;
                v.push((lhs, self.expr()?));
                if !self.eat_op(",") {
                    break;
                }
            }
            self.expect_op(";")?;
            return Ok(Some(Item::Assign(v)));
        }
        for kind in ["always", "always_comb", "always_ff", "always_latch"] {
            if self.is_kw(kind) {
                let span = self.bump().span;
                let sens = if kind == "always" || kind == "always_ff" || self.is_op("@") {
                    self.expect_op("@")?;
                    Some(self.sensitivity()?)
                } else {
                    None
                };
                let body = self.stmt()?;
                return Ok(Some(Item::Always { kind: kind.into(), sens, body, span }));
            }
        }
        if matches!(&self.peek().tok, Tok::Ident(s) if !KEYWORDS.contains(&s.as_str())) {
            return self.instance().map(Some);
        }
        Err(self.unexpected("module item"))
    }

    fn sensitivity(&mut self) -> PResult<Sensitivity> {
        if self.eat_op("*") {
            return Ok(Sensitivity::Star { bare: true });
        }
        self.expect_op("(")?;
        if self.eat_op("*") {
            self.expect_op(")")?;
            return Ok(Sensitivity::Star { bare: false });
        }
        let mut list = Vec::new();
        loop {
            let edge = ["posedge", "negedge"].iter().find(|k| self.is_kw(k)).map(|k| k.to_string());
            if edge.is_some() {
                self.bump();
            }
            list.push((edge, self.expr()?));
            if !(self.eat_kw("or") || self.eat_op(",")) {
                break;
            }
        }
        self.expect_op(")")?;
        Ok(Sensitivity::List(list))
    }

    fn instance(&mut self) -> PResult<Item> {
        let module = self.ident()?;
        let params = if self.eat_op("#") {
            self.expect_op("(")?;
            self.conns()?
        } else {
            Vec::new()
        };
        let name = self.ident()?;
        self.expect_op("(")?;
        let conns = self.conns()?;
        self.expect_op(";")?;
        Ok(Item::Instance { module, params, name, conns })
    }

    /// Connection list after `(`, through the closing `)`.
    fn conns(&mut self) -> PResult<Vec<Conn>> {
        let mut v = Vec::new();
        if self.eat_op(")") {
            return Ok(v);
        }
        loop {
            if self.eat_op(".") {
                if self.eat_op("*") {
                    v.push(Conn::Wildcard);
                } else {
                    let name = self.ident()?;
                    if self.eat_op("(") {
                        let e = if self.is_op(")") { None } else { Some(self.expr()?) };
                        self.expect_op(")")?;
                        v.push(Conn::Named(name, e));
                    } else {
                        v.push(Conn::Implicit(name));
                    }
                }
            } else {
                v.push(Conn::Positional(self.expr()?));
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok(v)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if let Some((kw, _)) = self.peek_unsupported() {
            let span = self.span();
            return Err(SvError { span, kind: SvErrorKind::Unsupported(kw.into()) });
        }
        if self.eat_op(";") {
            return Ok(Stmt::Null);
        }
        if self.eat_kw("begin") {
            let label = if self.eat_op(":") { Some(self.ident()?) } else { None };
            let mut stmts = Vec::new();
            while !self.is_kw("end") {
                if matches!(self.peek().tok, Tok::Eof) {
                    return Err(self.unexpected("`end`"));
                }
                stmts.push(self.stmt()?);
            }
            self.bump();
            if self.eat_op(":") {
                self.ident()?;
            }
            return Ok(Stmt::Block { label, stmts });
        }
        if self.is_kw("if") {
            let span = self.bump().span;
            self.expect_op("(")?;
            let cond = self.expr()?;
            self.expect_op(")")?;
            let then = Box::new(self.stmt()?);
            let els = if self.eat_kw("else") { Some(Box::new(self.stmt()?)) } else { None };
            return Ok(Stmt::If { cond, then, els, span });
        }
        let span = self.span();
        let qualifier = ["unique", "unique0", "priority"].iter().find(|k| self.is_kw(k)).map(|k| k.to_string());
        if qualifier.is_some() {
            self.bump();
        }
        if let Some(kind) = ["case", "casez", "casex"].iter().find(|k| self.is_kw(k)) {
            self.bump();
            self.expect_op("(")?;
            let sel = self.expr()?;
            self.expect_op(")")?;
            let mut arms = Vec::new();
            while !self.eat_kw("endcase") {
                let arm_span = self.span();
                let labels = if self.eat_kw("default") {
                    self.eat_op(":");
                    Vec::new()
                } else {
                    let mut l = vec![self.expr()?];
                    while self.eat_op(",") {
                        l.push(self.expr()?);
                    }
                    self.expect_op(":")?;
                    l
                };
                let body = self.stmt()?;
                arms.push(CaseArm { labels, body, span: arm_span });
            }
            return Ok(Stmt::Case { qualifier, kind: kind.to_string(), sel, arms, span });
        }
        if qualifier.is_some() {
            return Err(self.unexpected("`case`"));
        }
        let lhs = self.lvalue()?;
        let nonblocking = if self.eat_op("<=") {
            true
        } else {
            self.expect_op("=")?;
            false
        };
        let rhs = self.expr()?;
        self.expect_op(";")?;
        Ok(Stmt::Assign { lhs, nonblocking, rhs })
    }

    fn lvalue(&mut self) -> PResult<Expr> {
        if self.is_op("{") {
            return self.primary();
        }
        self.postfix()
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        let cond = self.binary(1)?;
        if !self.eat_op("?") {
            return Ok(cond);
        }
        let t = self.expr()?;
        self.expect_op(":")?;
        let f = self.expr()?;
        let span = join(&cond.span, &f.span);
        Ok(Expr { kind: ExprKind::Ternary(Box::new(cond), Box::new(t), Box::new(f)), span })
    }

    fn binary(&mut self, min: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let (op, p) = match &self.peek().tok {
                Tok::Op(o) => match binary_prec(o) {
                    Some(p) if p >= min => (*o, p),
                    _ => break,
                },
                _ => break,
            };
            self.bump();
            let rhs = self.binary(p + 1)?;
            let span = join(&lhs.span, &rhs.span);
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if let Tok::Op(o) = &self.peek().tok {
            if let Some(op) = UNARY.iter().find(|u| *u == o) {
                let start = self.bump().span;
                let inner = self.unary()?;
                let span = join(&start, &inner.span);
                return Ok(Expr { kind: ExprKind::Unary(op, Box::new(inner)), span });
            }
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.eat_op("[") {
            let a = self.expr()?;
            let kind = if self.eat_op(":") {
                Some(SliceKind::Range)
            } else if self.eat_op("+:") {
                Some(SliceKind::Up)
            } else if self.eat_op("-:") {
                Some(SliceKind::Down)
            } else {
                None
            };
            let k = match kind {
                Some(k) => {
                    let b = self.expr()?;
                    ExprKind::Slice(Box::new(e.clone()), k, Box::new(a), Box::new(b))
                }
                None => ExprKind::Index(Box::new(e.clone()), Box::new(a)),
            };
            self.expect_op("]")?;
            e = Expr { kind: k, span: join(&e.span, &self.prev_span()) };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.peek().tok.clone() {
            Tok::Number(n) => {
                self.bump();
                ExprKind::Number(n)
            }
            Tok::Ident(_) => ExprKind::Ident(self.ident()?),
            Tok::SysIdent(name) => {
                self.bump();
                self.expect_op("(")?;
                let mut args = Vec::new();
                if !self.is_op(")") {
                    loop {
                        args.push(self.expr()?);
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                }
                self.expect_op(")")?;
                ExprKind::Call(name, args)
            }
            Tok::Op("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_op(")")?;
                ExprKind::Paren(Box::new(e))
            }
            Tok::Op("{") => {
                self.bump();
                let first = self.expr()?;
                if self.eat_op("{") {
                    let mut v = vec![self.expr()?];
                    while self.eat_op(",") {
                        v.push(self.expr()?);
                    }
                    self.expect_op("}")?;
                    self.expect_op("}")?;
                    ExprKind::Repl(Box::new(first), v)
                } else {
                    let mut v = vec![first];
                    while self.eat_op(",") {
                        v.push(self.expr()?);
                    }
                    self.expect_op("}")?;
                    ExprKind::Concat(v)
                }
            }
            _ => return Err(self.unexpected("expression")),
        };
        Ok(Expr { kind, span: join(&start, &self.prev_span()) })
    }
}

fn is_unsupported(s: &str) -> bool {
    UNSUPPORTED.iter().any(|(k, _)| *k == s)
}

/// Parses as much as possible, returning the partial tree and every error.
pub fn parse_recovering(source: &str) -> (SourceFile, Vec<SvError>) {
    let (toks, mut errors) = lex(source);
    let mut p = Parser { toks, pos: 0, errors: Vec::new() };
    let file = p.file();
    errors.extend(p.errors);
    errors.sort_by_key(|e| e.span.start);
    (file, errors)
}

pub fn parse(source: &str) -> Result<SourceFile, Vec<SvError>> {
    match parse_recovering(source) {
        (f, e) if e.is_empty() => Ok(f),
        (_, e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ternaries(e: &Expr) -> usize {
        let mut n = 0;
        e.walk(&mut |x| n += matches!(x.kind, ExprKind::Ternary(..)) as usize);
        n
    }

    #[test]
    fn one_ternary_assign() {
        let f = parse("module m(input a, output o); assign o = a ? 1'b1 : 1'b0; endmodule").unwrap();
        let m = &f.modules[0];
        assert_eq!(m.name, "m");
        let Item::Assign(v) = &m.items[0] else { panic!() };
        assert_eq!(ternaries(&v[0].1), 1);
        let Ports::Ansi(p) = &m.ports else { panic!() };
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn precedence_and_assoc() {
        let f = parse("module m; assign o = a | b & c == d + e * f ? x : y ? z : w; endmodule").unwrap();
        let Item::Assign(v) = &f.modules[0].items[0] else { panic!() };
        let ExprKind::Ternary(c, _, f2) = &v[0].1.kind else { panic!() };
        assert!(matches!(c.kind, ExprKind::Binary("|", ..)));
        assert!(matches!(f2.kind, ExprKind::Ternary(..)));
    }

    #[test]
    fn else_if_chain_nests() {
        let src = "module m; always @(*) begin if (a) x = 1; else if (b) x = 2; else if (c) x = 3; else x = 4; end endmodule";
        let f = parse(src).unwrap();
        let Item::Always { body: Stmt::Block { stmts, .. }, .. } = &f.modules[0].items[0] else { panic!() };
        let mut depth = 0;
        let mut s = &stmts[0];
        while let Stmt::If { els, .. } = s {
            depth += 1;
            match els {
                Some(e) => s = e,
                None => break,
            }
        }
        assert_eq!(depth, 3);
    }

    #[test]
    fn generate_is_unsupported_with_span() {
        let src = "module m;\n  generate\n    if (1) begin end\n  endgenerate\n  wire w;\nendmodule\n";
        let (f, e) = parse_recovering(src);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].kind, SvErrorKind::Unsupported("generate".into()));
        assert_eq!((e[0].span.line, e[0].span.col), (2, 3));
        assert_eq!(&src[e[0].span.start..e[0].span.end], "generate\n    if (1) begin end\n  endgenerate");
        // recovery kept the following item
        assert_eq!(f.modules[0].items.len(), 1);
    }

    #[test]
    fn recovery_continues_at_next_item() {
        let src = "module m;\n  assign = 3;\n  assign o = a ? b : c;\n  wire w\n  always_comb if (x) y = 1;\nendmodule\n";
        let (f, e) = parse_recovering(src);
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].span.line, 2);
        assert_eq!(e[1].span.line, 5);
        assert_eq!(f.modules[0].items.len(), 2);
    }

    #[test]
    fn instances_headers_and_selects() {
        let src = "module top #(parameter W = 8, localparam int D = W * 2) (input logic clk, input [W-1:0] a, b, output reg [3:0] q);
            wire [7:0] mem [0:3];
            sub #(.N(W)) u0 (.x(a[3:0]), .y(sel ? a[W-1 -: 4] : {2{b[1:0]}}), .z(), .clk, .*);
            sub u1 (a, $clog2(D));
            always_ff @(posedge clk or negedge rst) unique casez (a[1:0]) 2'b1?: q <= 1; default: ; endcase
        endmodule";
        let f = parse(src).unwrap();
        let m = &f.modules[0];
        assert_eq!(m.params.len(), 2);
        assert!(m.params[1].local);
        let Ports::Ansi(p) = &m.ports else { panic!() };
        assert_eq!(p[1].names.len(), 2);
        let Item::Instance { conns, params, .. } = &m.items[1] else { panic!() };
        assert_eq!((params.len(), conns.len()), (1, 5));
        assert!(matches!(&m.items[3], Item::Always { body: Stmt::Case { arms, .. }, .. } if arms.len() == 2));
    }

    #[test]
    fn missing_endmodule() {
        let (f, e) = parse_recovering("module a; wire w;\nmodule b; endmodule");
        assert_eq!(f.modules.len(), 2);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].span.line, 2);
    }
}
