use super::{Span, SvError, SvErrorKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `$name`
    SysIdent(String),
    Number(String),
    Op(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first.
const OPS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "~&", "~|", "~^", "^~", "**", "+:",
    "-:", "(", ")", "[", "]", "{", "}", ",", ";", ":", "?", "@", "#", ".", "=", "+", "-", "*", "/", "%", "&", "|", "^",
    "~", "!", "<", ">",
];

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&self, k: usize) -> Option<u8> {
        self.src.get(self.pos + k).copied()
    }

    fn bump(&mut self) {
        if self.src[self.pos] == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        self.pos += 1;
    }

    fn here(&self) -> Span {
        Span { line: self.line, col: self.col, start: self.pos, end: self.pos }
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) {
        while self.peek(0).is_some_and(&f) {
            self.bump();
        }
    }
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

fn is_based_digit(c: u8) -> bool {
    c.is_ascii_hexdigit() || matches!(c, b'x' | b'X' | b'z' | b'Z' | b'?' | b'_')
}

/// Splits source text into tokens. Comments vanish; a compiler directive
/// standing alone on its line is skipped whole.
pub fn lex(source: &str) -> (Vec<Token>, Vec<SvError>) {
    let mut c = Cursor { src: source.as_bytes(), pos: 0, line: 1, col: 1 };
    let mut toks = Vec::new();
    let mut errors = Vec::new();
    let mut line_has_token = false;
    while let Some(ch) = c.peek(0) {
        let mut span = c.here();
        let text = |c: &Cursor, span: &Span| source[span.start..c.pos].to_string();
        if ch == b'\n' {
            line_has_token = false;
            c.bump();
            continue;
        }
        if ch.is_ascii_whitespace() {
            c.bump();
            continue;
        }
        if ch == b'/' && c.peek(1) == Some(b'/') {
            c.take_while(|b| b != b'\n');
            continue;
        }
        if ch == b'/' && c.peek(1) == Some(b'*') {
            c.bump();
            c.bump();
            loop {
                match c.peek(0) {
                    None => {
                        span.end = c.pos;
                        errors.push(SvError { span, kind: SvErrorKind::UnterminatedComment });
                        break;
                    }
                    Some(b'*') if c.peek(1) == Some(b'/') => {
                        c.bump();
                        c.bump();
                        break;
                    }
                    _ => c.bump(),
                }
            }
            continue;
        }
        if ch == b'`' {
            c.take_while(|b| b != b'\n');
            if line_has_token {
                span.end = c.pos;
                errors.push(SvError { span, kind: SvErrorKind::Unsupported("macro use".into()) });
            }
            continue;
        }
        line_has_token = true;
        let tok = if is_ident_start(ch) {
            c.take_while(is_ident_char);
            Tok::Ident(text(&c, &span))
        } else if ch == b'$' && c.peek(1).is_some_and(is_ident_start) {
            c.bump();
            c.take_while(is_ident_char);
            Tok::SysIdent(text(&c, &span))
        } else if ch.is_ascii_digit() || ch == b'\'' {
            c.take_while(|b| b.is_ascii_digit() || b == b'_');
            if c.peek(0) == Some(b'\'') {
                c.bump();
                if matches!(c.peek(0), Some(b's' | b'S')) {
                    c.bump();
                }
                match c.peek(0) {
                    Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H') => {
                        c.bump();
                        c.take_while(is_based_digit);
                    }
                    // unbased unsized fill: '0 '1 'x 'z
                    Some(b'0' | b'1' | b'x' | b'X' | b'z' | b'Z') => c.bump(),
                    _ => {
                        span.end = c.pos;
                        errors.push(SvError { span: span.clone(), kind: SvErrorKind::BadNumber(text(&c, &span)) });
                        continue;
                    }
                }
            }
            Tok::Number(text(&c, &span))
        } else if let Some(op) = OPS.iter().find(|op| source.as_bytes()[c.pos..].starts_with(op.as_bytes())) {
            for _ in 0..op.len() {
                c.bump();
            }
            Tok::Op(op)
        } else {
            let bad = source[c.pos..].chars().next().unwrap_or('?');
            for _ in 0..bad.len_utf8() {
                c.bump();
            }
            span.end = c.pos;
            errors.push(SvError { span, kind: SvErrorKind::BadChar(bad) });
            continue;
        };
        span.end = c.pos;
        toks.push(Token { tok, span });
    }
    toks.push(Token { tok: Tok::Eof, span: c.here() });
    (toks, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        let (t, e) = lex(src);
        assert!(e.is_empty(), "{e:?}");
        t.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_ops() {
        assert_eq!(
            kinds("a<=4'b10_1x ?'0:32'shFF>>>2"),
            vec![
                Tok::Ident("a".into()),
                Tok::Op("<="),
                Tok::Number("4'b10_1x".into()),
                Tok::Op("?"),
                Tok::Number("'0".into()),
                Tok::Op(":"),
                Tok::Number("32'shFF".into()),
                Tok::Op(">>>"),
                Tok::Number("2".into()),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn comments_and_directives_vanish() {
        let src = "`timescale 1ns/1ps\n// x ? y\nwire /* if */ w;\n";
        assert_eq!(kinds(src), vec![Tok::Ident("wire".into()), Tok::Ident("w".into()), Tok::Op(";"), Tok::Eof]);
    }

    #[test]
    fn spans_track_lines_and_columns() {
        let (t, _) = lex("module m;\n  wire w;");
        assert_eq!((t[3].span.line, t[3].span.col), (2, 3));
        assert_eq!((t[3].span.start, t[3].span.end), (12, 16));
    }

    #[test]
    fn errors_are_reported_and_skipped() {
        let (t, e) = lex("a \" b\nx = `W;\n/* open");
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].kind, SvErrorKind::BadChar('"'));
        assert!(matches!(e[1].kind, SvErrorKind::Unsupported(_)));
        assert_eq!(e[2].kind, SvErrorKind::UnterminatedComment);
        assert_eq!(t.len(), 5);
    }
}
