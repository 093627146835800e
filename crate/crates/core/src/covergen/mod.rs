//! Mux-toggle coverpoint extraction from a SystemVerilog subset.

pub mod ast;
mod extract;
mod lexer;
mod parser;
pub mod print;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{
    emit_json, emit_text, emitted, extract, is_static, CoverKind, CoverpointDesc, ExtractOptions, Extractor,
    SourceSpan,
};
pub use lexer::{lex, Tok, Token};
pub use parser::{parse, parse_recovering};

/// Byte range plus the 1-based line and column of its first character.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SvErrorKind {
    BadChar(char),
    BadNumber(String),
    UnterminatedComment,
    Unsupported(String),
    Unexpected { found: String, expected: String },
}

impl fmt::Display for SvErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SvErrorKind::BadChar(c) => write!(f, "unexpected character {c:?}"),
            SvErrorKind::BadNumber(n) => write!(f, "malformed number `{n}`"),
            SvErrorKind::UnterminatedComment => write!(f, "unterminated block comment"),
            SvErrorKind::Unsupported(what) => write!(f, "unsupported construct `{what}`"),
            SvErrorKind::Unexpected { found, expected } => write!(f, "expected {expected}, found {found}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}:{}: {kind}", span.line, span.col)]
pub struct SvError {
    pub span: Span,
    pub kind: SvErrorKind,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(src: &str) -> Vec<CoverpointDesc> {
        extract("t.sv", &parse(src).unwrap())
    }

    #[test]
    fn static_literal_ternary_is_flagged() {
        let p = points("module m(input a, b, output o); assign o = 1'b1 ? a : b; endmodule");
        assert_eq!(p.len(), 1);
        assert!(p[0].is_static);
        assert!(emitted(&p, false).is_empty());
        assert_eq!(emitted(&p, true).len(), 1);
    }

    #[test]
    fn parameters_are_static_nets_are_not() {
        let src = "module m #(parameter W = 4) (input [3:0] a, output o);
            localparam D = W > 2 ? 1 : 0;
            assign o = (W == 4) ? a[0] : a[1];
            assign p = (a == W) ? 1 : 0;
        endmodule";
        let p = points(src);
        assert_eq!(p.iter().map(|x| x.is_static).collect::<Vec<_>>(), vec![true, true, false]);
    }

    #[test]
    fn two_ifs_one_ternary_one_case() {
        let src = "module m(input clk, input [1:0] s, input a, output reg q, output o);
            assign o = a ? s[0] : s[1];
            always @(posedge clk) begin
                if (a) q <= 1;
                if (s == 2'b11) q <= 0;
                case (s)
                    2'b00: q <= a;
                    default: q <= 0;
                endcase
            end
        endmodule";
        let p = points(src);
        let kinds: Vec<_> = p.iter().map(|x| x.kind).collect();
        assert_eq!(
            kinds,
            vec![CoverKind::TernaryCond, CoverKind::IfCond, CoverKind::IfCond, CoverKind::CaseSelect]
        );
        assert_eq!(p.iter().map(|x| x.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(p[0].hier_name.starts_with("m.o.tern_"));
        assert!(p[1].hier_name.starts_with("m.always0.if_"));
    }

    #[test]
    fn case_arms_option() {
        let src = "module m; always_comb case (s) 0: x = 1; 1, 2: x = 2; default: x = 0; endcase endmodule";
        let mut x = Extractor::new(ExtractOptions { case_arms: true });
        x.file("t.sv", &parse(src).unwrap());
        assert_eq!(x.finish().len(), 3);
        assert_eq!(points(src).len(), 1);
    }

    #[test]
    fn preorder_ids_follow_source_position() {
        let src = "module m; always_comb begin : blk
            if ((a ? b : c) && d) x = e ? f : (g ? h : i);
            else case (k ? l : m2) 0: x = 1; endcase
        end endmodule";
        let p = points(src);
        assert_eq!(p.len(), 6);
        let mut by_pos = p.clone();
        by_pos.sort_by_key(|x| (x.span.line, x.span.column));
        assert_eq!(by_pos, p);
        assert!(p.iter().all(|x| x.hier_name.starts_with("m.blk.")));
    }

    #[test]
    fn duplicate_conditions_get_distinct_names() {
        let p = points("module m; assign o = a ? 1 : 0; assign o2 = a ? 1 : 0; always_comb begin if (a) x = 1; if (a) y = 1; end endmodule");
        let names: HashSet<_> = p.iter().map(|x| x.hier_name.clone()).collect();
        assert_eq!(names.len(), 4);
    }

    #[test]
    fn json_shape_and_round_trip() {
        assert_eq!(emit_json(&[]), "[]");
        let p = points("module m; assign o = a ? b : c; endmodule");
        let v: serde_json::Value = serde_json::from_str(&emit_json(&p)).unwrap();
        let rec = v[0].as_object().unwrap();
        let mut keys: Vec<_> = rec.keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["hier_name", "id", "kind", "span", "static"]);
        assert_eq!(rec["kind"], "ternary-cond");
        assert_eq!(rec["span"]["line"], 1);
        let back: Vec<CoverpointDesc> = serde_json::from_str(&emit_json(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn text_format() {
        let p = points("module m; assign o = 1 ? b : c; endmodule");
        let t = emit_text(&p);
        assert!(t.starts_with("0 ternary-cond m.o.tern_") && t.ends_with(" static\n"));
    }

    #[test]
    fn print_is_a_fixed_point() {
        let src = "module top #(parameter W = 8) (input logic clk, input [W-1:0] a, b, output reg [3:0] q);
            wire [7:0] mem [0:3];
            wire n = ~&a;
            sub #(.N(W)) u0 (.x(a[3:0]), .y(sel ? a[W-1 -: 4] : {2{b[1:0]}}), .z(), .clk, .*);
            always @* begin : comb
              if (a) if (b) q = 1; else q = 2;
              else if (c) begin q = 3; end
              else q = - -a;
            end
            always_ff @(posedge clk or negedge rst) unique casez (a[1:0]) 2'b1?: q <= 1; default: ; endcase
        endmodule
        module m2(x, y); input x; output y; assign y = !(x); endmodule";
        let once = print::file(&parse(src).unwrap());
        let twice = print::file(&parse(&once).unwrap());
        assert_eq!(once, twice);
        let a: Vec<_> = points(src).into_iter().map(|p| (p.hier_name, p.kind, p.is_static)).collect();
        let b: Vec<_> = points(&once).into_iter().map(|p| (p.hier_name, p.kind, p.is_static)).collect();
        assert_eq!(a, b);
    }

    use std::collections::HashSet;
}
