//! Two-pass assembler for the DUT subset.
//!
//! One statement per line: an instruction, a `label:` (optionally followed by
//! an instruction), or a directive (`.org`, `.word`, `.entry`). Comments start
//! with `#` or `//`. Supported pseudo-instructions: `nop`, `li`, `la`, `mv`,
//! `j`, `jr`, `ret`, `beqz`, `bnez`, `call`.
//!
//! Branch and jump targets may be labels or numeric byte offsets.

use std::collections::HashMap;

use thiserror::Error;

use crate::image::ProgramImage;
use crate::isa::{Instr, Op, OpClass, REG_NAMES};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("immediate {value} out of range for {what}")]
    ImmediateRange { value: i64, what: &'static str },
    #[error("bad register `{0}`")]
    BadRegister(String),
    #[error("bad operand `{0}`")]
    BadOperand(String),
    #[error("expected {expected} operands, got {got}")]
    OperandCount { expected: usize, got: usize },
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("misaligned address 0x{0:x}")]
    Misaligned(u32),
}

struct Stmt<'a> {
    line: usize,
    addr: u32,
    mnemonic: &'a str,
    operands: Vec<&'a str>,
}

fn err(line: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, kind }
}

fn strip_comment(l: &str) -> &str {
    let l = l.split('#').next().unwrap_or("");
    l.split("//").next().unwrap_or("")
}

pub fn parse_reg(s: &str) -> Option<u8> {
    let s = s.trim();
    if let Some(n) = s.strip_prefix('x') {
        if let Ok(v) = n.parse::<u8>() {
            return (v < 32).then_some(v);
        }
    }
    if s == "fp" {
        return Some(8);
    }
    REG_NAMES.iter().position(|&r| r == s).map(|p| p as u8)
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(&b.replace('_', ""), 2).ok()?
    } else {
        body.replace('_', "").parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

/// Number of words a statement expands to.
fn size_of(mnemonic: &str, operands: &[&str]) -> u32 {
    match mnemonic {
        "la" | "call" => 2,
        "li" => match operands.get(1).and_then(|s| parse_int(s)) {
            Some(v) if (-2048..2048).contains(&v) => 1,
            _ => 2,
        },
        _ => 1,
    }
}

pub fn assemble(source: &str) -> Result<ProgramImage, AsmError> {
    let mut labels: HashMap<String, u32> = HashMap::new();
    let mut stmts = Vec::new();
    let mut words_at: Vec<(usize, u32, &str)> = Vec::new();
    let mut entry: Option<(usize, &str)> = None;
    let mut first_code: Option<u32> = None;
    let mut pc: u32 = 0;

    for (n, raw) in source.lines().enumerate() {
        let line = n + 1;
        let mut l = strip_comment(raw).trim();
        while let Some(colon) = l.find(':') {
            let name = l[..colon].trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                break;
            }
            if labels.insert(name.to_string(), pc).is_some() {
                return Err(err(line, AsmErrorKind::DuplicateLabel(name.to_string())));
            }
            l = l[colon + 1..].trim();
        }
        if l.is_empty() {
            continue;
        }
        let (mnemonic, rest) = match l.find(char::is_whitespace) {
            Some(p) => (&l[..p], l[p..].trim()),
            None => (l, ""),
        };
        let operands: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(str::trim).collect()
        };
        match mnemonic {
            ".org" => {
                let v = operands
                    .first()
                    .and_then(|s| parse_int(s))
                    .ok_or_else(|| err(line, AsmErrorKind::BadOperand(rest.to_string())))?;
                pc = v as u32;
                if pc % 4 != 0 {
                    return Err(err(line, AsmErrorKind::Misaligned(pc)));
                }
            }
            ".word" => {
                for op in operands {
                    words_at.push((line, pc, op));
                    pc = pc.wrapping_add(4);
                }
            }
            ".entry" => {
                entry = Some((line, operands.first().copied().unwrap_or("")));
            }
            m if m.starts_with('.') => {
                return Err(err(line, AsmErrorKind::UnknownDirective(m.to_string())));
            }
            _ => {
                first_code.get_or_insert(pc);
                let size = size_of(mnemonic, &operands);
                stmts.push(Stmt { line, addr: pc, mnemonic, operands });
                pc = pc.wrapping_add(4 * size);
            }
        }
    }

    let resolve = |line: usize, s: &str| -> Result<i64, AsmError> {
        if let Some(v) = parse_int(s) {
            return Ok(v);
        }
        labels
            .get(s.trim())
            .map(|&a| a as i64)
            .ok_or_else(|| err(line, AsmErrorKind::UndefinedLabel(s.trim().to_string())))
    };

    let mut image = ProgramImage::default();
    for (line, addr, op) in words_at {
        image.words.insert(addr, resolve(line, op)? as u32);
    }
    for st in &stmts {
        let words = encode_stmt(st, &labels)?;
        for (k, w) in words.into_iter().enumerate() {
            image.words.insert(st.addr + 4 * k as u32, w);
        }
    }
    image.entry = match entry {
        Some((line, e)) => resolve(line, e)? as u32,
        None => labels
            .get("_start")
            .copied()
            .or(first_code)
            .unwrap_or(0),
    };
    Ok(image)
}

fn check_range(line: usize, v: i64, lo: i64, hi: i64, what: &'static str) -> Result<i32, AsmError> {
    if v < lo || v > hi {
        return Err(err(line, AsmErrorKind::ImmediateRange { value: v, what }));
    }
    Ok(v as i32)
}

fn hi_lo(v: u32) -> (i32, i32) {
    let lo = ((v & 0xfff) as i32) << 20 >> 20;
    let hi = v.wrapping_sub(lo as u32) as i32;
    (hi, lo)
}

fn encode_stmt(st: &Stmt<'_>, labels: &HashMap<String, u32>) -> Result<Vec<u32>, AsmError> {
    let line = st.line;
    let ops = &st.operands;
    let want = |n: usize| {
        if ops.len() != n {
            Err(err(line, AsmErrorKind::OperandCount { expected: n, got: ops.len() }))
        } else {
            Ok(())
        }
    };
    let reg = |s: &str| parse_reg(s).ok_or_else(|| err(line, AsmErrorKind::BadRegister(s.to_string())));
    let value = |s: &str| -> Result<i64, AsmError> {
        if let Some(v) = parse_int(s) {
            return Ok(v);
        }
        labels
            .get(s.trim())
            .map(|&a| a as i64)
            .ok_or_else(|| err(line, AsmErrorKind::UndefinedLabel(s.trim().to_string())))
    };
    // Label targets become pc-relative; numeric targets are already offsets.
    let target = |s: &str| -> Result<i64, AsmError> {
        if let Some(v) = parse_int(s) {
            return Ok(v);
        }
        labels
            .get(s.trim())
            .map(|&a| a as i64 - st.addr as i64)
            .ok_or_else(|| err(line, AsmErrorKind::UndefinedLabel(s.trim().to_string())))
    };
    let mem = |s: &str| -> Result<(i32, u8), AsmError> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| err(line, AsmErrorKind::BadOperand(s.to_string())))?;
        let close = s.rfind(')').ok_or_else(|| err(line, AsmErrorKind::BadOperand(s.to_string())))?;
        let off = if open == 0 { 0 } else { value(&s[..open])? };
        let off = check_range(line, off, -2048, 2047, "12-bit offset")?;
        Ok((off, reg(&s[open + 1..close])?))
    };
    let one = |i: Instr| Ok(vec![i.word]);

    match st.mnemonic {
        "nop" => {
            want(0)?;
            return one(Instr::new(Op::Addi, 0, 0, 0, 0));
        }
        "mv" => {
            want(2)?;
            return one(Instr::new(Op::Addi, reg(ops[0])?, reg(ops[1])?, 0, 0));
        }
        "li" => {
            want(2)?;
            let rd = reg(ops[0])?;
            let v = value(ops[1])?;
            let v = check_range(line, v, i32::MIN as i64, u32::MAX as i64, "32-bit value")? as u32;
            let v = v as i64;
            if (-2048..2048).contains(&v) && parse_int(ops[1]).is_some() {
                return one(Instr::new(Op::Addi, rd, 0, 0, v as i32));
            }
            let (hi, lo) = hi_lo(v as u32);
            return Ok(vec![
                Instr::new(Op::Lui, rd, 0, 0, hi).word,
                Instr::new(Op::Addi, rd, rd, 0, lo).word,
            ]);
        }
        "la" => {
            want(2)?;
            let rd = reg(ops[0])?;
            let (hi, lo) = hi_lo(value(ops[1])? as u32);
            return Ok(vec![
                Instr::new(Op::Lui, rd, 0, 0, hi).word,
                Instr::new(Op::Addi, rd, rd, 0, lo).word,
            ]);
        }
        "call" => {
            want(1)?;
            let (hi, lo) = hi_lo(value(ops[0])? as u32);
            return Ok(vec![
                Instr::new(Op::Lui, 1, 0, 0, hi).word,
                Instr::new(Op::Jalr, 1, 1, 0, lo).word,
            ]);
        }
        "j" => {
            want(1)?;
            let off = check_range(line, target(ops[0])?, -(1 << 20), (1 << 20) - 2, "jal offset")?;
            return one(Instr::new(Op::Jal, 0, 0, 0, off));
        }
        "jr" => {
            want(1)?;
            return one(Instr::new(Op::Jalr, 0, reg(ops[0])?, 0, 0));
        }
        "ret" => {
            want(0)?;
            return one(Instr::new(Op::Jalr, 0, 1, 0, 0));
        }
        "beqz" | "bnez" => {
            want(2)?;
            let op = if st.mnemonic == "beqz" { Op::Beq } else { Op::Bne };
            let off = check_range(line, target(ops[1])?, -4096, 4094, "branch offset")?;
            return one(Instr::new(op, 0, reg(ops[0])?, 0, off));
        }
        _ => {}
    }

    let op = Op::from_mnemonic(st.mnemonic)
        .ok_or_else(|| err(line, AsmErrorKind::UnknownMnemonic(st.mnemonic.to_string())))?;
    let instr = match op.class() {
        OpClass::Alu => match op {
            Op::Lui | Op::Auipc => {
                want(2)?;
                let v = check_range(line, value(ops[1])?, 0, 0xfffff, "20-bit upper immediate")?;
                Instr::new(op, reg(ops[0])?, 0, 0, v << 12)
            }
            Op::Slli | Op::Srli | Op::Srai => {
                want(3)?;
                let sh = check_range(line, value(ops[2])?, 0, 31, "shift amount")?;
                Instr::new(op, reg(ops[0])?, reg(ops[1])?, 0, sh)
            }
            Op::Addi | Op::Slti | Op::Andi | Op::Ori | Op::Xori => {
                want(3)?;
                let v = check_range(line, value(ops[2])?, -2048, 2047, "12-bit immediate")?;
                Instr::new(op, reg(ops[0])?, reg(ops[1])?, 0, v)
            }
            _ => {
                want(3)?;
                Instr::new(op, reg(ops[0])?, reg(ops[1])?, reg(ops[2])?, 0)
            }
        },
        OpClass::Load => {
            want(2)?;
            let (off, base) = mem(ops[1])?;
            Instr::new(op, reg(ops[0])?, base, 0, off)
        }
        OpClass::Store => {
            want(2)?;
            let (off, base) = mem(ops[1])?;
            Instr::new(op, 0, base, reg(ops[0])?, off)
        }
        OpClass::Branch => {
            want(3)?;
            let off = check_range(line, target(ops[2])?, -4096, 4094, "branch offset")?;
            if off % 2 != 0 {
                return Err(err(line, AsmErrorKind::ImmediateRange { value: off as i64, what: "branch offset" }));
            }
            Instr::new(op, 0, reg(ops[0])?, reg(ops[1])?, off)
        }
        OpClass::Jump if op == Op::Jal => {
            let (rd, t) = match ops.len() {
                1 => (1, ops[0]),
                2 => (reg(ops[0])?, ops[1]),
                n => return Err(err(line, AsmErrorKind::OperandCount { expected: 2, got: n })),
            };
            let off = check_range(line, target(t)?, -(1 << 20), (1 << 20) - 2, "jal offset")?;
            Instr::new(op, rd, 0, 0, off)
        }
        OpClass::Jump => match ops.len() {
            2 => {
                let (off, base) = mem(ops[1])?;
                Instr::new(op, reg(ops[0])?, base, 0, off)
            }
            3 => {
                let v = check_range(line, value(ops[2])?, -2048, 2047, "12-bit immediate")?;
                Instr::new(op, reg(ops[0])?, reg(ops[1])?, 0, v)
            }
            n => return Err(err(line, AsmErrorKind::OperandCount { expected: 2, got: n })),
        },
        OpClass::System => {
            want(0)?;
            Instr::new(op, 0, 0, 0, 0)
        }
        OpClass::Illegal => unreachable!(),
    };
    one(instr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode;

    #[test]
    fn addi_matches_reference_encoding() {
        let img = assemble("addi x1, x0, 10\n").unwrap();
        assert_eq!(img.word(0), 0x00A0_0093);
        assert_eq!(img.entry, 0);
    }

    #[test]
    fn forward_branch_round_trips_through_decode() {
        let img = assemble("beq x1, x0, label\nnop\nlabel: nop\n").unwrap();
        let i = decode(img.word(0));
        assert_eq!((i.op, i.rs1, i.rs2, i.imm), (Op::Beq, 1, 0, 8));
        let back = assemble("beq x1, x0, -8\n").unwrap();
        assert_eq!(decode(back.word(0)).imm, -8);
    }

    #[test]
    fn word_directive_at_org() {
        let img = assemble(".org 0x100\n.word 0xDEADBEEF\n").unwrap();
        assert!(img.to_text().contains("00000100: DEADBEEF"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = assemble("nop\nfrobnicate x1\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(matches!(e.kind, AsmErrorKind::UnknownMnemonic(_)));
        let e = assemble("addi x1, x0, 4096\n").unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::ImmediateRange { value: 4096, .. }));
        let e = assemble("j nowhere\n").unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::UndefinedLabel(_)));
    }

    #[test]
    fn pseudo_expansions() {
        let img = assemble("_start: li a0, 0x12345678\nla t0, data\nret\ndata: .word 7\n").unwrap();
        let lui = decode(img.word(0));
        let addi = decode(img.word(4));
        assert_eq!(lui.op, Op::Lui);
        assert_eq!((lui.imm as u32).wrapping_add(addi.imm as u32), 0x12345678);
        let la_hi = decode(img.word(8));
        let la_lo = decode(img.word(12));
        assert_eq!((la_hi.imm as u32).wrapping_add(la_lo.imm as u32), 20);
        assert_eq!(img.word(20), 7);
        assert_eq!(decode(img.word(16)).op, Op::Jalr);
    }

    #[test]
    fn abi_register_names() {
        assert_eq!(parse_reg("a0"), Some(10));
        assert_eq!(parse_reg("a7"), Some(17));
        assert_eq!(parse_reg("x31"), Some(31));
        assert_eq!(parse_reg("x32"), None);
        assert_eq!(parse_reg("zero"), Some(0));
    }
}
