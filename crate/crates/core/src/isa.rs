//! The RV32I-style integer subset executed by the pipeline and the golden model.
//!
//! Only word loads/stores are supported. Everything outside the subset decodes
//! to [`Op::Illegal`], which both models treat as a fatal halt.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Lui,
    Auipc,
    Addi,
    Slti,
    Andi,
    Ori,
    Xori,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Slt,
    And,
    Or,
    Xor,
    Sll,
    Srl,
    Sra,
    Lw,
    Sw,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Jal,
    Jalr,
    Ecall,
    Ebreak,
    Illegal,
}

/// Coarse functional class used by the issue logic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpClass {
    /// Register/immediate integer ops, including LUI/AUIPC.
    Alu,
    Branch,
    Jump,
    Load,
    Store,
    System,
    Illegal,
}

impl Op {
    pub fn class(self) -> OpClass {
        use Op::*;
        match self {
            Lui | Auipc | Addi | Slti | Andi | Ori | Xori | Slli | Srli | Srai | Add | Sub
            | Slt | And | Or | Xor | Sll | Srl | Sra => OpClass::Alu,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => OpClass::Branch,
            Jal | Jalr => OpClass::Jump,
            Lw => OpClass::Load,
            Sw => OpClass::Store,
            Ecall | Ebreak => OpClass::System,
            Illegal => OpClass::Illegal,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        use Op::*;
        match self {
            Lui => "lui",
            Auipc => "auipc",
            Addi => "addi",
            Slti => "slti",
            Andi => "andi",
            Ori => "ori",
            Xori => "xori",
            Slli => "slli",
            Srli => "srli",
            Srai => "srai",
            Add => "add",
            Sub => "sub",
            Slt => "slt",
            And => "and",
            Or => "or",
            Xor => "xor",
            Sll => "sll",
            Srl => "srl",
            Sra => "sra",
            Lw => "lw",
            Sw => "sw",
            Beq => "beq",
            Bne => "bne",
            Blt => "blt",
            Bge => "bge",
            Bltu => "bltu",
            Bgeu => "bgeu",
            Jal => "jal",
            Jalr => "jalr",
            Ecall => "ecall",
            Ebreak => "ebreak",
            Illegal => "illegal",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Op> {
        ALL_OPS.iter().copied().find(|op| op.mnemonic() == s && *op != Op::Illegal)
    }
}

pub const ALL_OPS: [Op; 31] = [
    Op::Lui,
    Op::Auipc,
    Op::Addi,
    Op::Slti,
    Op::Andi,
    Op::Ori,
    Op::Xori,
    Op::Slli,
    Op::Srli,
    Op::Srai,
    Op::Add,
    Op::Sub,
    Op::Slt,
    Op::And,
    Op::Or,
    Op::Xor,
    Op::Sll,
    Op::Srl,
    Op::Sra,
    Op::Lw,
    Op::Sw,
    Op::Beq,
    Op::Bne,
    Op::Blt,
    Op::Bge,
    Op::Bltu,
    Op::Bgeu,
    Op::Jal,
    Op::Jalr,
    Op::Ecall,
    Op::Ebreak,
];

/// A decoded instruction. Fields an encoding does not carry are zero, so
/// `decode(encode(i)) == i` holds for every well-formed value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instr {
    pub word: u32,
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
}

pub const NOP: u32 = 0x0000_0013;

const OPC_LUI: u32 = 0b0110111;
const OPC_AUIPC: u32 = 0b0010111;
const OPC_JAL: u32 = 0b1101111;
const OPC_JALR: u32 = 0b1100111;
const OPC_BRANCH: u32 = 0b1100011;
const OPC_LOAD: u32 = 0b0000011;
const OPC_STORE: u32 = 0b0100011;
const OPC_IMM: u32 = 0b0010011;
const OPC_REG: u32 = 0b0110011;
const OPC_SYSTEM: u32 = 0b1110011;

fn bits(word: u32, hi: u32, lo: u32) -> u32 {
    (word >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

fn sext(value: u32, width: u32) -> i32 {
    let shift = 32 - width;
    ((value << shift) as i32) >> shift
}

impl Instr {
    pub fn illegal(word: u32) -> Instr {
        Instr { word, op: Op::Illegal, rd: 0, rs1: 0, rs2: 0, imm: 0 }
    }

    /// Builds an instruction from fields and fills in `word`. Fields that the
    /// format does not encode are cleared.
    pub fn new(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32) -> Instr {
        let mut i = Instr { word: 0, op, rd, rs1, rs2, imm };
        match op.class() {
            OpClass::Alu => match op {
                Op::Lui | Op::Auipc => {
                    i.rs1 = 0;
                    i.rs2 = 0;
                    i.imm = imm & !0xfff;
                }
                Op::Add | Op::Sub | Op::Slt | Op::And | Op::Or | Op::Xor | Op::Sll
                | Op::Srl | Op::Sra => i.imm = 0,
                Op::Slli | Op::Srli | Op::Srai => {
                    i.rs2 = 0;
                    i.imm = imm & 0x1f;
                }
                _ => {
                    i.rs2 = 0;
                    i.imm = sext((imm as u32) & 0xfff, 12);
                }
            },
            OpClass::Load => {
                i.rs2 = 0;
                i.imm = sext((imm as u32) & 0xfff, 12);
            }
            OpClass::Store => {
                i.rd = 0;
                i.imm = sext((imm as u32) & 0xfff, 12);
            }
            OpClass::Branch => {
                i.rd = 0;
                i.imm = sext((imm as u32) & 0x1ffe, 13);
            }
            OpClass::Jump => {
                if op == Op::Jal {
                    i.rs1 = 0;
                    i.rs2 = 0;
                    i.imm = sext((imm as u32) & 0x1f_fffe, 21);
                } else {
                    i.rs2 = 0;
                    i.imm = sext((imm as u32) & 0xfff, 12);
                }
            }
            OpClass::System | OpClass::Illegal => {
                i.rd = 0;
                i.rs1 = 0;
                i.rs2 = 0;
                i.imm = 0;
            }
        }
        i.rd &= 0x1f;
        i.rs1 &= 0x1f;
        i.rs2 &= 0x1f;
        i.word = encode(&i);
        i
    }

    /// Destination register, if the instruction writes one (x0 excluded).
    pub fn dest(&self) -> Option<u8> {
        let writes = matches!(
            self.op.class(),
            OpClass::Alu | OpClass::Load | OpClass::Jump
        );
        (writes && self.rd != 0).then_some(self.rd)
    }

    /// Source registers actually read, in (rs1, rs2) order.
    pub fn sources(&self) -> [Option<u8>; 2] {
        use Op::*;
        let nz = |r: u8| (r != 0).then_some(r);
        match self.op {
            Lui | Auipc | Jal | Ebreak | Illegal => [None, None],
            Addi | Slti | Andi | Ori | Xori | Slli | Srli | Srai | Lw | Jalr => {
                [nz(self.rs1), None]
            }
            Add | Sub | Slt | And | Or | Xor | Sll | Srl | Sra | Sw | Beq | Bne | Blt | Bge
            | Bltu | Bgeu => [nz(self.rs1), nz(self.rs2)],
            // a0 and a7 carry the syscall arguments.
            Ecall => [Some(10), Some(17)],
        }
    }
}

pub fn decode(word: u32) -> Instr {
    let opcode = bits(word, 6, 0);
    let rd = bits(word, 11, 7) as u8;
    let f3 = bits(word, 14, 12);
    let rs1 = bits(word, 19, 15) as u8;
    let rs2 = bits(word, 24, 20) as u8;
    let f7 = bits(word, 31, 25);
    let imm_i = sext(bits(word, 31, 20), 12);
    let imm_s = sext((bits(word, 31, 25) << 5) | bits(word, 11, 7), 12);
    let imm_b = sext(
        (bits(word, 31, 31) << 12)
            | (bits(word, 7, 7) << 11)
            | (bits(word, 30, 25) << 5)
            | (bits(word, 11, 8) << 1),
        13,
    );
    let imm_u = (word & 0xffff_f000) as i32;
    let imm_j = sext(
        (bits(word, 31, 31) << 20)
            | (bits(word, 19, 12) << 12)
            | (bits(word, 20, 20) << 11)
            | (bits(word, 30, 21) << 1),
        21,
    );
    let mk = |op, rd, rs1, rs2, imm| Instr { word, op, rd, rs1, rs2, imm };
    match opcode {
        OPC_LUI => mk(Op::Lui, rd, 0, 0, imm_u),
        OPC_AUIPC => mk(Op::Auipc, rd, 0, 0, imm_u),
        OPC_JAL => mk(Op::Jal, rd, 0, 0, imm_j),
        OPC_JALR if f3 == 0 => mk(Op::Jalr, rd, rs1, 0, imm_i),
        OPC_BRANCH => {
            let op = match f3 {
                0b000 => Op::Beq,
                0b001 => Op::Bne,
                0b100 => Op::Blt,
                0b101 => Op::Bge,
                0b110 => Op::Bltu,
                0b111 => Op::Bgeu,
                _ => return Instr::illegal(word),
            };
            mk(op, 0, rs1, rs2, imm_b)
        }
        OPC_LOAD if f3 == 0b010 => mk(Op::Lw, rd, rs1, 0, imm_i),
        OPC_STORE if f3 == 0b010 => mk(Op::Sw, 0, rs1, rs2, imm_s),
        OPC_IMM => {
            let op = match f3 {
                0b000 => Op::Addi,
                0b010 => Op::Slti,
                0b111 => Op::Andi,
                0b110 => Op::Ori,
                0b100 => Op::Xori,
                0b001 if f7 == 0 => return mk(Op::Slli, rd, rs1, 0, rs2 as i32),
                0b101 if f7 == 0 => return mk(Op::Srli, rd, rs1, 0, rs2 as i32),
                0b101 if f7 == 0b0100000 => return mk(Op::Srai, rd, rs1, 0, rs2 as i32),
                _ => return Instr::illegal(word),
            };
            mk(op, rd, rs1, 0, imm_i)
        }
        OPC_REG => {
            let op = match (f7, f3) {
                (0, 0b000) => Op::Add,
                (0b0100000, 0b000) => Op::Sub,
                (0, 0b010) => Op::Slt,
                (0, 0b111) => Op::And,
                (0, 0b110) => Op::Or,
                (0, 0b100) => Op::Xor,
                (0, 0b001) => Op::Sll,
                (0, 0b101) => Op::Srl,
                (0b0100000, 0b101) => Op::Sra,
                _ => return Instr::illegal(word),
            };
            mk(op, rd, rs1, rs2, 0)
        }
        OPC_SYSTEM if word == 0x0000_0073 => mk(Op::Ecall, 0, 0, 0, 0),
        OPC_SYSTEM if word == 0x0010_0073 => mk(Op::Ebreak, 0, 0, 0, 0),
        _ => Instr::illegal(word),
    }
}

pub fn encode(i: &Instr) -> u32 {
    let rd = (i.rd as u32 & 0x1f) << 7;
    let rs1 = (i.rs1 as u32 & 0x1f) << 15;
    let rs2 = (i.rs2 as u32 & 0x1f) << 20;
    let imm = i.imm as u32;
    let itype = |f3: u32, opc: u32| ((imm & 0xfff) << 20) | rs1 | (f3 << 12) | rd | opc;
    let rtype = |f7: u32, f3: u32| (f7 << 25) | rs2 | rs1 | (f3 << 12) | rd | OPC_REG;
    let shift = |f7: u32, f3: u32| (f7 << 25) | ((imm & 0x1f) << 20) | rs1 | (f3 << 12) | rd | OPC_IMM;
    let btype = |f3: u32| {
        (((imm >> 12) & 1) << 31)
            | (((imm >> 5) & 0x3f) << 25)
            | rs2
            | rs1
            | (f3 << 12)
            | (((imm >> 1) & 0xf) << 8)
            | (((imm >> 11) & 1) << 7)
            | OPC_BRANCH
    };
    match i.op {
        Op::Lui => (imm & 0xffff_f000) | rd | OPC_LUI,
        Op::Auipc => (imm & 0xffff_f000) | rd | OPC_AUIPC,
        Op::Addi => itype(0b000, OPC_IMM),
        Op::Slti => itype(0b010, OPC_IMM),
        Op::Andi => itype(0b111, OPC_IMM),
        Op::Ori => itype(0b110, OPC_IMM),
        Op::Xori => itype(0b100, OPC_IMM),
        Op::Slli => shift(0, 0b001),
        Op::Srli => shift(0, 0b101),
        Op::Srai => shift(0b0100000, 0b101),
        Op::Add => rtype(0, 0b000),
        Op::Sub => rtype(0b0100000, 0b000),
        Op::Slt => rtype(0, 0b010),
        Op::And => rtype(0, 0b111),
        Op::Or => rtype(0, 0b110),
        Op::Xor => rtype(0, 0b100),
        Op::Sll => rtype(0, 0b001),
        Op::Srl => rtype(0, 0b101),
        Op::Sra => rtype(0b0100000, 0b101),
        Op::Lw => itype(0b010, OPC_LOAD),
        Op::Sw => {
            (((imm >> 5) & 0x7f) << 25) | rs2 | rs1 | (0b010 << 12) | ((imm & 0x1f) << 7) | OPC_STORE
        }
        Op::Beq => btype(0b000),
        Op::Bne => btype(0b001),
        Op::Blt => btype(0b100),
        Op::Bge => btype(0b101),
        Op::Bltu => btype(0b110),
        Op::Bgeu => btype(0b111),
        Op::Jal => {
            (((imm >> 20) & 1) << 31)
                | (((imm >> 1) & 0x3ff) << 21)
                | (((imm >> 11) & 1) << 20)
                | (((imm >> 12) & 0xff) << 12)
                | rd
                | OPC_JAL
        }
        Op::Jalr => itype(0b000, OPC_JALR),
        Op::Ecall => 0x0000_0073,
        Op::Ebreak => 0x0010_0073,
        Op::Illegal => i.word,
    }
}

/// Integer ALU shared by both execution models.
pub fn alu(op: Op, a: u32, b: u32) -> u32 {
    match op {
        Op::Add | Op::Addi => a.wrapping_add(b),
        Op::Sub => a.wrapping_sub(b),
        Op::Slt | Op::Slti => ((a as i32) < (b as i32)) as u32,
        Op::And | Op::Andi => a & b,
        Op::Or | Op::Ori => a | b,
        Op::Xor | Op::Xori => a ^ b,
        Op::Sll | Op::Slli => a << (b & 31),
        Op::Srl | Op::Srli => a >> (b & 31),
        Op::Sra | Op::Srai => ((a as i32) >> (b & 31)) as u32,
        _ => 0,
    }
}

pub fn branch_taken(op: Op, a: u32, b: u32) -> bool {
    match op {
        Op::Beq => a == b,
        Op::Bne => a != b,
        Op::Blt => (a as i32) < (b as i32),
        Op::Bge => (a as i32) >= (b as i32),
        Op::Bltu => a < b,
        Op::Bgeu => a >= b,
        _ => false,
    }
}

pub const REG_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.op.mnemonic();
        match self.op.class() {
            OpClass::Alu => match self.op {
                Op::Lui | Op::Auipc => write!(f, "{m} x{}, 0x{:x}", self.rd, (self.imm as u32) >> 12),
                Op::Add | Op::Sub | Op::Slt | Op::And | Op::Or | Op::Xor | Op::Sll | Op::Srl
                | Op::Sra => write!(f, "{m} x{}, x{}, x{}", self.rd, self.rs1, self.rs2),
                _ => write!(f, "{m} x{}, x{}, {}", self.rd, self.rs1, self.imm),
            },
            OpClass::Load => write!(f, "{m} x{}, {}(x{})", self.rd, self.imm, self.rs1),
            OpClass::Store => write!(f, "{m} x{}, {}(x{})", self.rs2, self.imm, self.rs1),
            OpClass::Branch => write!(f, "{m} x{}, x{}, {}", self.rs1, self.rs2, self.imm),
            OpClass::Jump if self.op == Op::Jal => write!(f, "{m} x{}, {}", self.rd, self.imm),
            OpClass::Jump => write!(f, "{m} x{}, {}(x{})", self.rd, self.imm, self.rs1),
            OpClass::System => write!(f, "{m}"),
            OpClass::Illegal => write!(f, "illegal 0x{:08x}", self.word),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Field packing written straight from the base-ISA encoding tables,
    // independent of `encode`.
    fn ref_itype(imm: i32, rs1: u32, f3: u32, rd: u32, opc: u32) -> u32 {
        ((imm as u32 & 0xfff) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc
    }

    #[test]
    fn canonical_nop() {
        let i = decode(0x0000_0013);
        assert_eq!((i.op, i.rd, i.rs1, i.imm), (Op::Addi, 0, 0, 0));
        assert_eq!(ref_itype(0, 0, 0, 0, 0x13), 0x0000_0013);
    }

    #[test]
    fn addi_x1_10() {
        assert_eq!(ref_itype(10, 0, 0, 1, 0x13), 0x00A0_0093);
        let i = decode(0x00A0_0093);
        assert_eq!((i.op, i.rd, i.rs1, i.imm), (Op::Addi, 1, 0, 10));
    }

    #[test]
    fn all_ones_is_illegal() {
        assert_eq!(decode(0xFFFF_FFFF).op, Op::Illegal);
        // sltiu/sltu, lb and fence are outside the subset
        assert_eq!(decode(0x0010_b093).op, Op::Illegal);
        assert_eq!(decode(0x0000_0003).op, Op::Illegal);
        assert_eq!(decode(0x0ff0_000f).op, Op::Illegal);
    }

    #[test]
    fn negative_immediates() {
        // addi x2, x2, -16
        let i = decode(ref_itype(-16, 2, 0, 2, 0x13));
        assert_eq!(i.imm, -16);
        // beq x1, x0, -8
        let b = Instr::new(Op::Beq, 0, 1, 0, -8);
        assert_eq!(decode(b.word).imm, -8);
        let j = Instr::new(Op::Jal, 1, 0, 0, -2048);
        assert_eq!(decode(j.word), j);
    }

    fn any_instr() -> impl Strategy<Value = Instr> {
        (0usize..ALL_OPS.len(), 0u8..32, 0u8..32, 0u8..32, any::<i32>())
            .prop_map(|(k, rd, rs1, rs2, imm)| Instr::new(ALL_OPS[k], rd, rs1, rs2, imm))
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(i in any_instr()) {
            prop_assert_eq!(decode(encode(&i)), i);
        }

        #[test]
        fn decode_is_total(word in any::<u32>()) {
            let i = decode(word);
            if i.op != Op::Illegal {
                prop_assert_eq!(encode(&i), word);
            }
        }
    }
}
