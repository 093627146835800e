//! Instruction-level golden model and commit-stream lockstep checker.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{
    CommitRecord, InputScript, Memory, EOF, SYS_EXIT, SYS_EXIT_RESET, SYS_GETCHAR, SYS_SENDCHAR,
};
use crate::image::ProgramImage;
use crate::isa::{alu, branch_taken, decode, Op, OpClass};

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecError {
    #[error("illegal instruction 0x{word:08x} at pc 0x{pc:08x}")]
    Illegal { pc: u32, word: u32 },
    #[error("misaligned access to 0x{addr:08x} at pc 0x{pc:08x}")]
    Misaligned { pc: u32, addr: u32 },
    #[error("unknown syscall {num} at pc 0x{pc:08x}")]
    BadSyscall { pc: u32, num: u32 },
    #[error("model is halted")]
    Halted,
}

#[derive(Clone, Debug)]
pub struct GoldenState {
    pub pc: u32,
    pub regs: [u32; 32],
    pub mem: Memory,
    pub halted: bool,
    pub exit_code: u32,
    pub output: Vec<u8>,
    input: Vec<u8>,
    input_pos: usize,
}

impl GoldenState {
    pub fn new(image: &ProgramImage, input: &InputScript) -> GoldenState {
        GoldenState {
            pc: image.entry,
            regs: [0; 32],
            mem: Memory::from_image(image),
            halted: false,
            exit_code: 0,
            output: Vec::new(),
            input: input.entries.iter().map(|&(_, b)| b).collect(),
            input_pos: 0,
        }
    }

    /// Executes one instruction and returns its commit record.
    pub fn exec_instr(&mut self) -> Result<CommitRecord, ExecError> {
        if self.halted {
            return Err(ExecError::Halted);
        }
        let pc = self.pc;
        let word = self.mem.read(pc);
        let i = decode(word);
        let r = |n: u8| self.regs[n as usize];
        let mut next = pc.wrapping_add(4);
        let mut wb: Option<(u8, u32)> = None;
        match i.op.class() {
            OpClass::Alu => {
                let v = match i.op {
                    Op::Lui => i.imm as u32,
                    Op::Auipc => pc.wrapping_add(i.imm as u32),
                    Op::Add | Op::Sub | Op::Slt | Op::And | Op::Or | Op::Xor | Op::Sll
                    | Op::Srl | Op::Sra => alu(i.op, r(i.rs1), r(i.rs2)),
                    _ => alu(i.op, r(i.rs1), i.imm as u32),
                };
                wb = Some((i.rd, v));
            }
            OpClass::Load => {
                let addr = r(i.rs1).wrapping_add(i.imm as u32);
                if addr % 4 != 0 {
                    self.halted = true;
                    return Err(ExecError::Misaligned { pc, addr });
                }
                wb = Some((i.rd, self.mem.read(addr)));
            }
            OpClass::Store => {
                let addr = r(i.rs1).wrapping_add(i.imm as u32);
                if addr % 4 != 0 {
                    self.halted = true;
                    return Err(ExecError::Misaligned { pc, addr });
                }
                self.mem.write(addr, r(i.rs2));
            }
            OpClass::Branch => {
                if branch_taken(i.op, r(i.rs1), r(i.rs2)) {
                    next = pc.wrapping_add(i.imm as u32);
                }
            }
            OpClass::Jump => {
                let target = if i.op == Op::Jal {
                    pc.wrapping_add(i.imm as u32)
                } else {
                    r(i.rs1).wrapping_add(i.imm as u32) & !1
                };
                wb = Some((i.rd, pc.wrapping_add(4)));
                next = target;
            }
            OpClass::System if i.op == Op::Ebreak => {
                self.halted = true;
            }
            OpClass::System => match r(17) {
                SYS_SENDCHAR => self.output.push(r(10) as u8),
                SYS_GETCHAR => {
                    let v = match self.input.get(self.input_pos) {
                        Some(&b) => {
                            self.input_pos += 1;
                            b as u32
                        }
                        None => EOF,
                    };
                    wb = Some((10, v));
                }
                SYS_EXIT | SYS_EXIT_RESET => {
                    self.halted = true;
                    self.exit_code = r(10);
                }
                num => {
                    self.halted = true;
                    return Err(ExecError::BadSyscall { pc, num });
                }
            },
            OpClass::Illegal => {
                self.halted = true;
                return Err(ExecError::Illegal { pc, word });
            }
        }
        let mut rec = CommitRecord { pc, instr: word, rd: 0, wdata: 0 };
        if let Some((rd, v)) = wb {
            if rd != 0 {
                self.regs[rd as usize] = v;
                rec.rd = rd;
                rec.wdata = v;
            }
        }
        self.pc = next;
        Ok(rec)
    }

    /// Runs to halt (or `max_commits`), returning the commit stream.
    pub fn run(&mut self, max_commits: usize) -> (Vec<CommitRecord>, Option<ExecError>) {
        let mut out = Vec::new();
        while !self.halted && out.len() < max_commits {
            match self.exec_instr() {
                Ok(r) => out.push(r),
                Err(e) => return (out, Some(e)),
            }
        }
        (out, None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceField {
    Pc,
    Instr,
    Rd,
    Wdata,
    /// The DUT stream ended while the golden model was still running.
    Truncated,
    /// The DUT committed after the golden model halted or faulted.
    Overrun,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub commit_index: u64,
    pub dut_record: Option<CommitRecord>,
    pub golden_record: Option<CommitRecord>,
    pub field: DivergenceField,
}

pub fn first_field_difference(dut: &CommitRecord, golden: &CommitRecord) -> Option<DivergenceField> {
    if dut.pc != golden.pc {
        Some(DivergenceField::Pc)
    } else if dut.instr != golden.instr {
        Some(DivergenceField::Instr)
    } else if dut.rd != golden.rd {
        Some(DivergenceField::Rd)
    } else if dut.wdata != golden.wdata {
        Some(DivergenceField::Wdata)
    } else {
        None
    }
}

/// Consumes a DUT commit stream one record at a time.
#[derive(Clone, Debug)]
pub struct Lockstep {
    golden: GoldenState,
    checked: u64,
    divergence: Option<Divergence>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum LockstepVerdict {
    Clean { total: u64 },
    Diverged(Divergence),
}

impl Lockstep {
    pub fn new(image: &ProgramImage, input: &InputScript) -> Lockstep {
        Lockstep { golden: GoldenState::new(image, input), checked: 0, divergence: None }
    }

    pub fn golden(&self) -> &GoldenState {
        &self.golden
    }

    pub fn divergence(&self) -> Option<&Divergence> {
        self.divergence.as_ref()
    }

    pub fn checked(&self) -> u64 {
        self.checked
    }

    /// Checks one record. Once diverged, further records are ignored.
    pub fn check(&mut self, dut: &CommitRecord) -> Result<(), Divergence> {
        if let Some(d) = &self.divergence {
            return Err(d.clone());
        }
        let index = self.checked;
        let golden = if self.golden.halted { None } else { self.golden.exec_instr().ok() };
        let field = match &golden {
            None => Some(DivergenceField::Overrun),
            Some(g) => first_field_difference(dut, g),
        };
        self.checked += 1;
        match field {
            None => Ok(()),
            Some(field) => {
                let d = Divergence { commit_index: index, dut_record: Some(*dut), golden_record: golden, field };
                self.divergence = Some(d.clone());
                Err(d)
            }
        }
    }

    /// Ends the stream: clean only if the golden model has halted too.
    pub fn finish(&mut self) -> LockstepVerdict {
        if let Some(d) = &self.divergence {
            return LockstepVerdict::Diverged(d.clone());
        }
        if !self.golden.halted {
            let golden = self.golden.clone().exec_instr().ok();
            let d = Divergence {
                commit_index: self.checked,
                dut_record: None,
                golden_record: golden,
                field: DivergenceField::Truncated,
            };
            self.divergence = Some(d.clone());
            return LockstepVerdict::Diverged(d);
        }
        LockstepVerdict::Clean { total: self.checked }
    }
}

/// Compares two complete streams without any incremental state.
pub fn lockstep(image: &ProgramImage, input: &InputScript, dut: &[CommitRecord]) -> LockstepVerdict {
    let mut ls = Lockstep::new(image, input);
    for r in dut {
        if ls.check(r).is_err() {
            break;
        }
    }
    ls.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;

    fn golden(src: &str) -> GoldenState {
        GoldenState::new(&assemble(src).unwrap(), &InputScript::default())
    }

    #[test]
    fn addi_record() {
        let mut g = golden("addi x1, x0, 10\n");
        let r = g.exec_instr().unwrap();
        assert_eq!((r.pc, r.rd, r.wdata), (0, 1, 10));
        assert_eq!(g.pc, 4);
    }

    #[test]
    fn taken_branch() {
        let mut g = golden(".org 0x100\nbeq x0, x0, 16\n");
        let r = g.exec_instr().unwrap();
        assert_eq!(g.pc, 0x110);
        assert_eq!((r.rd, r.wdata), (0, 0));
    }

    #[test]
    fn load_reads_image_word() {
        let img = assemble("la x2, data\nlw x1, 0(x2)\ndata: .word 0xCAFEF00D\n").unwrap();
        let mut g = GoldenState::new(&img, &InputScript::default());
        g.exec_instr().unwrap();
        g.exec_instr().unwrap();
        let r = g.exec_instr().unwrap();
        assert_eq!(r.wdata, img.word(12));
        assert_eq!(r.wdata, 0xCAFEF00D);
    }

    #[test]
    fn x0_is_never_written() {
        let mut g = golden("addi x0, x0, 5\n");
        let r = g.exec_instr().unwrap();
        assert_eq!(g.regs[0], 0);
        assert_eq!(r.rd, 0);
    }

    #[test]
    fn immediate_exit_is_one_commit() {
        // a7 is zero at reset, which selects exit.
        let img = assemble("ecall\n").unwrap();
        let mut g = GoldenState::new(&img, &InputScript::default());
        let (stream, err) = g.run(100);
        assert!(err.is_none());
        assert_eq!(stream.len(), 1);
        assert!(g.halted);
        let v = lockstep(&img, &InputScript::default(), &stream);
        assert_eq!(v, LockstepVerdict::Clean { total: 1 });
    }

    #[test]
    fn getchar_and_sendchar() {
        let src = "li a7, 2\necall\nli a7, 1\necall\nli a7, 2\necall\nli a7, 3\necall\n";
        let mut g = GoldenState::new(&assemble(src).unwrap(), &InputScript::immediate(b"Z"));
        g.run(100);
        assert_eq!(g.output, b"Z");
        assert_eq!(g.regs[10], EOF);
        assert_eq!(g.exit_code, EOF);
    }

    #[test]
    fn first_difference_is_reported() {
        let img = assemble("li x1, 3\nli x2, 1\nsub x3, x1, x2\nli a7, 3\necall\n").unwrap();
        let mut g = GoldenState::new(&img, &InputScript::default());
        let (mut stream, _) = g.run(100);
        stream[2].wdata = 4;
        match lockstep(&img, &InputScript::default(), &stream) {
            LockstepVerdict::Diverged(d) => {
                assert_eq!(d.commit_index, 2);
                assert_eq!(d.field, DivergenceField::Wdata);
            }
            v => panic!("{v:?}"),
        }
        stream.truncate(2);
        match lockstep(&img, &InputScript::default(), &stream) {
            LockstepVerdict::Diverged(d) => {
                assert_eq!((d.commit_index, d.field), (2, DivergenceField::Truncated))
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn illegal_halts() {
        let mut g = golden(".word 0xFFFFFFFF\n");
        assert!(matches!(g.exec_instr(), Err(ExecError::Illegal { .. })));
        assert!(g.halted);
    }
}
