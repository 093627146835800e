//! Architectural state shared by the pipeline and the golden model.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::image::ProgramImage;

/// One architectural commit. `rd == 0` means no register was written, in
/// which case `wdata` is 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitRecord {
    pub pc: u32,
    pub instr: u32,
    pub rd: u8,
    pub wdata: u32,
}

const WRITES_FLAG: u32 = 1 << 8;

impl CommitRecord {
    /// FIFO lane words: `{pc, instr, rd|flags, wdata}`.
    pub fn pack(&self) -> [u32; 4] {
        let flags = if self.rd != 0 { WRITES_FLAG } else { 0 };
        [self.pc, self.instr, self.rd as u32 | flags, self.wdata]
    }

    pub fn unpack(words: [u32; 4]) -> CommitRecord {
        CommitRecord { pc: words[0], instr: words[1], rd: (words[2] & 0x1f) as u8, wdata: words[3] }
    }
}

/// Sparse word-addressed memory. Byte addresses are divided by four.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Memory {
    words: HashMap<u32, u32>,
}

impl Memory {
    pub fn from_image(image: &ProgramImage) -> Memory {
        Memory { words: image.words.iter().map(|(&a, &w)| (a >> 2, w)).collect() }
    }

    pub fn read(&self, byte_addr: u32) -> u32 {
        self.words.get(&(byte_addr >> 2)).copied().unwrap_or(0)
    }

    pub fn write(&mut self, byte_addr: u32, value: u32) {
        self.words.insert(byte_addr >> 2, value);
    }
}

/// Syscall numbers passed in a7.
pub const SYS_SENDCHAR: u32 = 1;
pub const SYS_GETCHAR: u32 = 2;
pub const SYS_EXIT: u32 = 3;
/// a7 is zero out of reset, so a bare `ecall` also exits.
pub const SYS_EXIT_RESET: u32 = 0;
/// getchar result once the input script is exhausted.
pub const EOF: u32 = 0xFFFF_FFFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Syscall {
    SendChar(u8),
    GetChar,
    Exit(u32),
}

/// Bytes offered to `getchar`, each available from a given DUT cycle.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputScript {
    pub entries: Vec<(u64, u8)>,
}

impl InputScript {
    /// All bytes available from reset.
    pub fn immediate(bytes: &[u8]) -> InputScript {
        InputScript { entries: bytes.iter().map(|&b| (0, b)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn commit_packing_round_trips(pc in any::<u32>(), instr in any::<u32>(), rd in 0u8..32, wdata in any::<u32>()) {
            let r = CommitRecord { pc, instr, rd, wdata };
            prop_assert_eq!(CommitRecord::unpack(r.pack()), r);
        }
    }

    #[test]
    fn memory_is_word_granular() {
        let mut m = Memory::default();
        m.write(0x100, 7);
        assert_eq!(m.read(0x100), 7);
        assert_eq!(m.read(0x104), 0);
    }
}
