//! The mini-ISA: a small PTX-flavoured instruction set, its textual
//! grammar, parsing and static validation.

mod parse;
mod print;
mod validate;

pub use parse::{parse_kernel, ParseError};
pub use print::print_kernel;
pub use validate::{validate_kernel, Diagnostic};

use serde::{Deserialize, Serialize};
use std::fmt;

pub const SIMT_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegClass {
    Int32,
    Int64,
    Float32,
    Pred,
}

impl RegClass {
    pub fn prefix(self) -> &'static str {
        match self {
            RegClass::Int32 => "%r",
            RegClass::Int64 => "%rd",
            RegClass::Float32 => "%f",
            RegClass::Pred => "%p",
        }
    }

    /// Register width in bits, as moved over buses.
    pub fn bits(self) -> u64 {
        match self {
            RegClass::Int32 | RegClass::Float32 => 32,
            RegClass::Int64 => 64,
            RegClass::Pred => 1,
        }
    }

    pub const ALL: [RegClass; 4] = [
        RegClass::Int32,
        RegClass::Int64,
        RegClass::Float32,
        RegClass::Pred,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegisterId {
    pub class: RegClass,
    pub index: u16,
}

impl RegisterId {
    pub fn new(class: RegClass, index: u16) -> Self {
        Self { class, index }
    }
}

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.class.prefix(), self.index)
    }
}

/// Read-only special registers provided by the subcore front-end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Special {
    TidX,
    NtidX,
    CtaidX,
    NctaidX,
}

impl Special {
    pub fn name(self) -> &'static str {
        match self {
            Special::TidX => "%tid.x",
            Special::NtidX => "%ntid.x",
            Special::CtaidX => "%ctaid.x",
            Special::NctaidX => "%nctaid.x",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Reg(RegisterId),
    Special(Special),
    ImmInt(i64),
    ImmFloat(f32),
}

impl Operand {
    pub fn reg(&self) -> Option<RegisterId> {
        match self {
            Operand::Reg(r) => Some(*r),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Special(s) => write!(f, "{}", s.name()),
            Operand::ImmInt(v) => write!(f, "{v}"),
            Operand::ImmFloat(v) => write!(f, "0f{:08X}", v.to_bits()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    S32,
    U32,
    F32,
    U64,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::S32 => "s32",
            DType::U32 => "u32",
            DType::F32 => "f32",
            DType::U64 => "u64",
        }
    }

    pub fn class(self) -> RegClass {
        match self {
            DType::S32 | DType::U32 => RegClass::Int32,
            DType::F32 => RegClass::Float32,
            DType::U64 => RegClass::Int64,
        }
    }

    pub fn bytes(self) -> u64 {
        match self {
            DType::U64 => 8,
            _ => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    Mad,
    Div,
    Min,
    Max,
    Mov,
    Cvt,
    Setp,
    Bra,
    LdGlobal,
    StGlobal,
    LdShared,
    StShared,
    BarSync,
    Exit,
}

impl Opcode {
    pub fn name(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Mad => "mad",
            Opcode::Div => "div",
            Opcode::Min => "min",
            Opcode::Max => "max",
            Opcode::Mov => "mov",
            Opcode::Cvt => "cvt",
            Opcode::Setp => "setp",
            Opcode::Bra => "bra",
            Opcode::LdGlobal => "ld.global",
            Opcode::StGlobal => "st.global",
            Opcode::LdShared => "ld.shared",
            Opcode::StShared => "st.shared",
            Opcode::BarSync => "bar.sync",
            Opcode::Exit => "exit",
        }
    }

    pub fn is_memory(self) -> bool {
        matches!(
            self,
            Opcode::LdGlobal | Opcode::StGlobal | Opcode::LdShared | Opcode::StShared
        )
    }

    pub fn is_global_mem(self) -> bool {
        matches!(self, Opcode::LdGlobal | Opcode::StGlobal)
    }

    pub fn is_shared_mem(self) -> bool {
        matches!(self, Opcode::LdShared | Opcode::StShared)
    }

    pub fn is_control(self) -> bool {
        matches!(self, Opcode::Bra | Opcode::BarSync | Opcode::Exit)
    }
}

/// Compiler-assigned execution location hint carried on an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LocHint {
    Near,
    Far,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub dtype: DType,
    /// Source type of a cvt (the suffix order is `cvt.<dst>.<src>`).
    pub cvt_src: Option<DType>,
    /// Comparison operator of a setp.
    pub cmp: Option<CmpOp>,
    pub dst: Option<RegisterId>,
    /// A special register written as the destination; always a validation
    /// error, kept so the validator can report it.
    pub dst_special: Option<Special>,
    pub srcs: Vec<Operand>,
    /// Byte offset inside a `[%reg+imm]` address operand.
    pub offset: i64,
    /// Predicate guard: `@%p` or `@!%p`.
    pub guard: Option<(RegisterId, bool)>,
    pub loc_hint: LocHint,
    /// Resolved target instruction index (bra only).
    pub label_target: Option<usize>,
}

impl Instruction {
    pub fn new(opcode: Opcode, dtype: DType) -> Self {
        Self {
            opcode,
            dtype,
            cvt_src: None,
            cmp: None,
            dst: None,
            dst_special: None,
            srcs: Vec::new(),
            offset: 0,
            guard: None,
            loc_hint: LocHint::None,
            label_target: None,
        }
    }

    /// All source registers, including the guard register.
    pub fn src_regs(&self) -> Vec<RegisterId> {
        let mut out: Vec<RegisterId> = self.srcs.iter().filter_map(Operand::reg).collect();
        if let Some((g, _)) = self.guard {
            out.push(g);
        }
        out
    }

    /// Address register of a ld/st, if any.
    pub fn addr_reg(&self) -> Option<RegisterId> {
        if self.opcode.is_memory() {
            self.srcs.first().and_then(Operand::reg)
        } else {
            None
        }
    }

    /// Data register of a store.
    pub fn store_data_reg(&self) -> Option<RegisterId> {
        match self.opcode {
            Opcode::StGlobal | Opcode::StShared => self.srcs.get(1).and_then(Operand::reg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub name: String,
    pub instructions: Vec<Instruction>,
    /// label name -> instruction index
    pub labels: std::collections::BTreeMap<String, usize>,
    pub smem_bytes: u32,
    /// (blocks, threads_per_block)
    pub grid: (u32, u32),
}

impl Kernel {
    pub fn warps_per_block(&self) -> u32 {
        self.grid.1 / SIMT_WIDTH as u32
    }

    /// Distinct architectural registers referenced by the kernel, in
    /// first-appearance program order.
    pub fn registers(&self) -> Vec<RegisterId> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for i in &self.instructions {
            for r in i.src_regs().into_iter().chain(i.dst) {
                if seen.insert(r) {
                    out.push(r);
                }
            }
        }
        out
    }
}
