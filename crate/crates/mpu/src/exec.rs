//! Lane-level functional semantics of the ALU operations. Both the
//! timing simulator and the reference interpreter evaluate instructions
//! through these functions, so their results agree bit for bit.

use crate::isa::{CmpOp, DType, Opcode};

/// Raw lane value: 32-bit classes live in the low 32 bits, u64 uses all
/// 64, predicates are 0/1.
pub type LaneVal = u64;

pub fn f32_bits(v: LaneVal) -> f32 {
    f32::from_bits(v as u32)
}

pub fn bits_f32(v: f32) -> LaneVal {
    v.to_bits() as u64
}

/// Evaluate an ALU opcode over lane values. `c` is only used by mad.
pub fn eval_alu(op: Opcode, dtype: DType, a: LaneVal, b: LaneVal, c: LaneVal) -> LaneVal {
    match dtype {
        DType::F32 => {
            let (x, y, z) = (f32_bits(a), f32_bits(b), f32_bits(c));
            let r = match op {
                Opcode::Add => x + y,
                Opcode::Sub => x - y,
                Opcode::Mul => x * y,
                Opcode::Mad => x * y + z,
                Opcode::Div => x / y,
                Opcode::Min => x.min(y),
                Opcode::Max => x.max(y),
                Opcode::Mov => x,
                _ => unreachable!("not an f32 ALU op: {op:?}"),
            };
            bits_f32(r)
        }
        DType::S32 => {
            let (x, y, z) = (a as u32 as i32, b as u32 as i32, c as u32 as i32);
            let r = match op {
                Opcode::Add => x.wrapping_add(y),
                Opcode::Sub => x.wrapping_sub(y),
                Opcode::Mul => x.wrapping_mul(y),
                Opcode::Mad => x.wrapping_mul(y).wrapping_add(z),
                Opcode::Div => {
                    if y == 0 {
                        -1
                    } else {
                        x.wrapping_div(y)
                    }
                }
                Opcode::Min => x.min(y),
                Opcode::Max => x.max(y),
                Opcode::Mov => x,
                _ => unreachable!("not an s32 ALU op: {op:?}"),
            };
            r as u32 as u64
        }
        DType::U32 => {
            let (x, y, z) = (a as u32, b as u32, c as u32);
            let r = match op {
                Opcode::Add => x.wrapping_add(y),
                Opcode::Sub => x.wrapping_sub(y),
                Opcode::Mul => x.wrapping_mul(y),
                Opcode::Mad => x.wrapping_mul(y).wrapping_add(z),
                Opcode::Div => {
                    if y == 0 {
                        u32::MAX
                    } else {
                        x / y
                    }
                }
                Opcode::Min => x.min(y),
                Opcode::Max => x.max(y),
                Opcode::Mov => x,
                _ => unreachable!("not a u32 ALU op: {op:?}"),
            };
            r as u64
        }
        DType::U64 => match op {
            Opcode::Add => a.wrapping_add(b),
            Opcode::Mul => a.wrapping_mul(b),
            Opcode::Mov => a,
            _ => unreachable!("not a u64 ALU op: {op:?}"),
        },
    }
}

pub fn eval_cmp(cmp: CmpOp, dtype: DType, a: LaneVal, b: LaneVal) -> bool {
    match dtype {
        DType::F32 => {
            let (x, y) = (f32_bits(a), f32_bits(b));
            match cmp {
                CmpOp::Eq => x == y,
                CmpOp::Ne => x != y,
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
            }
        }
        DType::S32 => {
            let (x, y) = (a as u32 as i32, b as u32 as i32);
            cmp_ord(cmp, x.cmp(&y))
        }
        DType::U32 => cmp_ord(cmp, (a as u32).cmp(&(b as u32))),
        DType::U64 => cmp_ord(cmp, a.cmp(&b)),
    }
}

fn cmp_ord(cmp: CmpOp, ord: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match cmp {
        CmpOp::Eq => ord == Equal,
        CmpOp::Ne => ord != Equal,
        CmpOp::Lt => ord == Less,
        CmpOp::Le => ord != Greater,
        CmpOp::Gt => ord == Greater,
        CmpOp::Ge => ord != Less,
    }
}

/// `cvt.<to>.<from>`
pub fn eval_cvt(to: DType, from: DType, v: LaneVal) -> LaneVal {
    match (to, from) {
        (DType::U64, DType::U32) => v as u32 as u64,
        (DType::U64, DType::S32) => v as u32 as i32 as i64 as u64,
        (DType::S32, DType::U64) | (DType::U32, DType::U64) => v as u32 as u64,
        (DType::F32, DType::S32) => bits_f32(v as u32 as i32 as f32),
        (DType::F32, DType::U32) => bits_f32(v as u32 as f32),
        (DType::S32, DType::F32) => f32_bits(v) as i32 as u32 as u64,
        (DType::U32, DType::F32) => {
            let f = f32_bits(v);
            if f <= 0.0 {
                0
            } else {
                f as u32 as u64
            }
        }
        (a, b) if a == b => v,
        (a, b) => unreachable!("unsupported cvt.{}.{}", a.name(), b.name()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s32_wraps() {
        let r = eval_alu(Opcode::Add, DType::S32, i32::MAX as u32 as u64, 1, 0);
        assert_eq!(r as u32 as i32, i32::MIN);
    }

    #[test]
    fn f32_mad_is_mul_then_add() {
        let a = bits_f32(3.0);
        let b = bits_f32(7.0);
        let c = bits_f32(0.5);
        assert_eq!(f32_bits(eval_alu(Opcode::Mad, DType::F32, a, b, c)), 21.5);
    }

    #[test]
    fn cvt_sign_extends_s32() {
        assert_eq!(eval_cvt(DType::U64, DType::S32, (-4i32) as u32 as u64), (-4i64) as u64);
        assert_eq!(eval_cvt(DType::U64, DType::U32, 0xFFFF_FFFF), 0xFFFF_FFFF);
    }
}
