//! Scalar operators with three-valued logic.

use core::cmp::Ordering;

use super::{type_error, EvalError};
use crate::query::ast::{BinaryOp, UnaryOp};
use crate::value::{DType, Scalar};

fn numeric(d: DType) -> bool {
    matches!(d, DType::Number | DType::Boolean)
}

pub(crate) fn binary_dtype(op: BinaryOp, l: DType, r: DType) -> Result<DType, EvalError> {
    let fail = || type_error(alloc::format!("`{}` cannot combine {} and {}", op.symbol(), l, r));
    match op {
        _ if op.is_arithmetic() => {
            if numeric(l) && numeric(r) {
                Ok(DType::Number)
            } else {
                Err(fail())
            }
        }
        _ if op.is_comparison() => {
            if (numeric(l) && numeric(r)) || (l == DType::Category && r == DType::Category) {
                Ok(DType::Boolean)
            } else {
                Err(fail())
            }
        }
        BinaryOp::Contains => {
            if l == DType::Category && r == DType::Category {
                Ok(DType::Boolean)
            } else {
                Err(fail())
            }
        }
        _ => {
            if l == DType::Boolean && r == DType::Boolean {
                Ok(DType::Boolean)
            } else {
                Err(fail())
            }
        }
    }
}

pub(crate) fn unary_dtype(op: UnaryOp, d: DType) -> Result<DType, EvalError> {
    match op {
        UnaryOp::Neg if numeric(d) => Ok(DType::Number),
        UnaryOp::Not if d == DType::Boolean => Ok(DType::Boolean),
        UnaryOp::Neg => Err(type_error(alloc::format!("cannot negate {}", d))),
        UnaryOp::Not => Err(type_error(alloc::format!("`not` needs a boolean, got {}", d))),
    }
}

fn finite(x: f64) -> Option<Scalar> {
    x.is_finite().then_some(Scalar::Number(x))
}

pub(crate) fn arith(op: BinaryOp, a: f64, b: f64) -> Option<f64> {
    let x = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div if b == 0.0 => return None,
        BinaryOp::Div => a / b,
        BinaryOp::Pow => libm::pow(a, b),
        _ => return None,
    };
    x.is_finite().then_some(x)
}

/// Comparison of two present values of compatible dtypes.
pub(crate) fn compare(op: BinaryOp, a: &Scalar, b: &Scalar) -> Option<bool> {
    let ord = match (a, b) {
        (Scalar::Text(x), Scalar::Text(y)) => x.cmp(y),
        _ => a.as_f64()?.partial_cmp(&b.as_f64()?)?,
    };
    Some(match op {
        BinaryOp::Eq => ord == Ordering::Equal,
        BinaryOp::Ne => ord != Ordering::Equal,
        BinaryOp::Lt => ord == Ordering::Less,
        BinaryOp::Le => ord != Ordering::Greater,
        BinaryOp::Gt => ord == Ordering::Greater,
        BinaryOp::Ge => ord != Ordering::Less,
        BinaryOp::Contains => return contains(a, b),
        _ => return None,
    })
}

/// Case-insensitive substring test.
pub(crate) fn contains(a: &Scalar, b: &Scalar) -> Option<bool> {
    let (Scalar::Text(hay), Scalar::Text(needle)) = (a, b) else { return None };
    Some(hay.to_lowercase().contains(&needle.to_lowercase()))
}

pub(crate) fn apply_binary(op: BinaryOp, a: Option<&Scalar>, b: Option<&Scalar>) -> Option<Scalar> {
    match op {
        BinaryOp::And => {
            let (x, y) = (a.and_then(Scalar::as_bool), b.and_then(Scalar::as_bool));
            match (x, y) {
                (Some(false), _) | (_, Some(false)) => Some(Scalar::Boolean(false)),
                (Some(true), Some(true)) => Some(Scalar::Boolean(true)),
                _ => None,
            }
        }
        BinaryOp::Or => {
            let (x, y) = (a.and_then(Scalar::as_bool), b.and_then(Scalar::as_bool));
            match (x, y) {
                (Some(true), _) | (_, Some(true)) => Some(Scalar::Boolean(true)),
                (Some(false), Some(false)) => Some(Scalar::Boolean(false)),
                _ => None,
            }
        }
        _ => {
            let (a, b) = (a?, b?);
            if op.is_arithmetic() {
                arith(op, a.as_f64()?, b.as_f64()?).and_then(finite)
            } else if op == BinaryOp::Contains {
                contains(a, b).map(Scalar::Boolean)
            } else {
                compare(op, a, b).map(Scalar::Boolean)
            }
        }
    }
}

pub(crate) fn apply_unary(op: UnaryOp, a: Option<&Scalar>) -> Option<Scalar> {
    let a = a?;
    match op {
        UnaryOp::Neg => finite(-a.as_f64()?),
        UnaryOp::Not => Some(Scalar::Boolean(!a.as_bool()?)),
    }
}
