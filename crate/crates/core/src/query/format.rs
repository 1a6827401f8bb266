//! Canonical query text: single spacing, lowercase keywords, singular units
//! for a value of one, and the minimal parenthesization that re-parses to the
//! same tree.

use alloc::string::String;

use super::ast::*;
use crate::value::{format_number, DurationUnit};

const AT_EVERY: i8 = -1;
const TRANSFORM: i8 = 0;
const OR: i8 = 1;
const AND: i8 = 2;
const NOT: i8 = 3;
const CONTAINS: i8 = 4;
const CMP: i8 = 5;
const ADD: i8 = 6;
const MUL: i8 = 7;
const NEG: i8 = 8;
const POW: i8 = 9;
const ATOM: i8 = 10;

pub fn format_canonical(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, AT_EVERY);
    out
}

pub fn format_timestep_def(def: &TimestepDef) -> String {
    let mut out = String::from("every ");
    write_timesteps(&mut out, def);
    out
}

fn binary_prec(op: BinaryOp) -> i8 {
    match op {
        BinaryOp::Or => OR,
        BinaryOp::And => AND,
        BinaryOp::Contains => CONTAINS,
        BinaryOp::Add | BinaryOp::Sub => ADD,
        BinaryOp::Mul | BinaryOp::Div => MUL,
        BinaryOp::Pow => POW,
        _ => CMP,
    }
}

fn prec(e: &Expr) -> i8 {
    match e {
        Expr::AtEvery { .. } => AT_EVERY,
        Expr::Transform { .. } => TRANSFORM,
        Expr::Binary { op, .. } => binary_prec(*op),
        Expr::Unary { op: UnaryOp::Not, .. } => NOT,
        Expr::Unary { op: UnaryOp::Neg, .. } => NEG,
        _ => ATOM,
    }
}

fn write_expr(out: &mut String, e: &Expr, min: i8) {
    // An aggregation's trailing bound would swallow a following operator,
    // so aggregations are bracketed whenever they sit inside an operator.
    let needs_parens = prec(e) < min || (matches!(e, Expr::Aggregate(_)) && min > TRANSFORM);
    if needs_parens {
        out.push('(');
        write_expr(out, e, AT_EVERY);
        out.push(')');
        return;
    }
    match e {
        Expr::Field(f) => write_field(out, f),
        Expr::Number(x) => out.push_str(&format_number(*x)),
        Expr::Text(s) => write_string(out, s),
        Expr::Duration(d) => write_duration(out, d),
        Expr::Now => out.push_str("#now"),
        Expr::Binary { op, lhs, rhs } => {
            let p = binary_prec(*op);
            if *op == BinaryOp::Pow {
                write_expr(out, lhs, ATOM);
                out.push_str(" ^ ");
                write_expr(out, rhs, NEG);
            } else {
                write_expr(out, lhs, p);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                write_expr(out, rhs, p + 1);
            }
        }
        Expr::Unary { op: UnaryOp::Not, operand } => {
            out.push_str("not ");
            write_expr(out, operand, NOT);
        }
        Expr::Unary { op: UnaryOp::Neg, operand } => {
            out.push('-');
            write_expr(out, operand, NEG);
        }
        Expr::TimeFn { func, arg } => {
            out.push_str(func.name());
            out.push('(');
            write_expr(out, arg, AT_EVERY);
            out.push(')');
        }
        Expr::Aggregate(agg) => {
            out.push_str(agg.func.name());
            out.push(' ');
            write_expr(out, &agg.operand, NEG);
            match &agg.window {
                Window::Between { from, to } => {
                    out.push_str(" from ");
                    write_expr(out, from, ADD);
                    out.push_str(" to ");
                    write_expr(out, to, ADD);
                }
                Window::Before(t) => {
                    out.push_str(" before ");
                    write_expr(out, t, ADD);
                }
                Window::After(t) => {
                    out.push_str(" after ");
                    write_expr(out, t, ADD);
                }
            }
        }
        Expr::Transform { transform, operand } => {
            write_expr(out, operand, TRANSFORM);
            match transform {
                Transform::Impute(s) => {
                    out.push_str(" impute ");
                    match s {
                        ImputeStrategy::Mean => out.push_str("mean"),
                        ImputeStrategy::Median => out.push_str("median"),
                        ImputeStrategy::Mode => out.push_str("mode"),
                        ImputeStrategy::Constant(lit) => write_literal(out, lit),
                    }
                }
                Transform::Cut(spec) => {
                    out.push_str(" cut ");
                    match &spec.bins {
                        CutBins::Quantiles(n) => {
                            out.push_str(&alloc::format!("{} quantiles", n));
                        }
                        CutBins::Edges(edges) => {
                            out.push('[');
                            for (i, x) in edges.iter().enumerate() {
                                if i > 0 {
                                    out.push_str(", ");
                                }
                                out.push_str(&format_number(*x));
                            }
                            out.push(']');
                        }
                    }
                    if let Some(names) = &spec.names {
                        out.push_str(" named [");
                        for (i, n) in names.iter().enumerate() {
                            if i > 0 {
                                out.push_str(", ");
                            }
                            write_string(out, n);
                        }
                        out.push(']');
                    }
                }
                Transform::As(unit) => {
                    out.push_str(" as ");
                    out.push_str(unit.plural());
                }
                Transform::Where(pred) => {
                    out.push_str(" where ");
                    write_expr(out, pred, OR);
                }
            }
        }
        Expr::AtEvery { operand, timesteps } => {
            write_expr(out, operand, TRANSFORM);
            out.push_str(" at every ");
            write_timesteps(out, timesteps);
        }
    }
}

fn write_timesteps(out: &mut String, def: &TimestepDef) {
    match def {
        TimestepDef::Periodic(d) => write_duration(out, d),
        TimestepDef::Anchored { source, edge } => match edge {
            AnchorEdge::Default => match &**source {
                Expr::Field(f) => write_field(out, f),
                other => {
                    out.push('(');
                    write_expr(out, other, AT_EVERY);
                    out.push(')');
                }
            },
            AnchorEdge::Start | AnchorEdge::End => {
                out.push_str(if *edge == AnchorEdge::Start { "start(" } else { "end(" });
                write_expr(out, source, AT_EVERY);
                out.push(')');
            }
        },
    }
}

fn write_field(out: &mut String, f: &FieldRef) {
    match &f.filter {
        None => {
            out.push('{');
            out.push_str(&f.name);
            out.push('}');
        }
        Some(filter) => {
            out.push_str("[{");
            out.push_str(&f.name);
            out.push_str("} ");
            out.push_str(filter.op.symbol());
            out.push(' ');
            write_literal(out, &filter.value);
            out.push(']');
        }
    }
}

fn write_literal(out: &mut String, lit: &Literal) {
    match lit {
        Literal::Number(x) => out.push_str(&format_number(*x)),
        Literal::Text(s) => write_string(out, s),
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_duration(out: &mut String, d: &Duration) {
    out.push_str(&format_number(d.value));
    out.push(' ');
    out.push_str(unit_word(d.unit, d.value));
}

fn unit_word(unit: DurationUnit, value: f64) -> &'static str {
    if value == 1.0 {
        unit.singular()
    } else {
        unit.plural()
    }
}
