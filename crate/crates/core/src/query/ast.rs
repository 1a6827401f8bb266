use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::value::DurationUnit;

/// Parsed query expression. Parenthesization is not represented; the
/// canonical formatter re-derives it from precedence.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Field(FieldRef),
    Number(f64),
    Text(String),
    Duration(Duration),
    Now,
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    TimeFn { func: TimeFn, arg: Box<Expr> },
    Aggregate(Box<Aggregation>),
    Transform { transform: Transform, operand: Box<Expr> },
    AtEvery { operand: Box<Expr>, timesteps: TimestepDef },
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn unary(op: UnaryOp, operand: Expr) -> Expr {
        Expr::Unary { op, operand: Box::new(operand) }
    }

    pub fn field(name: &str) -> Expr {
        Expr::Field(FieldRef { name: name.into(), filter: None })
    }

    /// True if any aggregation appears in the tree (outside `at every`
    /// clauses, which bring their own timesteps).
    pub fn needs_timesteps(&self) -> bool {
        match self {
            Expr::Aggregate(_) => true,
            Expr::AtEvery { .. } => false,
            Expr::Binary { lhs, rhs, .. } => lhs.needs_timesteps() || rhs.needs_timesteps(),
            Expr::Unary { operand, .. } => operand.needs_timesteps(),
            Expr::Transform { transform, operand } => {
                operand.needs_timesteps() || matches!(transform, Transform::Where(p) if p.needs_timesteps())
            }
            Expr::TimeFn { arg, .. } => arg.needs_timesteps(),
            _ => false,
        }
    }

    /// The `at every` clause at the root, if any.
    pub fn timesteps(&self) -> Option<&TimestepDef> {
        match self {
            Expr::AtEvery { timesteps, .. } => Some(timesteps),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldRef {
    pub name: String,
    /// `[{F} op literal]` keeps only the rows whose value satisfies the
    /// comparison.
    pub filter: Option<InlineFilter>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InlineFilter {
    pub op: BinaryOp,
    pub value: Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Duration {
    pub value: f64,
    pub unit: DurationUnit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Contains,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
            BinaryOp::Contains => "contains",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Pow)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeFn {
    Time,
    StartTime,
    EndTime,
}

impl TimeFn {
    pub fn name(self) -> &'static str {
        match self {
            TimeFn::Time => "time",
            TimeFn::StartTime => "starttime",
            TimeFn::EndTime => "endtime",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggFn {
    Mean,
    Min,
    Max,
    Sum,
    Any,
    All,
    First,
    Last,
    Exists,
    Count,
    CountDistinct,
    SumAmount,
    SumRate,
    MeanRate,
}

impl AggFn {
    pub const ALL: [AggFn; 14] = [
        AggFn::Mean,
        AggFn::Min,
        AggFn::Max,
        AggFn::Sum,
        AggFn::Any,
        AggFn::All,
        AggFn::First,
        AggFn::Last,
        AggFn::Exists,
        AggFn::Count,
        AggFn::CountDistinct,
        AggFn::SumAmount,
        AggFn::SumRate,
        AggFn::MeanRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Mean => "mean",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::Sum => "sum",
            AggFn::Any => "any",
            AggFn::All => "all",
            AggFn::First => "first",
            AggFn::Last => "last",
            AggFn::Exists => "exists",
            AggFn::Count => "count",
            AggFn::CountDistinct => "count distinct",
            AggFn::SumAmount => "sum amount",
            AggFn::SumRate => "sum rate",
            AggFn::MeanRate => "mean rate",
        }
    }

    /// Functions that only accept numeric input.
    pub fn numeric_only(self) -> bool {
        matches!(
            self,
            AggFn::Mean | AggFn::Min | AggFn::Max | AggFn::Sum | AggFn::SumAmount | AggFn::SumRate | AggFn::MeanRate
        )
    }

    /// Amount/rate functions distribute interval values over time.
    pub fn is_interval_weighted(self) -> bool {
        matches!(self, AggFn::SumAmount | AggFn::SumRate | AggFn::MeanRate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregation {
    pub func: AggFn,
    pub operand: Expr,
    pub window: Window,
}

/// Aggregation bounds. `Between` is `(from, to]`, `Before` is `(-inf, t]`
/// and `After` is `(t, +inf)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Window {
    Between { from: Expr, to: Expr },
    Before(Expr),
    After(Expr),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimestepDef {
    Periodic(Duration),
    Anchored { source: Box<Expr>, edge: AnchorEdge },
}

/// Which instant of an anchoring series produces a timestep. `Default`
/// means event times, or interval end times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorEdge {
    Default,
    Start,
    End,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Impute(ImputeStrategy),
    Cut(CutSpec),
    As(crate::value::DurationUnit),
    Where(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ImputeStrategy {
    Constant(Literal),
    Mean,
    Median,
    Mode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutSpec {
    pub bins: CutBins,
    pub names: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CutBins {
    Quantiles(usize),
    /// Interior edges; `k` edges make `k + 1` bins.
    Edges(Vec<f64>),
}

impl CutBins {
    pub fn bin_count(&self) -> usize {
        match self {
            CutBins::Quantiles(n) => *n,
            CutBins::Edges(e) => e.len() + 1,
        }
    }
}
