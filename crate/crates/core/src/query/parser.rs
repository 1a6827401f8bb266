//! Recursive-descent parser.
//!
//! ```text
//! query       := transformed (("at")? "every" timesteps)?
//! transformed := or ("impute" impute | "cut" cut | "as" unit | "where" or)*
//! or          := and ("or" and)*
//! and         := not ("and" not)*
//! not         := "not" not | contains
//! contains    := cmp ("contains" cmp)*
//! cmp         := add (("=" | "!=" | "<" | "<=" | ">" | ">=") add)*
//! add         := mul (("+" | "-") mul)*
//! mul         := neg (("*" | "/") neg)*
//! neg         := "-" neg | pow
//! pow         := primary ("^" neg)?
//! primary     := NUMBER unit? | STRING | "#now" | FIELD | "(" query ")"
//!              | "[" FIELD op literal "]" | timefn "(" query ")"
//!              | aggfn neg window
//! window      := "from" add "to" add | "before" add | "after" add
//! timesteps   := NUMBER unit | "start" "(" query ")" | "end" "(" query ")" | primary
//! ```

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::ParseError;
use crate::value::DurationUnit;

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser { toks: &tokens, pos: 0 };
    let e = p.query()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parse a standalone timestep definition such as `every 4 hours` or
/// `at every end({Admission})`. The leading `at` and `every` are optional.
pub fn parse_timestep_def(src: &str) -> Result<TimestepDef, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser { toks: &tokens, pos: 0 };
    if p.peek().is_word("at") {
        p.bump();
        p.expect_word("every")?;
    } else if p.peek().is_word("every") {
        p.bump();
    }
    let def = p.timesteps()?;
    p.expect_eof()?;
    Ok(def)
}

pub(crate) const AGG_WORDS: [&str; 10] = ["mean", "min", "max", "sum", "any", "all", "first", "last", "exists", "count"];

pub(crate) fn is_agg_word(w: &str) -> bool {
    AGG_WORDS.contains(&w)
}

pub(crate) const RESERVED: [&str; 24] = [
    "and", "or", "not", "contains", "from", "to", "before", "after", "at", "every", "impute", "cut", "as", "where",
    "named", "quantiles", "distinct", "amount", "rate", "time", "starttime", "endtime", "start", "end",
];

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].start
    }

    fn bump(&mut self) -> &Token {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let found = self.peek().describe();
        let message = if *self.peek() == Tok::Eof {
            alloc::format!("unexpected end of input, expected {}", expected.join(" or "))
        } else {
            alloc::format!("unexpected {}, expected {}", found, expected.join(" or "))
        };
        ParseError::new(self.offset(), &message, expected.iter().map(|s| s.to_string()).collect())
    }

    fn expect_word(&mut self, w: &str) -> Result<(), ParseError> {
        if self.peek().is_word(w) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&alloc::format!("`{}`", w)]))
        }
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[label]))
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.error(&["operator", "`impute`", "`cut`", "`as`", "`where`", "`at every`", "end of input"]))
        }
    }

    fn query(&mut self) -> Result<Expr, ParseError> {
        let e = self.transformed()?;
        let at = self.peek().is_word("at");
        if at || self.peek().is_word("every") {
            self.bump();
            if at {
                self.expect_word("every")?;
            }
            let timesteps = self.timesteps()?;
            return Ok(Expr::AtEvery { operand: Box::new(e), timesteps });
        }
        Ok(e)
    }

    fn transformed(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.or()?;
        loop {
            let transform = if self.peek().is_word("impute") {
                self.bump();
                Transform::Impute(self.impute()?)
            } else if self.peek().is_word("cut") {
                self.bump();
                Transform::Cut(self.cut()?)
            } else if self.peek().is_word("as") {
                self.bump();
                Transform::As(self.unit()?)
            } else if self.peek().is_word("where") {
                self.bump();
                Transform::Where(Box::new(self.or()?))
            } else {
                break;
            };
            e = Expr::Transform { transform, operand: Box::new(e) };
        }
        Ok(e)
    }

    fn impute(&mut self) -> Result<ImputeStrategy, ParseError> {
        let strategy = match self.peek() {
            Tok::Word(w) if w == "mean" => ImputeStrategy::Mean,
            Tok::Word(w) if w == "median" => ImputeStrategy::Median,
            Tok::Word(w) if w == "mode" => ImputeStrategy::Mode,
            _ => {
                return self
                    .literal()
                    .map(ImputeStrategy::Constant)
                    .map_err(|_| self.error(&["`mean`", "`median`", "`mode`", "literal"]))
            }
        };
        self.bump();
        Ok(strategy)
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        match self.peek().clone() {
            Tok::Number(x) => {
                self.bump();
                Ok(Literal::Number(if negative { -x } else { x }))
            }
            Tok::Text(s) if !negative => {
                self.bump();
                Ok(Literal::Text(s))
            }
            _ => Err(self.error(&["number", "string"])),
        }
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        match self.literal()? {
            Literal::Number(x) => Ok(x),
            Literal::Text(_) => Err(ParseError::new(self.toks[self.pos - 1].start, "expected number", vec!["number".into()])),
        }
    }

    fn cut(&mut self) -> Result<CutSpec, ParseError> {
        let start = self.offset();
        let bins = match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                if !(self.peek().is_word("quantiles") || self.peek().is_word("quantile")) {
                    return Err(self.error(&["`quantiles`"]));
                }
                self.bump();
                if n < 1.0 || libm::floor(n) != n {
                    return Err(ParseError::new(start, "quantile count must be a positive integer", vec![]));
                }
                CutBins::Quantiles(n as usize)
            }
            Tok::LBracket => {
                self.bump();
                let mut edges = vec![self.signed_number()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    edges.push(self.signed_number()?);
                }
                self.expect(Tok::RBracket, "`]`")?;
                if edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(ParseError::new(start, "cut edges must be strictly increasing", vec![]));
                }
                CutBins::Edges(edges)
            }
            _ => return Err(self.error(&["number of quantiles", "list of edges"])),
        };
        let mut names = None;
        if self.peek().is_word("named") {
            let named_at = self.offset();
            self.bump();
            self.expect(Tok::LBracket, "`[`")?;
            let mut list = Vec::new();
            loop {
                match self.peek().clone() {
                    Tok::Text(s) => {
                        self.bump();
                        list.push(s);
                    }
                    _ => return Err(self.error(&["string"])),
                }
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::RBracket, "`]`")?;
            if list.len() != bins.bin_count() {
                return Err(ParseError::new(
                    named_at,
                    &alloc::format!("{} names given for {} bins", list.len(), bins.bin_count()),
                    vec![],
                ));
            }
            names = Some(list);
        }
        Ok(CutSpec { bins, names })
    }

    fn unit(&mut self) -> Result<DurationUnit, ParseError> {
        if let Tok::Word(w) = self.peek() {
            if let Some(u) = DurationUnit::from_word(w) {
                self.bump();
                return Ok(u);
            }
        }
        Err(self.error(&["time unit"]))
    }

    fn timesteps(&mut self) -> Result<TimestepDef, ParseError> {
        match self.peek().clone() {
            Tok::Number(value) => {
                let at = self.offset();
                self.bump();
                let unit = self.unit()?;
                if value <= 0.0 {
                    return Err(ParseError::new(at, "timestep period must be positive", vec![]));
                }
                Ok(TimestepDef::Periodic(Duration { value, unit }))
            }
            Tok::Word(w) if (w == "start" || w == "end") && *self.peek_at(1) == Tok::LParen => {
                self.bump();
                self.bump();
                let source = self.query()?;
                self.expect(Tok::RParen, "`)`")?;
                let edge = if w == "start" { AnchorEdge::Start } else { AnchorEdge::End };
                Ok(TimestepDef::Anchored { source: Box::new(source), edge })
            }
            Tok::Field(_) | Tok::LBracket | Tok::LParen => {
                let source = self.primary()?;
                Ok(TimestepDef::Anchored { source: Box::new(source), edge: AnchorEdge::Default })
            }
            _ => Err(self.error(&["period such as `4 hours`", "field", "`start(...)`", "`end(...)`"])),
        }
    }

    fn binary_chain(
        &mut self,
        next: fn(&mut Self) -> Result<Expr, ParseError>,
        op_of: fn(&Tok) -> Option<BinaryOp>,
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        while let Some(op) = op_of(self.peek()) {
            self.bump();
            let rhs = next(self)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(Self::and, |t| t.is_word("or").then_some(BinaryOp::Or))
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(Self::not, |t| t.is_word("and").then_some(BinaryOp::And))
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if self.peek().is_word("not") {
            self.bump();
            let operand = self.not()?;
            return Ok(Expr::unary(UnaryOp::Not, operand));
        }
        self.contains()
    }

    fn contains(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(Self::cmp, |t| t.is_word("contains").then_some(BinaryOp::Contains))
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(Self::add, comparison_op)
    }

    fn add(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(Self::mul, |t| match t {
            Tok::Plus => Some(BinaryOp::Add),
            Tok::Minus => Some(BinaryOp::Sub),
            _ => None,
        })
    }

    fn mul(&mut self) -> Result<Expr, ParseError> {
        self.binary_chain(Self::neg, |t| match t {
            Tok::Star => Some(BinaryOp::Mul),
            Tok::Slash => Some(BinaryOp::Div),
            _ => None,
        })
    }

    fn neg(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let operand = self.neg()?;
            return Ok(Expr::unary(UnaryOp::Neg, operand));
        }
        self.pow()
    }

    fn pow(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.neg()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        match self.peek().clone() {
            Tok::Number(value) => {
                self.bump();
                if let Tok::Word(w) = self.peek() {
                    if let Some(unit) = DurationUnit::from_word(w) {
                        self.bump();
                        return Ok(Expr::Duration(Duration { value, unit }));
                    }
                }
                Ok(Expr::Number(value))
            }
            Tok::Text(s) => {
                self.bump();
                Ok(Expr::Text(s))
            }
            Tok::Now => {
                self.bump();
                Ok(Expr::Now)
            }
            Tok::Field(name) => {
                self.bump();
                Ok(Expr::Field(FieldRef { name, filter: None }))
            }
            Tok::LParen => {
                self.bump();
                let e = self.query()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::LBracket => {
                self.bump();
                let name = match self.peek().clone() {
                    Tok::Field(name) => name,
                    _ => return Err(self.error(&["field"])),
                };
                self.bump();
                let op = match comparison_op(self.peek()) {
                    Some(op) => op,
                    None if self.peek().is_word("contains") => BinaryOp::Contains,
                    None => return Err(self.error(&["comparison", "`contains`"])),
                };
                self.bump();
                let value = self.literal()?;
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Expr::Field(FieldRef { name, filter: Some(InlineFilter { op, value }) }))
            }
            Tok::Word(w) => {
                if let Some(func) = time_fn(&w) {
                    if *self.peek_at(1) == Tok::LParen {
                        self.bump();
                        self.bump();
                        let arg = self.query()?;
                        self.expect(Tok::RParen, "`)`")?;
                        return Ok(Expr::TimeFn { func, arg: Box::new(arg) });
                    }
                }
                if is_agg_word(&w) {
                    return self.aggregation();
                }
                if RESERVED.contains(&w.as_str()) || DurationUnit::from_word(&w).is_some() {
                    return Err(self.error(&["expression"]));
                }
                Err(ParseError::new(
                    start,
                    &alloc::format!("unknown aggregation function `{}`", w),
                    AggFn::ALL.iter().map(|f| f.name().to_string()).collect(),
                ))
            }
            _ => Err(self.error(&["expression"])),
        }
    }

    fn aggregation(&mut self) -> Result<Expr, ParseError> {
        let word = match self.bump().tok.clone() {
            Tok::Word(w) => w,
            _ => unreachable!("aggregation starts with a word"),
        };
        let next_is = |p: &mut Self, w: &str| {
            if p.peek().is_word(w) {
                p.bump();
                true
            } else {
                false
            }
        };
        let func = match word.as_str() {
            "mean" if next_is(self, "rate") => AggFn::MeanRate,
            "mean" => AggFn::Mean,
            "min" => AggFn::Min,
            "max" => AggFn::Max,
            "sum" if next_is(self, "amount") => AggFn::SumAmount,
            "sum" if next_is(self, "rate") => AggFn::SumRate,
            "sum" => AggFn::Sum,
            "any" => AggFn::Any,
            "all" => AggFn::All,
            "first" => AggFn::First,
            "last" => AggFn::Last,
            "exists" => AggFn::Exists,
            "count" if next_is(self, "distinct") => AggFn::CountDistinct,
            "count" => AggFn::Count,
            _ => unreachable!("checked by is_agg_word"),
        };
        let operand = self.neg()?;
        let window = self.window()?;
        Ok(Expr::Aggregate(Box::new(Aggregation { func, operand, window })))
    }

    fn window(&mut self) -> Result<Window, ParseError> {
        if self.peek().is_word("from") {
            self.bump();
            let from = self.add()?;
            self.expect_word("to")?;
            let to = self.add()?;
            Ok(Window::Between { from, to })
        } else if self.peek().is_word("before") {
            self.bump();
            Ok(Window::Before(self.add()?))
        } else if self.peek().is_word("after") {
            self.bump();
            Ok(Window::After(self.add()?))
        } else {
            Err(self.error(&["`from`", "`before`", "`after`"]))
        }
    }
}

fn comparison_op(t: &Tok) -> Option<BinaryOp> {
    Some(match t {
        Tok::Eq => BinaryOp::Eq,
        Tok::Ne => BinaryOp::Ne,
        Tok::Lt => BinaryOp::Lt,
        Tok::Le => BinaryOp::Le,
        Tok::Gt => BinaryOp::Gt,
        Tok::Ge => BinaryOp::Ge,
        _ => return None,
    })
}

fn time_fn(w: &str) -> Option<TimeFn> {
    match w {
        "time" => Some(TimeFn::Time),
        "starttime" => Some(TimeFn::StartTime),
        "endtime" => Some(TimeFn::EndTime),
        _ => None,
    }
}
