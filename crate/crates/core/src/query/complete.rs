//! Best-effort autocomplete. The prefix before the cursor is lexed and walked
//! with a small state machine that tracks whether an expression or an
//! operator comes next, and which aggregations still lack a window.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ast::AggFn;
use super::lexer::{lex_partial, Tok};
use super::parser::is_agg_word;
use crate::store::FieldInfo;
use crate::value::DurationUnit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuggestionKind {
    Field,
    Function,
    Keyword,
    Variable,
    Unit,
    Template,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub label: String,
    pub kind: SuggestionKind,
    pub insert_text: String,
    /// Byte range of the source replaced by `insert_text`.
    pub span: (usize, usize),
}

/// Fill-in templates: (label, text). Placeholders are written `<name>`.
pub const TEMPLATES: [(&str, &str); 5] = [
    ("windowed mean", "mean {<field>} from #now - <duration> to #now"),
    ("most recent value", "last {<field>} before #now"),
    ("occurred in window", "exists {<field>} from #now - <duration> to #now impute 0"),
    ("future outcome", "exists {<field>} from #now to #now + <duration>"),
    ("age at timestep", "(#now - {<birth field>}) as years"),
];

const AFTER_EXPR_KEYWORDS: [&str; 8] = ["at every", "impute", "cut", "as", "where", "and", "or", "contains"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    ExpectExpr,
    AfterExpr,
    ImputeArg,
    CutArg,
    UnitArg,
    TimestepArg,
    ExpectEvery,
}

#[derive(Default, Clone, Copy)]
struct Frame {
    pending_aggs: usize,
    pending_from: usize,
    bracket: bool,
}

pub fn suggest_completions(src: &str, cursor: usize, catalog: &[FieldInfo]) -> Vec<Suggestion> {
    let mut cursor = cursor.min(src.len());
    while !src.is_char_boundary(cursor) {
        cursor -= 1;
    }
    let prefix = &src[..cursor];
    let lexed = lex_partial(prefix);

    if let Some(open) = lexed.open_field {
        let partial = prefix[open + 1..].trim_start();
        return field_suggestions(catalog, partial, (open, cursor));
    }

    let mut tokens: Vec<Tok> = lexed.tokens.iter().map(|t| t.tok.clone()).collect();
    if tokens.last() == Some(&Tok::Eof) {
        tokens.pop();
    }
    let (partial, partial_start) = match &lexed.error {
        Some(err) if prefix[err.offset..].starts_with('#') => (&prefix[err.offset..], err.offset),
        Some(_) => return Vec::new(),
        None => match lexed.tokens.iter().rev().find(|t| t.tok != Tok::Eof) {
            Some(t) if t.end == cursor && matches!(t.tok, Tok::Word(_) | Tok::Now) => {
                tokens.pop();
                (&prefix[t.start..], t.start)
            }
            _ => ("", cursor),
        },
    };

    let (state, frame, at_start, top_level) = walk(&tokens);
    let span = (partial_start, cursor);
    let mut out = Vec::new();
    match state {
        State::ExpectExpr => {
            for f in AggFn::ALL {
                push(&mut out, f.name(), SuggestionKind::Function, &alloc::format!("{} ", f.name()), span);
            }
            push(&mut out, "#now", SuggestionKind::Variable, "#now", span);
            for f in ["time", "starttime", "endtime"] {
                push(&mut out, f, SuggestionKind::Function, &alloc::format!("{}(", f), span);
            }
            push(&mut out, "not", SuggestionKind::Keyword, "not ", span);
            if at_start {
                for (label, text) in TEMPLATES {
                    push(&mut out, label, SuggestionKind::Template, text, span);
                }
            }
            out.extend(field_suggestions(catalog, "", span));
        }
        State::AfterExpr => {
            if frame.pending_from > 0 {
                push(&mut out, "to", SuggestionKind::Keyword, "to ", span);
            } else if frame.pending_aggs > 0 {
                for w in ["from", "before", "after"] {
                    push(&mut out, w, SuggestionKind::Keyword, &alloc::format!("{} ", w), span);
                }
            }
            for w in AFTER_EXPR_KEYWORDS {
                if w == "at every" && !top_level {
                    continue;
                }
                push(&mut out, w, SuggestionKind::Keyword, &alloc::format!("{} ", w), span);
            }
            if frame.bracket {
                push(&mut out, "]", SuggestionKind::Keyword, "]", span);
            }
        }
        State::ImputeArg => {
            for w in ["mean", "median", "mode", "0"] {
                push(&mut out, w, SuggestionKind::Keyword, w, span);
            }
        }
        State::CutArg => {
            push(&mut out, "3 quantiles", SuggestionKind::Keyword, "3 quantiles", span);
            push(&mut out, "named", SuggestionKind::Keyword, "named [", span);
        }
        State::UnitArg => {
            for u in DurationUnit::ALL {
                push(&mut out, u.plural(), SuggestionKind::Unit, u.plural(), span);
            }
        }
        State::ExpectEvery => push(&mut out, "every", SuggestionKind::Keyword, "every ", span),
        State::TimestepArg => {
            push(&mut out, "4 hours", SuggestionKind::Template, "4 hours", span);
            push(&mut out, "start", SuggestionKind::Function, "start(", span);
            push(&mut out, "end", SuggestionKind::Function, "end(", span);
            out.extend(field_suggestions(catalog, "", span));
        }
    }
    let lower = partial.to_lowercase();
    out.retain(|s| s.label.to_lowercase().starts_with(&lower) || s.insert_text.to_lowercase().starts_with(&lower));
    out
}

fn push(out: &mut Vec<Suggestion>, label: &str, kind: SuggestionKind, insert: &str, span: (usize, usize)) {
    out.push(Suggestion { label: label.to_string(), kind, insert_text: insert.to_string(), span });
}

fn field_suggestions(catalog: &[FieldInfo], partial: &str, span: (usize, usize)) -> Vec<Suggestion> {
    let lower = partial.to_lowercase();
    catalog
        .iter()
        .filter(|f| f.name.to_lowercase().starts_with(&lower))
        .map(|f| Suggestion {
            label: f.name.clone(),
            kind: SuggestionKind::Field,
            insert_text: alloc::format!("{{{}}}", f.name),
            span,
        })
        .collect()
}

/// Returns the final state, the innermost frame, whether nothing has been
/// typed yet, and whether the cursor is outside all brackets.
fn walk(tokens: &[Tok]) -> (State, Frame, bool, bool) {
    let mut frames = vec![Frame::default()];
    let mut state = State::ExpectExpr;
    for tok in tokens {
        let frame = frames.last_mut().expect("root frame");
        state = match (state, tok) {
            (State::CutArg, Tok::Word(w)) if w == "quantiles" || w == "quantile" => State::AfterExpr,
            (State::CutArg, Tok::RBracket) => State::AfterExpr,
            (State::CutArg, Tok::Word(w)) if w == "named" => State::CutArg,
            (State::CutArg, _) => State::CutArg,
            (State::AfterExpr, Tok::Word(w)) if w == "named" => State::CutArg,
            (State::ImputeArg, Tok::Minus) => State::ImputeArg,
            (State::ImputeArg, _) => State::AfterExpr,
            (State::UnitArg, _) => State::AfterExpr,
            (State::ExpectEvery, _) => State::TimestepArg,
            (State::TimestepArg, Tok::Number(_)) => State::UnitArg,
            (State::TimestepArg, Tok::Word(w)) if w == "start" || w == "end" => State::ExpectExpr,
            (State::TimestepArg, Tok::Field(_)) => State::AfterExpr,
            (_, Tok::LParen) => {
                frames.push(Frame::default());
                State::ExpectExpr
            }
            (_, Tok::LBracket) => {
                frames.push(Frame { bracket: true, ..Frame::default() });
                State::ExpectExpr
            }
            (_, Tok::RParen) | (_, Tok::RBracket) => {
                if frames.len() > 1 {
                    frames.pop();
                }
                State::AfterExpr
            }
            (State::AfterExpr, Tok::Word(w)) if DurationUnit::from_word(w).is_some() => State::AfterExpr,
            (_, Tok::Word(w)) => match w.as_str() {
                "from" => {
                    frame.pending_from += 1;
                    State::ExpectExpr
                }
                "to" => {
                    frame.pending_from = frame.pending_from.saturating_sub(1);
                    frame.pending_aggs = frame.pending_aggs.saturating_sub(1);
                    State::ExpectExpr
                }
                "before" | "after" => {
                    frame.pending_aggs = frame.pending_aggs.saturating_sub(1);
                    State::ExpectExpr
                }
                "distinct" | "amount" | "rate" => State::ExpectExpr,
                "impute" => State::ImputeArg,
                "cut" => State::CutArg,
                "as" => State::UnitArg,
                "at" => State::ExpectEvery,
                "every" => State::TimestepArg,
                "and" | "or" | "not" | "contains" | "where" | "time" | "starttime" | "endtime" => State::ExpectExpr,
                w if is_agg_word(w) && state == State::ExpectExpr => {
                    frame.pending_aggs += 1;
                    State::ExpectExpr
                }
                _ => State::AfterExpr,
            },
            (_, Tok::Number(_)) | (_, Tok::Field(_)) | (_, Tok::Text(_)) | (_, Tok::Now) => State::AfterExpr,
            (_, Tok::Comma) => state,
            (_, Tok::Eof) => state,
            _ => State::ExpectExpr,
        };
    }
    let frame = *frames.last().expect("root frame");
    (state, frame, tokens.is_empty(), frames.len() == 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::toy_clinic;

    fn labels(src: &str) -> Vec<String> {
        let catalog = toy_clinic().list_fields();
        suggest_completions(src, src.len(), &catalog).into_iter().map(|s| s.label).collect()
    }

    #[test]
    fn field_prefix() {
        assert_eq!(labels("mean {Hea"), vec!["HeartRate"]);
        let catalog = toy_clinic().list_fields();
        let s = &suggest_completions("mean {Hea", 9, &catalog)[0];
        assert_eq!(s.insert_text, "{HeartRate}");
        assert_eq!(s.span, (5, 9));
    }

    #[test]
    fn follow_set_after_aggregated_operand() {
        let l = labels("count {Diagnosis} ");
        for w in ["from", "before", "after", "at every", "impute", "where"] {
            assert!(l.iter().any(|x| x == w), "missing {} in {:?}", w, l);
        }
    }

    #[test]
    fn pending_from_suggests_to() {
        assert_eq!(labels("mean {HeartRate} from #now - 4 hours ")[0], "to");
    }

    #[test]
    fn empty_prefix_lists_functions_and_templates() {
        let l = labels("");
        for f in AggFn::ALL {
            assert!(l.iter().any(|x| x == f.name()));
        }
        for (t, _) in TEMPLATES {
            assert!(l.iter().any(|x| x == t));
        }
    }

    #[test]
    fn partial_words() {
        assert_eq!(labels("cou"), vec!["count", "count distinct"]);
        assert_eq!(labels("mean {x} before #now im"), vec!["impute"]);
        assert_eq!(labels("exists {x} before #now at every 4 ho"), vec!["hours"]);
        assert_eq!(labels("#n"), vec!["#now"]);
    }

    #[test]
    fn malformed_prefix_is_quiet() {
        assert!(labels("\"unterminated").is_empty());
    }
}
