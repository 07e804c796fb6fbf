//! CSV reports rebuilt from a run log and nothing else.

use std::fmt::Write;
use std::str::FromStr;

use crate::engine::{parse_log, Event};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    BestSoFar,
    Elo,
}

impl FromStr for ReportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best_so_far" => Ok(ReportKind::BestSoFar),
            "elo" => Ok(ReportKind::Elo),
            other => Err(format!("unknown report `{other}` (expected best_so_far or elo)")),
        }
    }
}

pub const BEST_SO_FAR_HEADER: &str = "equivalent_tokens,best_norm_score";
pub const ELO_HEADER: &str = "iteration,optimizer_id,rating";

/// One row per evaluation: cumulative equivalent tokens charged up to that
/// point and the best valid normalized score so far.
pub fn best_so_far_csv(events: &[Event]) -> String {
    let mut out = format!("{BEST_SO_FAR_HEADER}\n");
    let mut quarter_tokens: u64 = 0;
    let mut best = 0.0f64;
    for e in events {
        match e {
            Event::Gen { tokens_in, tokens_out, .. } => quarter_tokens += 4 * tokens_out + tokens_in,
            Event::Eval { valid, s_norm, .. } => {
                if *valid && *s_norm > best {
                    best = *s_norm;
                }
                writeln!(out, "{},{}", quarter_tokens as f64 / 4.0, best).expect("string write");
            }
            _ => {}
        }
    }
    out
}

pub fn elo_csv(events: &[Event]) -> String {
    let mut out = format!("{ELO_HEADER}\n");
    for e in events {
        if let Event::Elo { iter, id, new, .. } = e {
            writeln!(out, "{iter},{id},{new}").expect("string write");
        }
    }
    out
}

/// Renders a report from raw log text; a corrupt log is an error.
pub fn render(log_text: &str, kind: ReportKind) -> Result<String, String> {
    let events = parse_log(log_text)?;
    Ok(match kind {
        ReportKind::BestSoFar => best_so_far_csv(&events),
        ReportKind::Elo => elo_csv(&events),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::AgentId;

    fn eval(iter: u64, score: f64) -> Event {
        Event::Eval {
            iter,
            id: AgentId(iter),
            operator: None,
            valid: true,
            s_raw: score,
            s_norm: score,
            violation: None,
        }
    }

    #[test]
    fn empty_log_is_header_only() {
        assert_eq!(render("", ReportKind::BestSoFar).unwrap(), format!("{BEST_SO_FAR_HEADER}\n"));
        assert_eq!(render("\n", ReportKind::Elo).unwrap(), format!("{ELO_HEADER}\n"));
    }

    #[test]
    fn best_column_never_drops() {
        let csv = best_so_far_csv(&[eval(1, 0.5), eval(2, 0.4)]);
        assert_eq!(csv, format!("{BEST_SO_FAR_HEADER}\n0,0.5\n0,0.5\n"));
    }

    #[test]
    fn tokens_accumulate_as_equivalent_tokens() {
        let gen = Event::Gen {
            iter: 1,
            operator: AgentId(0),
            target: crate::population::AgentKind::Task,
            ok: true,
            tokens_in: 3,
            tokens_out: 2,
            backend: "scripted".into(),
            error: None,
        };
        let csv = best_so_far_csv(&[gen, eval(1, 0.1)]);
        assert_eq!(csv.lines().nth(1), Some("2.75,0.1"));
    }

    #[test]
    fn corrupt_log_fails() {
        assert!(render("not json\n", ReportKind::Elo).is_err());
    }
}
