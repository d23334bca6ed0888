use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::argument;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "s")]
    Signal,
    #[serde(rename = "i")]
    Idler,
}

/// One detector click, as exchanged in JSON-lines event files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEvent {
    pub t_ns: f64,
    pub ch: Channel,
}

/// Merges two time-ordered channels into one time-ordered stream. Ties keep
/// the signal click first.
pub fn merge_streams(signal_ns: &[f64], idler_ns: &[f64]) -> Vec<DetectionEvent> {
    let mut out = Vec::with_capacity(signal_ns.len() + idler_ns.len());
    let (mut a, mut b) = (0, 0);
    while a < signal_ns.len() || b < idler_ns.len() {
        let take_signal = b >= idler_ns.len() || (a < signal_ns.len() && signal_ns[a] <= idler_ns[b]);
        if take_signal {
            out.push(DetectionEvent { t_ns: signal_ns[a], ch: Channel::Signal });
            a += 1;
        } else {
            out.push(DetectionEvent { t_ns: idler_ns[b], ch: Channel::Idler });
            b += 1;
        }
    }
    out
}

/// Splits a merged stream into `(signal, idler)` time lists.
pub fn split_streams(events: &[DetectionEvent]) -> (Vec<f64>, Vec<f64>) {
    let mut s = Vec::new();
    let mut i = Vec::new();
    for e in events {
        match e.ch {
            Channel::Signal => s.push(e.t_ns),
            Channel::Idler => i.push(e.t_ns),
        }
    }
    (s, i)
}

pub fn write_events_jsonl<W: Write>(events: &[DetectionEvent], mut writer: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON-lines events, rejecting streams whose times decrease.
pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<DetectionEvent>> {
    let mut out: Vec<DetectionEvent> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: DetectionEvent = serde_json::from_str(&line)?;
        if let Some(prev) = out.last() {
            if e.t_ns < prev.t_ns {
                return Err(argument(format!(
                    "event on line {} at {} ns precedes the previous event at {} ns",
                    n + 1,
                    e.t_ns,
                    prev.t_ns
                )));
            }
        }
        out.push(e);
    }
    Ok(out)
}
