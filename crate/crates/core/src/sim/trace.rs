//! Line-oriented trace format.
//!
//! Each line is `time_us,event_kind,from,to,msg_kind,bytes,detail` where
//! `detail` is a `;`-separated list of `key=value` pairs. Empty columns are
//! written as `-`.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_us: u64,
    pub event: String,
    pub from: String,
    pub to: String,
    pub msg_kind: String,
    pub bytes: u64,
    pub detail: Vec<(String, String)>,
}

impl TraceRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_u64(&self, key: &str) -> Option<u64> {
        self.get(key)?.parse().ok()
    }

    pub fn parse(line: &str, line_no: usize) -> Result<TraceRecord, TraceParseError> {
        let err = |reason: String| TraceParseError {
            line: line_no,
            reason,
        };
        let cols: Vec<&str> = line.splitn(7, ',').collect();
        if cols.len() != 7 {
            return Err(err(format!("expected 7 columns, found {}", cols.len())));
        }
        let time_us = cols[0]
            .parse()
            .map_err(|_| err(format!("bad time {:?}", cols[0])))?;
        let bytes = cols[5]
            .parse()
            .map_err(|_| err(format!("bad byte count {:?}", cols[5])))?;
        let mut detail = Vec::new();
        if cols[6] != "-" && !cols[6].is_empty() {
            for kv in cols[6].split(';') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| err(format!("bad detail pair {kv:?}")))?;
                detail.push((k.to_string(), v.to_string()));
            }
        }
        Ok(TraceRecord {
            time_us,
            event: cols[1].to_string(),
            from: cols[2].to_string(),
            to: cols[3].to_string(),
            msg_kind: cols[4].to_string(),
            bytes,
            detail,
        })
    }

    pub fn to_line(&self) -> String {
        let detail = if self.detail.is_empty() {
            "-".to_string()
        } else {
            self.detail
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.time_us, self.event, self.from, self.to, self.msg_kind, self.bytes, detail
        )
    }
}

/// Parse a whole trace. Blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| TraceRecord::parse(l, i + 1))
        .collect()
}

/// Append-only trace buffer.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    text: String,
    lines: u64,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        time_us: u64,
        event: &str,
        from: &dyn std::fmt::Display,
        to: &dyn std::fmt::Display,
        msg_kind: &str,
        bytes: u64,
        detail: &str,
    ) {
        let detail = if detail.is_empty() { "-" } else { detail };
        let _ = writeln!(
            self.text,
            "{time_us},{event},{from},{to},{msg_kind},{bytes},{detail}"
        );
        self.lines += 1;
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }

    pub fn len(&self) -> u64 {
        self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut t = Trace::new();
        t.record(12, "apply", &"n1", &"-", "normal", 0, "index=5;rid=3:4");
        t.record(13, "fault", &"-", &"n2", "crash", 0, "");
        let recs = parse_trace(t.as_str()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].get_u64("index"), Some(5));
        assert_eq!(recs[0].get("rid"), Some("3:4"));
        assert!(recs[1].detail.is_empty());
        assert_eq!(
            recs[0].to_line() + "\n" + &recs[1].to_line() + "\n",
            t.as_str()
        );
    }

    #[test]
    fn parse_error_names_line() {
        let e = parse_trace("1,a,b,c,d,0,-\n\nbad line\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.to_string().starts_with("trace line 3"));
    }
}
