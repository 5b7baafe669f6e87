//! Side-by-side comparison of two runs of the same scenario.

use std::fmt;

use thiserror::Error;

use super::metrics::MetricsReport;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("runs used different scenarios ({a:016x} vs {b:016x})")]
    ScenarioMismatch { a: u64, b: u64 },
    #[error("summary is missing field {0}")]
    MissingField(&'static str),
}

/// The figures a comparison needs from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub protocol: String,
    /// Identifies the scenario with the protocol choice left out.
    pub scenario_fingerprint: u64,
    pub tps: f64,
    pub tx_mean_us: f64,
    pub leader_bytes_per_request: f64,
    pub follower_bytes_per_request: f64,
}

impl RunSummary {
    pub fn from_report(r: &MetricsReport) -> Self {
        RunSummary {
            protocol: r.protocol.clone(),
            scenario_fingerprint: r.scenario_fingerprint,
            tps: r.tps,
            tx_mean_us: r.tx_latency.mean_us,
            leader_bytes_per_request: r.leader_bytes_per_request,
            follower_bytes_per_request: r.follower_bytes_per_request,
        }
    }

    /// Rebuild from the summary block of a metrics CSV.
    pub fn from_csv(csv: &str) -> Result<Self, CompareError> {
        let rows = MetricsReport::summary_from_csv(csv);
        let get = |m: &'static str, k: &str| {
            rows.iter()
                .find(|(a, b, _)| a == m && b == k)
                .map(|(_, _, v)| v.clone())
                .ok_or(CompareError::MissingField(m))
        };
        let num = |m: &'static str, k: &str| -> Result<f64, CompareError> {
            get(m, k)?
                .parse()
                .map_err(|_| CompareError::MissingField(m))
        };
        Ok(RunSummary {
            protocol: get("protocol", "-")?,
            scenario_fingerprint: u64::from_str_radix(&get("scenario", "-")?, 16)
                .map_err(|_| CompareError::MissingField("scenario"))?,
            tps: num("tps", "all")?,
            tx_mean_us: num("response_time_mean_us", "tx")?,
            leader_bytes_per_request: num("leader_bytes_per_request", "all")?,
            follower_bytes_per_request: num("follower_bytes_per_request", "all")?,
        })
    }
}

/// How run `a` fares against run `b`. Ratios are `a / b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    pub a: String,
    pub b: String,
    pub tps_ratio: f64,
    pub leader_bytes_ratio: f64,
    pub tx_response_ratio: f64,
    /// Leader bytes per request saved by `a`.
    pub leader_saving_per_request: f64,
    /// Extra follower bytes per request spent by `a`.
    pub follower_extra_per_request: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

pub fn compare_runs(a: &RunSummary, b: &RunSummary) -> Result<ImprovementReport, CompareError> {
    if a.scenario_fingerprint != b.scenario_fingerprint {
        return Err(CompareError::ScenarioMismatch {
            a: a.scenario_fingerprint,
            b: b.scenario_fingerprint,
        });
    }
    Ok(ImprovementReport {
        a: a.protocol.clone(),
        b: b.protocol.clone(),
        tps_ratio: ratio(a.tps, b.tps),
        leader_bytes_ratio: ratio(a.leader_bytes_per_request, b.leader_bytes_per_request),
        tx_response_ratio: ratio(a.tx_mean_us, b.tx_mean_us),
        leader_saving_per_request: b.leader_bytes_per_request - a.leader_bytes_per_request,
        follower_extra_per_request: a.follower_bytes_per_request - b.follower_bytes_per_request,
    })
}

impl fmt::Display for ImprovementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric,value")?;
        writeln!(f, "runs,{} vs {}", self.a, self.b)?;
        writeln!(f, "tps_ratio,{:.4}", self.tps_ratio)?;
        writeln!(
            f,
            "leader_bytes_per_request_ratio,{:.4}",
            self.leader_bytes_ratio
        )?;
        writeln!(f, "tx_response_time_ratio,{:.4}", self.tx_response_ratio)?;
        writeln!(
            f,
            "leader_saving_bytes_per_request,{:.3}",
            self.leader_saving_per_request
        )?;
        writeln!(
            f,
            "follower_extra_bytes_per_request,{:.3}",
            self.follower_extra_per_request
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(protocol: &str, fp: u64, tps: f64) -> RunSummary {
        RunSummary {
            protocol: protocol.into(),
            scenario_fingerprint: fp,
            tps,
            tx_mean_us: 20_000.0,
            leader_bytes_per_request: 900.0,
            follower_bytes_per_request: 300.0,
        }
    }

    #[test]
    fn identical_runs_give_unit_ratios() {
        let a = s("lcr", 1, 1000.0);
        let r = compare_runs(&a, &a).unwrap();
        assert_eq!(r.tps_ratio, 1.0);
        assert_eq!(r.leader_bytes_ratio, 1.0);
        assert_eq!(r.tx_response_ratio, 1.0);
        assert_eq!(r.leader_saving_per_request, 0.0);
    }

    #[test]
    fn mismatched_scenarios_are_rejected() {
        assert!(matches!(
            compare_runs(&s("lcr", 1, 1.0), &s("raft", 2, 1.0)),
            Err(CompareError::ScenarioMismatch { .. })
        ));
    }

    #[test]
    fn ratios_are_a_over_b() {
        let r = compare_runs(&s("lcr", 1, 1500.0), &s("raft", 1, 1000.0)).unwrap();
        assert!((r.tps_ratio - 1.5).abs() < 1e-12);
    }
}
