//! Two-sample log-rank statistic.

use crate::survival::Sample;

/// Per-event-time counts for a node: totals plus the running left-child
/// tallies used while scanning split candidates.
pub(crate) struct RiskTable {
    pub event_times: Vec<f64>,
    pub at_risk: Vec<f64>,
    pub deaths: Vec<f64>,
}

impl RiskTable {
    pub fn new(times: &[f64], events: &[bool]) -> Self {
        let mut event_times: Vec<f64> = times
            .iter()
            .zip(events)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let k = event_times.len();
        let mut at_risk = vec![0.0; k];
        let mut deaths = vec![0.0; k];
        let mut table = Self {
            event_times,
            at_risk: Vec::new(),
            deaths: Vec::new(),
        };
        for (&t, &e) in times.iter().zip(events) {
            table.add(&mut at_risk, &mut deaths, t, e);
        }
        table.at_risk = at_risk;
        table.deaths = deaths;
        table
    }

    /// Adds one sample to the given at-risk / death tallies.
    pub fn add(&self, at_risk: &mut [f64], deaths: &mut [f64], time: f64, event: bool) {
        let upto = self.event_times.partition_point(|&u| u <= time);
        for r in &mut at_risk[..upto] {
            *r += 1.0;
        }
        if event && upto > 0 && self.event_times[upto - 1] == time {
            deaths[upto - 1] += 1.0;
        }
    }

    /// Log-rank chi-square for the group described by `(left_at_risk, left_deaths)`
    /// against the remainder of the table.
    pub fn statistic(&self, left_at_risk: &[f64], left_deaths: &[f64]) -> f64 {
        let mut observed_minus_expected = 0.0;
        let mut variance = 0.0;
        for k in 0..self.event_times.len() {
            let n = self.at_risk[k];
            let d = self.deaths[k];
            if n <= 0.0 {
                continue;
            }
            let share = left_at_risk[k] / n;
            observed_minus_expected += left_deaths[k] - d * share;
            if n > 1.0 {
                variance += d * share * (1.0 - share) * (n - d) / (n - 1.0);
            }
        }
        if variance <= 1e-12 {
            0.0
        } else {
            observed_minus_expected * observed_minus_expected / variance
        }
    }
}

/// Standard two-sample log-rank chi-square statistic, `(O - E)^2 / V`.
/// Returns 0 when no events occur in either group.
pub fn log_rank_statistic(left: &[Sample], right: &[Sample]) -> f64 {
    let (lt, le): (Vec<f64>, Vec<bool>) = left.iter().map(|s| (s.time, s.event)).unzip();
    let (rt, re): (Vec<f64>, Vec<bool>) = right.iter().map(|s| (s.time, s.event)).unzip();
    log_rank_statistic_raw(&lt, &le, &rt, &re)
}

pub fn log_rank_statistic_raw(
    left_times: &[f64],
    left_events: &[bool],
    right_times: &[f64],
    right_events: &[bool],
) -> f64 {
    let times: Vec<f64> = left_times.iter().chain(right_times).copied().collect();
    let events: Vec<bool> = left_events.iter().chain(right_events).copied().collect();
    let table = RiskTable::new(&times, &events);
    let k = table.event_times.len();
    let mut at_risk = vec![0.0; k];
    let mut deaths = vec![0.0; k];
    for (&t, &e) in left_times.iter().zip(left_events) {
        table.add(&mut at_risk, &mut deaths, t, e);
    }
    table.statistic(&at_risk, &deaths)
}
