//! Aggregates a results CSV per scenario, power and receiver.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::table::Row;

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5)?,
            q10: quantile(&v, 0.1)?,
            q90: quantile(&v, 0.9)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Group {
    pub scenario_id: String,
    pub tx_power_dbm: f64,
    pub receiver: String,
    pub trials: usize,
    pub failures: usize,
    pub ber: Option<Stat>,
    pub nmse: Option<Stat>,
    pub md: Option<Stat>,
    pub fa: Option<Stat>,
    pub throughput_bits: Option<Stat>,
    pub iterations_run: Option<Stat>,
}

/// Groups in order of first appearance of scenario and receiver, by
/// ascending power.
pub fn summarize(rows: &[Row]) -> Vec<Group> {
    let mut scen_order: Vec<&str> = Vec::new();
    let mut recv_order: Vec<&str> = Vec::new();
    for r in rows {
        if !scen_order.contains(&r.scenario_id.as_str()) {
            scen_order.push(&r.scenario_id);
        }
        if !recv_order.contains(&r.receiver.as_str()) {
            recv_order.push(&r.receiver);
        }
    }
    let pos = |v: &[&str], s: &str| v.iter().position(|x| *x == s).unwrap_or(usize::MAX);
    let mut groups: BTreeMap<(usize, i64, usize), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        // Total order on finite powers that keeps -0.0 and 0.0 together.
        let p = (r.tx_power_dbm * 1e6).round() as i64;
        groups
            .entry((pos(&scen_order, &r.scenario_id), p, pos(&recv_order, &r.receiver)))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let f = g[0];
            let ok: Vec<&Row> = g.iter().copied().filter(|r| !r.failed()).collect();
            Group {
                scenario_id: f.scenario_id.clone(),
                tx_power_dbm: f.tx_power_dbm,
                receiver: f.receiver.clone(),
                trials: g.len(),
                failures: g.len() - ok.len(),
                ber: Stat::of(ok.iter().filter_map(|r| r.ber)),
                nmse: Stat::of(ok.iter().filter_map(|r| r.nmse)),
                md: Stat::of(ok.iter().filter_map(|r| r.md.map(|v| v as f64))),
                fa: Stat::of(ok.iter().filter_map(|r| r.fa.map(|v| v as f64))),
                throughput_bits: Stat::of(ok.iter().filter_map(|r| r.throughput_bits)),
                iterations_run: Stat::of(ok.iter().filter_map(|r| r.iterations_run.map(|v| v as f64))),
            }
        })
        .collect()
}

fn cell(s: &Option<Stat>, f: impl Fn(&Stat) -> f64) -> String {
    s.as_ref().map_or_else(|| "-".into(), |s| format!("{:.4e}", f(s)))
}

/// Fixed-width text table: mean BER, median NMSE in dB, mean MD and FA,
/// mean throughput.
pub fn render(groups: &[Group]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:<12} {:>6} {:>5} {:>11} {:>11} {:>11} {:>9} {:>9} {:>11}",
        "scenario", "dBm", "receiver", "trials", "fail", "ber_mean", "ber_median", "nmse_dB_med", "md_mean", "fa_mean", "tput_mean"
    );
    for g in groups {
        let nmse_db = g
            .nmse
            .as_ref()
            .map_or_else(|| "-".into(), |s| format!("{:.2}", 10.0 * s.median.max(1e-300).log10()));
        let small = |s: &Option<Stat>| s.as_ref().map_or_else(|| "-".into(), |s| format!("{:.3}", s.mean));
        let _ = writeln!(
            out,
            "{:<16} {:>8.2} {:<12} {:>6} {:>5} {:>11} {:>11} {:>11} {:>9} {:>9} {:>11}",
            g.scenario_id,
            g.tx_power_dbm,
            g.receiver,
            g.trials,
            g.failures,
            cell(&g.ber, |s| s.mean),
            cell(&g.ber, |s| s.median),
            nmse_db,
            small(&g.md),
            small(&g.fa),
            g.throughput_bits.as_ref().map_or_else(|| "-".into(), |s| format!("{:.1}", s.mean)),
        );
    }
    out
}

const METRICS: [&str; 6] = ["ber", "nmse", "md", "fa", "throughput_bits", "iterations_run"];

impl Group {
    fn stats(&self) -> [&Option<Stat>; 6] {
        [&self.ber, &self.nmse, &self.md, &self.fa, &self.throughput_bits, &self.iterations_run]
    }
}

/// Summary CSV, one row per group: counts, then mean, median, 10% and 90%
/// quantiles of every metric. Missing statistics are empty fields.
pub fn render_csv(groups: &[Group]) -> String {
    let mut header = vec!["scenario_id".to_string(), "tx_power_dbm".into(), "receiver".into(), "trials".into(), "failures".into()];
    for m in METRICS {
        for s in ["mean", "median", "q10", "q90"] {
            header.push(format!("{m}_{s}"));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for g in groups {
        let mut rec = vec![g.scenario_id.clone(), g.tx_power_dbm.to_string(), g.receiver.clone(), g.trials.to_string(), g.failures.to_string()];
        for st in g.stats() {
            match st {
                Some(s) => rec.extend([s.mean, s.median, s.q10, s.q90].map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: f64, recv: &str, ber: Option<f64>) -> Row {
        Row {
            scenario_id: "s".into(),
            seed: 1,
            tx_power_dbm: p,
            receiver: recv.into(),
            ber,
            nmse: Some(0.1),
            md: Some(1),
            fa: Some(0),
            throughput_bits: Some(10.0),
            iterations_run: ber.map(|_| 3),
        }
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert_eq!(quantile(&[], 0.5), None);
        let s = Stat::of([3.0, f64::NAN, 1.0, 2.0]).unwrap();
        assert_eq!((s.n, s.mean, s.median), (3, 2.0, 2.0));
    }

    #[test]
    fn groups_and_failures() {
        let rows = vec![
            row(10.0, "bigabp", Some(0.1)),
            row(-5.0, "bigabp", Some(0.3)),
            row(10.0, "zf_mmvamp", Some(0.2)),
            row(10.0, "bigabp", Some(0.3)),
            row(10.0, "bigabp", None),
        ];
        let g = summarize(&rows);
        assert_eq!(g.len(), 3);
        assert_eq!((g[0].tx_power_dbm, g[0].receiver.as_str()), (-5.0, "bigabp"));
        assert_eq!((g[1].trials, g[1].failures), (3, 1));
        assert!((g[1].ber.as_ref().unwrap().mean - 0.2).abs() < 1e-12);
        assert_eq!(g[2].receiver, "zf_mmvamp");
        let text = render(&g);
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("-10.00"));
        let csv = render_csv(&g);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0].split(',').count(), 5 + 24);
        assert!(lines[1].starts_with("s,-5,bigabp,1,0,0.3,0.3,0.3,0.3,"));
    }
}
