//! Seeded Monte-Carlo trials and sweeps.
//!
//! A trial is keyed by `seed = trial_seed(master_seed, power_index, trial_index)`.
//! Topology, shadowing, channel, bits and noise each draw from their own
//! sub-stream of that seed, so receivers can be added or removed without
//! changing any realization, and every receiver in a trial sees the same one.
//!
//! Receivers work in noise-normalized units: `Y / sqrt(N0)`, unit-power
//! symbols, and channel variances `gamma P / N0`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use gfree_core::bigabp::{self, Knobs};
use gfree_core::channel::{self, dbm_to_watts};
use gfree_core::frame_design::{self, CsidcoConfig, FrameMatrix};
use gfree_core::init_ce::{self, AmpConfig, InitialEstimate};
use gfree_core::metrics::{self, TrialOutcome};
use gfree_core::seed::{self, Stream};
use gfree_core::signal::{self, qpsk_gray};
use gfree_core::{detectors, CMatrix, Complex64, RMatrix};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{Receiver, Scenario};
use crate::frame_io::{self, FrameFileError};
use crate::table::{self, Row};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Frame(#[from] FrameFileError),
    #[error("pilot frame is {got_j}x{got_l}, scenario needs {want_j}x{want_l}")]
    FrameShape {
        want_j: usize,
        want_l: usize,
        got_j: usize,
        got_l: usize,
    },
    #[error("pilot design failed: {0}")]
    Design(gfree_core::Error),
    #[error("trial setup failed: {0}")]
    Setup(gfree_core::Error),
    #[error(transparent)]
    Table(#[from] table::TableError),
    #[error("invalid GFREE_THREADS value {0:?}")]
    Threads(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    /// Numeric failures, as opposed to configuration or IO problems.
    pub fn is_numeric(&self) -> bool {
        match self {
            HarnessError::Design(e) | HarnessError::Setup(e) => e.is_numeric(),
            _ => false,
        }
    }
}

/// A scenario with its pilot frame resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub pilots: FrameMatrix,
    pub frame_hash: String,
}

/// Designer settings used for a scenario's pilots.
pub fn pilot_design_config(s: &Scenario) -> CsidcoConfig {
    CsidcoConfig {
        outer_iterations: s.pilot_outer_iterations,
        seed: s.pilot_seed,
        ..Default::default()
    }
}

impl Prepared {
    /// Loads the pilot frame named in the scenario or designs one.
    pub fn new(scenario: Scenario) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let (j, l) = (scenario.k_pilot, scenario.m_users);
        let pilots = match &scenario.pilot_file {
            Some(p) => frame_io::load_frame(p)?,
            None => {
                frame_design::design_pilots(j, l, &pilot_design_config(&scenario))
                    .map_err(HarnessError::Design)?
                    .frame
            }
        };
        Self::with_pilots(scenario, pilots)
    }

    pub fn with_pilots(scenario: Scenario, pilots: FrameMatrix) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let (j, l) = (scenario.k_pilot, scenario.m_users);
        if (pilots.rows(), pilots.cols()) != (j, l) {
            return Err(HarnessError::FrameShape {
                want_j: j,
                want_l: l,
                got_j: pilots.rows(),
                got_l: pilots.cols(),
            });
        }
        let frame_hash = frame_io::frame_hash(&pilots);
        Ok(Self {
            scenario,
            pilots,
            frame_hash,
        })
    }
}

/// Everything the receivers of one trial see, plus the ground truth.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    /// Noise-normalized received block, `N x K`.
    pub y: CMatrix,
    /// Unit-power pilot block, `M x K_p`.
    pub pilots: CMatrix,
    /// `gamma P / N0`, `N x M`.
    pub gamma: RMatrix,
    pub lambda: f64,
    /// Effective channel `H sqrt(P / N0)`.
    pub h_true: CMatrix,
    /// Unit-power transmitted block, `M x K`.
    pub x_true: CMatrix,
    pub active: Vec<bool>,
    pub bits: Vec<Vec<bool>>,
}

impl TrialInputs {
    pub fn k_pilot(&self) -> usize {
        self.pilots.ncols()
    }

    pub fn y_pilot(&self) -> CMatrix {
        self.y.columns(0, self.k_pilot()).into_owned()
    }

    pub fn y_data(&self) -> CMatrix {
        let kp = self.k_pilot();
        self.y.columns(kp, self.y.ncols() - kp).into_owned()
    }

    /// SHA-256 over everything a receiver may read.
    pub fn realization_hash(&self) -> String {
        let mut h = Sha256::new();
        for m in [&self.y, &self.pilots, &self.h_true, &self.x_true] {
            for v in m.iter() {
                h.update(v.re.to_le_bytes());
                h.update(v.im.to_le_bytes());
            }
        }
        for v in self.gamma.iter() {
            h.update(v.to_le_bytes());
        }
        h.update(self.lambda.to_le_bytes());
        h.update(self.active.iter().map(|&a| u8::from(a)).collect::<Vec<u8>>());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Draws the realization of one trial.
pub fn trial_inputs(p: &Prepared, power_dbm: f64, trial_seed: u64) -> Result<TrialInputs, gfree_core::Error> {
    let s = &p.scenario;
    let topo = channel::build_topology(s.n_aps, s.m_users, s.area_side_m, seed::stream_seed(trial_seed, Stream::Topology))?;
    let ls = channel::pathloss_with_shadowing(&topo, s.shadowing_std_db, seed::stream_seed(trial_seed, Stream::Shadowing));
    let n0 = dbm_to_watts(channel::noise_floor_dbm(s.bandwidth_hz(), s.nf_db, s.temperature_k)?);
    let ch = channel::sample_channel(&ls, s.lambda, n0, seed::stream_seed(trial_seed, Stream::Channel))?;
    let bits = signal::random_bits(s.m_users, 2 * s.k_data(), &mut seed::rng(seed::stream_seed(trial_seed, Stream::Bits)));
    let tx = signal::assemble_tx(&p.pilots, &bits, &ch.active, power_dbm)?;
    let rx = signal::transmit(&tx, &ch, seed::stream_seed(trial_seed, Stream::Noise))?;

    let p_w = dbm_to_watts(power_dbm);
    let inv_noise = Complex64::new(1.0 / n0.sqrt(), 0.0);
    let inv_amp = Complex64::new(1.0 / p_w.sqrt(), 0.0);
    Ok(TrialInputs {
        y: rx.y * inv_noise,
        pilots: signal::pilot_block(&p.pilots),
        gamma: ls.scaled_gamma(p_w, n0),
        lambda: s.lambda,
        h_true: &ch.h * Complex64::new((p_w / n0).sqrt(), 0.0),
        x_true: tx.x() * inv_amp,
        active: ch.active.clone(),
        bits,
    })
}

/// Outcome of one receiver on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverResult {
    pub receiver: Receiver,
    pub outcome: Result<TrialOutcome, gfree_core::Error>,
    /// Hash of the inputs the receiver was handed.
    pub input_hash: String,
}

fn knobs(s: &Scenario) -> Knobs {
    Knobs { t_max: s.t_max, eta: s.eta }
}

fn amp_config(s: &Scenario) -> AmpConfig {
    AmpConfig {
        max_iterations: s.amp_iterations,
        ..Default::default()
    }
}

/// Data-detection metrics from hard symbols and an activity decision.
fn data_outcome(inp: &TrialInputs, x_hard: &CMatrix, active_hat: &[bool], h_hat: Option<&CMatrix>, iterations: usize) -> Result<TrialOutcome, gfree_core::Error> {
    let q = qpsk_gray();
    let bits_hat = metrics::demap_rows(x_hard, &q);
    let ber = metrics::ber_with_lost_bits(&inp.bits, &bits_hat, &inp.active, active_hat)?;
    let pe = metrics::block_error_rate(&inp.bits, &bits_hat, &inp.active, active_hat)?.unwrap_or(0.0);
    let (md, fa) = metrics::detection_errors(&inp.active, active_hat)?;
    let nmse = match h_hat {
        Some(h) => metrics::nmse(&inp.h_true, h)?.unwrap_or(f64::NAN),
        None => f64::NAN,
    };
    let kd = x_hard.ncols();
    Ok(TrialOutcome {
        ber: ber.ber,
        nmse,
        md_count: md,
        fa_count: fa,
        block_error_rate: pe,
        effective_throughput_bits: metrics::effective_throughput(pe, kd, q.bits_per_symbol)?,
        iterations_run: iterations,
        predicted_mse_x: Vec::new(),
        predicted_mse_h: Vec::new(),
    })
}

fn channel_outcome(inp: &TrialInputs, h_hat: &CMatrix) -> Result<TrialOutcome, gfree_core::Error> {
    Ok(TrialOutcome {
        ber: f64::NAN,
        nmse: metrics::nmse(&inp.h_true, h_hat)?.unwrap_or(f64::NAN),
        md_count: 0,
        fa_count: 0,
        block_error_rate: f64::NAN,
        effective_throughput_bits: f64::NAN,
        iterations_run: 1,
        predicted_mse_x: Vec::new(),
        predicted_mse_h: Vec::new(),
    })
}

/// Runs one receiver. `amp` caches the shared MMV-AMP initial estimate.
pub fn run_receiver(
    r: Receiver,
    inp: &TrialInputs,
    s: &Scenario,
    amp: &mut Option<Result<InitialEstimate, gfree_core::Error>>,
) -> Result<TrialOutcome, gfree_core::Error> {
    let n0 = 1.0;
    let mut init = || -> Result<InitialEstimate, gfree_core::Error> {
        amp.get_or_insert_with(|| init_ce::mmv_amp(&inp.y_pilot(), &inp.pilots, &inp.gamma, inp.lambda, n0, &amp_config(s)))
            .clone()
    };
    match r {
        Receiver::Bigabp => {
            let est = init()?;
            let st = bigabp::run_belief_consensus(&inp.y, &inp.pilots, &est, &inp.gamma, inp.lambda, n0, &knobs(s))?;
            let det = bigabp::hard_decision(&inp.y, &st, &inp.gamma, inp.lambda, n0)?;
            let mut out = data_outcome(inp, &det.x_hard, &det.active_hat, Some(&det.h_final), est.iterations + st.iteration)?;
            out.predicted_mse_x = det.mse_trace_x;
            out.predicted_mse_h = det.mse_trace_h;
            Ok(out)
        }
        Receiver::ZfMmvamp => {
            let est = init()?;
            let act = est.active_hat();
            let zf = detectors::zf_detect(&inp.y_data(), &est.h_hat, &act)?;
            data_outcome(inp, &zf.x_hard, &act, Some(&est.h_hat), est.iterations)
        }
        Receiver::GabpMmvamp => {
            let est = init()?;
            let act = est.active_hat();
            let x = bigabp::gabp_detect(&inp.y_data(), &est.h_hat, &est.psi_h, &act, n0, &knobs(s))?;
            data_outcome(inp, &x, &act, Some(&est.h_hat), est.iterations + s.t_max)
        }
        Receiver::GenieGabp => {
            let x = bigabp::genie_gabp_detect(&inp.y_data(), &inp.h_true, &inp.active, n0, &knobs(s))?;
            data_outcome(inp, &x, &inp.active, Some(&inp.h_true), s.t_max)
        }
        Receiver::Mns => channel_outcome(inp, &init_ce::mns_estimate(&inp.y_pilot(), &inp.pilots)?),
        Receiver::MmseGenie => channel_outcome(inp, &init_ce::mmse_genie(&inp.y, &inp.x_true, &inp.active, &inp.gamma, n0)?),
    }
}

/// All configured receivers on one realization.
pub fn run_trial(p: &Prepared, power_dbm: f64, trial_seed: u64) -> Result<Vec<ReceiverResult>, HarnessError> {
    let s = &p.scenario;
    if s.receivers.is_empty() {
        return Err(crate::config::ConfigError::Invalid("receivers must list at least one receiver".into()).into());
    }
    let inp = trial_inputs(p, power_dbm, trial_seed).map_err(HarnessError::Setup)?;
    let mut amp = None;
    Ok(s
        .receivers
        .iter()
        .map(|&r| ReceiverResult {
            receiver: r,
            input_hash: inp.realization_hash(),
            outcome: run_receiver(r, &inp, s, &mut amp),
        })
        .collect())
}

/// One sweep point to execute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub power_index: usize,
    pub trial_index: usize,
    pub power_dbm: f64,
    pub seed: u64,
}

pub fn jobs(s: &Scenario, trials: usize) -> Vec<Job> {
    let mut out = Vec::with_capacity(s.tx_power_dbm.len() * trials);
    for (pi, &power_dbm) in s.tx_power_dbm.iter().enumerate() {
        for ti in 0..trials {
            out.push(Job {
                power_index: pi,
                trial_index: ti,
                power_dbm,
                seed: seed::trial_seed(s.master_seed, pi, ti),
            });
        }
    }
    out
}

/// CSV rows of one executed job.
pub fn rows_for(p: &Prepared, job: &Job, results: &[ReceiverResult]) -> Vec<Row> {
    results
        .iter()
        .map(|r| Row::from_outcome(&p.scenario.scenario_id, job.seed, job.power_dbm, r.receiver, r.outcome.as_ref()))
        .collect()
}

/// Runs a job and converts it to rows. Setup failures become failed rows
/// for every receiver so the sweep carries on.
pub fn execute(p: &Prepared, job: &Job) -> (Vec<Row>, usize) {
    match run_trial(p, job.power_dbm, job.seed) {
        Ok(res) => {
            let failed = res.iter().filter(|r| r.outcome.is_err()).count();
            for r in res.iter().filter(|r| r.outcome.is_err()) {
                eprintln!(
                    "warning: receiver {} failed at {} dBm, seed {}: {}",
                    r.receiver,
                    job.power_dbm,
                    job.seed,
                    r.outcome.as_ref().unwrap_err()
                );
            }
            (rows_for(p, job, &res), failed)
        }
        Err(e) => {
            eprintln!("warning: trial at {} dBm, seed {} failed: {e}", job.power_dbm, job.seed);
            let err = match e {
                HarnessError::Setup(e) => e,
                other => gfree_core::Error::Domain(other.to_string()),
            };
            let rows = p
                .scenario
                .receivers
                .iter()
                .map(|&r| Row::from_outcome(&p.scenario.scenario_id, job.seed, job.power_dbm, r, Err(&err)))
                .collect();
            (rows, p.scenario.receivers.len())
        }
    }
}

/// Worker count: `GFREE_THREADS` if set, else the machine's parallelism.
pub fn thread_count() -> Result<usize, HarnessError> {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("GFREE_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(HarnessError::Threads(v)),
        },
        Err(_) => Ok(avail),
    }
}

/// Summary of a sweep invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<Row>,
    /// Jobs skipped because their rows were already present.
    pub resumed: usize,
    pub executed: usize,
    pub failures: usize,
}

/// Executes `jobs` on `threads` workers, resuming from the rows already in
/// `out` if it exists, and rewrites `out` in canonical order at the end.
/// Rows are appended as jobs finish, so an interrupted sweep can be resumed.
pub fn run_jobs(p: &Prepared, all_jobs: &[Job], out: &Path, threads: usize) -> Result<SweepSummary, HarnessError> {
    let n_recv = p.scenario.receivers.len();
    let mut kept: Vec<Row> = Vec::new();
    if out.exists() {
        let existing = table::read_rows(out)?;
        let mut groups: BTreeMap<(String, u64, u64), Vec<Row>> = BTreeMap::new();
        for r in existing {
            if r.scenario_id == p.scenario.scenario_id {
                groups.entry((r.scenario_id.clone(), r.tx_power_dbm.to_bits(), r.seed)).or_default().push(r);
            }
        }
        for (_, g) in groups {
            let names: BTreeSet<&str> = g.iter().map(|r| r.receiver.as_str()).collect();
            if g.len() == n_recv && p.scenario.receivers.iter().all(|r| names.contains(r.name())) {
                kept.extend(g);
            }
        }
    }
    let done: BTreeSet<(u64, u64)> = kept.iter().map(|r| (r.tx_power_dbm.to_bits(), r.seed)).collect();
    let todo: Vec<Job> = all_jobs
        .iter()
        .filter(|j| !done.contains(&(j.power_dbm.to_bits(), j.seed)))
        .copied()
        .collect();
    let resumed = all_jobs.len() - todo.len();

    // Drop incomplete groups and rows of other scenarios before appending.
    table::write_rows(out, &kept)?;
    let writer = std::sync::Mutex::new(table::Appender::open(out)?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let results: Vec<Result<(Vec<Row>, usize), HarnessError>> = pool.install(|| {
        todo.par_iter()
            .map(|job| {
                let (rows, failed) = execute(p, job);
                writer.lock().expect("writer lock").append(&rows)?;
                Ok((rows, failed))
            })
            .collect()
    });
    drop(writer);
    let mut failures = 0;
    let mut rows = kept;
    for r in results {
        let (rs, f) = r?;
        failures += f;
        rows.extend(rs);
    }
    let order: BTreeMap<(u64, u64), (usize, usize)> = all_jobs
        .iter()
        .map(|j| ((j.power_dbm.to_bits(), j.seed), (j.power_index, j.trial_index)))
        .collect();
    let recv_pos = |name: &str| p.scenario.receivers.iter().position(|r| r.name() == name).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| {
        (
            order.get(&(r.tx_power_dbm.to_bits(), r.seed)).copied().unwrap_or((usize::MAX, usize::MAX)),
            recv_pos(&r.receiver),
        )
    });
    table::write_rows(out, &rows)?;
    Ok(SweepSummary {
        rows,
        resumed,
        executed: todo.len(),
        failures,
    })
}

/// Full sweep: every power times `trials` trials.
pub fn run_sweep(p: &Prepared, out: &Path, threads: usize) -> Result<SweepSummary, HarnessError> {
    run_jobs(p, &jobs(&p.scenario, p.scenario.trials), out, threads)
}

/// First trial at every power.
pub fn run_single(p: &Prepared, out: &Path, threads: usize) -> Result<SweepSummary, HarnessError> {
    run_jobs(p, &jobs(&p.scenario, 1), out, threads)
}

/// Run metadata written next to the CSV.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Provenance<'a> {
    pub scenario: &'a Scenario,
    pub code_version: &'static str,
    pub frame_hash: &'a str,
}

pub fn write_provenance(p: &Prepared, out: &Path) -> std::io::Result<()> {
    let prov = Provenance {
        scenario: &p.scenario,
        code_version: env!("CARGO_PKG_VERSION"),
        frame_hash: &p.frame_hash,
    };
    let mut path = out.as_os_str().to_owned();
    path.push(".meta.json");
    std::fs::write(path, serde_json::to_string_pretty(&prov).expect("provenance serializes"))
}
