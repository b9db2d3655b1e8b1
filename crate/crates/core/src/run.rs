//! Run specifications, time-series evaluation, figure datasets and the
//! verification suites. This is the library behind the CLI verbs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fock::{self, FockError};
use crate::heisenberg::{self, BilinearObservable, HeisenbergError};
use crate::observables::{self, FlavorCount, ObservableKind, ObservablesError};
use crate::params::{ParamsError, PhysParams};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run spec: {0}")]
    InvalidSpec(String),
    #[error("parameter file: {0}")]
    ParamsFile(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Heisenberg(#[from] HeisenbergError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Observables(#[from] ObservablesError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Initial state selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateSpec {
    Flavor { n: u32, n_bar: u32 },
    Ks { n: u32 },
    Kl { n: u32 },
    MixedSingle { p1: f64, p2: f64, w: Complex64 },
}

impl StateSpec {
    pub fn total(&self) -> u32 {
        match self {
            StateSpec::Flavor { n, n_bar } => n + n_bar,
            StateSpec::Ks { n } | StateSpec::Kl { n } => *n,
            StateSpec::MixedSingle { .. } => 1,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            StateSpec::Flavor { n, n_bar } => format!("flavor({n},{n_bar})"),
            StateSpec::Ks { n } => format!("ns:{n}"),
            StateSpec::Kl { n } => format!("nl:{n}"),
            StateSpec::MixedSingle { p1, p2, w } => {
                format!("mixed({p1},{p2},{},{})", w.re, w.im)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    ClosedForm,
    Ode,
    Fock,
    Compare,
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::ClosedForm => "closed-form",
            EvalMode::Ode => "ode",
            EvalMode::Fock => "fock",
            EvalMode::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Everything needed to evaluate one time series.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub params: PhysParams,
    /// Human-readable origin of the parameters (echoed in metadata).
    pub params_source: String,
    pub observable: ObservableKind,
    pub state: StateSpec,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub mode: EvalMode,
    pub format: OutputFormat,
    pub cutoff: u32,
    /// Compare-mode tolerance on the max pairwise deviation.
    pub tol: f64,
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), RunError> {
        let mut problems = Vec::new();
        if self.t_start < 0.0 {
            problems.push(format!("t_start must be ≥ 0 (got {})", self.t_start));
        }
        if !(self.t_end > self.t_start) {
            problems.push(format!(
                "t_end must exceed t_start (got {} ≤ {})",
                self.t_end, self.t_start
            ));
        }
        if self.samples < 2 {
            problems.push(format!("samples must be ≥ 2 (got {})", self.samples));
        }
        if matches!(self.mode, EvalMode::Fock | EvalMode::Compare)
            && self.state.total() > self.cutoff
        {
            problems.push(format!(
                "state total {} exceeds fock cutoff {}",
                self.state.total(),
                self.cutoff
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RunError::InvalidSpec(problems.join("; ")))
        }
    }
}

/// One sampled dataset with enough metadata to re-run it exactly.
#[derive(Debug, Clone, Serialize)]
pub struct TimeSeries {
    pub metadata: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<TimeSeriesRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeSeriesRow {
    pub t_ns: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "t_ns,{}", self.columns.join(","));
        for row in &self.rows {
            let mut line = format!("{}", row.t_ns);
            for v in &row.values {
                let _ = write!(line, ",{v}");
            }
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// Max deviation column value, if this series came from compare mode.
    pub fn max_compare_deviation(&self) -> Option<f64> {
        let idx = self.columns.iter().position(|c| c == "max_deviation")?;
        self.rows
            .iter()
            .map(|r| r.values[idx])
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

/// Parse the flat key-value parameter file format.
///
/// Keys: tau_S_ns, tau_L_ns, delta_m_per_ns, A_L, phase_pq_rad (phase
/// optional, defaults to 0). Lines starting with `#` are comments.
pub fn parse_params_file(text: &str) -> Result<PhysParams, RunError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| RunError::ParamsFile(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        let value: f64 = value.trim().parse().map_err(|_| {
            RunError::ParamsFile(format!("line {}: bad number for {key}", lineno + 1))
        })?;
        map.insert(key.to_string(), value);
    }
    let get = |k: &str| -> Result<f64, RunError> {
        map.get(k).copied().ok_or_else(|| RunError::ParamsFile(format!("missing key {k}")))
    };
    for k in map.keys() {
        if !["tau_S_ns", "tau_L_ns", "delta_m_per_ns", "A_L", "phase_pq_rad"].contains(&k.as_str()) {
            return Err(RunError::ParamsFile(format!("unknown key {k}")));
        }
    }
    Ok(PhysParams::from_raw(
        get("tau_S_ns")?,
        get("tau_L_ns")?,
        get("delta_m_per_ns")?,
        get("A_L")?,
        map.get("phase_pq_rad").copied().unwrap_or(0.0),
    )?)
}

fn params_hash(params: &PhysParams) -> String {
    let canon = format!(
        "tau_S={:e};tau_L={:e};delta_m={:e};A_L={:e};p={:e}+{:e}i;q={:e}+{:e}i;m={:e}",
        params.tau_s,
        params.tau_l,
        params.delta_m,
        params.a_l,
        params.p.re,
        params.p.im,
        params.q.re,
        params.q.im,
        params.mass_mean,
    );
    let digest = Sha256::digest(canon.as_bytes());
    let mut s = String::new();
    for b in digest.iter().take(16) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn grid(t_start: f64, t_end: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|k| t_start + (t_end - t_start) * k as f64 / (samples - 1) as f64)
        .collect()
}

/// Expectation of a (propagated) bilinear observable in the given state,
/// using the exact matrix elements of each state family.
fn expectation_in_state(obs: &BilinearObservable, state: StateSpec, params: &PhysParams) -> f64 {
    match state {
        StateSpec::Flavor { n, n_bar } => {
            observables::expectation_flavor(obs, FlavorCount::new(n, n_bar))
        }
        StateSpec::Ks { n } => {
            let p2 = params.p.norm_sqr();
            let q2 = params.q.norm_sqr();
            let qp = params.q * params.p.conj();
            n as f64
                * (obs.w_aa * p2 + obs.w_ab * qp + obs.w_ba * qp.conj() + obs.w_bb * q2).re
        }
        StateSpec::Kl { n } => {
            let p2 = params.p.norm_sqr();
            let q2 = params.q.norm_sqr();
            let qp = params.q * params.p.conj();
            n as f64
                * (obs.w_aa * p2 - obs.w_ab * qp - obs.w_ba * qp.conj() + obs.w_bb * q2).re
        }
        StateSpec::MixedSingle { p1, p2, w } => {
            (obs.w_aa * p1 + obs.w_bb * p2 + obs.w_ba * w + obs.w_ab * w.conj()).re
        }
    }
}

fn fock_state(
    basis: &fock::FockBasis,
    params: &PhysParams,
    state: StateSpec,
) -> Result<fock::DensityMatrix, RunError> {
    Ok(match state {
        StateSpec::Flavor { n, n_bar } => fock::make_state_flavor(basis, n, n_bar)?,
        StateSpec::Ks { n } => fock::make_state_ks(basis, params, n)?,
        StateSpec::Kl { n } => fock::make_state_kl(basis, params, n)?,
        StateSpec::MixedSingle { p1, p2, w } => fock::make_state_mixed_single(basis, p1, p2, w)?,
    })
}

/// Evaluate a run spec into a time series.
pub fn run(spec: &RunSpec) -> Result<TimeSeries, RunError> {
    spec.validate()?;
    let params = &spec.params;
    let obs0 = observables::make_initial(spec.observable, params)?;
    let times = grid(spec.t_start, spec.t_end, spec.samples);

    let closed = |t: f64| -> Result<f64, RunError> {
        let obst = heisenberg::propagate_closed_form(params, &obs0, t)?;
        Ok(expectation_in_state(&obst, spec.state, params))
    };
    let ode = |t: f64| -> Result<f64, RunError> {
        let obst = heisenberg::propagate_ode(params, &obs0, t, 1e-10, 1e-12)?;
        Ok(expectation_in_state(&obst, spec.state, params))
    };

    let fock_column = |spec: &RunSpec| -> Result<Vec<f64>, RunError> {
        let basis = fock::build_basis(spec.cutoff);
        let ops = fock::build_lindblad_set(params, &basis)?;
        let obs_mat = fock::observable_matrix(&basis, &obs0);
        let mut rho = fock_state(&basis, params, spec.state)?;
        let mut values = Vec::with_capacity(times.len());
        let mut t_prev = 0.0;
        for &t in &times {
            rho = fock::evolve_density(&ops, &rho, t - t_prev, 1e-11, 1e-13)?;
            t_prev = t;
            values.push(rho.expectation(&obs_mat));
        }
        Ok(values)
    };

    let (columns, data): (Vec<String>, Vec<Vec<f64>>) = match spec.mode {
        EvalMode::ClosedForm => {
            let col: Result<Vec<f64>, _> = times.iter().map(|&t| closed(t)).collect();
            (vec!["value".into()], vec![col?])
        }
        EvalMode::Ode => {
            let col: Result<Vec<f64>, _> = times.iter().map(|&t| ode(t)).collect();
            (vec!["value".into()], vec![col?])
        }
        EvalMode::Fock => (vec!["value".into()], vec![fock_column(spec)?]),
        EvalMode::Compare => {
            let c: Result<Vec<f64>, _> = times.iter().map(|&t| closed(t)).collect();
            let c = c?;
            let o: Result<Vec<f64>, _> = times.iter().map(|&t| ode(t)).collect();
            let o = o?;
            let f = fock_column(spec)?;
            let dev: Vec<f64> = (0..times.len())
                .map(|i| {
                    (c[i] - o[i])
                        .abs()
                        .max((c[i] - f[i]).abs())
                        .max((o[i] - f[i]).abs())
                })
                .collect();
            (
                vec!["closed_form".into(), "ode".into(), "fock".into(), "max_deviation".into()],
                vec![c, o, f, dev],
            )
        }
    };

    let mut metadata = BTreeMap::new();
    metadata.insert("observable".into(), spec.observable.name().into());
    metadata.insert("state".into(), spec.state.describe());
    metadata.insert("mode".into(), spec.mode.name().into());
    metadata.insert("params_source".into(), spec.params_source.clone());
    metadata.insert("params_hash".into(), params_hash(params));
    metadata.insert("tau_S_ns".into(), format!("{}", params.tau_s));
    metadata.insert("tau_L_ns".into(), format!("{}", params.tau_l));
    metadata.insert("delta_m_per_ns".into(), format!("{}", params.delta_m));
    metadata.insert("A_L".into(), format!("{}", params.a_l));
    metadata.insert("phase_pq_rad".into(), format!("{}", (params.p / params.q).arg()));
    metadata.insert("t_start_ns".into(), format!("{}", spec.t_start));
    metadata.insert("t_end_ns".into(), format!("{}", spec.t_end));
    metadata.insert("samples".into(), format!("{}", spec.samples));
    if matches!(spec.mode, EvalMode::Fock | EvalMode::Compare) {
        metadata.insert("cutoff".into(), format!("{}", spec.cutoff));
    }
    if spec.mode == EvalMode::Compare {
        metadata.insert("tol".into(), format!("{}", spec.tol));
    }

    let rows = times
        .iter()
        .enumerate()
        .map(|(i, &t)| TimeSeriesRow { t_ns: t, values: data.iter().map(|col| col[i]).collect() })
        .collect();
    Ok(TimeSeries { metadata, columns, rows })
}

/// The closed-form mean particle number evaluated with real-valued (n+n̄, n−n̄); the difference curves in
/// the figures treat the two as independent parameters.
fn mean_n_general(params: &PhysParams, n_sum: f64, n_diff: f64, t: f64) -> f64 {
    let es = (-params.gamma_s * t).exp();
    let el = (-params.gamma_l * t).exp();
    let ch = 0.5 * (el + es);
    let co = (-params.gamma * t).exp() * (params.delta_m * t).cos();
    let a = params.a_l;
    ((ch - a * a * co) * n_sum - a * (ch - co) * n_diff) / (1.0 - a * a)
}

fn mean_s_general(params: &PhysParams, n_sum: f64, n_diff: f64, t: f64) -> f64 {
    let es = (-params.gamma_s * t).exp();
    let el = (-params.gamma_l * t).exp();
    let ch = 0.5 * (el + es);
    let co = (-params.gamma * t).exp() * (params.delta_m * t).cos();
    let a = params.a_l;
    ((co - a * a * ch) * n_diff + a * (ch - co) * n_sum) / (1.0 - a * a)
}

/// Emit the four figure datasets into `out_dir` (fig1 … fig4, in the
/// requested format). Returns the written paths.
pub fn figures(
    out_dir: &Path,
    params: &PhysParams,
    format: OutputFormat,
) -> Result<Vec<std::path::PathBuf>, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let times = grid(0.0, 9.0, 901);
    let cp = PhysParams::from_raw(params.tau_s, params.tau_l, params.delta_m, 0.0, 0.0)?
        .with_mass_mean(params.mass_mean);
    let mut written = Vec::new();

    let mut emit = |name: &str, description: &str, columns: Vec<String>, cols: Vec<Vec<f64>>| -> Result<(), RunError> {
        let mut metadata = BTreeMap::new();
        metadata.insert("figure".into(), name.to_string());
        metadata.insert("description".into(), description.to_string());
        metadata.insert("params_hash".into(), params_hash(params));
        metadata.insert("A_L".into(), format!("{}", params.a_l));
        let rows = times
            .iter()
            .enumerate()
            .map(|(i, &t)| TimeSeriesRow { t_ns: t, values: cols.iter().map(|c| c[i]).collect() })
            .collect();
        let series = TimeSeries { metadata, columns, rows };
        let ext = match format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        };
        let path = out_dir.join(format!("{name}.{ext}"));
        std::fs::write(&path, series.render(format))?;
        written.push(path);
        Ok(())
    };

    // fig1: <N> for n+nbar = 1..5, plus CP differences for n+nbar = 4, n-nbar = 0..4
    {
        let mut columns = Vec::new();
        let mut cols = Vec::new();
        for total in 1..=5u32 {
            columns.push(format!("N_total{total}"));
            cols.push(
                times
                    .iter()
                    .map(|&t| mean_n_general(params, total as f64, 0.0, t))
                    .collect(),
            );
        }
        for diff in 0..=4u32 {
            columns.push(format!("dN_sum4_diff{diff}"));
            cols.push(
                times
                    .iter()
                    .map(|&t| {
                        mean_n_general(params, 4.0, diff as f64, t)
                            - mean_n_general(&cp, 4.0, diff as f64, t)
                    })
                    .collect(),
            );
        }
        emit(
            "fig1",
            "mean particle number vs time; CP-violated minus CP-preserved differences",
            columns,
            cols,
        )?;
    }

    // fig2: <S> for n+nbar = 4, n-nbar = 0..4, plus differences for n+nbar = 1..5, n-nbar = 0
    {
        let mut columns = Vec::new();
        let mut cols = Vec::new();
        for diff in 0..=4u32 {
            columns.push(format!("S_sum4_diff{diff}"));
            cols.push(
                times
                    .iter()
                    .map(|&t| mean_s_general(params, 4.0, diff as f64, t))
                    .collect(),
            );
        }
        for total in 1..=5u32 {
            columns.push(format!("dS_sum{total}_diff0"));
            cols.push(
                times
                    .iter()
                    .map(|&t| {
                        mean_s_general(params, total as f64, 0.0, t)
                            - mean_s_general(&cp, total as f64, 0.0, t)
                    })
                    .collect(),
            );
        }
        emit(
            "fig2",
            "mean strangeness vs time; CP-violated minus CP-preserved differences",
            columns,
            cols,
        )?;
    }

    // fig3 and fig4: flavor numbers for n = 1..3, nbar = 0..2
    for (name, desc, f) in [
        (
            "fig3",
            "mean number of K0 vs time",
            observables::mean_number_k0 as fn(&PhysParams, FlavorCount, f64) -> f64,
        ),
        (
            "fig4",
            "mean number of K0bar vs time",
            observables::mean_number_k0bar as fn(&PhysParams, FlavorCount, f64) -> f64,
        ),
    ] {
        let mut columns = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for n in 1..=3u32 {
            for n_bar in 0..=2u32 {
                columns.push(format!("n{n}_nbar{n_bar}"));
                cols.push(
                    times
                        .iter()
                        .map(|&t| f(params, FlavorCount::new(n, n_bar), t))
                        .collect(),
                );
            }
        }
        emit(name, desc, columns, cols)?;
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// verification suites

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Invariants,
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub suite: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub params_hash: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Deterministic pseudo-random stream for the randomized checks
/// (SplitMix64); keeps `verify` output reproducible without an RNG
/// dependency in the library.
struct Stream(u64);

impl Stream {
    fn new(seed: u64) -> Self {
        Stream(seed)
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// uniform in [0, 1)
    fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

fn flavor_states_up_to(total: u32) -> Vec<FlavorCount> {
    let mut out = Vec::new();
    for t in 1..=total {
        for n_bar in 0..=t {
            out.push(FlavorCount::new(t - n_bar, n_bar));
        }
    }
    out
}

struct CheckCtx {
    params: PhysParams,
    checks: Vec<CheckResult>,
    tol_override: Option<f64>,
}

impl CheckCtx {
    fn push(&mut self, name: &str, suite: Suite, deviation: f64, default_tol: f64) {
        let tolerance = self.tol_override.unwrap_or(default_tol);
        self.checks.push(CheckResult {
            name: name.to_string(),
            suite: match suite {
                Suite::Oracle => "oracle".into(),
                Suite::Invariants => "invariants".into(),
                Suite::All => "all".into(),
            },
            deviation,
            tolerance,
            pass: deviation <= tolerance,
        });
    }
}

fn check_tri_oracle(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let params = ctx.params.clone();
    let times: Vec<f64> = (1..=20).map(|k| 9.0 * k as f64 / 20.0).collect();
    let states = flavor_states_up_to(3);
    let basis = fock::build_basis(3);
    let ops = fock::build_lindblad_set(&params, &basis)?;
    let mut dev_ode: f64 = 0.0;
    let mut dev_fock: f64 = 0.0;
    let initials: Vec<(ObservableKind, BilinearObservable)> = ObservableKind::ALL
        .iter()
        .map(|&k| (k, observables::make_initial(k, &params).unwrap()))
        .collect();
    for &state in &states {
        let mut rho = fock::make_state_flavor(&basis, state.n, state.n_bar)?;
        let mut t_prev = 0.0;
        for &t in &times {
            rho = fock::evolve_density(&ops, &rho, t - t_prev, 1e-11, 1e-13)?;
            t_prev = t;
            for (_, obs0) in &initials {
                let closed = heisenberg::propagate_closed_form(&params, obs0, t)?;
                let via_closed = observables::expectation_flavor(&closed, state);
                let ode = heisenberg::propagate_ode(&params, obs0, t, 1e-11, 1e-13)?;
                let via_ode = observables::expectation_flavor(&ode, state);
                let mat = fock::observable_matrix(&basis, obs0);
                let via_fock = rho.expectation(&mat);
                dev_ode = dev_ode.max((via_closed - via_ode).abs());
                dev_fock = dev_fock.max((via_closed - via_fock).abs());
            }
        }
    }
    ctx.push("tri-oracle-closed-vs-ode", Suite::Oracle, dev_ode, 1e-9);
    ctx.push("tri-oracle-closed-vs-fock", Suite::Oracle, dev_fock, 1e-8);
    Ok(())
}

fn check_hermiticity(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let params = ctx.params.clone();
    let mut rng = Stream::new(0x6b616f6e_01);
    let mut dev: f64 = 0.0;
    for _ in 0..1000 {
        let obs = BilinearObservable::hermitian(
            rng.range(-2.0, 2.0),
            Complex64::new(rng.range(-2.0, 2.0), rng.range(-2.0, 2.0)),
            rng.range(-2.0, 2.0),
        );
        let t = rng.range(0.0, 10.0 * params.tau_s);
        let out = heisenberg::propagate_closed_form(&params, &obs, t)?;
        dev = dev.max((out.w_ab - out.w_ba.conj()).norm());
    }
    ctx.push("hermiticity-preservation", Suite::Invariants, dev, 1e-12);
    Ok(())
}

fn check_cp_limits(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let p = &ctx.params;
    let cp = PhysParams::from_raw(p.tau_s, p.tau_l, p.delta_m, 0.0, 0.0)?;
    let mut dev: f64 = 0.0;
    for k in 0..=90 {
        let t = 9.0 * k as f64 / 90.0;
        let ch = 0.5 * ((-cp.gamma_s * t).exp() + (-cp.gamma_l * t).exp());
        let co = (-cp.gamma * t).exp() * (cp.delta_m * t).cos();
        for st in flavor_states_up_to(3) {
            let n_sum = st.total() as f64;
            let n_diff = st.n as f64 - st.n_bar as f64;
            let n_expect = ch * n_sum;
            let s_expect = co * n_diff;
            let n_got = observables::mean_total_number(&cp, st, t);
            let s_got = observables::mean_strangeness(&cp, st, t);
            dev = dev.max((n_got - n_expect).abs() / n_expect.abs().max(1e-300));
            if s_expect != 0.0 {
                dev = dev.max((s_got - s_expect).abs() / s_expect.abs());
            } else {
                dev = dev.max(s_got.abs());
            }
        }
    }
    ctx.push("cp-preserved-limits", Suite::Invariants, dev, 1e-14);
    Ok(())
}

fn check_geiger_nuttall(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let params = ctx.params.clone();
    let basis = fock::build_basis(3);
    let ops = fock::build_lindblad_set(&params, &basis)?;
    let ks_mat = fock::observable_matrix(
        &basis,
        &observables::make_initial(ObservableKind::NumberKS, &params)?,
    );
    let kl_mat = fock::observable_matrix(
        &basis,
        &observables::make_initial(ObservableKind::NumberKL, &params)?,
    );
    let times = [0.0, 0.05, 0.1, 0.5, 1.0];
    let mut dev_gn: f64 = 0.0;
    let mut dev_cross: f64 = 0.0;
    for n in 1..=3u32 {
        let mut rho_s = fock::make_state_ks(&basis, &params, n)?;
        let mut rho_l = fock::make_state_kl(&basis, &params, n)?;
        let mut t_prev = 0.0;
        for &t in &times {
            rho_s = fock::evolve_density(&ops, &rho_s, t - t_prev, 1e-11, 1e-13)?;
            rho_l = fock::evolve_density(&ops, &rho_l, t - t_prev, 1e-11, 1e-13)?;
            t_prev = t;
            dev_gn = dev_gn
                .max((rho_s.expectation(&ks_mat) - observables::mean_ks_in_ns(&params, n, t)).abs())
                .max((rho_l.expectation(&kl_mat) - observables::mean_kl_in_nl(&params, n, t)).abs());
            let cross_sl = observables::mean_ks_in_nl(&params, n, t);
            let cross_ls = observables::mean_kl_in_ns(&params, n, t);
            if cross_sl > 0.0 {
                dev_cross = dev_cross.max((rho_l.expectation(&ks_mat) - cross_sl).abs() / cross_sl);
            }
            // the short-lived direction is compared only while it is
            // above the integrator's absolute resolution
            if cross_ls > 0.0 && t <= 0.1 {
                dev_cross = dev_cross.max((rho_s.expectation(&kl_mat) - cross_ls).abs() / cross_ls);
            }
        }
    }
    ctx.push("geiger-nuttall", Suite::Invariants, dev_gn, 1e-8);
    ctx.push("cross-flavor-fraction", Suite::Invariants, dev_cross, 1e-6);
    Ok(())
}

fn check_overlap_and_commutator(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let params = ctx.params.clone();
    let basis = fock::build_basis(3);
    let rho_s = fock::make_state_ks(&basis, &params, 1)?;
    let rho_l = fock::make_state_kl(&basis, &params, 1)?;
    // <1S|1L> from Tr[|1S><1S| |1L><1L|] = |<1S|1L>|²; recover magnitude,
    // then fix the sign via the strangeness expectation; simpler and exact:
    // rebuild the vectors through the S expectation identity. Use the
    // matrix element directly instead.
    let overlap2 = (&rho_s.matrix * &rho_l.matrix).trace().re;
    let dev_overlap = (overlap2.max(0.0).sqrt() - params.a_l.abs()).abs();
    let a = fock::build_ladder(&basis, fock::Mode::A);
    let b = fock::build_ladder(&basis, fock::Mode::B);
    let cs = a.map(|z| z * params.p.conj()) + b.map(|z| z * params.q.conj());
    let cl = a.map(|z| z * params.p.conj()) - b.map(|z| z * params.q.conj());
    let comm = &cs * cl.adjoint() - cl.adjoint() * &cs;
    let mut dev_comm: f64 = 0.0;
    for (i, &(n, nb)) in basis.labels().iter().enumerate() {
        if n + nb + 1 > basis.cutoff() {
            continue;
        }
        for (j, &(m, mb)) in basis.labels().iter().enumerate() {
            if m + mb + 1 > basis.cutoff() {
                continue;
            }
            let expected = if i == j { Complex64::new(params.a_l, 0.0) } else { Complex64::new(0.0, 0.0) };
            dev_comm = dev_comm.max((comm[(i, j)] - expected).norm());
        }
    }
    ctx.push("ks-kl-overlap", Suite::Invariants, dev_overlap, 1e-12);
    ctx.push("ks-kl-commutator", Suite::Invariants, dev_comm, 1e-12);
    Ok(())
}

fn check_density_sanity(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let params = ctx.params.clone();
    let basis = fock::build_basis(2);
    let ops = fock::build_lindblad_set(&params, &basis)?;
    let n_mat = fock::observable_matrix(
        &basis,
        &observables::make_initial(ObservableKind::TotalNumber, &params)?,
    );
    let mut dev_trace: f64 = 0.0;
    let mut dev_positivity: f64 = 0.0;
    let mut dev_monotone: f64 = 0.0;
    for state in [
        StateSpec::Flavor { n: 1, n_bar: 1 },
        StateSpec::Flavor { n: 2, n_bar: 0 },
        StateSpec::Ks { n: 2 },
        StateSpec::MixedSingle { p1: 0.4, p2: 0.3, w: Complex64::new(0.2, 0.1) },
    ] {
        let mut rho = fock_state(&basis, &params, state)?;
        let mut prev_n = f64::INFINITY;
        let mut t_prev = 0.0;
        for k in 0..=200 {
            let t = 9.0 * k as f64 / 200.0;
            rho = fock::evolve_density(&ops, &rho, t - t_prev, 1e-11, 1e-13)?;
            t_prev = t;
            dev_trace = dev_trace.max((rho.trace().re - 1.0).abs()).max(rho.trace().im.abs());
            dev_positivity = dev_positivity.max(-rho.min_eigenvalue());
            let n = rho.expectation(&n_mat);
            dev_monotone = dev_monotone.max(n - prev_n);
            prev_n = n;
        }
    }
    ctx.push("density-trace", Suite::Invariants, dev_trace, 1e-9);
    ctx.push("density-positivity", Suite::Invariants, dev_positivity.max(0.0), 1e-9);
    ctx.push("number-non-increasing", Suite::Invariants, dev_monotone.max(0.0), 1e-9);
    Ok(())
}

fn check_basis_equivalence(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let basis = fock::build_basis(1);
    let mut rng = Stream::new(0x6b616f6e_02);
    let mut dev: f64 = 0.0;
    let mut param_sets = vec![ctx.params.clone()];
    for _ in 0..10 {
        param_sets.push(
            PhysParams::from_raw(
                rng.range(0.05, 0.5),
                rng.range(5.0, 100.0),
                rng.range(0.5, 10.0),
                rng.range(-0.5, 0.5),
                rng.range(0.0, std::f64::consts::TAU),
            )?
            .with_mass_mean(rng.range(0.0, 500.0)),
        );
    }
    for p in &param_sets {
        let flavor = fock::build_lindblad_set(p, &basis)?;
        let ksl = fock::build_lindblad_set_ksl(p, &basis)?;
        for (x, y) in [
            (&flavor.h, &ksl.h),
            (&flavor.l1, &ksl.l1),
            (&flavor.l2, &ksl.l2),
            (&flavor.k, &ksl.k),
        ] {
            dev = dev.max((x - y).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    ctx.push("basis-equivalence", Suite::Oracle, dev, 1e-12);
    Ok(())
}

fn check_factorization(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let mut dev: f64 = 0.0;
    for &t in &[0.1, 1.0, 5.0] {
        let report = fock::check_two_particle_factorization(&ctx.params, t, 1e-8)?;
        dev = dev.max(report.max_deviation());
    }
    ctx.push("two-particle-factorization", Suite::Oracle, dev, 1e-8);
    Ok(())
}

fn check_semigroup(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let params = ctx.params.clone();
    let mut rng = Stream::new(0x6b616f6e_03);
    let mut dev: f64 = 0.0;
    for _ in 0..50 {
        let t1 = rng.range(0.0, 5.0);
        let t2 = rng.range(0.0, 5.0);
        let m1 = heisenberg::propagator_matrix(&params, t1)?.m;
        let m2 = heisenberg::propagator_matrix(&params, t2)?.m;
        let m12 = heisenberg::propagator_matrix(&params, t1 + t2)?.m;
        dev = dev.max((m12 - m2 * m1).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    ctx.push("semigroup", Suite::Oracle, dev, 1e-10);
    Ok(())
}

fn check_leading_cp_differences(ctx: &mut CheckCtx) -> Result<(), RunError> {
    let p = ctx.params.clone();
    let cp = PhysParams::from_raw(p.tau_s, p.tau_l, p.delta_m, 0.0, 0.0)?;
    let al2 = p.a_l * p.a_l;
    let mut dev: f64 = 0.0;
    type MeanFn = fn(&PhysParams, FlavorCount, f64) -> f64;
    let cases: [(ObservableKind, MeanFn); 4] = [
        (ObservableKind::TotalNumber, observables::mean_total_number),
        (ObservableKind::Strangeness, observables::mean_strangeness),
        (ObservableKind::NumberK0, observables::mean_number_k0),
        (ObservableKind::NumberK0bar, observables::mean_number_k0bar),
    ];
    for (kind, mean) in cases {
        for st in flavor_states_up_to(3) {
            let per_particle = st.total() as f64;
            for k in 0..=90 {
                let t = 9.0 * k as f64 / 90.0;
                let exact = mean(&p, st, t) - mean(&cp, st, t);
                let leading = observables::cp_difference_leading(kind, &p, st, t)?;
                dev = dev.max((exact - leading).abs() / (al2 * per_particle));
            }
        }
    }
    // measured in units of A_L² per particle; bound is 10
    ctx.push("leading-cp-differences", Suite::Invariants, dev, 10.0);
    Ok(())
}

/// Run the verification suites with the given parameters. `tol_override`
/// replaces every check's default tolerance when set.
pub fn verify(
    params: &PhysParams,
    suite: Suite,
    tol_override: Option<f64>,
) -> Result<VerifyReport, RunError> {
    let mut ctx = CheckCtx { params: params.clone(), checks: Vec::new(), tol_override };
    let run_oracle = matches!(suite, Suite::Oracle | Suite::All);
    let run_invariants = matches!(suite, Suite::Invariants | Suite::All);
    if run_oracle {
        check_tri_oracle(&mut ctx)?;
        check_basis_equivalence(&mut ctx)?;
        check_factorization(&mut ctx)?;
        check_semigroup(&mut ctx)?;
    }
    if run_invariants {
        check_hermiticity(&mut ctx)?;
        check_cp_limits(&mut ctx)?;
        check_geiger_nuttall(&mut ctx)?;
        check_overlap_and_commutator(&mut ctx)?;
        check_density_sanity(&mut ctx)?;
        check_leading_cp_differences(&mut ctx)?;
    }
    Ok(VerifyReport { params_hash: params_hash(params), checks: ctx.checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pdg_spec() -> RunSpec {
        RunSpec {
            params: PhysParams::pdg_defaults(),
            params_source: "pdg-default".into(),
            observable: ObservableKind::TotalNumber,
            state: StateSpec::Flavor { n: 1, n_bar: 0 },
            t_start: 0.0,
            t_end: 9.0,
            samples: 91,
            mode: EvalMode::ClosedForm,
            format: OutputFormat::Csv,
            cutoff: 4,
            tol: 1e-8,
        }
    }

    #[test]
    fn closed_form_series_starts_at_one_and_decreases() {
        let series = run(&pdg_spec()).unwrap();
        assert_eq!(series.rows.len(), 91);
        assert!((series.rows[0].values[0] - 1.0).abs() < 1e-14);
        for w in series.rows.windows(2) {
            assert!(w[1].values[0] <= w[0].values[0] + 1e-12);
            assert!(w[1].t_ns > w[0].t_ns);
        }
    }

    #[test]
    fn strangeness_series_cp_preserved_oscillates() {
        let mut spec = pdg_spec();
        spec.params = PhysParams::from_raw(0.08954, 51.16, 5.293, 0.0, 0.0).unwrap();
        spec.observable = ObservableKind::Strangeness;
        for row in run(&spec).unwrap().rows {
            let expected =
                (-spec.params.gamma * row.t_ns).exp() * (spec.params.delta_m * row.t_ns).cos();
            assert!((row.values[0] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn compare_mode_three_routes_agree() {
        let mut spec = pdg_spec();
        spec.mode = EvalMode::Compare;
        spec.samples = 7;
        spec.t_end = 3.0;
        spec.cutoff = 2;
        let series = run(&spec).unwrap();
        assert_eq!(series.columns, vec!["closed_form", "ode", "fock", "max_deviation"]);
        assert!(series.max_compare_deviation().unwrap() <= 1e-8);
    }

    #[test]
    fn ks_state_series_follows_geiger_nuttall() {
        let mut spec = pdg_spec();
        spec.observable = ObservableKind::NumberKS;
        spec.state = StateSpec::Ks { n: 2 };
        spec.t_end = 1.0;
        spec.samples = 11;
        let series = run(&spec).unwrap();
        for row in series.rows {
            let expected = 2.0 * (-spec.params.gamma_s * row.t_ns).exp();
            assert!((row.values[0] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_specs_rejected_field_by_field() {
        let mut spec = pdg_spec();
        spec.t_start = -1.0;
        spec.samples = 1;
        let err = run(&spec).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t_start"), "{msg}");
        assert!(msg.contains("samples"), "{msg}");

        let mut spec = pdg_spec();
        spec.mode = EvalMode::Fock;
        spec.cutoff = 1;
        spec.state = StateSpec::Flavor { n: 2, n_bar: 1 };
        assert!(run(&spec).unwrap_err().to_string().contains("cutoff"));
    }

    #[test]
    fn output_is_deterministic() {
        let spec = pdg_spec();
        let a = run(&spec).unwrap().to_csv();
        let b = run(&spec).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# "));
        assert!(a.contains("params_hash"));
        assert!(a.contains("t_ns,value"));
        let j = run(&spec).unwrap().to_json();
        assert_eq!(j, run(&spec).unwrap().to_json());
    }

    #[test]
    fn params_file_round_trip() {
        let text = "# comment\n\
                    tau_S_ns = 0.08954\n\
                    tau_L_ns = 51.16\n\
                    delta_m_per_ns = 5.293\n\
                    A_L = 0.00332\n\
                    phase_pq_rad = 0\n";
        let p = parse_params_file(text).unwrap();
        assert_eq!(p, PhysParams::pdg_defaults());
        assert!(parse_params_file("tau_S_ns = nope").is_err());
        assert!(parse_params_file("bogus_key = 1").is_err());
        assert!(parse_params_file("tau_S_ns = 1").unwrap_err().to_string().contains("tau_L_ns"));
    }

    #[test]
    fn figures_emit_expected_families() {
        let dir = std::env::temp_dir().join(format!("kaondyn-figs-{}", std::process::id()));
        let paths = figures(&dir, &PhysParams::pdg_defaults(), OutputFormat::Csv).unwrap();
        assert_eq!(paths.len(), 4);
        let fig1 = std::fs::read_to_string(dir.join("fig1.csv")).unwrap();
        let first_data = fig1.lines().find(|l| !l.starts_with('#') && !l.starts_with("t_ns")).unwrap();
        let vals: Vec<f64> = first_data.split(',').map(|v| v.parse().unwrap()).collect();
        // t = 0: curves start at 1..5, differences at 0
        for (i, expect) in (1..=5).enumerate() {
            assert!((vals[1 + i] - expect as f64).abs() < 1e-12);
        }
        for v in &vals[6..] {
            assert!(v.abs() < 1e-12);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn verify_reports_unattainable_tolerance() {
        let report = verify(&PhysParams::pdg_defaults(), Suite::Oracle, Some(1e-30)).unwrap();
        assert!(!report.all_pass());
        assert!(report.checks.iter().all(|c| c.tolerance == 1e-30));
    }
}
