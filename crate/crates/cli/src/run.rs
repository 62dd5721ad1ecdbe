use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nrbundle::correlations::{bundle_g2_delayed, pair_statistics, Pair};
use nrbundle::entanglement::{witness_report, Partition, WitnessReport};
use nrbundle::hilbert::{AtomLevel, BasisLabel, DensityMatrix, Mode, QuantumState, StateVector};
use nrbundle::liouvillian::{evolve_closed, evolve_open, model_liouvillian, steady_state_with, SteadyOptions};
use nrbundle::model::{
    build_hamiltonian, dressed_states, locate_resonance, resonance_detuning, resonance_residual, DressedLevel, DriveSide, ModelParams,
    ResonanceKind, SystemOperators,
};
use nrbundle::trajectories::{default_observables, JumpSolver, TrajectoryOptions};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{InitialState, PopulationLabel, ResonanceMethod, ScenarioConfig, ScenarioKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Setup(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn setup(e: impl std::fmt::Display) -> RunError {
    RunError::Setup(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub scenario: String,
    pub code_version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub delta_ad: f64,
    pub outputs: Vec<OutputRecord>,
    pub failed_points: usize,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "NaN".into())
}

/// Buffered CSV table written in one piece.
pub struct Table {
    name: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn with_header(name: &str, header: Vec<String>) -> Self {
        Self { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

struct Sink {
    dir: PathBuf,
    outputs: Vec<OutputRecord>,
}

impl Sink {
    fn write(&mut self, name: &str, bytes: &[u8], rows: usize) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| RunError::Io { path: path.clone(), source })?;
        self.outputs.push(OutputRecord { file: name.into(), sha256: hex::encode(Sha256::digest(bytes)), rows });
        Ok(())
    }

    fn table(&mut self, t: &Table) -> Result<(), RunError> {
        self.write(&t.name, &t.bytes(), t.rows.len())
    }
}

fn side_params(base: &ModelParams, side: DriveSide, kappa: Option<f64>) -> ModelParams {
    let p = base.with_side(side);
    match kappa {
        Some(k) => p.with_kappa(k),
        None => p,
    }
}

/// Base parameters with Δ_ad moved onto the configured resonance, if any.
pub fn resolve_params(cfg: &ScenarioConfig) -> Result<ModelParams, RunError> {
    let Some(t) = cfg.resonance else {
        return Ok(cfg.params);
    };
    let x = match t.method.unwrap_or(ResonanceMethod::Located) {
        ResonanceMethod::Located => locate_resonance(t.kind, t.side, &cfg.params, &cfg.space).map_err(setup)?.delta_ad,
        ResonanceMethod::ClosedForm => resonance_detuning(t.kind, t.side, &cfg.params).map_err(setup)?,
    };
    Ok(cfg.params.with_delta_ad(x))
}

fn initial_state(cfg: &ScenarioConfig, p: &ModelParams) -> Result<StateVector, RunError> {
    match cfg.initial_state {
        InitialState::Ground => StateVector::basis(&cfg.space, BasisLabel { atom: AtomLevel::Ground, na: 0, nb: 0, nm: 0 }).map_err(setup),
        InitialState::DressedPlus => {
            let d = dressed_states(p.delta_sigma_d(), p.xi).map_err(setup)?;
            d.product_state(&cfg.space, 0, 0, 0, DressedLevel::Plus).map_err(setup)
        }
    }
}

fn population_states(cfg: &ScenarioConfig, p: &ModelParams) -> Result<Vec<StateVector>, RunError> {
    let d = dressed_states(p.delta_sigma_d(), p.xi).map_err(setup)?;
    cfg.populations
        .iter()
        .map(|l| d.product_state(&cfg.space, l.na, l.nb, l.nm, if l.plus { DressedLevel::Plus } else { DressedLevel::Minus }).map_err(setup))
        .collect()
}

fn population_columns(labels: &[PopulationLabel]) -> Vec<String> {
    labels.iter().map(|l| l.column()).collect()
}

/// Runs `kind` and writes its outputs plus `manifest.json` into `out`.
/// Returns the manifest; `failed_points > 0` signals a partial sweep.
pub fn run_scenario(kind: ScenarioKind, cfg: &ScenarioConfig, config_text: &str, out: &Path, seed_override: Option<u64>) -> Result<RunManifest, RunError> {
    if let Some(s) = cfg.scenario {
        if s != kind {
            return Err(setup(format!("config declares scenario {} but {} was requested", s.as_str(), kind.as_str())));
        }
    }
    fs::create_dir_all(out).map_err(|source| RunError::Io { path: out.to_path_buf(), source })?;
    let mut cfg = cfg.clone();
    cfg.scenario = Some(kind);
    let seed = seed_override.or(cfg.seed);
    let mut sink = Sink { dir: out.to_path_buf(), outputs: Vec::new() };
    let mut timings = Vec::new();
    let start = Instant::now();
    let params = resolve_params(&cfg)?;
    timings.push(("resonance".to_string(), start.elapsed().as_secs_f64()));
    let t0 = Instant::now();
    let failed = match kind {
        ScenarioKind::ResonanceTable => resonances(&cfg, &mut sink)?,
        ScenarioKind::Spectrum => spectrum(&cfg, &params, &mut sink)?,
        ScenarioKind::ClosedDynamics | ScenarioKind::OpenDynamics => dynamics(&cfg, &params, kind == ScenarioKind::OpenDynamics, &mut sink)?,
        ScenarioKind::Trajectory => trajectory(&cfg, &params, seed.ok_or_else(|| setup("seed: trajectories need a seed (config `seed` or --seed)"))?, &mut sink)?,
        ScenarioKind::CorrelationSweep => correlations(&cfg, &params, &mut sink)?,
        ScenarioKind::WitnessSweep => witness(&cfg, &params, &mut sink)?,
    };
    timings.push((kind.as_str().to_string(), t0.elapsed().as_secs_f64()));
    timings.push(("total".to_string(), start.elapsed().as_secs_f64()));
    let canonical = crate::config::canonical_json(config_text).map_err(setup)?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        scenario: kind.as_str().into(),
        code_version: format!("nrbundle {}", nrbundle::VERSION),
        config_sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
        seed,
        threads: rayon::current_num_threads(),
        delta_ad: params.delta_ad,
        outputs: sink.outputs.clone(),
        failed_points: failed,
        timings,
    };
    let path = out.join("manifest.json");
    let mut f = fs::File::create(&path).map_err(|source| RunError::Io { path: path.clone(), source })?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(setup)?;
    writeln!(f).map_err(|source| RunError::Io { path, source })?;
    Ok(manifest)
}

pub const RESONANCE_HEADER: &[&str] = &["kind", "side", "delta_ad_closed_form", "residual", "delta_ad_located", "gap", "error"];

fn resonances(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<usize, RunError> {
    let combos = [
        (ResonanceKind::PhotonMagnon, DriveSide::Left),
        (ResonanceKind::PhotonMagnon, DriveSide::Right),
        (ResonanceKind::PhotonPhonon, DriveSide::Left),
        (ResonanceKind::PhotonPhonon, DriveSide::Right),
    ];
    let rows: Vec<Vec<String>> = combos
        .par_iter()
        .map(|&(kind, side)| {
            let mut row = vec![kind.as_str().to_string(), side.as_str().to_string()];
            match resonance_detuning(kind, side, &cfg.params) {
                Ok(x) => {
                    row.push(num(x));
                    row.push(num(resonance_residual(kind, side, &cfg.params, x)));
                    match locate_resonance(kind, side, &cfg.params, &cfg.space) {
                        Ok(a) => row.extend([num(a.delta_ad), num(a.gap), String::new()]),
                        Err(e) => row.extend([num(f64::NAN), num(f64::NAN), e.to_string()]),
                    }
                }
                Err(e) => row.extend([num(f64::NAN), num(f64::NAN), num(f64::NAN), num(f64::NAN), e.to_string()]),
            }
            row
        })
        .collect();
    let mut t = Table::new("resonances.csv", RESONANCE_HEADER);
    let failed = rows.iter().filter(|r| !r[6].is_empty()).count();
    rows.into_iter().for_each(|r| t.push(r));
    sink.table(&t)?;
    Ok(failed)
}

pub const SPECTRUM_HEADER: &[&str] = &["side", "delta_ad", "n_photon", "n_phonon", "n_magnon", "error"];

fn spectrum(cfg: &ScenarioConfig, p: &ModelParams, sink: &mut Sink) -> Result<usize, RunError> {
    let grid = cfg.require(&cfg.detuning, "detuning").map_err(setup)?;
    let mut t = Table::new("spectrum.csv", SPECTRUM_HEADER);
    let mut failed = 0;
    for &side in &cfg.sides {
        let table = nrbundle::correlations::occupation_spectrum(p, &cfg.space, grid, side).map_err(setup)?;
        failed += table.failures();
        for r in table.rows {
            t.push(vec![side.as_str().into(), num(r.delta_ad), num(r.photon), num(r.phonon), num(r.magnon), r.error.unwrap_or_default()]);
        }
    }
    sink.table(&t)?;
    Ok(failed)
}

fn dynamics_header(cfg: &ScenarioConfig) -> Vec<String> {
    let mut h: Vec<String> = ["side", "t", "n_photon", "n_phonon", "n_magnon", "p_excited"].iter().map(|s| s.to_string()).collect();
    h.extend(population_columns(&cfg.populations));
    h.push("error".into());
    h
}

fn dynamics(cfg: &ScenarioConfig, base: &ModelParams, open: bool, sink: &mut Sink) -> Result<usize, RunError> {
    let times = cfg.require(&cfg.time, "time").map_err(setup)?.to_vec();
    let header = dynamics_header(cfg);
    let width = header.len();
    let ops = SystemOperators::new(&cfg.space);
    let observables = [ops.number(Mode::Photon), ops.number(Mode::Phonon), ops.number(Mode::Magnon), ops.excited_projector()];
    let blocks: Vec<Vec<Vec<String>>> = cfg
        .sides
        .par_iter()
        .map(|&side| {
            let p = side_params(base, side, None);
            let run = || -> Result<Vec<Vec<String>>, String> {
                let psi0 = initial_state(cfg, &p).map_err(|e| e.to_string())?;
                let pops = population_states(cfg, &p).map_err(|e| e.to_string())?;
                let mut rows = Vec::with_capacity(times.len());
                let mut emit = |t: f64, state: &dyn Fn(&nrbundle::hilbert::Operator) -> f64, pop: &dyn Fn(&StateVector) -> f64| {
                    let mut row = vec![side.as_str().to_string(), num(t)];
                    row.extend(observables.iter().map(|o| num(state(o))));
                    row.extend(pops.iter().map(|v| num(pop(v))));
                    row.push(String::new());
                    rows.push(row);
                };
                if open {
                    let l = model_liouvillian(&p, &cfg.space).map_err(|e| e.to_string())?;
                    let rec = evolve_open(&psi0.to_density(), &l, &times).map_err(|e| e.to_string())?;
                    for (t, rho) in rec.times.iter().zip(&rec.states) {
                        emit(*t, &|o| rho.expect(o).map(|z| z.re).unwrap_or(f64::NAN), &|v| density_population(rho, v));
                    }
                } else {
                    let rec = evolve_closed(&psi0, &build_hamiltonian(&p, &cfg.space), &times).map_err(|e| e.to_string())?;
                    for (t, psi) in rec.times.iter().zip(&rec.states) {
                        emit(*t, &|o| psi.expect(o).map(|z| z.re).unwrap_or(f64::NAN), &|v| v.inner(psi).map(|z| z.norm_sqr()).unwrap_or(f64::NAN));
                    }
                }
                Ok(rows)
            };
            run().unwrap_or_else(|e| {
                let mut row = vec![side.as_str().to_string()];
                row.extend(std::iter::repeat_n(num(f64::NAN), width - 2));
                row.push(e);
                vec![row]
            })
        })
        .collect();
    let mut t = Table::with_header("dynamics.csv", header);
    let mut failed = 0;
    for b in blocks {
        failed += b.iter().any(|r| !r.last().unwrap().is_empty()) as usize;
        b.into_iter().for_each(|r| t.push(r));
    }
    sink.table(&t)?;
    Ok(failed)
}

fn density_population(rho: &DensityMatrix, v: &StateVector) -> f64 {
    let a = v.amplitudes();
    (a.adjoint() * rho.matrix() * a)[(0, 0)].re
}

fn trajectory(cfg: &ScenarioConfig, base: &ModelParams, seed: u64, sink: &mut Sink) -> Result<usize, RunError> {
    let times = cfg.require(&cfg.time, "time").map_err(setup)?.to_vec();
    let obs = default_observables(&cfg.space);
    let mut record_header: Vec<String> = ["side", "seed", "t"].iter().map(|s| s.to_string()).collect();
    record_header.extend(obs.iter().map(|(n, _)| n.clone()));
    record_header.extend(population_columns(&cfg.populations));
    let mut record = Table::with_header("trajectory.csv", record_header);
    let mut jumps = Table::new("jumps.csv", &["side", "seed", "time", "channel"]);
    let mut ens_header: Vec<String> = vec!["side".into(), "t".into()];
    for (n, _) in &obs {
        ens_header.push(format!("{n}_mean"));
        ens_header.push(format!("{n}_stderr"));
    }
    let mut ensemble = Table::with_header("ensemble.csv", ens_header);
    let mut delays = Table::new("delays.csv", &["side", "pair", "kind", "delay"]);
    let opts = TrajectoryOptions { max_step: cfg.max_step, ..TrajectoryOptions::default() };
    for &side in &cfg.sides {
        let p = side_params(base, side, None);
        let psi0 = initial_state(cfg, &p)?;
        let solver = JumpSolver::from_model(&p, &cfg.space, opts).map_err(setup)?;
        let first = solver.run(&psi0, &times, seed).map_err(setup)?;
        let pops = population_states(cfg, &p)?;
        for (t, psi) in first.times.iter().zip(&first.states) {
            let mut row = vec![side.as_str().to_string(), seed.to_string(), num(*t)];
            row.extend(obs.iter().map(|(_, o)| num(psi.expect(o).map(|z| z.re).unwrap_or(f64::NAN))));
            row.extend(pops.iter().map(|v| num(v.inner(psi).map(|z| z.norm_sqr()).unwrap_or(f64::NAN))));
            record.push(row);
        }
        let summary = solver.ensemble(&psi0, &times, cfg.trajectories, seed, &obs).map_err(setup)?;
        for (k, js) in summary.jumps.iter().enumerate() {
            for j in js {
                jumps.push(vec![side.as_str().into(), seed.wrapping_add(k as u64).to_string(), num(j.time), j.channel.as_str().into()]);
            }
        }
        for (i, t) in summary.times.iter().enumerate() {
            let mut row = vec![side.as_str().to_string(), num(*t)];
            for s in &summary.observables {
                row.push(num(s.mean[i]));
                row.push(num(s.stderr[i]));
            }
            ensemble.push(row);
        }
        for pair in [Pair::Ab, Pair::Am] {
            let d = summary.pair_delays(pair);
            for (kind, v) in [("intra", &d.intra), ("inter", &d.inter)] {
                for x in v {
                    delays.push(vec![side.as_str().into(), pair.as_str().into(), kind.into(), num(*x)]);
                }
            }
        }
    }
    for t in [&record, &jumps, &ensemble, &delays] {
        sink.table(t)?;
    }
    Ok(0)
}

/// κ × side grid in deterministic order (κ outer).
fn sweep_points(cfg: &ScenarioConfig) -> Vec<(Option<f64>, DriveSide)> {
    let kappas: Vec<Option<f64>> = match &cfg.kappa {
        Some(k) => k.iter().map(|&x| Some(x)).collect(),
        None => vec![None],
    };
    kappas.iter().flat_map(|&k| cfg.sides.iter().map(move |&s| (k, s))).collect()
}

fn solve(cfg: &ScenarioConfig, p: &ModelParams) -> Result<(DensityMatrix, f64), String> {
    let l = model_liouvillian(p, &cfg.space).map_err(|e| e.to_string())?;
    let rep = steady_state_with(&l, &SteadyOptions::default()).map_err(|e| e.to_string())?;
    Ok((rep.rho, rep.residual))
}

pub const CORRELATION_HEADER: &[&str] =
    &["kappa", "side", "delta_ad", "n_photon", "n_phonon", "n_magnon", "g1_ab", "g2_ab", "g1_am", "g2_am", "flags", "residual", "error"];

fn correlations(cfg: &ScenarioConfig, base: &ModelParams, sink: &mut Sink) -> Result<usize, RunError> {
    let points = sweep_points(cfg);
    let taus = cfg.tau.clone();
    let results: Vec<(Vec<String>, Vec<Vec<String>>)> = points
        .par_iter()
        .map(|&(k, side)| {
            let p = side_params(base, side, k);
            let mut row = vec![num(p.kappa_a), side.as_str().into(), num(p.delta_ad)];
            let mut delayed = Vec::new();
            match solve(cfg, &p).and_then(|(rho, res)| pair_statistics(&rho).map(|s| (rho, res, s)).map_err(|e| e.to_string())) {
                Ok((rho, res, s)) => {
                    let flags: Vec<&str> = [Pair::Ab, Pair::Am].into_iter().filter(|&q| s.antibunched_bundles(q)).map(|q| if q == Pair::Ab { "ab_bundle" } else { "am_bundle" }).collect();
                    row.extend([num(s.n_photon), num(s.n_phonon), num(s.n_magnon), opt(s.g1_ab), opt(s.g2_ab), opt(s.g1_am), opt(s.g2_am), flags.join(";"), num(res), String::new()]);
                    if let Some(taus) = &taus {
                        let l = model_liouvillian(&p, &cfg.space).expect("validated above");
                        for pair in [Pair::Ab, Pair::Am] {
                            match bundle_g2_delayed(&l, &rho, pair, taus) {
                                Ok(r) => delayed.extend(r.taus.iter().zip(&r.values).map(|(t, g)| vec![num(p.kappa_a), side.as_str().into(), pair.as_str().into(), num(*t), num(*g), String::new()])),
                                Err(e) => delayed.push(vec![num(p.kappa_a), side.as_str().into(), pair.as_str().into(), num(f64::NAN), num(f64::NAN), e.to_string()]),
                            }
                        }
                    }
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(num(f64::NAN), 7));
                    row.extend([String::new(), num(f64::NAN), e]);
                }
            }
            (row, delayed)
        })
        .collect();
    let mut t = Table::new("correlations.csv", CORRELATION_HEADER);
    let mut d = Table::new("g2_delayed.csv", &["kappa", "side", "pair", "tau", "g2", "error"]);
    let mut failed = 0;
    for (row, delayed) in results {
        failed += (!row[12].is_empty() || delayed.iter().any(|r| !r[5].is_empty())) as usize;
        t.push(row);
        delayed.into_iter().for_each(|r| d.push(r));
    }
    sink.table(&t)?;
    if taus.is_some() {
        sink.table(&d)?;
    }
    Ok(failed)
}

pub const WITNESS_HEADER: &[&str] = &[
    "kappa", "side", "D1_ab", "D1_ab_sigma", "D1_am", "D1_am_sigma", "W1_ab", "W1_ab_sigma", "W1_am", "W1_am_sigma", "W2_ab_sigma", "W2_am_sigma", "error",
];

#[derive(Serialize)]
struct WitnessPoint {
    kappa: f64,
    side: DriveSide,
    reports: Vec<(Partition, WitnessReport)>,
    error: Option<String>,
}

fn witness(cfg: &ScenarioConfig, base: &ModelParams, sink: &mut Sink) -> Result<usize, RunError> {
    let points = sweep_points(cfg);
    let order = [Partition::Ab, Partition::AbSigma, Partition::Am, Partition::AmSigma];
    let results: Vec<WitnessPoint> = points
        .par_iter()
        .map(|&(k, side)| {
            let p = side_params(base, side, k);
            let out = solve(cfg, &p).and_then(|(rho, _)| {
                order.iter().map(|&q| witness_report(&rho, q).map(|r| (q, r)).map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()
            });
            match out {
                Ok(reports) => WitnessPoint { kappa: p.kappa_a, side, reports, error: None },
                Err(e) => WitnessPoint { kappa: p.kappa_a, side, reports: Vec::new(), error: Some(e) },
            }
        })
        .collect();
    let mut t = Table::new("witness.csv", WITNESS_HEADER);
    let mut failed = 0;
    for w in &results {
        let mut row = vec![num(w.kappa), w.side.as_str().into()];
        if let Some(e) = &w.error {
            failed += 1;
            row.extend(std::iter::repeat_n(num(f64::NAN), 10));
            row.push(e.clone());
        } else {
            let r = |q: Partition| &w.reports.iter().find(|(x, _)| *x == q).unwrap().1;
            row.extend(order.iter().map(|&q| num(r(q).d1)));
            row.extend(order.iter().map(|&q| num(r(q).w1)));
            row.push(opt(r(Partition::AbSigma).w2));
            row.push(opt(r(Partition::AmSigma).w2));
            row.push(String::new());
        }
        t.push(row);
    }
    sink.table(&t)?;
    let json = serde_json::to_vec_pretty(&results).map_err(setup)?;
    sink.write("witness.json", &json, results.len())?;
    Ok(failed)
}
