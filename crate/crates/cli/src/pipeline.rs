use std::fmt;
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use stokeslab::bifurcation::{
    branch_switch, detect_t0, roots_from_sweep, solve_tm, thread_roots, BranchSampler, RootSample, SubharmonicPoint,
    TauRootCurve,
};
use stokeslab::continuation::{branch_monitors, continue_branch, Branch, ContinuationOptions, Monitor};
use stokeslab::dispersion::{find_tau_star, sigma_table, SigmaTable};
use stokeslab::spectra::{bloch_curvature, bloch_sweep, morse_counts, BlochCurvature, BlochCurves, MorseCounts, NodalDomains};
use stokeslab::stream::{critical_data, primitive, solve_uniform_stream, StreamError, UniformStream};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Stream,
    Dispersion,
    Continuation,
    Spectra,
    Bifurcation,
    Export,
}

impl Stage {
    pub fn number(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Stream => "stream",
            Stage::Dispersion => "dispersion",
            Stage::Continuation => "continuation",
            Stage::Spectra => "spectra",
            Stage::Bifurcation => "bifurcation",
            Stage::Export => "export",
        };
        write!(f, "stage {} ({name})", self.number())
    }
}

#[derive(Debug, Error)]
#[error("{stage}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    fn at<E: std::error::Error + Send + Sync + 'static>(stage: Stage) -> impl FnOnce(E) -> Self {
        move |e| Self { stage, source: Box::new(e) }
    }

    /// Bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        self.source.is::<ConfigError>()
            || matches!(
                self.source.downcast_ref::<StreamError>(),
                Some(StreamError::NoWavesForR { .. } | StreamError::InvalidTable(_) | StreamError::SubcriticalSlope { .. })
            )
    }
}

#[derive(Debug, Error)]
#[error("R = {r} has no supercritical stream root")]
pub struct NoSupercriticalRoot {
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub config: RunConfig,
    pub grid: (usize, usize),
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub s: f64,
    pub d: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub s_c: f64,
    pub r_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub tau_star: f64,
    #[serde(rename = "Lambda0")]
    pub lambda0: f64,
    pub sigma0: f64,
    pub table: SigmaTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesSummary {
    pub t0: f64,
    pub bracket: (f64, f64),
    pub mu: Vec<f64>,
    pub band: f64,
    pub kernel_dim: usize,
    pub nodal: NodalDomains,
    pub pattern_ok: bool,
    pub lambda: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureRow {
    pub t: f64,
    pub curvature: BlochCurvature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseRow {
    pub t: f64,
    pub counts: MorseCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchSummary {
    pub m: usize,
    pub t_m: f64,
    pub eps: f64,
    pub residual: f64,
    pub deviation: f64,
    pub crests: Vec<f64>,
    pub lambda: f64,
}

/// A stage outcome that did not stop the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub provenance: Provenance,
    pub stream: StreamSummary,
    pub dispersion: DispersionSummary,
    pub monitors: Vec<Monitor>,
    pub bloch: Vec<BlochCurves>,
    pub curvature: Vec<CurvatureRow>,
    pub morse: Vec<MorseRow>,
    pub t0: Option<StokesSummary>,
    pub window: (f64, f64),
    pub root_samples: Vec<RootSample>,
    pub tau_curves: Vec<TauRootCurve>,
    pub subharmonic: Vec<SubharmonicPoint>,
    pub switch: Option<SwitchSummary>,
    pub notes: Vec<Note>,
}

impl BifurcationReport {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn stream_stage(cfg: &RunConfig) -> Result<(UniformStream, StreamSummary), PipelineError> {
    let vm = Arc::new(primitive(cfg.vorticity.clone()).map_err(PipelineError::at(Stage::Stream))?);
    let cd = critical_data(&vm, cfg.r).map_err(PipelineError::at(Stage::Stream))?;
    let s = cd.s_plus.ok_or_else(|| PipelineError::at(Stage::Stream)(NoSupercriticalRoot { r: cfg.r }))?;
    let stream = solve_uniform_stream(vm, s).map_err(PipelineError::at(Stage::Stream))?;
    let summary = StreamSummary { s: stream.s, d: stream.d, r: stream.r, s_c: cd.s_c, r_c: cd.r_c };
    Ok((stream, summary))
}

pub fn dispersion_stage(stream: &UniformStream) -> Result<DispersionSummary, PipelineError> {
    let dc = find_tau_star(stream).map_err(PipelineError::at(Stage::Dispersion))?;
    let taus: Vec<f64> = (1..=100).map(|k| 0.02 * k as f64 * dc.tau_star).collect();
    let table = sigma_table(stream, &taus).map_err(PipelineError::at(Stage::Dispersion))?;
    Ok(DispersionSummary { tau_star: dc.tau_star, lambda0: dc.lambda0(), sigma0: dc.sigma0, table })
}

pub fn branch_stage(cfg: &RunConfig, stream: &UniformStream, tau_star: f64) -> Result<Branch, PipelineError> {
    let opts = ContinuationOptions::new(cfg.nq, cfg.np, cfg.steps, cfg.step);
    continue_branch(stream, tau_star, &opts).map_err(PipelineError::at(Stage::Continuation))
}

/// Quasi-momentum fractions k/(2n), k = 1..=n.
pub fn fractions(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 0.5 * k as f64 / n as f64).collect()
}

/// stream → dispersion → continuation → spectra → bifurcation. When `cfg.out`
/// is set the branch checkpoints are written as soon as they exist.
pub fn run_pipeline(cfg: &RunConfig) -> Result<BifurcationReport, PipelineError> {
    run_with_branch(cfg, None)
}

/// Same as [`run_pipeline`] but reuses a stored branch when one is given.
pub fn run_with_branch(cfg: &RunConfig, stored: Option<Branch>) -> Result<BifurcationReport, PipelineError> {
    cfg.validate().map_err(PipelineError::at(Stage::Config))?;
    let mut notes = Vec::new();

    info!("{}", Stage::Stream);
    let (stream, stream_summary) = stream_stage(cfg)?;

    info!("{}", Stage::Dispersion);
    let dispersion = dispersion_stage(&stream)?;

    let branch = match stored {
        Some(b) => {
            if (b.r - cfg.r).abs() > 1e-8 || b.points.first().is_some_and(|p| p.hf.nq != cfg.nq || p.hf.np != cfg.np) {
                return Err(PipelineError::at(Stage::Config)(ConfigError::BranchMismatch));
            }
            b
        }
        None => {
            info!("{}", Stage::Continuation);
            let b = branch_stage(cfg, &stream, dispersion.tau_star)?;
            if let Some(out) = &cfg.out {
                b.save(&out.join("branch")).map_err(PipelineError::at(Stage::Continuation))?;
            }
            b
        }
    };
    let monitors = branch_monitors(&branch).map_err(PipelineError::at(Stage::Continuation))?;

    info!("{}", Stage::Spectra);
    let fr = fractions(cfg.tau_samples);
    let bloch: Vec<BlochCurves> = branch
        .points
        .iter()
        .map(|p| bloch_sweep(&p.hf, &fr, 4))
        .collect::<Result<_, _>>()
        .map_err(PipelineError::at(Stage::Spectra))?;
    let mut curvature = Vec::new();
    for p in branch.points.iter().skip(1) {
        match bloch_curvature(&p.hf) {
            Ok(c) => curvature.push(CurvatureRow { t: p.arclength, curvature: c }),
            Err(e) => notes.push(Note { stage: Stage::Spectra, message: format!("curvature at t = {}: {e}", p.arclength) }),
        }
    }

    info!("{}", Stage::Bifurcation);
    let sampler = BranchSampler::new(&stream, &branch).map_err(PipelineError::at(Stage::Bifurcation))?;
    let t_end = branch.points.last().map_or(0.0, |p| p.arclength);
    let t0 = match detect_t0(&stream, &branch) {
        Ok(s) => Some(StokesSummary {
            t0: s.t0,
            bracket: s.bracket,
            mu: s.mu,
            band: s.band,
            kernel_dim: s.kernel_dim,
            nodal: s.nodal,
            pattern_ok: s.pattern_ok,
            lambda: s.hf.lambda,
            amplitude: s.hf.amplitude(),
        }),
        Err(e) => {
            warn!("t0: {e}");
            notes.push(Note { stage: Stage::Bifurcation, message: format!("detect_t0: {e}") });
            None
        }
    };

    let reference = match &t0 {
        Some(s) => branch.points.iter().min_by(|a, b| (a.arclength - s.t0).abs().total_cmp(&(b.arclength - s.t0).abs())),
        None => branch.points.get(1),
    };
    let mut morse = Vec::new();
    if let Some(p) = reference {
        for m in cfg.m_min..=cfg.m_max {
            let counts = morse_counts(&p.hf, m).map_err(PipelineError::at(Stage::Spectra))?;
            morse.push(MorseRow { t: p.arclength, counts });
        }
    }

    let window = cfg.window.unwrap_or((t0.as_ref().map_or(0.0, |s| s.t0), t_end));
    let mut root_samples = Vec::new();
    for (p, sweep) in branch.points.iter().zip(&bloch) {
        if p.arclength > 0.0 && p.arclength >= window.0 && p.arclength <= window.1 {
            root_samples.push(roots_from_sweep(&p.hf, sweep).map_err(PipelineError::at(Stage::Bifurcation))?);
        }
    }
    let tau_curves = match thread_roots(&root_samples) {
        Ok(c) => c,
        Err(e) => {
            notes.push(Note { stage: Stage::Bifurcation, message: format!("thread_roots: {e}") });
            Vec::new()
        }
    };
    if tau_curves.is_empty() {
        notes.push(Note {
            stage: Stage::Bifurcation,
            message: format!("no roots of mu_2 in quasi-momentum on t in [{}, {}]", window.0, window.1),
        });
    }

    let mut subharmonic = Vec::new();
    for m in cfg.m_min..=cfg.m_max {
        match solve_tm(&sampler, &tau_curves, m, cfg.delta) {
            Ok(p) => subharmonic.push(p),
            Err(e) => notes.push(Note { stage: Stage::Bifurcation, message: format!("solve_tM(M = {m}): {e}") }),
        }
    }

    let mut switch = None;
    if let Some(p) = subharmonic.first() {
        let base = sampler.at(p.t_m).map_err(PipelineError::at(Stage::Bifurcation))?;
        match branch_switch(&stream, &base, p.m, cfg.switch_eps) {
            Ok(s) => {
                switch = Some(SwitchSummary {
                    m: p.m,
                    t_m: p.t_m,
                    eps: s.eps,
                    residual: s.residual,
                    deviation: s.deviation,
                    crests: s.crests,
                    lambda: s.hf.lambda,
                })
            }
            Err(e) => notes.push(Note { stage: Stage::Bifurcation, message: format!("branch_switch(M = {}): {e}", p.m) }),
        }
    }

    Ok(BifurcationReport {
        provenance: Provenance {
            config_hash: cfg.hash(),
            config: RunConfig { out: None, ..cfg.clone() },
            grid: (cfg.nq, cfg.np),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        stream: stream_summary,
        dispersion,
        monitors,
        bloch,
        curvature,
        morse,
        t0,
        window,
        root_samples,
        tau_curves,
        subharmonic,
        switch,
        notes,
    })
}
