//! Configuration, stage orchestration and artifact files.
//!
//! Every stage rebuilds the grid, the flow and the chain graph from the
//! configuration (cheap and deterministic) and reads the JSON artifacts of
//! earlier stages from the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::chaingraph::{build_chain_graph, compute_cr, compute_scr, ChainGraph, ScrResult};
use crate::error::{Error, Result};
use crate::flows::{build_transition, read_sampled_csv, CircleMarkers, FlowModel, GridTransition, RoofParams};
use crate::lyapunov::{
    combine_pairs, default_margin, lyapunov_field, verify_lyapunov, write_combined_csv, write_field_csv,
    CombinedEvaluator, CombinedLyapunov, LyapunovParams, PairEvaluator, VerifyReport,
};
use crate::pairs::{enumerate_pairs, select_cover, PairCatalog, PairParams};
use crate::space::{Domain, GridSpace, PointId};
use crate::stablesets::{OmegaCache, StableParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Circle,
    Square,
    Roof,
    Identity,
    Custom,
}

impl SystemKind {
    pub fn default_grid(self) -> usize {
        match self {
            SystemKind::Circle => 256,
            SystemKind::Square => 32,
            SystemKind::Roof => 48,
            SystemKind::Identity | SystemKind::Custom => 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub system: SystemKind,
    pub markers: CircleMarkers,
    pub roof: RoofParams,
    /// Domain for the identity and custom systems.
    pub domain: Domain,
    /// Image table for the custom system.
    pub sampled_csv: Option<PathBuf>,
    /// Grid size; `None` picks the system default.
    pub grid_n: Option<usize>,
    pub epsilon: f64,
    /// Further epsilons evaluated by the `scr` and `cr` stages.
    pub extra_epsilons: Vec<f64>,
    #[serde(rename = "T")]
    pub t_step: f64,
    pub m_max: usize,
    /// `None` uses `max(10 resolution, largest epsilon)`.
    pub prune_radius: Option<f64>,
    pub pairs: PairParams,
    pub stable: StableParams,
    pub lyapunov: LyapunovParams,
    pub t_probe: f64,
    /// `None` uses `1e-4 3^{-n_pairs}`.
    pub margin: Option<f64>,
    pub output_dir: PathBuf,
    pub rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Circle,
            markers: CircleMarkers::default(),
            roof: RoofParams::default(),
            domain: Domain::UnitSquare,
            sampled_csv: None,
            grid_n: None,
            epsilon: 0.05,
            extra_epsilons: Vec::new(),
            t_step: 1.0,
            m_max: 4,
            prune_radius: None,
            pairs: PairParams::default(),
            stable: StableParams::default(),
            lyapunov: LyapunovParams::default(),
            t_probe: 1.0,
            margin: None,
            output_dir: PathBuf::from("out"),
            rng_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn for_system(system: SystemKind) -> Self {
        Self { system, ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn grid(&self) -> usize {
        self.grid_n.unwrap_or_else(|| self.system.default_grid())
    }

    /// All epsilons, the primary one first, without repeats.
    pub fn epsilons(&self) -> Vec<f64> {
        let mut out = vec![self.epsilon];
        for &e in &self.extra_epsilons {
            if !out.contains(&e) {
                out.push(e);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.epsilons().iter().any(|&e| !(e > 0.0)) {
            return bad("epsilon must be positive");
        }
        if !(self.t_step > 0.0) || self.m_max == 0 {
            return bad("T and m_max must be positive");
        }
        if !(self.t_probe > 0.0) {
            return bad("t_probe must be positive");
        }
        if self.margin.is_some_and(|m| !(m >= 0.0)) {
            return bad("margin must be nonnegative");
        }
        if let Some(p) = self.prune_radius {
            if self.epsilons().iter().any(|&e| e > p) {
                return bad("every epsilon must be at most the prune radius");
            }
        }
        let lp = &self.lyapunov;
        if lp.orbit_subdivision == 0 || lp.quad_subdivision == 0 || lp.orbit_subdivision % lp.quad_subdivision != 0 {
            return bad("quad_subdivision must divide orbit_subdivision");
        }
        if !(lp.s_max > 0.0) || !(lp.k_horizon > 0.0) {
            return bad("s_max and k_horizon must be positive");
        }
        if self.system == SystemKind::Custom && self.sampled_csv.is_none() {
            return bad("the custom system needs sampled_csv");
        }
        self.markers.validate()
    }
}

/// Grid, flow, transition and chain graph for one configuration.
pub struct System {
    pub config: RunConfig,
    pub space: GridSpace,
    pub flow: FlowModel,
    pub transition: GridTransition,
    pub graph: ChainGraph,
}

impl System {
    pub fn build(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let n = config.grid();
        let (domain, flow) = match config.system {
            SystemKind::Circle => (Domain::Circle, FlowModel::circle(config.markers)?),
            SystemKind::Square => (Domain::UnitSquare, FlowModel::square()),
            SystemKind::Roof => (Domain::Roof, FlowModel::roof(config.roof)?),
            SystemKind::Identity => (config.domain, FlowModel::identity()),
            SystemKind::Custom => (config.domain, FlowModel::identity()),
        };
        let space = GridSpace::build(domain, n)?;
        let flow = match (&config.system, &config.sampled_csv) {
            (SystemKind::Custom, Some(path)) => FlowModel::sampled(read_sampled_csv(path, space.len(), config.t_step)?)?,
            _ => flow,
        };
        let transition = build_transition(&flow, &space, config.t_step, config.m_max)?;
        let prune = prune_radius(config, space.resolution());
        let graph = build_chain_graph(&space, &transition, prune)?;
        Ok(Self { config: config.clone(), space, flow, transition, graph })
    }
}

/// The configured prune radius, or `max(10 resolution, largest epsilon)`.
pub fn prune_radius(config: &RunConfig, resolution: f64) -> f64 {
    config
        .prune_radius
        .unwrap_or_else(|| config.epsilons().into_iter().fold(10.0 * resolution, f64::max))
}

pub const METADATA: &str = "metadata.json";
pub const SCR: &str = "scr.json";
pub const CR: &str = "cr.json";
pub const COMPARE: &str = "compare.json";
pub const PAIRS: &str = "pairs.json";
pub const LYAPUNOV: &str = "lyapunov.json";
pub const COMBINED_CSV: &str = "lyapunov_combined.csv";
pub const VERIFY: &str = "verify_report.json";

pub fn pair_csv_name(k: usize) -> String {
    format!("lyapunov_pair_{k}.csv")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metadata {
    pub config: RunConfig,
    pub flow_profile: String,
    pub domain: Domain,
    pub n_points: usize,
    pub resolution: f64,
    pub prune_radius: f64,
    pub edge_count: usize,
    pub version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScrRuns {
    pub runs: Vec<ScrResult>,
}

impl ScrRuns {
    pub fn at(&self, eps: f64) -> Option<&ScrResult> {
        self.runs.iter().find(|r| r.epsilon == eps)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrRun {
    pub epsilon: f64,
    pub members: Vec<PointId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrRuns {
    pub runs: Vec<CrRun>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub epsilons: Vec<f64>,
    /// Per epsilon: strong chain recurrent nodes that are not chain recurrent.
    pub scr_not_in_cr: Vec<Vec<PointId>>,
    /// Pairs `(e1, e2)` with `e1 < e2` where SCR at `e1` is not inside SCR at `e2`.
    pub monotonicity_failures: Vec<(f64, f64)>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovArtifact {
    pub combined: CombinedLyapunov,
    /// Indices into the pair catalog, in weight order.
    pub pairs: Vec<usize>,
    pub max_quad_bound: Vec<f64>,
    pub uncertified: Vec<Vec<PointId>>,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str, prerequisite: &'static str) -> Result<T> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingCache { file: path, prerequisite });
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn check_len(len: usize, sys: &System, name: &str) -> Result<()> {
    if len != sys.space.len() {
        return Err(Error::InvalidParameter(format!(
            "{name} was written for {len} points, the grid has {}; rerun with the same configuration",
            sys.space.len()
        )));
    }
    Ok(())
}

/// Outcome of a stage that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    PropertyFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Passed => 0,
            Outcome::PropertyFailed => 2,
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Passed
        } else {
            Outcome::PropertyFailed
        }
    }
}

impl System {
    fn out(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn metadata(&self) -> Metadata {
        Metadata {
            config: self.config.clone(),
            flow_profile: self.flow.profile(),
            domain: self.space.domain(),
            n_points: self.space.len(),
            resolution: self.space.resolution(),
            prune_radius: self.graph.prune_radius(),
            edge_count: self.graph.edge_count(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write_metadata(&self) -> Result<()> {
        write_json(self.out(), METADATA, &self.metadata())
    }

    pub fn stage_scr(&self) -> Result<ScrRuns> {
        let res = self.space.resolution();
        let runs = self
            .config
            .epsilons()
            .into_iter()
            .map(|e| compute_scr(&self.graph, e, res))
            .collect::<Result<Vec<_>>>()?;
        let runs = ScrRuns { runs };
        write_json(self.out(), SCR, &runs)?;
        Ok(runs)
    }

    pub fn stage_cr(&self) -> Result<CrRuns> {
        let runs = self
            .config
            .epsilons()
            .into_iter()
            .map(|epsilon| CrRun { epsilon, members: compute_cr(&self.graph, epsilon) })
            .collect();
        let runs = CrRuns { runs };
        write_json(self.out(), CR, &runs)?;
        Ok(runs)
    }

    pub fn stage_compare(&self) -> Result<CompareReport> {
        let scr: ScrRuns = read_json(self.out(), SCR, "scr")?;
        let cr: CrRuns = read_json(self.out(), CR, "cr")?;
        let mut epsilons = Vec::new();
        let mut scr_not_in_cr = Vec::new();
        for s in &scr.runs {
            check_len(s.min_return_cost.len(), self, SCR)?;
            let c = cr.runs.iter().find(|c| c.epsilon == s.epsilon).ok_or(Error::MissingCache {
                file: self.out().join(CR),
                prerequisite: "cr (with the same --epsilon values)",
            })?;
            epsilons.push(s.epsilon);
            scr_not_in_cr.push(s.members.iter().copied().filter(|u| c.members.binary_search(u).is_err()).collect());
        }
        let mut monotonicity_failures = Vec::new();
        for a in &scr.runs {
            for b in &scr.runs {
                if a.epsilon < b.epsilon && a.members.iter().any(|u| !b.is_member(*u)) {
                    monotonicity_failures.push((a.epsilon, b.epsilon));
                }
            }
        }
        let passed = monotonicity_failures.is_empty() && scr_not_in_cr.iter().all(|v: &Vec<PointId>| v.is_empty());
        let report = CompareReport { epsilons, scr_not_in_cr, monotonicity_failures, passed };
        write_json(self.out(), COMPARE, &report)?;
        Ok(report)
    }

    fn primary_scr(&self) -> Result<ScrResult> {
        let scr: ScrRuns = read_json(self.out(), SCR, "scr")?;
        let run = scr.at(self.config.epsilon).cloned().ok_or(Error::MissingCache {
            file: self.out().join(SCR),
            prerequisite: "scr (with the configured --epsilon)",
        })?;
        check_len(run.min_return_cost.len(), self, SCR)?;
        Ok(run)
    }

    pub fn stage_pairs(&self) -> Result<PairCatalog> {
        let scr = self.primary_scr()?;
        let cfg = &self.config;
        let cache = OmegaCache::build(&self.flow, &self.space, cfg.t_step, cfg.stable.n_orbit)?;
        let mut catalog = enumerate_pairs(
            &self.graph,
            &self.transition,
            &self.flow,
            &self.space,
            &cache,
            &scr,
            &cfg.pairs,
            &cfg.stable,
        )?;
        select_cover(&mut catalog, &scr, &self.space);
        write_json(self.out(), PAIRS, &catalog)?;
        Ok(catalog)
    }

    fn evaluators(&self, catalog: &PairCatalog) -> Result<Vec<PairEvaluator>> {
        catalog
            .selected
            .iter()
            .map(|&i| {
                PairEvaluator::new(&self.flow, &self.space, &catalog.pairs[i], self.config.t_step, &self.config.lyapunov)
            })
            .collect()
    }

    pub fn stage_lyapunov(&self) -> Result<LyapunovArtifact> {
        let catalog: PairCatalog = read_json(self.out(), PAIRS, "pairs")?;
        let mut fields = Vec::new();
        for (k, eval) in self.evaluators(&catalog)?.iter().enumerate() {
            let field = lyapunov_field(&self.flow, &self.space, eval, catalog.selected[k])?;
            write_field_csv(&self.out().join(pair_csv_name(k)), &self.space, &field)?;
            fields.push(field);
        }
        let combined = combine_pairs(&fields, self.space.len());
        write_combined_csv(&self.out().join(COMBINED_CSV), &self.space, &combined)?;
        let artifact = LyapunovArtifact {
            combined,
            pairs: catalog.selected.clone(),
            max_quad_bound: fields.iter().map(|f| f.max_quad_bound()).collect(),
            uncertified: fields.iter().map(|f| f.uncertified()).collect(),
        };
        write_json(self.out(), LYAPUNOV, &artifact)?;
        Ok(artifact)
    }

    pub fn stage_verify(&self) -> Result<VerifyReport> {
        let scr = self.primary_scr()?;
        let catalog: PairCatalog = read_json(self.out(), PAIRS, "pairs")?;
        let artifact: LyapunovArtifact = read_json(self.out(), LYAPUNOV, "lyapunov")?;
        check_len(artifact.combined.h_values.len(), self, LYAPUNOV)?;
        if artifact.pairs != catalog.selected {
            return Err(Error::MissingCache { file: self.out().join(LYAPUNOV), prerequisite: "lyapunov (pairs changed)" });
        }
        let eval = CombinedEvaluator { pairs: self.evaluators(&catalog)? };
        let margin = self.config.margin.unwrap_or_else(|| default_margin(artifact.combined.n_pairs));
        let report = verify_lyapunov(
            &artifact.combined,
            &eval,
            &self.flow,
            &self.space,
            &scr,
            &catalog.selected_pairs(),
            self.config.t_probe,
            margin,
        )?;
        write_json(self.out(), VERIFY, &report)?;
        Ok(report)
    }
}

/// Which stage to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Analyze,
    Scr,
    Cr,
    Pairs,
    Lyapunov,
    Verify,
    Compare,
}

/// Runs one stage (or the whole pipeline for `Analyze`) and writes its artifacts.
pub fn run_stage(config: &RunConfig, stage: Stage) -> Result<Outcome> {
    let sys = System::build(config)?;
    sys.write_metadata()?;
    Ok(match stage {
        Stage::Scr => {
            sys.stage_scr()?;
            Outcome::Passed
        }
        Stage::Cr => {
            sys.stage_cr()?;
            Outcome::Passed
        }
        Stage::Compare => Outcome::from_bool(sys.stage_compare()?.passed),
        Stage::Pairs => {
            sys.stage_pairs()?;
            Outcome::Passed
        }
        Stage::Lyapunov => {
            sys.stage_lyapunov()?;
            Outcome::Passed
        }
        Stage::Verify => Outcome::from_bool(sys.stage_verify()?.passed()),
        Stage::Analyze => {
            sys.stage_scr()?;
            sys.stage_cr()?;
            let compare = sys.stage_compare()?;
            sys.stage_pairs()?;
            sys.stage_lyapunov()?;
            let verify = sys.stage_verify()?;
            Outcome::from_bool(compare.passed && verify.passed())
        }
    })
}

/// Alias for the full pipeline.
pub fn run_pipeline(config: &RunConfig) -> Result<Outcome> {
    run_stage(config, Stage::Analyze)
}

/// Sizes the global worker pool from `SCRL_THREADS` (0 or unset: automatic).
pub fn init_threads() -> Result<()> {
    let n = match std::env::var("SCRL_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidParameter(format!("SCRL_THREADS must be a nonnegative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    if n > 0 {
        // A pool may already exist when the library is embedded; keep it then.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Tolerance for oracle comparisons on grids, whose weights are not dyadic
/// and are summed in a different order by the two algorithms.
pub const GRID_ORACLE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCheck {
    pub random: crate::oracle::OracleReport,
    pub grids: Vec<(String, crate::oracle::OracleReport)>,
    pub passed: bool,
}

/// Oracle comparison on `seeds` random graphs of at most 200 nodes and on
/// small grids of the three built-in systems.
pub fn oracle_check(seeds: u64, rng_seed: u64) -> Result<OracleCheck> {
    let random = crate::oracle::run_random(rng_seed..rng_seed + seeds, 200)?;
    let mut grids = Vec::new();
    for (system, n) in [(SystemKind::Circle, 256), (SystemKind::Square, 16), (SystemKind::Roof, 16)] {
        let config = RunConfig { grid_n: Some(n), ..RunConfig::for_system(system) };
        let sys = System::build(&config)?;
        let mut report = crate::oracle::OracleReport::default();
        crate::oracle::check_graph(&sys.graph, &[0.02, 0.05, 0.1], GRID_ORACLE_TOL, &mut report)?;
        grids.push((format!("{system:?} n={n}").to_lowercase(), report));
    }
    let passed = random.passed() && grids.iter().all(|(_, r)| r.passed());
    Ok(OracleCheck { random, grids, passed })
}
