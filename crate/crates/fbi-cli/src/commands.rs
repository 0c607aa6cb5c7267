//! Subcommands. Each one computes, validates and returns a report plus any
//! side files; nothing here writes to disk except through the cache.

use crate::cache::{Cache, CacheError, Kind, Payload};
use crate::config::{Alpha, ConfigError, RunConfig, StateChoice};
use crate::report::{fmt_f64, Check, Csv, Report};
use fbi::bands::{band_energies, build_bundle_with_tol, find_magic_alpha, BlochBundle, MagicAlpha};
use fbi::classify::{generators, orbit_sweep, residual_floor};
use fbi::fock::{build_h_fbi, energy_expectation, ground_space, slater_vector, FockSpace};
use fbi::form_factors::{
    adjoint_residual, compute_table, extend_flavor, normalization_residual, periodicity_residual, sum_rule_check,
    valley_structure_residual, Flavor, FormFactorTable,
};
use fbi::hf::{energy_commutator_form, energy_trace_terms, gs_condition_residuals, DensityMatrix};
use fbi::linalg::{eigh, CMat, CVec};
use fbi::sylvester::{resolve_antipodal, scan, AntipodalVerdict};
use fbi::{build_lattice, KGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

/// Search interval for the magic coupling.
pub const MAGIC_INTERVAL: (f64, f64) = (0.3, 0.9);

/// Lower limit on the commutator form of the energy.
pub const COMMUTATOR_FLOOR: f64 = -1e-12;

/// Lower limit on the oracle spectrum.
pub const SPECTRUM_FLOOR: f64 = -1e-10;

/// Relative agreement of the Fock-space and formula energies.
pub const ORACLE_ENERGY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    MagicAlpha,
    Bands,
    Formfactors,
    HfEnergy,
    CheckGs,
    Sylvester,
    Classify,
    Oracle,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::MagicAlpha,
        Command::Bands,
        Command::Formfactors,
        Command::HfEnergy,
        Command::CheckGs,
        Command::Sylvester,
        Command::Classify,
        Command::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::MagicAlpha => "magic-alpha",
            Command::Bands => "bands",
            Command::Formfactors => "formfactors",
            Command::HfEnergy => "hf-energy",
            Command::CheckGs => "check-gs",
            Command::Sylvester => "sylvester",
            Command::Classify => "classify",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Cache(CacheError),
    Compute(fbi::Error),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => crate::EXIT_CONFIG,
            CliError::Cache(_) => crate::EXIT_CACHE,
            CliError::Compute(_) => crate::EXIT_VALIDATION,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Cache(e) => write!(f, "cache error: {e}"),
            CliError::Compute(e) => write!(f, "computation failed: {e}"),
            CliError::Output(e) => write!(f, "cannot write output: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        CliError::Cache(e)
    }
}

impl From<fbi::Error> for CliError {
    fn from(e: fbi::Error) -> Self {
        CliError::Compute(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// A report and the extra files it produced, named relative to the output
/// directory.
pub struct Outcome {
    pub report: Report,
    pub files: Vec<(String, Vec<u8>)>,
}

/// Shared state for one invocation: the configuration, the disk cache and
/// in-memory copies of everything already built.
pub struct Context {
    pub cfg: RunConfig,
    pub cache: Cache,
    hash: String,
    magic: Option<MagicAlpha>,
    bundles: HashMap<String, Arc<BlochBundle>>,
    tables: HashMap<String, Arc<FormFactorTable>>,
}

fn bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

impl Context {
    pub fn new(cfg: RunConfig) -> Self {
        let cache = Cache::new(cfg.cache.clone());
        let hash = cfg.hash();
        Context { cfg, cache, hash, magic: None, bundles: HashMap::new(), tables: HashMap::new() }
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn lattice(&self) -> fbi::MoireLattice {
        build_lattice(self.cfg.convention)
    }

    /// Plane-wave disk radius.
    pub fn radius(&self) -> f64 {
        self.cfg.shells as f64 * self.lattice().g_norm()
    }

    /// Form-factor cutoff, one shell inside the plane-wave disk.
    pub fn table_radius(&self) -> f64 {
        (self.cfg.shells - 1) as f64 * self.lattice().g_norm()
    }

    fn grid(&self, dims: (usize, usize)) -> CliResult<KGrid> {
        Ok(KGrid::new(&self.lattice(), dims.0, dims.1)?)
    }

    pub fn magic(&mut self) -> CliResult<MagicAlpha> {
        if let Some(m) = &self.magic {
            return Ok(m.clone());
        }
        let key = format!(
            "magic|{}|shells={}|tol={}|interval={},{}",
            self.cfg.convention.id(),
            self.cfg.shells,
            bits(self.cfg.tol.magic),
            bits(MAGIC_INTERVAL.0),
            bits(MAGIC_INTERVAL.1)
        );
        let m = match self.cache.load(Kind::Magic, &key)? {
            Some(Payload::Magic(m)) => m,
            Some(_) => unreachable!("load checks the kind"),
            None => {
                let m = find_magic_alpha(&self.lattice(), self.radius(), MAGIC_INTERVAL, self.cfg.tol.magic)?;
                self.cache.store(&key, &Payload::Magic(m.clone()))?;
                m
            }
        };
        self.magic = Some(m.clone());
        Ok(m)
    }

    pub fn alpha(&mut self) -> CliResult<f64> {
        match self.cfg.alpha {
            Alpha::Fixed(a) => Ok(a),
            Alpha::Auto => Ok(self.magic()?.alpha),
        }
    }

    pub fn bundle(&mut self, dims: (usize, usize)) -> CliResult<Arc<BlochBundle>> {
        let alpha = self.alpha()?;
        let key = format!(
            "bundle|{}|grid={}x{}|radius={}|alpha={}|flat={}",
            self.cfg.convention.id(),
            dims.0,
            dims.1,
            bits(self.radius()),
            bits(alpha),
            bits(self.cfg.tol.flat)
        );
        if let Some(b) = self.bundles.get(&key) {
            return Ok(b.clone());
        }
        let b = match self.cache.load(Kind::Bundle, &key)? {
            Some(Payload::Bundle(b)) => b,
            Some(_) => unreachable!("load checks the kind"),
            None => {
                let grid = self.grid(dims)?;
                let b = build_bundle_with_tol(&grid, alpha, self.radius(), self.cfg.tol.flat)?;
                let p = Payload::Bundle(b);
                self.cache.store(&key, &p)?;
                match p {
                    Payload::Bundle(b) => b,
                    _ => unreachable!(),
                }
            }
        };
        let b = Arc::new(b);
        self.bundles.insert(key, b.clone());
        Ok(b)
    }

    pub fn table(&mut self, dims: (usize, usize), flavor: Flavor) -> CliResult<Arc<FormFactorTable>> {
        let alpha = self.alpha()?;
        let key = format!(
            "table|{}|grid={}x{}|radius={}|alpha={}|flat={}|cut={}|flavor={}",
            self.cfg.convention.id(),
            dims.0,
            dims.1,
            bits(self.radius()),
            bits(alpha),
            bits(self.cfg.tol.flat),
            bits(self.table_radius()),
            flavor.id()
        );
        if let Some(t) = self.tables.get(&key) {
            return Ok(t.clone());
        }
        let t = match self.cache.load(Kind::Table, &key)? {
            Some(Payload::Table(t)) => t,
            Some(_) => unreachable!("load checks the kind"),
            None => {
                let bundle = self.bundle(dims)?;
                let t = if flavor == Flavor::Spinless {
                    compute_table(&bundle, self.table_radius())
                } else {
                    let base = self.table(dims, Flavor::Spinless)?;
                    extend_flavor(&base, &bundle, flavor)?
                };
                let p = Payload::Table(t);
                self.cache.store(&key, &p)?;
                match p {
                    Payload::Table(t) => t,
                    _ => unreachable!(),
                }
            }
        };
        let t = Arc::new(t);
        self.tables.insert(key, t.clone());
        Ok(t)
    }

    fn report(&self, cmd: Command, checks: Vec<Check>, results: Value) -> Report {
        Report::new(cmd.name(), &self.hash, checks, results)
    }

    pub fn run(&mut self, cmd: Command) -> CliResult<Outcome> {
        match cmd {
            Command::MagicAlpha => self.magic_alpha(),
            Command::Bands => self.bands(),
            Command::Formfactors => self.formfactors(),
            Command::HfEnergy => self.hf_energy(),
            Command::CheckGs => self.check_gs(),
            Command::Sylvester => self.sylvester(),
            Command::Classify => self.classify(),
            Command::Oracle => self.oracle(),
        }
    }

    fn magic_alpha(&mut self) -> CliResult<Outcome> {
        let m = self.magic()?;
        let results = json!({
            "alpha": m.alpha,
            "residual": m.residual,
            "evaluations": m.evaluations,
            "shells": self.cfg.shells,
            "radius": self.radius(),
            "interval": [MAGIC_INTERVAL.0, MAGIC_INTERVAL.1],
        });
        let checks = vec![Check::at_most("flat_band_residual", m.residual, self.cfg.tol.magic)];
        Ok(Outcome { report: self.report(Command::MagicAlpha, checks, results), files: Vec::new() })
    }

    /// Lowest singular values of `D_k` on the grid; the spectrum of `H_k`
    /// is these values with both signs.
    fn bands(&mut self) -> CliResult<Outcome> {
        let alpha = self.alpha()?;
        let lattice = self.lattice();
        let grid = self.grid(self.cfg.grid)?;
        let radius = self.radius();
        let count = self.cfg.bands_count;
        let spectra = grid
            .points()
            .par_iter()
            .map(|&k| band_energies(&lattice, k, alpha, radius, count))
            .collect::<fbi::Result<Vec<_>>>()?;
        let mut csv = Csv::new(["k", "kx", "ky", "band", "energy"]);
        for (i, s) in spectra.iter().enumerate() {
            let k = grid.point(i);
            let mut energies: Vec<f64> = s.iter().map(|x| -x).rev().chain(s.iter().copied()).collect();
            energies.sort_by(f64::total_cmp);
            for (n, e) in energies.iter().enumerate() {
                csv.push(vec![i.to_string(), fmt_f64(k.x), fmt_f64(k.y), n.to_string(), fmt_f64(*e)]);
            }
        }
        let flat = spectra.iter().map(|s| s[0]).fold(0.0, f64::max);
        let gap = spectra.iter().filter_map(|s| s.get(1).copied()).fold(f64::INFINITY, f64::min);
        let results = json!({
            "alpha": alpha,
            "grid": [grid.nx, grid.ny],
            "max_flat_residual": flat,
            "min_remote_gap": gap,
            "singular_values": spectra,
        });
        let checks = vec![Check::at_most("max_flat_residual", flat, self.cfg.tol.flat)];
        Ok(Outcome { report: self.report(Command::Bands, checks, results), files: vec![("bands.csv".into(), csv.to_bytes())] })
    }

    fn formfactors(&mut self) -> CliResult<Outcome> {
        let dims = self.cfg.grid;
        let flavor = self.cfg.flavor;
        let bundle = self.bundle(dims)?;
        let base = self.table(dims, Flavor::Spinless)?;
        let table = self.table(dims, flavor)?;
        let tol = self.cfg.tol.clone();
        let nk = table.nk() as f64;
        let norm = normalization_residual(&table);
        let adj = adjoint_residual(&table);
        let sum = sum_rule_check(&base)?;
        let period = periodicity_residual(&bundle, &base, &[[1, 0], [0, 1], [-1, 1]])?;
        let mut checks = vec![
            Check::at_most("normalization_residual", norm, tol.identity),
            Check::at_most("adjoint_residual", adj, tol.identity),
            Check::at_most("periodicity_residual", period, tol.identity),
            Check::at_most("sum_rule_residual", sum.max, tol.sum_rule * nk),
        ];
        if flavor != Flavor::Spinless {
            checks.push(Check::at_most(
                "valley_structure_residual",
                valley_structure_residual(&table)?,
                fbi::form_factors::STRUCTURE_TOL,
            ));
        }
        let results = json!({
            "flavor": flavor.id(),
            "grid": [table.grid().nx, table.grid().ny],
            "cutoff": table.radius(),
            "transfers": table.transfers().len(),
            "tail_norm": table.tail_norm(),
            "tail_warning": table.tail_warning(),
            "sum_rule_worst_g": sum.worst_g,
            "max_flat_residual": bundle.max_residual(),
        });
        let mut files = Vec::new();
        if self.cfg.export_table {
            files.push(("formfactors_table.json".into(), crate::report::to_json(&table_json(&table))));
        }
        Ok(Outcome { report: self.report(Command::Formfactors, checks, results), files })
    }

    fn state(&mut self, table: &FormFactorTable) -> CliResult<(DensityMatrix, Value)> {
        match self.cfg.state {
            StateChoice::Ferro(i) => {
                let gens = generators(table.flavor());
                let p0 = gens.get(i).ok_or(fbi::Error::InvalidGenerator { index: i, count: gens.len() })?;
                let p = DensityMatrix::translation_invariant(table.flavor(), table.nk(), p0)?;
                Ok((p, json!({ "kind": "ferro", "generator": i })))
            }
            StateChoice::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                let p = DensityMatrix::random_half_filled(&mut rng, table.flavor(), table.nk());
                Ok((p, json!({ "kind": "random", "seed": self.cfg.seed })))
            }
        }
    }

    fn hf_energy(&mut self) -> CliResult<Outcome> {
        let table = self.table(self.cfg.grid, self.cfg.flavor)?;
        let v = self.cfg.interaction();
        v.validate()?;
        let (p, state) = self.state(&table)?;
        let terms = energy_trace_terms(&p, &table, &v)?;
        let comm = energy_commutator_form(&p, &table, &v)?;
        let diff = (terms.total - comm).abs();
        let checks = vec![
            Check::at_most("form_disagreement", diff, self.cfg.tol.energy * (1.0 + terms.total.abs())),
            Check::at_least("commutator_form", comm, COMMUTATOR_FLOOR),
        ];
        let results = json!({
            "state": state,
            "filling": p.filling(),
            "direct": terms.direct,
            "constant": terms.constant,
            "exchange": terms.exchange,
            "trace_form": terms.total,
            "commutator_form": comm,
            "per_momentum": comm / table.nk() as f64,
        });
        Ok(Outcome { report: self.report(Command::HfEnergy, checks, results), files: Vec::new() })
    }

    fn check_gs(&mut self) -> CliResult<Outcome> {
        let table = self.table(self.cfg.grid, self.cfg.flavor)?;
        let (p, state) = self.state(&table)?;
        let r = gs_condition_residuals(&p, &table)?;
        let floor = residual_floor(&table, &p.block(0, 0));
        let checks = vec![
            Check::at_most("trace_residual", r.trace, self.cfg.tol.gs),
            Check::at_most("commutator_residual", r.commutator, self.cfg.tol.gs),
        ];
        let results = json!({
            "state": state,
            "trace_residual": r.trace,
            "commutator_residual": r.commutator,
            "worst_trace_transfer": [r.worst_trace.k, r.worst_trace.g[0], r.worst_trace.g[1]],
            "worst_commutator_transfer": [r.worst_commutator.k, r.worst_commutator.g[0], r.worst_commutator.g[1]],
            "rounding_floor": floor,
        });
        Ok(Outcome { report: self.report(Command::CheckGs, checks, results), files: Vec::new() })
    }

    fn sylvester(&mut self) -> CliResult<Outcome> {
        let table = self.table(self.cfg.grid, self.cfg.flavor)?;
        let grid = table.grid().clone();
        let n = grid.len();
        let reports = scan(&table);
        let mut dims = vec![vec![0usize; n]; n];
        let mut ambiguous = Vec::new();
        let mut stray = 0usize;
        let mut min_gap = f64::INFINITY;
        for r in &reports {
            dims[r.k][r.kp] = r.dim;
            if r.ambiguous {
                ambiguous.push([r.k, r.kp]);
            }
            let special = r.kp == r.k || r.kp == grid.antipode(r.k);
            if !special {
                if r.dim != 0 {
                    stray += 1;
                }
                min_gap = min_gap.min(r.eigenvalues.first().copied().unwrap_or(f64::INFINITY));
            }
        }
        let mut antipodal = Vec::new();
        let mut unresolved = 0usize;
        for k in 0..n {
            if grid.is_self_antipodal(k) {
                continue;
            }
            let verdict = resolve_antipodal(&table, k)?;
            let entry = match verdict {
                AntipodalVerdict::ForcedZero { witness } => json!({ "k": k, "forced_zero": true, "witness": witness }),
                AntipodalVerdict::Inconclusive => {
                    unresolved += 1;
                    json!({ "k": k, "forced_zero": false })
                }
            };
            antipodal.push(entry);
        }
        let mut csv = Csv::new(std::iter::once("k".to_string()).chain((0..n).map(|j| format!("kp{j}"))));
        for (i, row) in dims.iter().enumerate() {
            csv.push(std::iter::once(i.to_string()).chain(row.iter().map(|d| d.to_string())).collect());
        }
        let checks = vec![
            Check::at_most("ambiguous_pairs", ambiguous.len() as f64, 0.0),
            Check::at_most("nonzero_generic_pairs", stray as f64, 0.0),
            Check::at_most("unresolved_antipodal", unresolved as f64, 0.0),
        ];
        let results = json!({
            "flavor": table.flavor().id(),
            "grid": [grid.nx, grid.ny],
            "kernel_dims": dims,
            "diagonal": (0..n).map(|k| dims[k][k]).collect::<Vec<_>>(),
            "self_antipodal": (0..n).filter(|&k| grid.is_self_antipodal(k)).collect::<Vec<_>>(),
            "ambiguous": ambiguous,
            "min_generic_eigenvalue": min_gap,
            "antipodal": antipodal,
        });
        Ok(Outcome {
            report: self.report(Command::Sylvester, checks, results),
            files: vec![("sylvester_dims.csv".into(), csv.to_bytes())],
        })
    }

    fn classify(&mut self) -> CliResult<Outcome> {
        let dims = self.cfg.grid;
        let table = self.table(dims, self.cfg.flavor)?;
        let bundle = self.bundle(dims)?;
        let v = self.cfg.interaction();
        v.validate()?;
        let gens = generators(table.flavor());
        // reference: the worst of the generator states themselves, the
        // flat-band residual and the rounding floor
        let mut reference = bundle.max_residual();
        for p0 in &gens {
            let p = DensityMatrix::translation_invariant(table.flavor(), table.nk(), p0)?;
            let r = gs_condition_residuals(&p, &table)?;
            reference = reference.max(r.trace).max(r.commutator).max(residual_floor(&table, p0));
        }
        let sweeps = orbit_sweep(&table, &v, self.cfg.samples, self.cfg.seed)?;
        let worst = sweeps.iter().map(|s| s.max_trace.max(s.max_commutator)).fold(0.0, f64::max);
        let checks = vec![Check::at_most("orbit_residual", worst, 10.0 * reference)];
        let list: Vec<Value> = sweeps
            .iter()
            .map(|s| {
                json!({
                    "generator": s.index,
                    "diagonal": s.diagonal,
                    "singleton": s.singleton,
                    "orbit_spread": s.orbit_spread,
                    "max_trace_residual": s.max_trace,
                    "max_commutator_residual": s.max_commutator,
                    "energy_min": s.energy_min,
                    "energy_max": s.energy_max,
                    "max_chern_commutator": s.max_chern,
                })
            })
            .collect();
        let results = json!({
            "flavor": table.flavor().id(),
            "samples": self.cfg.samples,
            "seed": self.cfg.seed,
            "reference_residual": reference,
            "generators": list,
        });
        Ok(Outcome { report: self.report(Command::Classify, checks, results), files: Vec::new() })
    }

    /// Brute force on the oracle grid, spinless.
    fn oracle(&mut self) -> CliResult<Outcome> {
        let table = self.table(self.cfg.oracle_grid, Flavor::Spinless)?;
        let v = self.cfg.interaction();
        v.validate()?;
        let space = FockSpace::for_table(&table)?;
        let h = build_h_fbi(&table, &v)?;
        let gs = ground_space(&h, self.cfg.tol.oracle)?;
        let lmin = gs.eigenvalues.first().copied().unwrap_or(0.0);
        let number = space.number_operator();
        let half = (table.dim() / 2 * table.nk()) as f64;
        let filling = (0..gs.dim)
            .map(|i| {
                let col: CVec = gs.zero_space.column(i).into_owned();
                (number.expectation(&col).re - half).abs()
            })
            .fold(0.0, f64::max);
        let mut slaters = Vec::new();
        let mut energies = Vec::new();
        let mut disagreement: f64 = 0.0;
        for p0 in generators(Flavor::Spinless) {
            let p = DensityMatrix::translation_invariant(Flavor::Spinless, table.nk(), &p0)?;
            let xi = occupied_orbitals(p.matrix());
            let psi = slater_vector(&space, &xi)?;
            let e_fock = energy_expectation(&table, &v, &psi)?;
            let e_formula = energy_trace_terms(&p, &table, &v)?.total;
            disagreement = disagreement.max((e_fock - e_formula).abs() / (1.0 + e_formula.abs()));
            energies.push(json!({ "fock": e_fock, "formula": e_formula }));
            slaters.push(psi);
        }
        let fm_max = energies.iter().filter_map(|e| e["fock"].as_f64()).fold(0.0, f64::max);
        let angles = gs.angles_to(&slaters);
        let checks = vec![
            Check::at_least("lambda_min", lmin, SPECTRUM_FLOOR),
            Check::at_most("zero_space_filling_deviation", filling, self.cfg.tol.oracle),
            Check::at_most("ferro_energy", fm_max, self.cfg.tol.oracle),
            Check::at_most("energy_disagreement", disagreement, ORACLE_ENERGY_TOL),
        ];
        let results = json!({
            "grid": [table.grid().nx, table.grid().ny],
            "modes": space.modes(),
            "fock_dim": space.dim(),
            "lambda_min": lmin,
            "zero_space_dim": gs.dim,
            "ferro_energies": energies,
            "principal_angles": angles,
            "lowest_eigenvalues": gs.eigenvalues.iter().take(8).collect::<Vec<_>>(),
        });
        Ok(Outcome { report: self.report(Command::Oracle, checks, results), files: Vec::new() })
    }
}

/// Eigenvectors of a projector with eigenvalue above one half.
fn occupied_orbitals(p: &CMat) -> CMat {
    let (vals, vecs) = eigh(p);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
    CMat::from_fn(p.nrows(), cols.len(), |r, c| vecs[(r, cols[c])])
}

fn table_json(table: &FormFactorTable) -> Value {
    let d = table.dim();
    let entries: Vec<Value> = (0..table.nk())
        .flat_map(|k| {
            table.transfers().iter().enumerate().map(move |(t, p)| {
                let e = table.entry(k, t);
                let re: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| e[(i, j)].re).collect()).collect();
                let im: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| e[(i, j)].im).collect()).collect();
                json!({ "k": k, "q": p.k, "g": p.g, "re": re, "im": im })
            })
        })
        .collect();
    json!({
        "flavor": table.flavor().id(),
        "grid": [table.grid().nx, table.grid().ny],
        "cutoff": table.radius(),
        "entries": entries,
    })
}
