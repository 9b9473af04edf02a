//! Item tables, synthetic data, and the (phi, gamma) experiment grid with CSV
//! and SVG output.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{
    auto_sigma, build_c_gaussian, preset_group_bounds, GroupPreset, UncertainUtilityModel,
    DEFAULT_TRIALS,
};
use crate::error::{Error, Result};
use crate::metrics::{
    alpha_bound_blocks, baseline_greedy_group_fair, baseline_sjk21_if, baseline_unconstrained,
    bvn_from_lp, compute_metrics,
};
use crate::model::{consecutive_blocks, dcg_discounts, laminar_conflicts, Group, Instance};
use crate::pipeline::{run_main_detailed, Provenance, RankingPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub utility: f64,
    pub groups: Vec<String>,
}

/// Items with utilities and (possibly nested) group labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ItemTable {
    pub items: Vec<Item>,
}

impl ItemTable {
    /// Distinct group labels in sorted order.
    pub fn group_ids(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.items.iter().flat_map(|it| &it.groups).collect();
        set.into_iter().cloned().collect()
    }

    pub fn to_groups(&self) -> Vec<Group> {
        self.group_ids()
            .into_iter()
            .map(|id| {
                let members = self
                    .items
                    .iter()
                    .enumerate()
                    .filter(|(_, it)| it.groups.contains(&id))
                    .map(|(i, _)| i)
                    .collect();
                Group::new(id, members)
            })
            .collect()
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.utility).collect()
    }

    /// Rejects duplicate ids, non-finite utilities and crossing groups.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for it in &self.items {
            if !seen.insert(&it.id) {
                return Err(Error::Parse(format!("duplicate item id {}", it.id)));
            }
            if !(it.utility.is_finite() && it.utility >= 0.0) {
                return Err(Error::Parse(format!("item {} has utility {}", it.id, it.utility)));
            }
        }
        let groups = self.to_groups();
        if let Some(&(a, b)) = laminar_conflicts(&groups).first() {
            return Err(Error::Parse(format!(
                "groups {} and {} overlap without nesting",
                groups[a].id, groups[b].id
            )));
        }
        Ok(())
    }
}

/// Parameters of the two-group synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub m: usize,
    pub majority_frac: f64,
    pub mu_major: f64,
    pub mu_minor: f64,
    /// Standard deviation of utilities around each group mean.
    pub sd: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            m: 100,
            majority_frac: 0.6,
            mu_major: 0.7,
            mu_minor: 0.35,
            sd: 0.1,
        }
    }
}

/// Two groups `G1` (majority) and `G2`; utilities normal around each group's
/// mean, clipped to `[0, 1]`.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<ItemTable> {
    if !(spec.majority_frac > 0.0 && spec.majority_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "majority fraction {} outside (0,1)",
            spec.majority_frac
        )));
    }
    let sd_ok = spec.sd.is_finite() && spec.sd >= 0.0;
    if !sd_ok {
        return Err(Error::InvalidArgument(format!("sd {} is invalid", spec.sd)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let major = (spec.m as f64 * spec.majority_frac).round() as usize;
    let mut labels: Vec<bool> = (0..spec.m).map(|i| i < major).collect();
    labels.shuffle(&mut rng);
    let hi = Normal::new(spec.mu_major, spec.sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let lo = Normal::new(spec.mu_minor, spec.sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let items = labels
        .iter()
        .enumerate()
        .map(|(i, &is_major)| {
            let u = if is_major { hi.sample(&mut rng) } else { lo.sample(&mut rng) };
            Item {
                id: format!("{}", i + 1),
                utility: u.clamp(0.0, 1.0),
                groups: vec![if is_major { "G1" } else { "G2" }.to_string()],
            }
        })
        .collect();
    Ok(ItemTable { items })
}

#[derive(Serialize, Deserialize)]
struct ItemRow {
    id: String,
    utility: f64,
    /// Semicolon-separated group labels.
    groups: String,
}

pub fn load_items_csv(path: impl AsRef<Path>) -> Result<ItemTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut items = Vec::new();
    for row in rdr.deserialize() {
        let row: ItemRow = row?;
        let groups = row
            .groups
            .split(';')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(String::from)
            .collect();
        items.push(Item {
            id: row.id,
            utility: row.utility,
            groups,
        });
    }
    let table = ItemTable { items };
    table.validate()?;
    Ok(table)
}

pub fn write_items_csv(table: &ItemTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for it in &table.items {
        w.serialize(ItemRow {
            id: it.id.clone(),
            utility: it.utility,
            groups: it.groups.join(";"),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Uniform subset of `m` items with at least `ceil(n / p)` items from every
/// group, redrawing up to a fixed number of times.
pub fn subsample_items(table: &ItemTable, m: usize, n: usize, seed: u64) -> Result<ItemTable> {
    let ids = table.group_ids();
    let p = ids.len().max(1);
    let quota = n.div_ceil(p);
    if m > table.items.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} items from {}",
            table.items.len()
        )));
    }
    for g in &ids {
        let have = table.items.iter().filter(|it| it.groups.contains(g)).count();
        if have < quota || quota * ids.len() > m {
            return Err(Error::InvalidArgument(format!(
                "group {g} cannot supply {quota} of {m} items"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let mut idx: Vec<usize> = (0..table.items.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(m);
        idx.sort_unstable();
        let ok = ids.iter().all(|g| {
            idx.iter()
                .filter(|&&i| table.items[i].groups.contains(g))
                .count()
                >= quota
        });
        if ok {
            return Ok(ItemTable {
                items: idx.iter().map(|&i| table.items[i].clone()).collect(),
            });
        }
    }
    Err(Error::InvalidArgument(
        "no subsample met the per-group quota after 1000 draws".into(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Main,
    Sjk21GfIf,
    Sjk21If,
    Csv18Greedy,
    Unconstrained,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Main,
        Algorithm::Sjk21GfIf,
        Algorithm::Sjk21If,
        Algorithm::Csv18Greedy,
        Algorithm::Unconstrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Main => "main",
            Algorithm::Sjk21GfIf => "sjk21-gf-if",
            Algorithm::Sjk21If => "sjk21-if",
            Algorithm::Csv18Greedy => "csv18-greedy",
            Algorithm::Unconstrained => "unconstrained",
        }
    }

    fn color(self) -> &'static str {
        match self {
            Algorithm::Main => "#d62728",
            Algorithm::Sjk21GfIf => "#1f77b4",
            Algorithm::Sjk21If => "#2ca02c",
            Algorithm::Csv18Greedy => "#ff7f0e",
            Algorithm::Unconstrained => "#7f7f7f",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        /// Items drawn per seed; all items when absent.
        m: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub n: usize,
    pub k: usize,
    pub phis: Vec<f64>,
    pub gammas: Vec<f64>,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "synthetic".into(),
            dataset: DatasetSpec::Synthetic(SyntheticSpec::default()),
            n: 40,
            k: 20,
            phis: vec![1.0, 1.5, 2.0],
            gammas: vec![0.0, 0.5, 1.0],
            trials: DEFAULT_TRIALS,
            seeds: vec![1],
            algorithms: Algorithm::ALL.to_vec(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.k == 0 || self.n == 0 {
            return Err(Error::InvalidArgument("n and k must be positive".into()));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::InvalidArgument(format!("gamma {g} outside [0,1]")));
        }
        if self.phis.iter().any(|&f| f < 1.0) {
            return Err(Error::InvalidArgument("phi must be at least 1".into()));
        }
        if self.seeds.is_empty() || self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("need at least one seed and one algorithm".into()));
        }
        Ok(())
    }
}

/// One algorithm on one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub dataset: String,
    pub seed: u64,
    pub algorithm: String,
    pub phi: f64,
    pub gamma: f64,
    pub status: String,
    pub g_violation: f64,
    pub i_violation: f64,
    pub utility_norm: f64,
    pub runtime_ms: f64,
    #[serde(rename = "T_terms")]
    pub t_terms: usize,
    /// Expected utility divided by the LP optimum (LP-based algorithms only).
    pub lp_ratio: f64,
    pub alpha_bound: f64,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Instance for one dataset draw before the grid parameters are applied.
struct Draw {
    seed: u64,
    base: Instance,
    c_full: crate::model::Matrix,
}

fn prepare_draw(cfg: &ExperimentConfig, seed: u64) -> Result<Draw> {
    let table = match &cfg.dataset {
        DatasetSpec::Synthetic(spec) => gen_synthetic(spec, seed)?,
        DatasetSpec::Csv { path, m } => {
            let t = load_items_csv(path)?;
            match m {
                Some(m) => subsample_items(&t, *m, cfg.n, seed)?,
                None => t,
            }
        }
    };
    let rho = table.utilities();
    if cfg.n > rho.len() {
        return Err(Error::InvalidArgument(format!(
            "n={} exceeds the {} available items",
            cfg.n,
            rho.len()
        )));
    }
    let blocks = consecutive_blocks(cfg.n, cfg.k);
    let base = Instance::vacuous(rho.clone(), dcg_discounts(cfg.n), blocks, table.to_groups());
    let sigma = auto_sigma(&rho, cfg.k);
    let model = UncertainUtilityModel::homoscedastic(rho, sigma)?;
    let c_full = build_c_gaussian(&model, &base.blocks, 1.0, cfg.trials, seed)?;
    Ok(Draw { seed, base, c_full })
}

fn cell_instance(draw: &Draw, phi: f64, gamma: f64) -> Result<Instance> {
    let mut inst = draw.base.clone();
    let (l, u) = preset_group_bounds(GroupPreset::PhiUpper { phi }, &inst.blocks, &inst.groups, inst.m())?;
    inst.lower = l;
    inst.upper = u;
    let mut c = draw.c_full.clone();
    c.scale(gamma);
    inst.c = c;
    inst.ensure_valid()?;
    Ok(inst)
}

fn row_for(
    cfg: &ExperimentConfig,
    seed: u64,
    alg: Algorithm,
    phi: f64,
    gamma: f64,
    alpha: f64,
    outcome: Result<(RankingPolicy, f64)>,
    inst: Option<&Instance>,
) -> ResultRow {
    let mut row = ResultRow {
        dataset: cfg.name.clone(),
        seed,
        algorithm: alg.name().into(),
        phi,
        gamma,
        status: "ok".into(),
        g_violation: f64::NAN,
        i_violation: f64::NAN,
        utility_norm: f64::NAN,
        runtime_ms: 0.0,
        t_terms: 0,
        lp_ratio: f64::NAN,
        alpha_bound: alpha,
    };
    let res = outcome.and_then(|(pol, ms)| {
        let inst = inst.expect("instance present when the algorithm ran");
        let rep = compute_metrics(&pol, inst)?;
        Ok((pol, ms, rep))
    });
    match res {
        Ok((pol, ms, rep)) => {
            row.g_violation = rep.g_violation;
            row.i_violation = rep.i_violation;
            row.utility_norm = rep.utility_normalized;
            row.runtime_ms = ms;
            row.t_terms = rep.terms;
            if let Some(opt) = pol.lp_objective {
                if opt > 0.0 {
                    row.lp_ratio = rep.expected_utility / opt;
                }
            }
        }
        Err(e @ Error::Infeasible { .. }) => row.status = format!("infeasible: {e}"),
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64() * 1e3))
}

fn run_cell(cfg: &ExperimentConfig, draw: &Draw, phi: f64, gamma: f64) -> Vec<ResultRow> {
    let inst = cell_instance(draw, phi, gamma);
    let alpha = inst
        .as_ref()
        .map(|i| alpha_bound_blocks(&i.v, &i.blocks))
        .unwrap_or(f64::NAN);
    let mut algs = cfg.algorithms.clone();
    algs.sort();
    algs.dedup();
    let mut main_lp = None;
    let mut rows = Vec::with_capacity(algs.len());
    for alg in algs {
        let outcome: Result<(RankingPolicy, f64)> = match &inst {
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
            Ok(inst) => match alg {
                Algorithm::Main => timed(|| {
                    let run = run_main_detailed(inst)?;
                    main_lp = Some(run.lp.clone());
                    Ok(run.policy)
                }),
                Algorithm::Sjk21GfIf => timed(|| match &main_lp {
                    Some(lp) => bvn_from_lp(inst, lp, Provenance::BvnGroupIndividual),
                    None => crate::metrics::baseline_sjk21_gf_if(inst),
                }),
                Algorithm::Sjk21If => timed(|| baseline_sjk21_if(inst)),
                Algorithm::Csv18Greedy => timed(|| baseline_greedy_group_fair(inst)),
                Algorithm::Unconstrained => timed(|| Ok(baseline_unconstrained(inst))),
            },
        };
        rows.push(row_for(cfg, draw.seed, alg, phi, gamma, alpha, outcome, inst.as_ref().ok()));
    }
    rows
}

/// Runs every (seed, phi, gamma) cell in parallel; rows come back sorted by
/// seed, phi, gamma and algorithm.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let draws: Vec<Result<Draw>> = cfg.seeds.par_iter().map(|&s| prepare_draw(cfg, s)).collect();
    let mut cells = Vec::new();
    for (d, &seed) in draws.iter().zip(&cfg.seeds) {
        for &phi in &cfg.phis {
            for &gamma in &cfg.gammas {
                cells.push((d, seed, phi, gamma));
            }
        }
    }
    let mut rows: Vec<ResultRow> = cells
        .par_iter()
        .flat_map_iter(|&(d, seed, phi, gamma)| match d {
            Ok(draw) => run_cell(cfg, draw, phi, gamma),
            Err(e) => {
                let mut algs = cfg.algorithms.clone();
                algs.sort();
                algs.dedup();
                algs.into_iter()
                    .map(|alg| {
                        row_for(
                            cfg,
                            seed,
                            alg,
                            phi,
                            gamma,
                            f64::NAN,
                            Err(Error::InvalidArgument(format!("dataset: {e}"))),
                            None,
                        )
                    })
                    .collect()
            }
        })
        .collect();
    let alg_rank: BTreeMap<&str, usize> = Algorithm::ALL
        .iter()
        .enumerate()
        .map(|(k, a)| (a.name(), k))
        .collect();
    rows.sort_by(|a, b| {
        a.seed
            .cmp(&b.seed)
            .then(a.phi.total_cmp(&b.phi))
            .then(a.gamma.total_cmp(&b.gamma))
            .then(alg_rank[a.algorithm.as_str()].cmp(&alg_rank[b.algorithm.as_str()]))
    });
    Ok(rows)
}

/// Comment line written above the CSV header.
pub const CSV_COMMENT: &str = "# discount v_j = 1/log2(1+j); utility normalized by the unconstrained optimum";

pub fn write_results_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CSV_COMMENT.as_bytes());
    out.push(b'\n');
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Scatter plot of `y` against group violation, one panel per gamma, marker
/// radius proportional to phi.
pub fn scatter_svg(rows: &[ResultRow], y_label: &str, y: impl Fn(&ResultRow) -> f64) -> String {
    let gammas: Vec<f64> = {
        let mut g: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    };
    let (pw, ph, pad) = (260.0, 260.0, 40.0);
    let width = pad + gammas.len().max(1) as f64 * (pw + pad);
    let height = ph + 2.0 * pad + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (k, &g) in gammas.iter().enumerate() {
        let x0 = pad + k as f64 * (pw + pad);
        let y0 = pad;
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">gamma = {g}</text>"#,
            x0 + pw / 2.0,
            y0 - 8.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">group violation</text>"#,
            x0 + pw / 2.0,
            y0 + ph + 28.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{y_label}</text>"#,
            x0 - 26.0,
            y0 + ph / 2.0,
            x0 - 26.0,
            y0 + ph / 2.0
        );
        for r in rows.iter().filter(|r| r.gamma == g && r.ok()) {
            let (gx, gy) = (r.g_violation, y(r));
            if !(gx.is_finite() && gy.is_finite()) {
                continue;
            }
            let alg = Algorithm::ALL
                .iter()
                .find(|a| a.name() == r.algorithm)
                .copied()
                .unwrap_or(Algorithm::Unconstrained);
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{}" fill-opacity="0.6"><title>{} phi={}</title></circle>"#,
                x0 + gx.clamp(0.0, 1.0) * pw,
                y0 + ph - gy.clamp(0.0, 1.0) * ph,
                2.0 + 3.0 * r.phi,
                alg.color(),
                r.algorithm,
                r.phi
            );
        }
    }
    for (k, a) in Algorithm::ALL.iter().enumerate() {
        let x = pad + k as f64 * 110.0;
        let yy = height - 10.0;
        let _ = writeln!(
            s,
            r#"<circle cx="{x}" cy="{}" r="5" fill="{}"/><text x="{}" y="{yy}">{}</text>"#,
            yy - 4.0,
            a.color(),
            x + 8.0,
            a.name()
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `results.csv`, `individual_vs_group.svg` and `utility_vs_group.svg`.
pub fn write_outputs(rows: &[ResultRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_results_csv(rows, dir.join("results.csv"))?;
    std::fs::write(
        dir.join("individual_vs_group.svg"),
        scatter_svg(rows, "individual violation", |r| r.i_violation),
    )?;
    std::fs::write(
        dir.join("utility_vs_group.svg"),
        scatter_svg(rows, "normalized utility", |r| r.utility_norm),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_group_sizes() {
        let t = gen_synthetic(&SyntheticSpec::default(), 1).unwrap();
        let g1 = t.items.iter().filter(|it| it.groups == ["G1"]).count();
        assert_eq!((g1, t.items.len() - g1), (60, 40));
        assert_eq!(t, gen_synthetic(&SyntheticSpec::default(), 1).unwrap());
        assert!(t.items.iter().all(|it| (0.0..=1.0).contains(&it.utility)));
    }

    #[test]
    fn subsample_respects_quota() {
        let t = gen_synthetic(&SyntheticSpec::default(), 2).unwrap();
        let s = subsample_items(&t, 30, 20, 5).unwrap();
        assert_eq!(s.items.len(), 30);
        for g in ["G1", "G2"] {
            assert!(s.items.iter().filter(|it| it.groups[0] == g).count() >= 10);
        }
        assert_eq!(s, subsample_items(&t, 30, 20, 5).unwrap());
        assert!(subsample_items(&t, 30, 80, 5).is_err());
    }

    #[test]
    fn crossing_labels_rejected() {
        let t = ItemTable {
            items: vec![
                Item { id: "a".into(), utility: 1.0, groups: vec!["x".into(), "y".into()] },
                Item { id: "b".into(), utility: 1.0, groups: vec!["x".into()] },
                Item { id: "c".into(), utility: 1.0, groups: vec!["y".into()] },
            ],
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn small_grid_runs() {
        let cfg = ExperimentConfig {
            dataset: DatasetSpec::Synthetic(SyntheticSpec { m: 20, ..Default::default() }),
            n: 8,
            k: 4,
            phis: vec![1.0, 2.0],
            gammas: vec![0.0, 0.5],
            trials: 500,
            ..Default::default()
        };
        let rows = run_grid(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 5);
        for r in rows.iter().filter(|r| r.algorithm == "main") {
            assert!(r.ok(), "{}", r.status);
            assert_eq!(r.g_violation, 0.0);
            assert!(r.i_violation <= 1e-9);
        }
        let svg = scatter_svg(&rows, "y", |r| r.i_violation);
        assert!(svg.starts_with("<svg"));
    }
}
