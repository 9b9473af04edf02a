//! Builders for fairness constraints: Monte-Carlo individual lower bounds
//! under Gaussian utility noise, group-bound presets, and conversions from
//! prefix constraints to two-position block constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{consecutive_blocks, dcg_discounts, Group, Instance, Matrix, RankingMatrix};

/// Default Monte-Carlo trial count for [`build_c_gaussian`].
pub const DEFAULT_TRIALS: usize = 20_000;
const CHUNK: usize = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Normal,
    /// Normal truncated to `mu +- 4 sigma`.
    TruncatedNormal,
}

/// Estimated utilities with independent Gaussian noise per item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertainUtilityModel {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub family: NoiseFamily,
    /// Range of the utilities, when known.
    pub scale: Option<f64>,
}

impl UncertainUtilityModel {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "{} means but {} standard deviations",
                mu.len(),
                sigma.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::InvalidArgument(format!("standard deviation {s} is negative")));
        }
        Ok(UncertainUtilityModel {
            mu,
            sigma,
            family: NoiseFamily::Normal,
            scale: None,
        })
    }

    /// Same standard deviation for every item.
    pub fn homoscedastic(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        let m = mu.len();
        Self::new(mu, vec![sigma; m])
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    fn draw<R: Rng>(&self, i: usize, rng: &mut R) -> f64 {
        let (mu, s) = (self.mu[i], self.sigma[i]);
        if s == 0.0 {
            return mu;
        }
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if self.family == NoiseFamily::Normal || z.abs() <= 4.0 {
                return mu + s * z;
            }
        }
    }
}

/// Monte-Carlo estimate of `C_ij = gamma * Pr[item i lands in block j]` when
/// items are sorted by a noisy draw of their utility.
///
/// Trials are split into fixed chunks, each with its own ChaCha stream, so the
/// result depends only on `seed` and not on the thread count.
pub fn build_c_gaussian(
    model: &UncertainUtilityModel,
    blocks: &[Vec<usize>],
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<Matrix> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} outside [0,1]")));
    }
    let m = model.mu.len();
    let q = blocks.len();
    let n: usize = blocks.iter().map(Vec::len).sum();
    if n > m {
        return Err(Error::Dimension(format!("{n} positions for {m} items")));
    }
    let mut block_of = vec![usize::MAX; n];
    for (j, b) in blocks.iter().enumerate() {
        for &t in b {
            if t >= n {
                return Err(Error::Dimension(format!("position {} outside 1..{n}", t + 1)));
            }
            block_of[t] = j;
        }
    }
    if trials < 1_000 {
        log::warn!("{trials} Monte-Carlo trials give resolution of only about {:.3}", 1.0 / (trials as f64).sqrt());
    }

    let chunks = trials.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(trials - c * CHUNK);
            let mut counts = vec![0u32; m * q];
            let mut draws = vec![0.0; m];
            let mut order: Vec<usize> = (0..m).collect();
            for _ in 0..len {
                for (i, d) in draws.iter_mut().enumerate() {
                    *d = model.draw(i, &mut rng);
                }
                order.sort_unstable_by(|&a, &b| draws[b].total_cmp(&draws[a]).then(a.cmp(&b)));
                for (t, &i) in order[..n].iter().enumerate() {
                    counts[i * q + block_of[t]] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u32; m * q],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut c = Matrix::zeros(m, q);
    for i in 0..m {
        for j in 0..q {
            c[(i, j)] = gamma * counts[i * q + j] as f64 / trials as f64;
        }
    }
    Ok(c)
}

/// Smallest `sigma` such that, on average over items, at least `k / 2` other
/// items have an estimated utility within `sigma`.
pub fn auto_sigma(mu: &[f64], k: usize) -> f64 {
    assert!(k >= 1, "k must be positive");
    let m = mu.len();
    let mut dists = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            dists.push((mu[a] - mu[b]).abs());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    // Mean count >= k/2 means at least k*m/4 unordered pairs within sigma.
    let needed = (k * m).div_ceil(4).max(1);
    if needed > dists.len() {
        return dists.iter().copied().fold(0.0, f64::max);
    }
    let (_, nth, _) = dists.select_nth_unstable_by(needed - 1, f64::total_cmp);
    *nth
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GroupPreset {
    /// `L = floor(|B_j| / p)`, `U = ceil(|B_j| / p)`.
    Equal,
    /// `L = floor(|B_j| |G_l| / m)`, `U = ceil(...)`.
    Proportional,
    /// `L = 0`, `U = ceil(phi |B_j| / p)`.
    PhiUpper { phi: f64 },
}

/// Group bounds for every block and group under a preset.
pub fn preset_group_bounds(
    preset: GroupPreset,
    blocks: &[Vec<usize>],
    groups: &[Group],
    m: usize,
) -> Result<(Vec<Vec<i64>>, Vec<Vec<i64>>)> {
    let p = groups.len();
    if p == 0 {
        return Ok((vec![vec![]; blocks.len()], vec![vec![]; blocks.len()]));
    }
    let mut lower = Vec::with_capacity(blocks.len());
    let mut upper = Vec::with_capacity(blocks.len());
    for b in blocks {
        let size = b.len() as f64;
        let (lo, hi): (Vec<i64>, Vec<i64>) = groups
            .iter()
            .map(|g| match preset {
                GroupPreset::Equal => {
                    let x = size / p as f64;
                    (x.floor() as i64, x.ceil() as i64)
                }
                GroupPreset::Proportional => {
                    let x = size * g.len() as f64 / m as f64;
                    (x.floor() as i64, x.ceil() as i64)
                }
                GroupPreset::PhiUpper { phi } => (0, (phi * size / p as f64 - 1e-9).ceil() as i64),
            })
            .unzip();
        lower.push(lo);
        upper.push(hi);
    }
    if let GroupPreset::PhiUpper { phi } = preset {
        if !(1.0..=p as f64).contains(&phi) {
            return Err(Error::InvalidArgument(format!("phi {phi} outside [1, {p}]")));
        }
    }
    check_group_bounds(blocks, groups, &lower, &upper)?;
    Ok((lower, upper))
}

/// Rejects bounds no matching can meet because a lower bound exceeds the
/// group or block size, or top-level lower bounds overfill a block.
pub fn check_group_bounds(
    blocks: &[Vec<usize>],
    groups: &[Group],
    lower: &[Vec<i64>],
    upper: &[Vec<i64>],
) -> Result<()> {
    let top: Vec<usize> = (0..groups.len())
        .filter(|&l| {
            !(0..groups.len()).any(|o| {
                o != l
                    && groups[o].len() > groups[l].len()
                    && groups[l].members.iter().all(|&i| groups[o].contains(i))
            })
        })
        .collect();
    for (j, b) in blocks.iter().enumerate() {
        for (l, g) in groups.iter().enumerate() {
            if lower[j][l] > (b.len().min(g.len())) as i64 || lower[j][l] > upper[j][l] {
                return Err(Error::InvalidArgument(format!(
                    "group bounds for block {} and group {} cannot be met",
                    j + 1,
                    l + 1
                )));
            }
        }
        let mut total = 0;
        for &l in &top {
            total += lower[j][l];
            if total > b.len() as i64 {
                return Err(Error::InvalidArgument(format!(
                    "lower bounds overfill block {} at group {}",
                    j + 1,
                    l + 1
                )));
            }
        }
    }
    Ok(())
}

/// Individual and group constraints generated together, with their settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBundle {
    #[serde(rename = "L")]
    pub lower: Vec<Vec<i64>>,
    #[serde(rename = "U")]
    pub upper: Vec<Vec<i64>>,
    #[serde(rename = "C")]
    pub c: Matrix,
    #[serde(rename = "A")]
    pub a: Matrix,
    pub preset: Option<GroupPreset>,
    pub gamma: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
}

impl ConstraintBundle {
    /// Copy of `inst` with this bundle's bounds.
    pub fn apply(&self, inst: &Instance) -> Result<Instance> {
        let mut out = inst.clone();
        out.lower = self.lower.clone();
        out.upper = self.upper.clone();
        out.c = self.c.clone();
        out.a = self.a.clone();
        out.ensure_valid()?;
        Ok(out)
    }

    /// Keeps only the first `q` blocks, matching the `L`/`U`/`C`/`A` layout of
    /// an instance file that declares `q` blocks.
    pub fn restricted_to(&self, q: usize) -> ConstraintBundle {
        let cut = |m: &Matrix| {
            let rows = (0..m.rows()).map(|i| m.row(i)[..q.min(m.cols())].to_vec()).collect();
            Matrix::from_rows_with_cols(rows, q.min(m.cols())).expect("rows share one width")
        };
        ConstraintBundle {
            lower: self.lower.iter().take(q).cloned().collect(),
            upper: self.upper.iter().take(q).cloned().collect(),
            c: cut(&self.c),
            a: cut(&self.a),
            ..self.clone()
        }
    }
}

/// Necessary and sufficient capacity condition for the individual lower
/// bounds alone: rows sum to at most one and block columns fit their blocks.
pub fn check_individual_capacity(c: &Matrix, blocks: &[Vec<usize>]) -> Result<()> {
    let tol = 1e-9;
    for i in 0..c.rows() {
        if c.row_sum(i) > 1.0 + tol {
            return Err(Error::InvalidArgument(format!(
                "individual lower bounds of item {} sum to {}",
                i + 1,
                c.row_sum(i)
            )));
        }
    }
    for (j, b) in blocks.iter().enumerate() {
        if c.col_sum(j) > b.len() as f64 + tol {
            return Err(Error::InvalidArgument(format!(
                "individual lower bounds need {} slots in block {} of size {}",
                c.col_sum(j),
                j + 1,
                b.len()
            )));
        }
    }
    Ok(())
}

/// Builds the Gaussian-noise individual bounds and a group preset for `inst`.
pub fn build_bundle(
    inst: &Instance,
    model: &UncertainUtilityModel,
    preset: Option<GroupPreset>,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<ConstraintBundle> {
    let c = build_c_gaussian(model, &inst.blocks, gamma, trials, seed)?;
    check_individual_capacity(&c, &inst.blocks)?;
    let (lower, upper) = match preset {
        Some(p) => preset_group_bounds(p, &inst.blocks, &inst.groups, inst.m())?,
        None => (inst.lower.clone(), inst.upper.clone()),
    };
    Ok(ConstraintBundle {
        lower,
        upper,
        a: Matrix::filled(inst.m(), inst.q(), 1.0),
        c,
        preset,
        gamma: Some(gamma),
        trials: Some(trials),
        seed: Some(seed),
        sigma: Some(model.sigma_max()),
    })
}

/// Number of members of each group among the first `j + 1` positions, for
/// every `j`.
fn prefix_counts(r: &RankingMatrix, groups: &[Group]) -> Vec<Vec<i64>> {
    let mut acc = vec![0i64; groups.len()];
    r.items()
        .iter()
        .map(|&i| {
            for (l, g) in groups.iter().enumerate() {
                if g.contains(i) {
                    acc[l] += 1;
                }
            }
            acc.clone()
        })
        .collect()
}

/// Largest additive amount by which `r` breaks prefix group bounds
/// (`n x p`); zero when all hold.
pub fn prefix_group_violation(r: &RankingMatrix, groups: &[Group], l_pre: &[Vec<i64>], u_pre: &[Vec<i64>]) -> i64 {
    let counts = prefix_counts(r, groups);
    let mut worst = 0;
    for (j, row) in counts.iter().enumerate() {
        for (l, &c) in row.iter().enumerate() {
            worst = worst.max(l_pre[j][l] - c).max(c - u_pre[j][l]);
        }
    }
    worst
}

/// Two-position block group bounds equal to the witness's group counts in
/// positions `{2j, 2j+1}` (0-based). An odd trailing position forms its own
/// block.
pub fn prefix_to_block_group(
    l_pre: &[Vec<i64>],
    u_pre: &[Vec<i64>],
    r_pre: &RankingMatrix,
    groups: &[Group],
) -> Result<(Vec<Vec<i64>>, Vec<Vec<i64>>)> {
    let n = r_pre.n();
    if l_pre.len() != n || u_pre.len() != n {
        return Err(Error::Dimension(format!(
            "prefix bounds have {} and {} rows for {n} positions",
            l_pre.len(),
            u_pre.len()
        )));
    }
    if prefix_group_violation(r_pre, groups, l_pre, u_pre) > 0 {
        return Err(Error::InvalidArgument(
            "witness ranking violates the prefix group bounds".into(),
        ));
    }
    let bounds: Vec<Vec<i64>> = consecutive_blocks(n, 2)
        .iter()
        .map(|b| {
            groups
                .iter()
                .map(|g| b.iter().filter(|&&t| g.contains(r_pre.item_at(t))).count() as i64)
                .collect()
        })
        .collect();
    Ok((bounds.clone(), bounds))
}

/// Largest shortfall of `Pr[item i in top j+1]` under marginal `d` below
/// `c_pre[i][j]`; zero when all prefix bounds hold.
pub fn prefix_individual_violation(d: &Matrix, c_pre: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..d.rows() {
        let mut acc = 0.0;
        for j in 0..d.cols() {
            acc += d[(i, j)];
            worst = worst.max(c_pre[(i, j)] - acc);
        }
    }
    worst
}

/// Two-position block lower bounds equal to the witness marginal's block
/// membership probabilities.
pub fn prefix_to_block_individual(c_pre: &Matrix, d_pre: &Matrix) -> Result<Matrix> {
    if c_pre.rows() != d_pre.rows() || c_pre.cols() != d_pre.cols() {
        return Err(Error::Dimension("prefix bounds and witness marginal differ in shape".into()));
    }
    if prefix_individual_violation(d_pre, c_pre) > 1e-9 {
        return Err(Error::InvalidArgument(
            "witness marginal violates the prefix individual bounds".into(),
        ));
    }
    let blocks = consecutive_blocks(d_pre.cols(), 2);
    let mut c = Matrix::zeros(d_pre.rows(), blocks.len());
    for i in 0..d_pre.rows() {
        for (j, b) in blocks.iter().enumerate() {
            c[(i, j)] = b.iter().map(|&t| d_pre[(i, t)]).sum::<f64>().min(1.0);
        }
    }
    Ok(c)
}

/// Random instance with i.i.d. uniform `[0, S]` utilities, constant noise
/// `sigma_max`, blocks of `k` consecutive positions, `C` from
/// [`build_c_gaussian`] at full strength, `A = 1` and no groups.
pub fn generate_noisy_uniform_instance(
    m: usize,
    n: usize,
    k: usize,
    scale: f64,
    sigma_max: f64,
    seed: u64,
    trials: usize,
) -> Result<(Instance, UncertainUtilityModel)> {
    if n as f64 > 0.9 * m as f64 {
        return Err(Error::InvalidArgument(format!("n={n} must be at most 0.9 m (m={m})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..scale)).collect();
    let mut model = UncertainUtilityModel::homoscedastic(mu.clone(), sigma_max)?;
    model.scale = Some(scale);
    let blocks = consecutive_blocks(n, k);
    let mut inst = Instance::vacuous(mu, dcg_discounts(n), blocks, Vec::new());
    inst.c = build_c_gaussian(&model, &inst.blocks, 1.0, trials, seed.wrapping_add(1))?;
    inst.ensure_valid()?;
    Ok((inst, model))
}
