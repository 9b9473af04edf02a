//! Domain types shared by every stage: instances, rankings, matchings,
//! marginals and policies, plus the JSON instance format.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default absolute tolerance for marginal row/column sum invariants.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

static TOLERANCE_BITS: AtomicU64 = AtomicU64::new(DEFAULT_TOLERANCE.to_bits());

/// Current global tolerance for marginal-sum invariants.
pub fn tolerance() -> f64 {
    f64::from_bits(TOLERANCE_BITS.load(Ordering::Relaxed))
}

/// Override the global marginal tolerance. Intended to be called once at
/// start-up; values are not validated beyond being positive and finite.
pub fn set_tolerance(tol: f64) {
    assert!(tol.is_finite() && tol > 0.0, "tolerance must be positive");
    TOLERANCE_BITS.store(tol.to_bits(), Ordering::Relaxed);
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Builds a matrix from nested rows. `cols` is needed to give empty row
    /// lists a shape.
    pub fn from_rows_with_cols(rows: Vec<Vec<f64>>, cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    r.len(),
                    cols
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        Self::from_rows_with_cols(rows, cols)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self[(i, j)]).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Largest absolute entrywise difference; `inf` when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, weight: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += weight * b;
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// A protected group; members are 0-based item indices, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub id: String,
    pub members: Vec<usize>,
}

impl Group {
    pub fn new(id: impl Into<String>, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Group {
            id: id.into(),
            members,
        }
    }

    pub fn contains(&self, item: usize) -> bool {
        self.members.binary_search(&item).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A ranking instance with fairness constraints.
///
/// Items keep the order in which they were supplied; nothing downstream
/// assumes they are sorted by utility. Positions and items are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    /// Item utilities, length `m`.
    pub rho: Vec<f64>,
    /// Position discounts, length `n`.
    pub v: Vec<f64>,
    /// Disjoint position sets covering `0..n`, each sorted.
    pub blocks: Vec<Vec<usize>>,
    pub groups: Vec<Group>,
    /// Group lower bounds, `q x p`.
    pub lower: Vec<Vec<i64>>,
    /// Group upper bounds, `q x p`.
    pub upper: Vec<Vec<i64>>,
    /// Individual lower bounds, `m x q`.
    pub c: Matrix,
    /// Individual upper bounds, `m x q`.
    pub a: Matrix,
    /// Number of blocks given explicitly. Blocks past this index were added
    /// to cover otherwise unconstrained positions and carry vacuous bounds.
    pub declared_blocks: usize,
}

impl Instance {
    /// Instance with the given blocks and groups and vacuous bounds
    /// everywhere (`L = 0`, `U = |B_j|`, `C = 0`, `A = 1`).
    pub fn vacuous(rho: Vec<f64>, v: Vec<f64>, blocks: Vec<Vec<usize>>, groups: Vec<Group>) -> Self {
        let m = rho.len();
        let q = blocks.len();
        let p = groups.len();
        let upper = blocks
            .iter()
            .map(|b| vec![b.len() as i64; p])
            .collect::<Vec<_>>();
        Instance {
            rho,
            v,
            lower: vec![vec![0; p]; q],
            upper,
            c: Matrix::zeros(m, q),
            a: Matrix::filled(m, q, 1.0),
            blocks,
            groups,
            declared_blocks: q,
        }
    }

    pub fn m(&self) -> usize {
        self.rho.len()
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn q(&self) -> usize {
        self.blocks.len()
    }

    pub fn p(&self) -> usize {
        self.groups.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Block index of every position (`None` for positions outside all blocks).
    pub fn block_of_position(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n()];
        for (j, b) in self.blocks.iter().enumerate() {
            for &t in b {
                if t < out.len() {
                    out[t] = Some(j);
                }
            }
        }
        out
    }

    /// Indices of the groups containing `item`.
    pub fn groups_of(&self, item: usize) -> Vec<usize> {
        (0..self.p())
            .filter(|&l| self.groups[l].contains(item))
            .collect()
    }

    /// Stable content hash used to tie policies to the instance they solve.
    pub fn fingerprint(&self) -> String {
        let file = InstanceFile::from_instance(self);
        let bytes = serde_json::to_vec(&file).expect("instance serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Returns an error listing every violated structural invariant.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }
}

/// A structural invariant violated by an [`Instance`]. Indices are 1-based in
/// the rendered message, matching the file format.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Dimension {
        field: &'static str,
        expected: String,
        found: String,
    },
    MorePositionsThanItems { m: usize, n: usize },
    BadUtility { item: usize, value: f64 },
    DiscountNotPositive { position: usize, value: f64 },
    DiscountIncreases { position: usize },
    EmptyBlock { block: usize },
    PositionOutOfRange { block: usize, position: usize },
    PositionRepeated { position: usize },
    PositionUncovered { position: usize },
    BlockOrder { block: usize },
    MemberOutOfRange { group: usize, item: usize },
    EmptyGroup { group: usize },
    NegativeLower { block: usize, group: usize, lower: i64 },
    BoundOrder { block: usize, group: usize, lower: i64, upper: i64 },
    IndividualRange { item: usize, block: usize, c: f64, a: f64 },
    NotLaminar { first: usize, second: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            Dimension {
                field,
                expected,
                found,
            } => write!(f, "field {field}: expected {expected}, found {found}"),
            MorePositionsThanItems { m, n } => write!(f, "n={n} exceeds m={m}"),
            BadUtility { item, value } => {
                write!(f, "utility of item {} is {value} (must be finite and >= 0)", item + 1)
            }
            DiscountNotPositive { position, value } => write!(
                f,
                "discount at position {} is {value} (v_1 must be > 0, all v_j >= 0)",
                position + 1
            ),
            DiscountIncreases { position } => write!(
                f,
                "discounts not nonincreasing: v_{} < v_{}",
                position + 1,
                position + 2
            ),
            EmptyBlock { block } => write!(f, "block {} is empty", block + 1),
            PositionOutOfRange { block, position } => write!(
                f,
                "block {} references position {} outside 1..n",
                block + 1,
                position + 1
            ),
            PositionRepeated { position } => {
                write!(f, "position {} appears in more than one block", position + 1)
            }
            PositionUncovered { position } => {
                write!(f, "position {} is not covered by any block", position + 1)
            }
            BlockOrder { block } => write!(
                f,
                "block {} does not start after block {}",
                block + 1,
                block
            ),
            MemberOutOfRange { group, item } => write!(
                f,
                "group {} references item {} outside 1..m",
                group + 1,
                item + 1
            ),
            EmptyGroup { group } => write!(f, "group {} has no members", group + 1),
            NegativeLower {
                block,
                group,
                lower,
            } => write!(f, "L[{}][{}] = {lower} is negative", block + 1, group + 1),
            BoundOrder {
                block,
                group,
                lower,
                upper,
            } => write!(
                f,
                "L[{b}][{g}] = {lower} exceeds U[{b}][{g}] = {upper}",
                b = block + 1,
                g = group + 1
            ),
            IndividualRange { item, block, c, a } => write!(
                f,
                "need 0 <= C <= A <= 1 at item {} block {}: C={c}, A={a}",
                item + 1,
                block + 1
            ),
            NotLaminar { first, second } => write!(
                f,
                "groups {} and {} overlap without nesting",
                first + 1,
                second + 1
            ),
        }
    }
}

/// Every violated structural invariant of `inst`; empty iff the instance is
/// valid.
pub fn validate(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let (m, n, q, p) = (inst.m(), inst.n(), inst.q(), inst.p());

    let dim = |field, expected: String, found: String, out: &mut Vec<Violation>| {
        if expected != found {
            out.push(Violation::Dimension {
                field,
                expected,
                found,
            });
        }
    };
    dim(
        "L",
        format!("{q}x{p}"),
        shape_i64(&inst.lower, p),
        &mut out,
    );
    dim(
        "U",
        format!("{q}x{p}"),
        shape_i64(&inst.upper, p),
        &mut out,
    );
    dim(
        "C",
        format!("{m}x{q}"),
        format!("{}x{}", inst.c.rows(), inst.c.cols()),
        &mut out,
    );
    dim(
        "A",
        format!("{m}x{q}"),
        format!("{}x{}", inst.a.rows(), inst.a.cols()),
        &mut out,
    );
    if !out.is_empty() {
        return out;
    }

    if n > m {
        out.push(Violation::MorePositionsThanItems { m, n });
    }
    for (i, &r) in inst.rho.iter().enumerate() {
        if !(r.is_finite() && r >= 0.0) {
            out.push(Violation::BadUtility { item: i, value: r });
        }
    }
    for (j, &x) in inst.v.iter().enumerate() {
        let ok = x.is_finite() && if j == 0 { x > 0.0 } else { x >= 0.0 };
        if !ok {
            out.push(Violation::DiscountNotPositive {
                position: j,
                value: x,
            });
        }
    }
    for j in 1..n {
        if inst.v[j] > inst.v[j - 1] {
            out.push(Violation::DiscountIncreases { position: j - 1 });
        }
    }

    let mut seen = vec![false; n];
    for (b, block) in inst.blocks.iter().enumerate() {
        if block.is_empty() {
            out.push(Violation::EmptyBlock { block: b });
        }
        for &t in block {
            if t >= n {
                out.push(Violation::PositionOutOfRange {
                    block: b,
                    position: t,
                });
            } else if seen[t] {
                out.push(Violation::PositionRepeated { position: t });
            } else {
                seen[t] = true;
            }
        }
    }
    for (t, s) in seen.iter().enumerate() {
        if !s {
            out.push(Violation::PositionUncovered { position: t });
        }
    }
    for b in 1..q {
        let prev = inst.blocks[b - 1].first();
        let cur = inst.blocks[b].first();
        if let (Some(x), Some(y)) = (prev, cur) {
            if y <= x {
                out.push(Violation::BlockOrder { block: b });
            }
        }
    }

    for (l, g) in inst.groups.iter().enumerate() {
        if g.is_empty() {
            out.push(Violation::EmptyGroup { group: l });
        }
        for &i in &g.members {
            if i >= m {
                out.push(Violation::MemberOutOfRange { group: l, item: i });
            }
        }
    }
    for j in 0..q {
        for l in 0..p {
            let (lo, hi) = (inst.lower[j][l], inst.upper[j][l]);
            if lo < 0 {
                out.push(Violation::NegativeLower {
                    block: j,
                    group: l,
                    lower: lo,
                });
            }
            if lo > hi {
                out.push(Violation::BoundOrder {
                    block: j,
                    group: l,
                    lower: lo,
                    upper: hi,
                });
            }
        }
    }
    for i in 0..m {
        for j in 0..q {
            let (c, a) = (inst.c[(i, j)], inst.a[(i, j)]);
            if !(c >= 0.0 && c <= a && a <= 1.0) {
                out.push(Violation::IndividualRange {
                    item: i,
                    block: j,
                    c,
                    a,
                });
            }
        }
    }
    for (x, y) in laminar_conflicts(&inst.groups) {
        out.push(Violation::NotLaminar {
            first: x,
            second: y,
        });
    }
    out
}

fn shape_i64(rows: &[Vec<i64>], cols: usize) -> String {
    match rows.iter().find(|r| r.len() != cols) {
        Some(r) => format!("{}x{} (ragged)", rows.len(), r.len()),
        None => format!("{}x{}", rows.len(), cols),
    }
}

/// Pairs of groups that intersect without one containing the other.
pub fn laminar_conflicts(groups: &[Group]) -> Vec<(usize, usize)> {
    let sets: Vec<BTreeSet<usize>> = groups
        .iter()
        .map(|g| g.members.iter().copied().collect())
        .collect();
    let mut out = Vec::new();
    for x in 0..sets.len() {
        for y in x + 1..sets.len() {
            let inter = sets[x].intersection(&sets[y]).count();
            if inter > 0 && inter != sets[x].len() && inter != sets[y].len() {
                out.push((x, y));
            }
        }
    }
    out
}

/// `sum_{i,j} rho_i v_j R_ij`.
pub fn utility(r: &RankingMatrix, rho: &[f64], v: &[f64]) -> Result<f64> {
    if r.m() != rho.len() || r.n() != v.len() {
        return Err(Error::Dimension(format!(
            "ranking is {}x{}, rho has {} entries, v has {}",
            r.m(),
            r.n(),
            rho.len(),
            v.len()
        )));
    }
    Ok(r
        .item_at
        .iter()
        .enumerate()
        .map(|(j, &i)| rho[i] * v[j])
        .sum())
}

/// `sum_{i,j} rho_i v_j D_ij` for a fractional marginal.
pub fn marginal_utility(d: &Matrix, rho: &[f64], v: &[f64]) -> f64 {
    let cols = d.cols().min(v.len());
    (0..d.rows())
        .map(|i| rho[i] * (0..cols).map(|j| d[(i, j)] * v[j]).sum::<f64>())
        .sum()
}

/// A ranking: exactly one item per position, every item at most once.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RankingMatrix {
    m: usize,
    item_at: Vec<usize>,
}

impl RankingMatrix {
    /// `item_at[j]` is the item placed at position `j`.
    pub fn new(m: usize, item_at: Vec<usize>) -> Result<Self> {
        let mut used = vec![false; m];
        for &i in &item_at {
            if i >= m {
                return Err(Error::Dimension(format!("item {} outside 0..{m}", i)));
            }
            if used[i] {
                return Err(Error::InvalidArgument(format!(
                    "item {} placed at two positions",
                    i + 1
                )));
            }
            used[i] = true;
        }
        Ok(RankingMatrix { m, item_at })
    }

    /// Parses a dense 0/1 matrix, rejecting anything that is not a ranking.
    pub fn from_dense(d: &Matrix) -> Result<Self> {
        let mut item_at = Vec::with_capacity(d.cols());
        for j in 0..d.cols() {
            let mut found = None;
            for i in 0..d.rows() {
                let x = d[(i, j)];
                if x == 1.0 {
                    if found.is_some() {
                        return Err(Error::InvalidArgument(format!(
                            "column {} has more than one 1",
                            j + 1
                        )));
                    }
                    found = Some(i);
                } else if x != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({}, {}) = {x} is not 0/1",
                        i + 1,
                        j + 1
                    )));
                }
            }
            match found {
                Some(i) => item_at.push(i),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "column {} has no 1",
                        j + 1
                    )))
                }
            }
        }
        Self::new(d.rows(), item_at)
    }

    pub fn identity(n: usize) -> Self {
        RankingMatrix {
            m: n,
            item_at: (0..n).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.item_at.len()
    }

    pub fn item_at(&self, position: usize) -> usize {
        self.item_at[position]
    }

    pub fn items(&self) -> &[usize] {
        &self.item_at
    }

    pub fn get(&self, item: usize, position: usize) -> bool {
        self.item_at[position] == item
    }

    /// Position of every item, `None` for unplaced items.
    pub fn positions_by_item(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.m];
        for (j, &i) in self.item_at.iter().enumerate() {
            out[i] = Some(j);
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let mut d = Matrix::zeros(self.m, self.n());
        for (j, &i) in self.item_at.iter().enumerate() {
            d[(i, j)] = 1.0;
        }
        d
    }

    /// Keeps only the first `n` positions.
    pub fn truncated(&self, n: usize) -> RankingMatrix {
        RankingMatrix {
            m: self.m,
            item_at: self.item_at[..n].to_vec(),
        }
    }
}

/// Assignment of items to blocks; block `j` receives exactly `block_sizes[j]`
/// items and every item goes to at most one block.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Matching {
    block_sizes: Vec<usize>,
    block_of: Vec<Option<usize>>,
}

impl Matching {
    pub fn new(block_of: Vec<Option<usize>>, block_sizes: Vec<usize>) -> Result<Self> {
        let mut counts = vec![0usize; block_sizes.len()];
        for b in block_of.iter().flatten() {
            if *b >= block_sizes.len() {
                return Err(Error::Dimension(format!("block {} out of range", b + 1)));
            }
            counts[*b] += 1;
        }
        if counts != block_sizes {
            return Err(Error::InvalidArgument(format!(
                "block occupancy {counts:?} differs from block sizes {block_sizes:?}"
            )));
        }
        Ok(Matching {
            block_sizes,
            block_of,
        })
    }

    pub fn from_dense(d: &Matrix, block_sizes: Vec<usize>) -> Result<Self> {
        let mut block_of = vec![None; d.rows()];
        for (i, slot) in block_of.iter_mut().enumerate() {
            for j in 0..d.cols() {
                let x = d[(i, j)];
                if x == 1.0 {
                    if slot.is_some() {
                        return Err(Error::InvalidArgument(format!(
                            "item {} matched twice",
                            i + 1
                        )));
                    }
                    *slot = Some(j);
                } else if x != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({}, {}) = {x} is not 0/1",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Self::new(block_of, block_sizes)
    }

    pub fn m(&self) -> usize {
        self.block_of.len()
    }

    pub fn q(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn block_of(&self, item: usize) -> Option<usize> {
        self.block_of[item]
    }

    pub fn assignments(&self) -> &[Option<usize>] {
        &self.block_of
    }

    /// Items matched to block `j`, in index order.
    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.m())
            .filter(|&i| self.block_of[i] == Some(j))
            .collect()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut d = Matrix::zeros(self.m(), self.q());
        for (i, b) in self.block_of.iter().enumerate() {
            if let Some(j) = b {
                d[(i, *j)] = 1.0;
            }
        }
        d
    }
}

/// Item-by-position placement probabilities of a ranking distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalD(pub Matrix);

impl MarginalD {
    /// Checks entries in `[0,1]`, unit column sums and row sums at most one.
    pub fn check(&self, tol: f64) -> Result<()> {
        let d = &self.0;
        for i in 0..d.rows() {
            for j in 0..d.cols() {
                let x = d[(i, j)];
                if !(x >= -tol && x <= 1.0 + tol) {
                    return Err(Error::InvalidArgument(format!(
                        "marginal entry ({}, {}) = {x} outside [0,1]",
                        i + 1,
                        j + 1
                    )));
                }
            }
            let s = d.row_sum(i);
            if s > 1.0 + tol {
                return Err(Error::InvalidArgument(format!(
                    "marginal row {} sums to {s}",
                    i + 1
                )));
            }
        }
        for j in 0..d.cols() {
            let s = d.col_sum(j);
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "marginal column {} sums to {s}",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Item-by-block placement probabilities of a matching distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingMarginal {
    pub matrix: Matrix,
    pub block_sizes: Vec<usize>,
}

impl MatchingMarginal {
    pub fn new(matrix: Matrix, block_sizes: Vec<usize>) -> Result<Self> {
        if matrix.cols() != block_sizes.len() {
            return Err(Error::Dimension(format!(
                "matching marginal has {} columns for {} blocks",
                matrix.cols(),
                block_sizes.len()
            )));
        }
        Ok(MatchingMarginal {
            matrix,
            block_sizes,
        })
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let x = &self.matrix;
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let e = x[(i, j)];
                if !(e >= -tol && e <= 1.0 + tol) {
                    return Err(Error::InvalidArgument(format!(
                        "matching marginal entry ({}, {}) = {e} outside [0,1]",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if x.row_sum(i) > 1.0 + tol {
                return Err(Error::InvalidArgument(format!(
                    "matching marginal row {} sums above 1",
                    i + 1
                )));
            }
        }
        for (j, &size) in self.block_sizes.iter().enumerate() {
            let s = x.col_sum(j);
            if (s - size as f64).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "matching marginal column {} sums to {s}, block size {size}",
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

/// Objects a [`Policy`] can average into a marginal matrix.
pub trait Assignment {
    fn dense(&self) -> Matrix;
}

impl Assignment for RankingMatrix {
    fn dense(&self) -> Matrix {
        self.to_dense()
    }
}

impl Assignment for Matching {
    fn dense(&self) -> Matrix {
        self.to_dense()
    }
}

/// Finite distribution `{(alpha_t, X_t)}` with positive weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<X> {
    terms: Vec<(f64, X)>,
}

impl<X> Policy<X> {
    pub fn new(terms: Vec<(f64, X)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("policy has no terms".into()));
        }
        if let Some((w, _)) = terms.iter().find(|(w, _)| !(*w > 0.0 && *w <= 1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "policy weight {w} outside (0,1]"
            )));
        }
        let total: f64 = terms.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "policy weights sum to {total}"
            )));
        }
        Ok(Policy { terms })
    }

    pub fn single(x: X) -> Self {
        Policy {
            terms: vec![(1.0, x)],
        }
    }

    pub fn terms(&self) -> &[(f64, X)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn map<Y>(self, mut f: impl FnMut(X) -> Y) -> Policy<Y> {
        Policy {
            terms: self.terms.into_iter().map(|(w, x)| (w, f(x))).collect(),
        }
    }
}

impl<X: Assignment> Policy<X> {
    /// `sum_t alpha_t X_t`.
    pub fn marginal(&self) -> Matrix {
        let mut it = self.terms.iter();
        let (w0, x0) = it.next().expect("policy is non-empty");
        let mut acc = x0.dense();
        acc.scale(*w0);
        for (w, x) in it {
            acc.add_scaled(*w, &x.dense());
        }
        acc
    }
}

#[derive(Serialize, Deserialize)]
struct GroupFile {
    id: String,
    members: Vec<usize>,
}

/// On-disk JSON layout; items and positions are 1-based.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    m: usize,
    n: usize,
    rho: Vec<f64>,
    v: Vec<f64>,
    blocks: Vec<Vec<usize>>,
    groups: Vec<GroupFile>,
    #[serde(rename = "L")]
    lower: Vec<Vec<i64>>,
    #[serde(rename = "U")]
    upper: Vec<Vec<i64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
}

impl InstanceFile {
    fn from_instance(inst: &Instance) -> Self {
        let qd = inst.declared_blocks.min(inst.blocks.len());
        let cut = |m: &Matrix| -> Vec<Vec<f64>> {
            (0..m.rows()).map(|i| m.row(i)[..qd].to_vec()).collect()
        };
        InstanceFile {
            m: inst.m(),
            n: inst.n(),
            rho: inst.rho.clone(),
            v: inst.v.clone(),
            blocks: inst.blocks[..qd]
                .iter()
                .map(|b| b.iter().map(|t| t + 1).collect())
                .collect(),
            groups: inst
                .groups
                .iter()
                .map(|g| GroupFile {
                    id: g.id.clone(),
                    members: g.members.iter().map(|i| i + 1).collect(),
                })
                .collect(),
            lower: inst.lower[..qd].to_vec(),
            upper: inst.upper[..qd].to_vec(),
            c: cut(&inst.c),
            a: cut(&inst.a),
        }
    }

    fn into_instance(self) -> Result<Instance> {
        let m = self.m;
        let n = self.n;
        let q = self.blocks.len();
        let p = self.groups.len();
        let mut problems = Vec::new();
        let mut expect = |field, expected: usize, found: usize| {
            if expected != found {
                problems.push(Violation::Dimension {
                    field,
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
        };
        expect("rho", m, self.rho.len());
        expect("v", n, self.v.len());
        expect("L", q, self.lower.len());
        expect("U", q, self.upper.len());
        expect("C", m, self.c.len());
        expect("A", m, self.a.len());
        if !problems.is_empty() {
            return Err(Error::Invalid(problems));
        }

        let mut blocks = Vec::with_capacity(q + 1);
        for (b, block) in self.blocks.iter().enumerate() {
            let mut out = Vec::with_capacity(block.len());
            for &t in block {
                if t == 0 || t > n {
                    problems.push(Violation::PositionOutOfRange {
                        block: b,
                        position: t.wrapping_sub(1),
                    });
                } else {
                    out.push(t - 1);
                }
            }
            out.sort_unstable();
            blocks.push(out);
        }
        let mut groups = Vec::with_capacity(p);
        for (l, g) in self.groups.into_iter().enumerate() {
            let mut members = Vec::with_capacity(g.members.len());
            for i in g.members {
                if i == 0 || i > m {
                    problems.push(Violation::MemberOutOfRange {
                        group: l,
                        item: i.wrapping_sub(1),
                    });
                } else {
                    members.push(i - 1);
                }
            }
            groups.push(Group::new(g.id, members));
        }
        if !problems.is_empty() {
            return Err(Error::Invalid(problems));
        }

        let mut c = Matrix::from_rows_with_cols(self.c, q)?;
        let mut a = Matrix::from_rows_with_cols(self.a, q)?;
        let mut lower = self.lower;
        let mut upper = self.upper;

        // Positions not listed in any block form one extra block with
        // vacuous bounds.
        let mut covered = vec![false; n];
        for b in &blocks {
            for &t in b {
                covered[t] = true;
            }
        }
        let tail: Vec<usize> = (0..n).filter(|&t| !covered[t]).collect();
        if !tail.is_empty() {
            let size = tail.len() as i64;
            blocks.push(tail);
            lower.push(vec![0; p]);
            upper.push(vec![size; p]);
            c = append_column(&c, 0.0);
            a = append_column(&a, 1.0);
        }

        let inst = Instance {
            rho: self.rho,
            v: self.v,
            blocks,
            groups,
            lower,
            upper,
            c,
            a,
            declared_blocks: q,
        };
        inst.ensure_valid()?;
        Ok(inst)
    }
}

fn append_column(m: &Matrix, value: f64) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols() + 1);
    for i in 0..m.rows() {
        out.row_mut(i)[..m.cols()].copy_from_slice(m.row(i));
        out[(i, m.cols())] = value;
    }
    out
}

/// Parses and validates an instance from its JSON text.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| {
        let line = text.lines().nth(e.line().saturating_sub(1)).unwrap_or("");
        Error::Parse(format!("{e}; near: {}", line.trim()))
    })?;
    file.into_instance()
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text)
}

pub fn instance_to_json(inst: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(inst)).expect("instance serializes")
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, instance_to_json(inst))?;
    Ok(())
}

/// Consecutive blocks of size `k` over `n` positions; the last block may be
/// shorter.
pub fn consecutive_blocks(n: usize, k: usize) -> Vec<Vec<usize>> {
    assert!(k > 0);
    (0..n)
        .step_by(k)
        .map(|s| (s..(s + k).min(n)).collect())
        .collect()
}

/// DCG position discounts `v_j = 1 / log2(1 + j)` for 1-based `j`.
pub fn dcg_discounts(n: usize) -> Vec<f64> {
    (1..=n).map(|j| 1.0 / ((1 + j) as f64).log2()).collect()
}
