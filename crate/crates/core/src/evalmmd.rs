//! Maximum mean discrepancy between generated and reference distance
//! samples, and the marginal / pairwise / joint comparison protocol.
//!
//! All MMD values are unbiased estimates of MMD² with the Gaussian kernel
//! `k(a, b) = exp(−‖a − b‖² / (2σ²))`; they can be slightly negative when
//! the two samples come from the same distribution.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::math;
pub use crate::math::median;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MmdError {
    #[error("sample needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("sample rows have {got} columns, expected {expected}")]
    Columns { expected: usize, got: usize },
    #[error("all pooled rows are identical; median bandwidth is zero")]
    DegenerateBandwidth,
    #[error("non-finite sample value")]
    NonFinite,
    #[error("column {index} out of range for {width} columns")]
    Column { index: usize, width: usize },
}

/// Row-major samples × coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(cols: usize, data: Vec<f64>) -> Result<Self, MmdError> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(MmdError::Columns { expected: cols, got: data.len() });
        }
        if data.len() / cols < 2 {
            return Err(MmdError::TooFewRows(data.len() / cols));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MmdError::NonFinite);
        }
        Ok(Self { cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MmdError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(MmdError::Columns { expected: cols, got: r.as_ref().len() });
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(cols, data)
    }

    /// Picks `columns` out of every row of `rows`.
    pub fn select<R: AsRef<[f64]>>(rows: &[R], columns: &[usize]) -> Result<Self, MmdError> {
        let mut data = Vec::with_capacity(rows.len() * columns.len());
        for r in rows {
            let r = r.as_ref();
            for &c in columns {
                data.push(*r.get(c).ok_or(MmdError::Column { index: c, width: r.len() })?);
            }
        }
        Self::new(columns.len(), data)
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Stacks `self` on top of `other`.
    pub fn stack(&self, other: &Self) -> Result<Self, MmdError> {
        if self.cols != other.cols {
            return Err(MmdError::Columns { expected: self.cols, got: other.cols });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { cols: self.cols, data })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median Euclidean distance over all row pairs.
pub fn median_bandwidth(pooled: &SampleMatrix) -> Result<f64, MmdError> {
    let n = pooled.rows();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(math::sqrt(sq_dist(pooled.row(i), pooled.row(j))));
        }
    }
    let m = median(&mut d);
    if m > 0.0 {
        Ok(m)
    } else {
        Err(MmdError::DegenerateBandwidth)
    }
}

/// Unbiased estimate of MMD² between the distributions behind `x` and `y`:
///
/// ```text
/// 1/(m(m−1)) Σ_{i≠j} k(x_i, x_j) + 1/(n(n−1)) Σ_{i≠j} k(y_i, y_j) − 2/(mn) Σ_{i,j} k(x_i, y_j)
/// ```
pub fn mmd2_unbiased(x: &SampleMatrix, y: &SampleMatrix, bandwidth: f64) -> Result<f64, MmdError> {
    if x.cols != y.cols {
        return Err(MmdError::Columns { expected: x.cols, got: y.cols });
    }
    let scale = -1.0 / (2.0 * bandwidth * bandwidth);
    let k = |a: &[f64], b: &[f64]| math::exp(scale * sq_dist(a, b));
    let within = |s: &SampleMatrix| {
        let n = s.rows();
        let mut t = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                t += k(s.row(i), s.row(j));
            }
        }
        2.0 * t / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            cross += k(x.row(i), y.row(j));
        }
    }
    Ok(within(x) + within(y) - 2.0 * cross / (x.rows() * y.rows()) as f64)
}

/// MMD² with the median bandwidth of the pooled sample. Returns
/// `(mmd2, bandwidth)`.
pub fn mmd2(x: &SampleMatrix, y: &SampleMatrix) -> Result<(f64, f64), MmdError> {
    let bw = median_bandwidth(&x.stack(y)?)?;
    Ok((mmd2_unbiased(x, y, bw)?, bw))
}

/// `q`-quantile of MMD² over random relabelings of the pooled sample, with
/// the bandwidth held fixed.
pub fn permutation_quantile(
    x: &SampleMatrix,
    y: &SampleMatrix,
    bandwidth: f64,
    permutations: usize,
    q: f64,
    rng: &mut crate::Rng,
) -> Result<f64, MmdError> {
    let pooled = x.stack(y)?;
    let m = x.rows();
    let mut order: Vec<usize> = (0..pooled.rows()).collect();
    let mut stats = Vec::with_capacity(permutations);
    for _ in 0..permutations {
        order.shuffle(rng);
        let rows = |idx: &[usize]| {
            let mut data = Vec::with_capacity(idx.len() * pooled.cols);
            for &i in idx {
                data.extend_from_slice(pooled.row(i));
            }
            SampleMatrix { cols: pooled.cols, data }
        };
        stats.push(mmd2_unbiased(&rows(&order[..m]), &rows(&order[m..]), bandwidth)?);
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    let idx = libm::ceil(q * permutations as f64) as usize;
    Ok(stats[idx.clamp(1, permutations) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComparisonKind {
    Marginal,
    Pairwise,
    Joint,
}

impl ComparisonKind {
    pub const ALL: [ComparisonKind; 3] = [ComparisonKind::Marginal, ComparisonKind::Pairwise, ComparisonKind::Joint];

    pub fn name(self) -> &'static str {
        match self {
            ComparisonKind::Marginal => "marginal",
            ComparisonKind::Pairwise => "pairwise",
            ComparisonKind::Joint => "joint",
        }
    }
}

/// Which distance coordinates a comparison looks at (edge indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub kind: ComparisonKind,
    pub edges: Vec<usize>,
}

/// Marginals for every selected edge, pairs for every two selected edges,
/// and one joint comparison over all of them.
pub fn comparisons(selected: &[usize]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for &k in selected {
        out.push(Comparison { kind: ComparisonKind::Marginal, edges: vec![k] });
    }
    for (a, &i) in selected.iter().enumerate() {
        for &j in &selected[a + 1..] {
            out.push(Comparison { kind: ComparisonKind::Pairwise, edges: vec![i, j] });
        }
    }
    if !selected.is_empty() {
        out.push(Comparison { kind: ComparisonKind::Joint, edges: selected.to_vec() });
    }
    out
}

/// Reference and generated distance rows for one graph.
///
/// Every row is a full per-edge distance vector aligned with the graph's
/// extended edge list. `methods[m]` is `None` when method `m` produced
/// nothing for this graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEval {
    pub graph: String,
    pub split: usize,
    /// Edge indices to compare (typically the heavy-atom edges).
    pub edges: Vec<usize>,
    pub truth: Vec<Vec<f64>>,
    pub methods: Vec<Option<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdRow {
    pub graph: String,
    pub split: usize,
    pub comparison: Comparison,
    pub method: usize,
    /// `None` when the method has no samples or the comparison was
    /// degenerate.
    pub mmd2: Option<f64>,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub median: f64,
    pub mean: f64,
    /// Standard deviation over all individual comparisons.
    pub std_over_items: f64,
    /// Standard deviation of the per-graph medians.
    pub std_over_graphs: f64,
    /// Standard deviation of the per-split medians.
    pub std_over_splits: f64,
    pub mean_ranking: f64,
    pub median_ranking: f64,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdReport {
    pub methods: Vec<String>,
    pub rows: Vec<MmdRow>,
    /// `summaries[kind][method]`, `None` if the method has no values for
    /// that kind.
    pub summaries: Vec<(ComparisonKind, Vec<Option<MethodSummary>>)>,
    /// Rows without a value.
    pub absent: usize,
}

impl MmdReport {
    pub fn summary(&self, kind: ComparisonKind, method: usize) -> Option<&MethodSummary> {
        self.summaries.iter().find(|(k, _)| *k == kind).and_then(|(_, s)| s[method].as_ref())
    }
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation; zero for fewer than two values.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    math::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
}

fn group_medians<K: Ord + Clone>(pairs: &[(K, f64)]) -> Vec<f64> {
    let mut keys: Vec<K> = pairs.iter().map(|p| p.0.clone()).collect();
    keys.sort();
    keys.dedup();
    keys.iter()
        .map(|k| {
            let mut v: Vec<f64> = pairs.iter().filter(|p| &p.0 == k).map(|p| p.1).collect();
            median(&mut v)
        })
        .collect()
}

fn compare_one(truth: &[Vec<f64>], method: Option<&Vec<Vec<f64>>>, c: &Comparison) -> Option<(f64, f64)> {
    let gen = method?;
    let x = SampleMatrix::select(truth, &c.edges).ok()?;
    let y = SampleMatrix::select(gen, &c.edges).ok()?;
    mmd2(&x, &y).ok()
}

/// Runs every comparison for every graph and method and aggregates
/// medians and rankings per comparison kind.
///
/// Rankings use only comparisons where every method has a value.
pub fn protocol_report(methods: &[String], graphs: &[GraphEval], exec: &impl crate::Executor) -> MmdReport {
    let mut jobs = Vec::new();
    for (g, ge) in graphs.iter().enumerate() {
        for c in comparisons(&ge.edges) {
            jobs.push((g, c));
        }
    }
    let n_methods = methods.len();
    let values: Vec<Vec<Option<(f64, f64)>>> = exec.map(jobs.len(), |j| {
        let (g, c) = &jobs[j];
        let ge = &graphs[*g];
        (0..n_methods).map(|m| compare_one(&ge.truth, ge.methods.get(m).and_then(Option::as_ref), c)).collect()
    });

    let mut rows = Vec::new();
    let mut absent = 0;
    for ((g, c), vals) in jobs.iter().zip(&values) {
        for (m, v) in vals.iter().enumerate() {
            absent += usize::from(v.is_none());
            rows.push(MmdRow {
                graph: graphs[*g].graph.clone(),
                split: graphs[*g].split,
                comparison: c.clone(),
                method: m,
                mmd2: v.map(|p| p.0),
                bandwidth: v.map(|p| p.1),
            });
        }
    }

    let mut summaries = Vec::new();
    for kind in ComparisonKind::ALL {
        let mut per_method: Vec<Option<MethodSummary>> = Vec::with_capacity(n_methods);
        let mut ranks: Vec<Vec<f64>> = vec![Vec::new(); n_methods];
        for ((_, c), vals) in jobs.iter().zip(&values) {
            if c.kind != kind || vals.iter().any(Option::is_none) {
                continue;
            }
            let v: Vec<f64> = vals.iter().map(|p| p.unwrap().0).collect();
            for (m, r) in rank_with_ties(&v).into_iter().enumerate() {
                ranks[m].push(r);
            }
        }
        for (m, method_ranks) in ranks.iter_mut().enumerate() {
            let mut items = Vec::new();
            let mut by_graph = Vec::new();
            let mut by_split = Vec::new();
            for ((g, c), vals) in jobs.iter().zip(&values) {
                if c.kind != kind {
                    continue;
                }
                if let Some((v, _)) = vals[m] {
                    items.push(v);
                    by_graph.push((*g, v));
                    by_split.push((graphs[*g].split, v));
                }
            }
            if items.is_empty() {
                per_method.push(None);
                continue;
            }
            let (mean_ranking, median_ranking) = if method_ranks.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (mean(method_ranks), median(&mut method_ranks.clone()))
            };
            per_method.push(Some(MethodSummary {
                median: median(&mut items.clone()),
                mean: mean(&items),
                std_over_items: std_dev(&items),
                std_over_graphs: std_dev(&group_medians(&by_graph)),
                std_over_splits: std_dev(&group_medians(&by_split)),
                mean_ranking,
                median_ranking,
                n_items: items.len(),
            }));
        }
        summaries.push((kind, per_method));
    }
    MmdReport { methods: methods.to_vec(), rows, summaries, absent }
}
