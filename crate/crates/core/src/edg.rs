//! Euclidean distance geometry: bounds → smoothing → metrization →
//! spectral embedding → violation refinement.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;

use crate::cvae::GaussianEdgeDist;
use crate::math;
use crate::molgraph::{Conformation, ExtendedGraph, MolGraphError};
use crate::Executor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EdgError {
    #[error("bounds for atoms {i} and {j} are inconsistent: lower {lower} > upper {upper}")]
    Inconsistent { i: usize, j: usize, lower: f64, upper: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} has length {got}, expected {expected}")]
    Misaligned { what: &'static str, expected: usize, got: usize },
    #[error("eigendecomposition produced non-finite values")]
    EigenFailure,
    #[error(transparent)]
    Conformation(#[from] MolGraphError),
}

/// Symmetric lower/upper distance bounds with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsMatrix {
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundsMatrix {
    /// Every off-diagonal pair gets `(lower, upper)`.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Self {
        let mut lo = vec![lower; n * n];
        let mut hi = vec![upper; n * n];
        for i in 0..n {
            lo[i * n + i] = 0.0;
            hi[i * n + i] = 0.0;
        }
        Self { n, lower: lo, upper: hi }
    }

    /// Builds from dense row-major matrices; only the upper triangle is read
    /// and mirrored.
    pub fn from_dense(n: usize, lower: &[f64], upper: &[f64]) -> Result<Self, EdgError> {
        for (what, m) in [("lower", lower), ("upper", upper)] {
            if m.len() != n * n {
                return Err(EdgError::Misaligned { what, expected: n * n, got: m.len() });
            }
        }
        let mut b = Self::uniform(n, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                b.set(i, j, lower[i * n + j], upper[i * n + j])?;
            }
        }
        Ok(b)
    }

    /// Degenerate bounds `lower = upper = d`, from a full distance matrix.
    pub fn exact(n: usize, d: &[f64]) -> Result<Self, EdgError> {
        Self::from_dense(n, d, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }

    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.upper[i * self.n + j]
    }

    pub fn lower_matrix(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_matrix(&self) -> &[f64] {
        &self.upper
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, lower: f64, upper: f64) -> Result<(), EdgError> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(EdgError::NonFinite("bounds"));
        }
        if lower > upper {
            return Err(EdgError::Inconsistent { i, j, lower, upper });
        }
        let n = self.n;
        self.lower[i * n + j] = lower;
        self.lower[j * n + i] = lower;
        self.upper[i * n + j] = upper;
        self.upper[j * n + i] = upper;
        Ok(())
    }

    /// Largest amount by which any pair distance of `coords` leaves its
    /// interval.
    pub fn max_violation(&self, coords: &[[f64; 3]]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let d = math::dist3(&coords[i], &coords[j]);
                worst = worst.max(d - self.upper(i, j)).max(self.lower(i, j) - d);
            }
        }
        worst
    }

    fn first_inconsistency(&self) -> Option<EdgError> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (lower, upper) = (self.lower(i, j), self.upper(i, j));
                if lower > upper {
                    return Some(EdgError::Inconsistent { i, j, lower, upper });
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsConfig {
    /// Lower bound for atom pairs without an edge.
    pub steric_floor: f64,
    /// Upper bound for atom pairs without an edge.
    pub ceiling: f64,
    /// Minimum lower bound for edge pairs.
    pub lower_floor: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { steric_floor: 1.0, ceiling: 1000.0, lower_floor: 0.5 }
    }
}

/// Edge bounds `(max(μ - σ, floor), μ + σ)`, non-edge pairs get the
/// steric floor and ceiling.
///
/// When `μ + σ` falls below the floor the upper bound is raised to the
/// floor, so every pair stays a valid interval.
pub fn make_bounds(eg: &ExtendedGraph, ged: &GaussianEdgeDist, cfg: &BoundsConfig) -> Result<BoundsMatrix, EdgError> {
    if ged.len() != eg.n_edges() || ged.variance.len() != ged.mean.len() {
        return Err(EdgError::Misaligned { what: "edge distribution", expected: eg.n_edges(), got: ged.len() });
    }
    let mut b = BoundsMatrix::uniform(eg.n_nodes(), cfg.steric_floor, cfg.ceiling);
    for (k, e) in eg.edges().iter().enumerate() {
        let (mu, var) = (ged.mean[k], ged.variance[k]);
        if !mu.is_finite() || !(var >= 0.0 && var.is_finite()) {
            return Err(EdgError::NonFinite("edge distribution"));
        }
        let sigma = math::sqrt(var);
        let lower = (mu - sigma).max(cfg.lower_floor);
        let upper = (mu + sigma).max(lower);
        b.set(e.r, e.s, lower, upper)?;
    }
    Ok(b)
}

/// Triangle-inequality bound smoothing.
///
/// Floyd–Warshall relaxation of the upper bounds (shortest paths) together
/// with the lower-bound rule `l_ij ≥ l_ik − u_kj`, repeated until nothing
/// changes so that a second call is a no-op. Intervals only ever shrink.
pub fn smooth_bounds(b: &BoundsMatrix) -> Result<BoundsMatrix, EdgError> {
    let mut out = b.clone();
    let n = out.n;
    // Each sweep can only shrink intervals; the bound keeps pathological
    // float cycling from looping forever.
    for _ in 0..n.max(2) * 4 {
        let mut changed = false;
        for k in 0..n {
            for i in 0..n {
                if i == k {
                    continue;
                }
                for j in i + 1..n {
                    if j == k {
                        continue;
                    }
                    let (u_ik, u_kj) = (out.upper[i * n + k], out.upper[k * n + j]);
                    let (l_ik, l_kj) = (out.lower[i * n + k], out.lower[k * n + j]);
                    let u = out.upper[i * n + j];
                    let l = out.lower[i * n + j];
                    let new_u = u.min(u_ik + u_kj);
                    let new_l = l.max(l_ik - u_kj).max(l_kj - u_ik);
                    if new_u != u || new_l != l {
                        changed = true;
                        out.upper[i * n + j] = new_u;
                        out.upper[j * n + i] = new_u;
                        out.lower[i * n + j] = new_l;
                        out.lower[j * n + i] = new_l;
                        if new_l > new_u {
                            return Err(EdgError::Inconsistent { i, j, lower: new_l, upper: new_u });
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    match out.first_inconsistency() {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Draws every pair distance independently and uniformly from its interval.
/// Returns a dense row-major matrix.
pub fn metrize(b: &BoundsMatrix, rng: &mut crate::Rng) -> Vec<f64> {
    let n = b.n;
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (l, u) = (b.lower(i, j), b.upper(i, j));
            let x = if l < u { rng.random_range(l..=u) } else { l };
            d[i * n + j] = x;
            d[j * n + i] = x;
        }
    }
    d
}

/// Classical metric embedding of a dense distance matrix into 3D.
///
/// Squared distances to the centroid follow from
/// `d_i0² = (1/n) Σ_j d_ij² − (1/n²) Σ_{j<k} d_jk²`, the Gram matrix is
/// `G_ij = (d_i0² + d_j0² − d_ij²) / 2`, and coordinates are the top three
/// eigenvectors scaled by the square roots of their (non-negative)
/// eigenvalues.
pub fn gram_embed(n: usize, d: &[f64]) -> Result<Vec<[f64; 3]>, EdgError> {
    if d.len() != n * n {
        return Err(EdgError::Misaligned { what: "distance matrix", expected: n * n, got: d.len() });
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(EdgError::NonFinite("distance matrix"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let nf = n as f64;
    let sq = |i: usize, j: usize| d[i * n + j] * d[i * n + j];
    let mut total = 0.0;
    for j in 0..n {
        for k in j + 1..n {
            total += sq(j, k);
        }
    }
    let to_centroid: Vec<f64> =
        (0..n).map(|i| (0..n).map(|j| sq(i, j)).sum::<f64>() / nf - total / (nf * nf)).collect();
    let gram = DMatrix::from_fn(n, n, |i, j| 0.5 * (to_centroid[i] + to_centroid[j] - sq(i, j)));
    let eig = SymmetricEigen::new(gram);
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(EdgError::EigenFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut coords = vec![[0.0; 3]; n];
    for (axis, &c) in order.iter().take(3).enumerate() {
        let scale = math::sqrt(eig.eigenvalues[c].max(0.0));
        for (i, x) in coords.iter_mut().enumerate() {
            x[axis] = eig.eigenvectors[(i, c)] * scale;
        }
    }
    Ok(coords)
}

/// Violation energy
/// `E = Σ_{i<j} max(0, d_ij² − u_ij²)² + max(0, l_ij² − d_ij²)²`.
pub fn violation_energy(coords: &[[f64; 3]], b: &BoundsMatrix) -> f64 {
    let mut e = 0.0;
    for i in 0..b.n {
        for j in i + 1..b.n {
            let s = sq_dist(&coords[i], &coords[j]);
            let (lo, hi) = (b.lower(i, j), b.upper(i, j));
            let over = (s - hi * hi).max(0.0);
            let under = (lo * lo - s).max(0.0);
            e += over * over + under * under;
        }
    }
    e
}

/// Gradient of [`violation_energy`] with respect to every coordinate.
pub fn violation_gradient(coords: &[[f64; 3]], b: &BoundsMatrix) -> Vec<[f64; 3]> {
    let mut g = vec![[0.0; 3]; b.n];
    for i in 0..b.n {
        for j in i + 1..b.n {
            let s = sq_dist(&coords[i], &coords[j]);
            let (lo, hi) = (b.lower(i, j), b.upper(i, j));
            let de_ds = 2.0 * (s - hi * hi).max(0.0) - 2.0 * (lo * lo - s).max(0.0);
            if de_ds == 0.0 {
                continue;
            }
            for a in 0..3 {
                let t = de_ds * 2.0 * (coords[i][a] - coords[j][a]);
                g[i][a] += t;
                g[j][a] -= t;
            }
        }
    }
    g
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Convergence threshold on the largest per-pair violation, in ångström.
    pub tolerance: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, max_iter: 2000, tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub coords: Vec<[f64; 3]>,
    pub converged: bool,
    pub max_violation: f64,
    /// Gradient steps taken (accepted or rejected).
    pub iterations: usize,
    pub energy: f64,
}

/// Adam descent on the violation energy.
///
/// A step that would raise the energy is rejected; the learning rate is
/// then halved and the moment estimates restarted. Accepted iterates
/// therefore have non-increasing energy.
pub fn refine(coords: Vec<[f64; 3]>, b: &BoundsMatrix, cfg: &RefineConfig) -> Result<RefineResult, EdgError> {
    if coords.len() != b.n {
        return Err(EdgError::Misaligned { what: "coordinates", expected: b.n, got: coords.len() });
    }
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut x = coords;
    let mut energy = violation_energy(&x, b);
    if !energy.is_finite() {
        return Err(EdgError::NonFinite("violation energy"));
    }
    let mut lr = cfg.learning_rate;
    let mut m = vec![[0.0; 3]; b.n];
    let mut v = vec![[0.0; 3]; b.n];
    let mut t = 0u32;
    let mut iterations = 0;
    let mut violation = b.max_violation(&x);
    while violation > cfg.tolerance && iterations < cfg.max_iter {
        iterations += 1;
        let g = violation_gradient(&x, b);
        t += 1;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        let mut trial = x.clone();
        let (mut m_next, mut v_next) = (m.clone(), v.clone());
        for i in 0..b.n {
            for a in 0..3 {
                m_next[i][a] = beta1 * m[i][a] + (1.0 - beta1) * g[i][a];
                v_next[i][a] = beta2 * v[i][a] + (1.0 - beta2) * g[i][a] * g[i][a];
                trial[i][a] -= lr * (m_next[i][a] / c1) / (math::sqrt(v_next[i][a] / c2) + eps);
            }
        }
        let e_trial = violation_energy(&trial, b);
        if !e_trial.is_finite() {
            return Err(EdgError::NonFinite("violation energy"));
        }
        if e_trial <= energy {
            x = trial;
            energy = e_trial;
            m = m_next;
            v = v_next;
            violation = b.max_violation(&x);
        } else {
            lr *= 0.5;
            m = vec![[0.0; 3]; b.n];
            v = vec![[0.0; 3]; b.n];
            t = 0;
            if lr < 1e-12 {
                break;
            }
        }
    }
    Ok(RefineResult { converged: violation <= cfg.tolerance, max_violation: violation, iterations, energy, coords: x })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedResult {
    pub conformation: Conformation,
    pub converged: bool,
    pub max_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmbedConfig {
    pub bounds: BoundsConfig,
    pub refine: RefineConfig,
}

/// Full pipeline for one set of predicted edge distributions; produces one
/// conformation.
pub fn embed_conformation(
    eg: &ExtendedGraph,
    ged: &GaussianEdgeDist,
    rng: &mut crate::Rng,
    cfg: &EmbedConfig,
) -> Result<EmbedResult, EdgError> {
    let raw = make_bounds(eg, ged, &cfg.bounds)?;
    embed_bounds(eg, &raw, rng, cfg)
}

/// Pipeline from already constructed (unsmoothed) bounds.
pub fn embed_bounds(
    eg: &ExtendedGraph,
    raw: &BoundsMatrix,
    rng: &mut crate::Rng,
    cfg: &EmbedConfig,
) -> Result<EmbedResult, EdgError> {
    let smooth = smooth_bounds(raw)?;
    let d = metrize(&smooth, rng);
    let start = gram_embed(smooth.n(), &d)?;
    let r = refine(start, &smooth, &cfg.refine)?;
    let elements = eg.source().elements().collect();
    Ok(EmbedResult {
        conformation: Conformation::new(elements, r.coords)?,
        converged: r.converged,
        max_violation: r.max_violation,
        iterations: r.iterations,
    })
}

/// Outcome counts over a batch of embeddings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbedSummary {
    pub attempted: usize,
    /// Distance sets whose bounds survived smoothing.
    pub smoothing_passed: usize,
    /// Embeddings that completed (smoothing passed and coordinates produced).
    pub embedded: usize,
    pub converged: usize,
    pub mean_violation: f64,
    pub max_violation: f64,
}

impl EmbedSummary {
    pub fn smoothing_pass_rate(&self) -> f64 {
        ratio(self.smoothing_passed, self.attempted)
    }

    pub fn convergence_rate(&self) -> f64 {
        ratio(self.converged, self.attempted)
    }

    pub fn from_results(results: &[Result<EmbedResult, EdgError>]) -> Self {
        let mut s = Self { attempted: results.len(), ..Self::default() };
        let mut total = 0.0;
        for r in results {
            match r {
                Ok(e) => {
                    s.smoothing_passed += 1;
                    s.embedded += 1;
                    s.converged += usize::from(e.converged);
                    total += e.max_violation;
                    s.max_violation = s.max_violation.max(e.max_violation);
                }
                Err(EdgError::Inconsistent { .. }) => {}
                // Smoothing succeeded; a later stage failed.
                Err(_) => s.smoothing_passed += 1,
            }
        }
        if s.embedded > 0 {
            s.mean_violation = total / s.embedded as f64;
        }
        s
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Embeds every distribution in `geds`; task `k` uses RNG stream `k` of
/// `seed`.
pub fn embed_batch(
    eg: &ExtendedGraph,
    geds: &[GaussianEdgeDist],
    seed: u64,
    cfg: &EmbedConfig,
    exec: &impl Executor,
) -> Vec<Result<EmbedResult, EdgError>> {
    exec.map(geds.len(), |k| embed_conformation(eg, &geds[k], &mut crate::rng_stream(seed, k as u64), cfg))
}
