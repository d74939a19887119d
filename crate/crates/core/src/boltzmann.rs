//! Classical surrogate energy, a Metropolis reference sampler and the
//! self-normalized importance-sampling estimator for Boltzmann averages.
//!
//! Energies are in kJ/mol, lengths in ångström, angles in radians. The
//! thermal energy is `k_B T = R T` with the gas constant in kJ/(mol·K).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::math;
use crate::molgraph::{Conformation, MolGraphError};

/// Gas constant in kJ/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314e-3;

/// `k_B T` in kJ/mol at `temperature` kelvin.
pub fn thermal_energy(temperature: f64) -> f64 {
    GAS_CONSTANT * temperature
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoltzmannError {
    #[error("term {term} references atom {atom} but the model has {n_atoms} atoms")]
    AtomIndex { term: usize, atom: usize, n_atoms: usize },
    #[error("term {term}: {what} must be positive and finite, got {value}")]
    Parameter { term: usize, what: &'static str, value: f64 },
    #[error("conformation has {got} atoms, model expects {expected}")]
    AtomCount { expected: usize, got: usize },
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("no proposals")]
    NoProposals,
    #[error("{what} has length {got}, expected {expected}")]
    Misaligned { what: &'static str, expected: usize, got: usize },
    #[error("importance weights are degenerate (non-finite energies or weight sum)")]
    DegenerateWeights,
    #[error("invalid sampler configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Conformation(#[from] MolGraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondTerm {
    pub i: usize,
    pub j: usize,
    pub rest: f64,
    pub k: f64,
}

/// Angle at `center` between `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleTerm {
    pub i: usize,
    pub center: usize,
    pub j: usize,
    pub rest: f64,
    pub k: f64,
}

/// One-sided repulsion `k · max(0, floor − r)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StericTerm {
    pub i: usize,
    pub j: usize,
    pub floor: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TermRef {
    Bond(usize),
    Angle(usize),
    Steric(usize),
}

/// `E(x) = Σ k_b (r − r₀)² + Σ k_a (θ − θ₀)² + Σ k_s max(0, r_min − r)² + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    n_atoms: usize,
    bonds: Vec<BondTerm>,
    angles: Vec<AngleTerm>,
    sterics: Vec<StericTerm>,
    offset: f64,
    by_atom: Vec<Vec<TermRef>>,
}

impl EnergyModel {
    pub fn new(
        n_atoms: usize,
        bonds: Vec<BondTerm>,
        angles: Vec<AngleTerm>,
        sterics: Vec<StericTerm>,
    ) -> Result<Self, BoltzmannError> {
        let mut by_atom = vec![Vec::new(); n_atoms];
        let mut term = 0;
        let mut check_atoms = |atoms: &[usize], t: TermRef, term: usize| {
            for &a in atoms {
                if a >= n_atoms {
                    return Err(BoltzmannError::AtomIndex { term, atom: a, n_atoms });
                }
            }
            for &a in atoms {
                by_atom[a].push(t);
            }
            Ok(())
        };
        let positive = |term: usize, what: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(BoltzmannError::Parameter { term, what, value })
            }
        };
        for (b, t) in bonds.iter().enumerate() {
            positive(term, "bond stiffness", t.k)?;
            positive(term, "rest length", t.rest)?;
            check_atoms(&[t.i, t.j], TermRef::Bond(b), term)?;
            term += 1;
        }
        for (a, t) in angles.iter().enumerate() {
            positive(term, "angle stiffness", t.k)?;
            positive(term, "rest angle", t.rest)?;
            check_atoms(&[t.i, t.center, t.j], TermRef::Angle(a), term)?;
            term += 1;
        }
        for (s, t) in sterics.iter().enumerate() {
            positive(term, "steric stiffness", t.k)?;
            positive(term, "steric floor", t.floor)?;
            check_atoms(&[t.i, t.j], TermRef::Steric(s), term)?;
            term += 1;
        }
        Ok(Self { n_atoms, bonds, angles, sterics, offset: 0.0, by_atom })
    }

    /// Adds a constant to every energy.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn bonds(&self) -> &[BondTerm] {
        &self.bonds
    }

    pub fn angles(&self) -> &[AngleTerm] {
        &self.angles
    }

    pub fn sterics(&self) -> &[StericTerm] {
        &self.sterics
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn term(&self, t: TermRef, x: &[[f64; 3]]) -> f64 {
        match t {
            TermRef::Bond(b) => {
                let t = &self.bonds[b];
                let d = math::dist3(&x[t.i], &x[t.j]) - t.rest;
                t.k * d * d
            }
            TermRef::Angle(a) => {
                let t = &self.angles[a];
                let d = bond_angle(&x[t.i], &x[t.center], &x[t.j]) - t.rest;
                t.k * d * d
            }
            TermRef::Steric(s) => {
                let t = &self.sterics[s];
                let d = (t.floor - math::dist3(&x[t.i], &x[t.j])).max(0.0);
                t.k * d * d
            }
        }
    }

    /// Energy without the constant offset.
    pub fn relative_energy(&self, x: &[[f64; 3]]) -> f64 {
        let bonds = (0..self.bonds.len()).map(|b| self.term(TermRef::Bond(b), x));
        let angles = (0..self.angles.len()).map(|a| self.term(TermRef::Angle(a), x));
        let sterics = (0..self.sterics.len()).map(|s| self.term(TermRef::Steric(s), x));
        bonds.chain(angles).chain(sterics).sum()
    }

    pub fn energy(&self, x: &[[f64; 3]]) -> f64 {
        self.relative_energy(x) + self.offset
    }

    pub fn energy_of(&self, c: &Conformation) -> Result<f64, BoltzmannError> {
        self.check(c)?;
        Ok(self.energy(c.positions()))
    }

    /// Sum of the terms that involve `atom`.
    fn local_energy(&self, x: &[[f64; 3]], atom: usize) -> f64 {
        self.by_atom[atom].iter().map(|&t| self.term(t, x)).sum()
    }

    fn check(&self, c: &Conformation) -> Result<(), BoltzmannError> {
        if c.n_atoms() != self.n_atoms {
            return Err(BoltzmannError::AtomCount { expected: self.n_atoms, got: c.n_atoms() });
        }
        Ok(())
    }
}

/// Angle at `b` formed by `a` and `c`, in radians.
pub fn bond_angle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let u = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let v = [c[0] - b[0], c[1] - b[1], c[2] - b[2]];
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let nu = math::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    let nv = math::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    math::acos((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Scalar property of a conformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// The constant 1; its estimate is the normalization check.
    One,
    Distance(usize, usize),
    RadiusOfGyration,
}

impl Observable {
    pub fn eval(&self, c: &Conformation) -> f64 {
        match *self {
            Observable::One => 1.0,
            Observable::Distance(i, j) => c.distance(i, j),
            Observable::RadiusOfGyration => c.radius_of_gyration(),
        }
    }

    pub fn name(&self) -> alloc::string::String {
        match *self {
            Observable::One => "one".into(),
            Observable::Distance(i, j) => alloc::format!("distance({i},{j})"),
            Observable::RadiusOfGyration => "radius_of_gyration".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub temperature: f64,
    /// Steps after burn-in.
    pub steps: usize,
    /// Steps used for step-size tuning; not recorded.
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    /// Initial per-coordinate proposal standard deviation, ångström.
    pub step_size: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { temperature: 500.0, steps: 100_000, burn_in: 10_000, thin: 50, step_size: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Vec<[f64; 3]>>,
    /// Acceptance rate over the post-burn-in steps.
    pub acceptance_rate: f64,
    /// Proposal scale after tuning.
    pub step_size: f64,
}

// Tuning window and target band for the burn-in phase.
const TUNE_WINDOW: usize = 100;
const TARGET_LOW: f64 = 0.40;
const TARGET_HIGH: f64 = 0.50;

/// Single-atom random-walk Metropolis.
///
/// Each step moves one uniformly chosen atom by an isotropic Gaussian
/// displacement and accepts with probability `min(1, exp(−ΔE / k_B T))`.
/// During burn-in the proposal scale is adjusted every 100 steps toward a
/// 40–50% acceptance rate.
pub fn metropolis_sample(
    m: &EnergyModel,
    x0: &[[f64; 3]],
    cfg: &McmcConfig,
    rng: &mut crate::Rng,
) -> Result<Chain, BoltzmannError> {
    if !(cfg.temperature > 0.0) {
        return Err(BoltzmannError::Temperature(cfg.temperature));
    }
    if cfg.steps == 0 || cfg.thin == 0 || !(cfg.step_size > 0.0) {
        return Err(BoltzmannError::Config("steps, thin and step_size must be positive"));
    }
    if x0.len() != m.n_atoms || m.n_atoms == 0 {
        return Err(BoltzmannError::AtomCount { expected: m.n_atoms, got: x0.len() });
    }
    let kbt = thermal_energy(cfg.temperature);
    let mut x = x0.to_vec();
    let mut step = cfg.step_size;
    let mut window_accepts = 0;

    let propose = |x: &mut Vec<[f64; 3]>, step: f64, rng: &mut crate::Rng| -> bool {
        let atom = rng.random_range(0..m.n_atoms);
        let before = m.local_energy(x, atom);
        let old = x[atom];
        for a in 0..3 {
            x[atom][a] += step * rng.sample::<f64, _>(StandardNormal);
        }
        let delta = m.local_energy(x, atom) - before;
        if delta <= 0.0 || rng.random::<f64>() < math::exp(-delta / kbt) {
            true
        } else {
            x[atom] = old;
            false
        }
    };

    for s in 0..cfg.burn_in {
        window_accepts += usize::from(propose(&mut x, step, rng));
        if (s + 1) % TUNE_WINDOW == 0 {
            let rate = window_accepts as f64 / TUNE_WINDOW as f64;
            if rate > TARGET_HIGH {
                step *= 1.1;
            } else if rate < TARGET_LOW {
                step *= 0.9;
            }
            window_accepts = 0;
        }
    }

    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(cfg.steps / cfg.thin);
    for s in 0..cfg.steps {
        accepted += usize::from(propose(&mut x, step, rng));
        if (s + 1) % cfg.thin == 0 {
            samples.push(x.clone());
        }
    }
    Ok(Chain { samples, acceptance_rate: accepted as f64 / cfg.steps as f64, step_size: step })
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let b = batches.max(2).min(values.len().max(1));
    let size = values.len() / b;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b).map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let mu = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / (b - 1) as f64;
    math::sqrt(var / b as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsEstimate {
    pub estimate: f64,
    /// Delta-method standard error of the self-normalized estimate.
    pub standard_error: f64,
    /// `(Σw)² / Σw²`.
    pub effective_sample_size: f64,
    pub n: usize,
    /// Largest normalized weight.
    pub max_weight: f64,
}

/// Self-normalized importance sampling from per-proposal observable values
/// and energies.
///
/// `ĥ = Σ o_i w_i / Σ w_i` with `w_i = exp(−(E_i − E_min) / k_B T)`; the
/// shift by the lowest energy keeps the largest weight at exactly 1.
pub fn is_estimate_from_energies(values: &[f64], energies: &[f64], kbt: f64) -> Result<IsEstimate, BoltzmannError> {
    if values.is_empty() {
        return Err(BoltzmannError::NoProposals);
    }
    if energies.len() != values.len() {
        return Err(BoltzmannError::Misaligned { what: "energies", expected: values.len(), got: energies.len() });
    }
    if !(kbt > 0.0) {
        return Err(BoltzmannError::Temperature(kbt));
    }
    if energies.iter().chain(values).any(|e| !e.is_finite()) {
        return Err(BoltzmannError::DegenerateWeights);
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|&e| math::exp(-(e - e_min) / kbt)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(BoltzmannError::DegenerateWeights);
    }
    // Centered on the value of a weight-1 proposal, so a constant observable
    // comes back exactly.
    let anchor = values[energies.iter().position(|&e| e == e_min).unwrap_or(0)];
    let estimate = anchor + w.iter().zip(values).map(|(wi, oi)| wi * (oi - anchor)).sum::<f64>() / total;
    let sum_sq: f64 = w.iter().map(|wi| wi * wi).sum();
    let var = w.iter().zip(values).map(|(wi, oi)| wi * wi * (oi - estimate) * (oi - estimate)).sum::<f64>()
        / (total * total);
    let max_weight = w.iter().copied().fold(0.0, f64::max) / total;
    Ok(IsEstimate {
        estimate,
        standard_error: math::sqrt(var),
        effective_sample_size: total * total / sum_sq,
        n: values.len(),
        max_weight,
    })
}

/// Self-normalized estimate of `⟨obs⟩` under `exp(−E/k_B T)` from
/// proposals. The model's constant offset is left out of the weights, so
/// the result does not change at all when the offset changes.
pub fn is_estimate(
    obs: &Observable,
    proposals: &[Conformation],
    m: &EnergyModel,
    temperature: f64,
) -> Result<IsEstimate, BoltzmannError> {
    if proposals.is_empty() {
        return Err(BoltzmannError::NoProposals);
    }
    if let Observable::Distance(i, j) = *obs {
        let atom = i.max(j);
        if atom >= m.n_atoms {
            return Err(BoltzmannError::AtomIndex { term: 0, atom, n_atoms: m.n_atoms });
        }
    }
    let mut energies = Vec::with_capacity(proposals.len());
    for p in proposals {
        m.check(p)?;
        energies.push(m.relative_energy(p.positions()));
    }
    let values: Vec<f64> = proposals.iter().map(|p| obs.eval(p)).collect();
    is_estimate_from_energies(&values, &energies, thermal_energy(temperature))
}

/// Smallest RMS difference between the interatomic distance matrices of any
/// two proposals; zero means two proposals coincide up to rigid motion.
pub fn min_pairwise_separation(proposals: &[Conformation]) -> f64 {
    let mats: Vec<Vec<f64>> = proposals
        .iter()
        .map(|c| {
            let n = c.n_atoms();
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| c.distance(i, j)).collect()
        })
        .collect();
    let mut best = f64::INFINITY;
    for a in 0..mats.len() {
        for b in a + 1..mats.len() {
            let len = mats[a].len().max(1) as f64;
            let s: f64 = mats[a].iter().zip(&mats[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.min(math::sqrt(s / len));
        }
    }
    best
}
