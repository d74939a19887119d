use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{CvaeError, GaussianEdgeDist, LatentCode, NodeGaussians};
use crate::math;
use crate::molgraph::{DistanceSet, ExtendedGraph, EDGE_FEATURES, NODE_FEATURES};
use crate::nnet::{Bound, Mlp, ParamStore, Tape, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of message passes in encoder and decoder.
    pub message_passes: usize,
    /// Width of the latent node state.
    pub node_width: usize,
    /// Width of the latent edge state.
    pub edge_width: usize,
    /// Hidden widths of the embedding and message-passing MLPs.
    pub hidden: Vec<usize>,
    /// Hidden widths of the read-out heads (each ends in one output).
    pub readout_hidden: Vec<usize>,
    /// Lower clamp on every predicted variance.
    pub variance_floor: f64,
    /// Seed for weight initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            message_passes: 3,
            node_width: 10,
            edge_width: 10,
            hidden: alloc::vec![50, 50],
            readout_hidden: alloc::vec![50, 50],
            variance_floor: 1e-6,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CvaeError> {
        if self.message_passes == 0 {
            return Err(CvaeError::Config("message_passes must be at least 1"));
        }
        if self.node_width == 0 || self.edge_width == 0 {
            return Err(CvaeError::Config("latent widths must be positive"));
        }
        if self.hidden.contains(&0) || self.readout_hidden.contains(&0) {
            return Err(CvaeError::Config("hidden widths must be positive"));
        }
        if !(self.variance_floor > 0.0) {
            return Err(CvaeError::Config("variance_floor must be positive"));
        }
        Ok(())
    }
}

/// Graph structure as tape-ready tensors and index lists.
#[derive(Debug, Clone)]
pub struct GraphTensors {
    n_nodes: usize,
    n_edges: usize,
    node_features: Tensor,
    edge_features: Tensor,
    // Both endpoint orderings stacked: edges 0..N_e as (r, s), then (s, r).
    twice: Arc<[usize]>,
    first: Arc<[usize]>,
    second: Arc<[usize]>,
    // Edge k at positions 2k and 2k+1 with targets r_k and s_k, so each node
    // sums its incident edges in edge order whichever endpoint it is.
    incident_edge: Arc<[usize]>,
    incident_node: Arc<[usize]>,
    inv_degree: Vec<f64>,
}

impl GraphTensors {
    pub fn new(eg: &ExtendedGraph) -> Self {
        let n_edges = eg.n_edges();
        let node_features = Tensor::from_rows(eg.node_features(), NODE_FEATURES).expect("node width");
        let rows: Vec<[f64; EDGE_FEATURES]> = eg.edges().iter().map(|e| e.features).collect();
        let edge_features = Tensor::from_rows(&rows, EDGE_FEATURES).expect("edge width");
        let r: Vec<usize> = eg.edges().iter().map(|e| e.r).collect();
        let s: Vec<usize> = eg.edges().iter().map(|e| e.s).collect();
        let twice: Vec<usize> = (0..n_edges).chain(0..n_edges).collect();
        let first: Vec<usize> = r.iter().chain(&s).copied().collect();
        let second: Vec<usize> = s.iter().chain(&r).copied().collect();
        let incident_edge: Vec<usize> = (0..n_edges).flat_map(|k| [k, k]).collect();
        let incident_node: Vec<usize> = r.iter().zip(&s).flat_map(|(&a, &b)| [a, b]).collect();
        let mut degree = alloc::vec![0usize; eg.n_nodes()];
        for e in eg.edges() {
            degree[e.r] += 1;
            degree[e.s] += 1;
        }
        let inv_degree = degree.iter().map(|&d| 1.0 / d.max(1) as f64).collect();
        Self {
            n_nodes: eg.n_nodes(),
            n_edges,
            node_features,
            edge_features,
            twice: twice.into(),
            first: first.into(),
            second: second.into(),
            incident_edge: incident_edge.into(),
            incident_node: incident_node.into(),
            inv_degree,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MessagePass {
    edge: Mlp,
    node: Mlp,
}

impl MessagePass {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut crate::Rng) -> Self {
        let widths = |out: usize| cfg.hidden.iter().copied().chain(core::iter::once(out)).collect::<Vec<_>>();
        let edge_in = cfg.edge_width + 2 * cfg.node_width;
        let node_in = cfg.node_width + cfg.edge_width;
        Self {
            edge: Mlp::new(store, &alloc::format!("{name}.edge"), edge_in, &widths(cfg.edge_width), rng),
            node: Mlp::new(store, &alloc::format!("{name}.node"), node_in, &widths(cfg.node_width), rng),
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        g: &GraphTensors,
        nodes: Var,
        edges: Var,
    ) -> Result<(Var, Var), CvaeError> {
        let e2 = tape.gather(edges, &g.twice)?;
        let va = tape.gather(nodes, &g.first)?;
        let vb = tape.gather(nodes, &g.second)?;
        let input = tape.concat(&[e2, va, vb])?;
        let both = self.edge.forward(tape, bound, input)?;
        let summed = tape.scatter_add(both, &g.twice, g.n_edges)?;
        let new_edges = tape.scale(summed, 0.5);

        let incident = tape.gather(new_edges, &g.incident_edge)?;
        let total = tape.scatter_add(incident, &g.incident_node, g.n_nodes)?;
        let width = tape.value(new_edges).shape()[1];
        let inv: Vec<f64> = g.inv_degree.iter().flat_map(|&w| core::iter::repeat(w).take(width)).collect();
        let inv = tape.leaf(Tensor::matrix(g.n_nodes, width, inv)?);
        let agg = tape.mul(total, inv)?;
        let node_in = tape.concat(&[nodes, agg])?;
        let new_nodes = self.node.forward(tape, bound, node_in)?;
        Ok((new_nodes, new_edges))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Readout {
    mean: Mlp,
    log_variance: Mlp,
}

impl Readout {
    fn new(store: &mut ParamStore, name: &str, inputs: usize, cfg: &ModelConfig, rng: &mut crate::Rng) -> Self {
        let widths: Vec<usize> = cfg.readout_hidden.iter().copied().chain(core::iter::once(1)).collect();
        Self {
            mean: Mlp::new(store, &alloc::format!("{name}.mean"), inputs, &widths, rng),
            log_variance: Mlp::new(store, &alloc::format!("{name}.logvar"), inputs, &widths, rng),
        }
    }

    /// Returns `(mean, variance)` columns; variance is `max(exp(raw), floor)`.
    fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, floor: f64) -> Result<(Var, Var), CvaeError> {
        let mean = self.mean.forward(tape, bound, x)?;
        let raw = self.log_variance.forward(tape, bound, x)?;
        let var = tape.exp(raw);
        Ok((mean, tape.clamp_min(var, floor)))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Network {
    embed_node: Mlp,
    embed_edge: Mlp,
    passes: Vec<MessagePass>,
    readout: Readout,
}

impl Network {
    fn new(
        store: &mut ParamStore,
        name: &str,
        cfg: &ModelConfig,
        node_in: usize,
        edge_in: usize,
        readout_in: usize,
        rng: &mut crate::Rng,
    ) -> Self {
        let widths = |out: usize| cfg.hidden.iter().copied().chain(core::iter::once(out)).collect::<Vec<_>>();
        let embed_node = Mlp::new(store, &alloc::format!("{name}.embed_node"), node_in, &widths(cfg.node_width), rng);
        let embed_edge = Mlp::new(store, &alloc::format!("{name}.embed_edge"), edge_in, &widths(cfg.edge_width), rng);
        let passes = (0..cfg.message_passes)
            .map(|t| MessagePass::new(store, &alloc::format!("{name}.mp{t}"), cfg, rng))
            .collect();
        let readout = Readout::new(store, &alloc::format!("{name}.readout"), readout_in, cfg, rng);
        Self { embed_node, embed_edge, passes, readout }
    }

    fn propagate(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        g: &GraphTensors,
        node_in: Var,
        edge_in: Var,
    ) -> Result<(Var, Var), CvaeError> {
        let mut nodes = self.embed_node.forward(tape, bound, node_in)?;
        let mut edges = self.embed_edge.forward(tape, bound, edge_in)?;
        for pass in &self.passes {
            (nodes, edges) = pass.forward(tape, bound, g, nodes, edges)?;
        }
        Ok((nodes, edges))
    }
}

/// The full model: encoder and decoder networks plus their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Cvae {
    config: ModelConfig,
    params: ParamStore,
    encoder: Network,
    decoder: Network,
}

/// Result of one ELBO evaluation.
#[derive(Debug, Clone)]
pub struct ElboEval {
    pub elbo: f64,
    pub log_likelihood: f64,
    pub kl: f64,
    /// Gradient of the loss `-elbo` for every parameter, in store order.
    pub grads: Vec<Tensor>,
}

struct TapeOutputs {
    loss: Var,
    ll_sum: Var,
    kl_sum: Var,
}

impl Cvae {
    pub fn new(config: ModelConfig) -> Result<Self, CvaeError> {
        config.validate()?;
        let mut rng = crate::rng_stream(config.init_seed, 0);
        let mut params = ParamStore::new();
        let encoder = Network::new(
            &mut params,
            "enc",
            &config,
            NODE_FEATURES,
            EDGE_FEATURES + 1,
            config.node_width,
            &mut rng,
        );
        let decoder = Network::new(
            &mut params,
            "dec",
            &config,
            NODE_FEATURES + 1,
            EDGE_FEATURES,
            config.edge_width,
            &mut rng,
        );
        Ok(Self { config, params, encoder, decoder })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn encode_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        g: &GraphTensors,
        d: &[f64],
    ) -> Result<(Var, Var), CvaeError> {
        if d.len() != g.n_edges {
            return Err(CvaeError::Misaligned { what: "distance set", expected: g.n_edges, got: d.len() });
        }
        let nodes = tape.leaf(g.node_features.clone());
        let feats = tape.leaf(g.edge_features.clone());
        let dist = tape.leaf(Tensor::column(d.to_vec()));
        let edges = tape.concat(&[feats, dist])?;
        let (nodes, _) = self.encoder.propagate(tape, bound, g, nodes, edges)?;
        self.encoder.readout.forward(tape, bound, nodes, self.config.variance_floor)
    }

    fn decode_on_tape(&self, tape: &mut Tape, bound: &Bound, g: &GraphTensors, z: Var) -> Result<(Var, Var), CvaeError> {
        let feats = tape.leaf(g.node_features.clone());
        let nodes = tape.concat(&[feats, z])?;
        let edges = tape.leaf(g.edge_features.clone());
        let (_, edges) = self.decoder.propagate(tape, bound, g, nodes, edges)?;
        self.decoder.readout.forward(tape, bound, edges, self.config.variance_floor)
    }

    /// Posterior `q(z | d, G)`.
    pub fn encode(&self, eg: &ExtendedGraph, d: &DistanceSet) -> Result<NodeGaussians, CvaeError> {
        self.encode_tensors(&GraphTensors::new(eg), d.values())
    }

    pub fn encode_tensors(&self, g: &GraphTensors, d: &[f64]) -> Result<NodeGaussians, CvaeError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let (mean, var) = self.encode_on_tape(&mut tape, &bound, g, d)?;
        Ok(NodeGaussians { mean: tape.value(mean).data().to_vec(), variance: tape.value(var).data().to_vec() })
    }

    /// Likelihood `p(d | z, G)` as per-edge Gaussians.
    pub fn decode(&self, eg: &ExtendedGraph, z: &LatentCode) -> Result<GaussianEdgeDist, CvaeError> {
        self.decode_tensors(&GraphTensors::new(eg), z)
    }

    pub fn decode_tensors(&self, g: &GraphTensors, z: &LatentCode) -> Result<GaussianEdgeDist, CvaeError> {
        if z.len() != g.n_nodes {
            return Err(CvaeError::Misaligned { what: "latent code", expected: g.n_nodes, got: z.len() });
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let zv = tape.leaf(Tensor::column(z.0.clone()));
        let (mean, var) = self.decode_on_tape(&mut tape, &bound, g, zv)?;
        Ok(GaussianEdgeDist { mean: tape.value(mean).data().to_vec(), variance: tape.value(var).data().to_vec() })
    }

    fn elbo_on_tape(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        g: &GraphTensors,
        d: &[f64],
        noise: &[f64],
    ) -> Result<TapeOutputs, CvaeError> {
        if noise.len() != g.n_nodes {
            return Err(CvaeError::Misaligned { what: "noise", expected: g.n_nodes, got: noise.len() });
        }
        let (mu_z, var_z) = self.encode_on_tape(tape, bound, g, d)?;
        let sigma_z = tape.sqrt(var_z);
        let eps = tape.leaf(Tensor::column(noise.to_vec()));
        let shift = tape.mul(sigma_z, eps)?;
        let z = tape.add(mu_z, shift)?;

        let (mu_d, var_d) = self.decode_on_tape(tape, bound, g, z)?;
        let target = tape.leaf(Tensor::column(d.to_vec()));
        let diff = tape.sub(target, mu_d)?;
        let sq = tape.square(diff);
        let quad = tape.div(sq, var_d)?;
        let log_var_d = tape.log(var_d);
        let nll_terms = tape.add(quad, log_var_d)?;
        // Σ[(d - μ)²/σ² + ln σ²]; constants are added outside the tape.
        let ll_sum = tape.sum(nll_terms);

        let mu_sq = tape.square(mu_z);
        let log_var_z = tape.log(var_z);
        let a = tape.add(var_z, mu_sq)?;
        let kl_terms = tape.sub(a, log_var_z)?;
        // Σ[σ² + μ² - ln σ²]
        let kl_sum = tape.sum(kl_terms);

        let half_nll = tape.scale(ll_sum, 0.5);
        let half_kl = tape.scale(kl_sum, 0.5);
        let loss = tape.add(half_nll, half_kl)?;
        Ok(TapeOutputs { loss, ll_sum, kl_sum })
    }

    /// Single-sample ELBO with explicit standard-normal `noise` (one value per
    /// atom), and the gradient of `-elbo`.
    pub fn elbo_with_noise(&self, g: &GraphTensors, d: &[f64], noise: &[f64]) -> Result<ElboEval, CvaeError> {
        self.elbo_impl(g, d, noise, true)
    }

    /// ELBO value only; skips the backward pass.
    pub fn elbo_value(&self, g: &GraphTensors, d: &[f64], noise: &[f64]) -> Result<f64, CvaeError> {
        self.elbo_impl(g, d, noise, false).map(|e| e.elbo)
    }

    fn elbo_impl(&self, g: &GraphTensors, d: &[f64], noise: &[f64], grads: bool) -> Result<ElboEval, CvaeError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let out = self.elbo_on_tape(&mut tape, &bound, g, d, noise)?;
        let n_edges = g.n_edges as f64;
        let n_nodes = g.n_nodes as f64;
        let log_likelihood = -0.5 * (tape.value(out.ll_sum).item() + n_edges * math::LN_2PI);
        let kl = 0.5 * (tape.value(out.kl_sum).item() - n_nodes);
        if !log_likelihood.is_finite() {
            return Err(CvaeError::NumericalFailure { term: "log-likelihood", value: log_likelihood });
        }
        if !kl.is_finite() {
            return Err(CvaeError::NumericalFailure { term: "kl", value: kl });
        }
        let grads = if grads {
            let g = tape.backward(out.loss)?;
            self.params.collect_grads(&bound, &g)
        } else {
            Vec::new()
        };
        Ok(ElboEval { elbo: log_likelihood - kl, log_likelihood, kl, grads })
    }

    /// Single-sample reparameterized ELBO and gradient of `-elbo`.
    pub fn elbo(
        &self,
        eg: &ExtendedGraph,
        d: &DistanceSet,
        rng: &mut crate::Rng,
    ) -> Result<ElboEval, CvaeError> {
        d.check_against(eg)?;
        let noise: Vec<f64> = (0..eg.n_nodes()).map(|_| rng.sample(StandardNormal)).collect();
        self.elbo_with_noise(&GraphTensors::new(eg), d.values(), &noise)
    }
}
