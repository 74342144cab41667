//! The counterfactual survival network: a GRU history encoder, a bounded
//! representation `z = φ(s)`, a GRU embedding of the target treatment
//! sequence, and a discrete-time hazard head on `[z, embed(ā)]`.
//!
//! Everything is batched: a forward pass over `B` trajectories builds one
//! autodiff graph whose intermediate values are `[B, ·]` matrices.

use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tvsurv_autodiff::{Graph, Tensor, Var};

use crate::data::{Cohort, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::survival::{trapezoid, SurvivalCurve};

pub const CHECKPOINT_FORMAT: &str = "tvsurv-checkpoint-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Gru,
    /// One dense layer on the concatenated `(X̄(K), T̄(K−1))`.
    Flattened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HazardLink {
    /// Independent per-interval sigmoids.
    #[default]
    Sigmoid,
    /// Softmax across intervals (hazards sum to one).
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Only for checking linearity of φ.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub k: usize,
    pub hidden: usize,
    pub repr_dim: usize,
    pub head_hidden: usize,
    pub m: usize,
    pub treat_embed_dim: usize,
    pub seed: u64,
    pub encoder: EncoderKind,
    pub hazard: HazardLink,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 10,
            k: 8,
            hidden: 16,
            repr_dim: 8,
            head_hidden: 16,
            m: 20,
            treat_embed_dim: 8,
            seed: 0,
            encoder: EncoderKind::Gru,
            hazard: HazardLink::Sigmoid,
            activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d", self.d),
            ("k", self.k),
            ("hidden", self.hidden),
            ("repr_dim", self.repr_dim),
            ("head_hidden", self.head_hidden),
            ("treat_embed_dim", self.treat_embed_dim),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        if self.m < 2 {
            return Err(Error::Config("model.m must be at least 2".into()));
        }
        Ok(())
    }
}

/// Parameter groups, used for freezing and per-group gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Encoder,
    Representation,
    SequenceEmbedding,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: Group,
    /// Whether the L2 penalty applies.
    pub regularized: bool,
    #[serde(flatten, with = "tensor_serde")]
    pub value: Tensor,
}

mod tensor_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use tvsurv_autodiff::Tensor;

    #[derive(Serialize, Deserialize)]
    struct Flat {
        shape: Vec<usize>,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(t: &Tensor, s: S) -> Result<S::Ok, S::Error> {
        Flat {
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Tensor, D::Error> {
        let f = Flat::deserialize(d)?;
        Tensor::new(f.shape, f.data).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: Vec<Param>,
}

struct Init {
    rng: ChaCha8Rng,
    out: Vec<Param>,
}

impl Init {
    fn matrix(&mut self, name: &str, group: Group, rows: usize, cols: usize) {
        let bound = 1.0 / (rows as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let data = (0..rows * cols).map(|_| dist.sample(&mut self.rng)).collect();
        self.push(name, group, true, Tensor::matrix(rows, cols, data).expect("sized"));
    }

    fn bias(&mut self, name: &str, group: Group, cols: usize) {
        self.push(name, group, false, Tensor::zeros(&[1, cols]));
    }

    fn push(&mut self, name: &str, group: Group, regularized: bool, value: Tensor) {
        self.out.push(Param {
            name: name.to_string(),
            group,
            regularized,
            value,
        });
    }
}

impl ModelParams {
    /// Seeded initialization: uniform `±1/√fan_in` matrices, zero biases.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(c.seed),
            out: Vec::new(),
        };
        let (h, e) = (c.hidden, c.treat_embed_dim);
        match c.encoder {
            EncoderKind::Gru => {
                // the no-previous-treatment row is kept apart so L2 can skip it
                init.matrix("enc.t_none", Group::Encoder, 1, e);
                init.out.last_mut().expect("pushed").regularized = false;
                init.matrix("enc.t_embed", Group::Encoder, 2, e);
                init.matrix("enc.w_x", Group::Encoder, c.d + e, 3 * h);
                init.matrix("enc.w_h", Group::Encoder, h, 3 * h);
                init.bias("enc.b_x", Group::Encoder, 3 * h);
                init.bias("enc.b_h", Group::Encoder, 3 * h);
            }
            EncoderKind::Flattened => {
                init.matrix("enc.w_flat", Group::Encoder, (c.k + 1) * c.d + c.k, h);
                init.bias("enc.b_flat", Group::Encoder, h);
            }
        }
        init.matrix("phi.w1", Group::Representation, h, c.repr_dim);
        init.bias("phi.b1", Group::Representation, c.repr_dim);
        init.matrix("phi.w2", Group::Representation, c.repr_dim, c.repr_dim);
        init.bias("phi.b2", Group::Representation, c.repr_dim);
        init.matrix("seq.w_x", Group::SequenceEmbedding, 1, 3 * e);
        init.matrix("seq.w_h", Group::SequenceEmbedding, e, 3 * e);
        init.bias("seq.b_x", Group::SequenceEmbedding, 3 * e);
        init.bias("seq.b_h", Group::SequenceEmbedding, 3 * e);
        init.matrix("head.w1", Group::Head, c.repr_dim + e, c.head_hidden);
        init.bias("head.b1", Group::Head, c.head_hidden);
        init.matrix("head.w2", Group::Head, c.head_hidden, c.m);
        init.bias("head.b2", Group::Head, c.m);
        Ok(Self {
            config: config.clone(),
            params: init.out,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.value.max_abs())
            .fold(0.0, f64::max)
    }

    pub fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        for p in &mut self.params {
            p.value = p.value.map(&f);
        }
    }

    /// Put every tensor on `g`: as a trainable leaf unless its group is
    /// frozen, in which case as a constant.
    pub fn bind(&self, g: &mut Graph, frozen: &[Group]) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if frozen.contains(&p.group) {
                    g.constant(p.value.clone())
                } else {
                    g.param(p.value.clone())
                }
            })
            .collect();
        Bound {
            config: self.config.clone(),
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            vars,
        }
    }

    /// Wrap vars already on a graph, one per parameter in storage order (as
    /// handed out by a gradient check).
    pub fn bind_vars(&self, vars: &[Var]) -> Result<Bound> {
        if vars.len() != self.params.len() {
            return Err(Error::Data(format!(
                "{} vars for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        Ok(Bound {
            config: self.config.clone(),
            names: self.params.iter().map(|p| p.name.clone()).collect(),
            vars: vars.to_vec(),
        })
    }

    /// Representations for a set of trajectories, without gradients.
    pub fn represent_batch(&self, trajectories: &[&Trajectory]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[]);
        let s = b.encode(&mut g, trajectories)?;
        let z = b.represent(&mut g, s)?;
        Ok(rows_of(g.value(z)))
    }

    /// Survival curves at `τ_1..τ_m` for each trajectory under the matching
    /// target sequence.
    pub fn predict_batch(
        &self,
        trajectories: &[&Trajectory],
        sequences: &[&[u8]],
    ) -> Result<Vec<SurvivalCurve>> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, &[]);
        let s = b.encode(&mut g, trajectories)?;
        let z = b.represent(&mut g, s)?;
        let e = b.sequence_embedding(&mut g, sequences)?;
        let out = b.hazards(&mut g, z, e)?;
        Ok(rows_of(g.value(out.hazards))
            .into_iter()
            .map(SurvivalCurve::from_hazards)
            .collect())
    }

    /// Curves for every individual of `cohort` under one fixed sequence,
    /// processed in chunks.
    pub fn predict_cohort(&self, cohort: &Cohort, sequence: &[u8]) -> Result<Vec<SurvivalCurve>> {
        const CHUNK: usize = 512;
        let mut out = Vec::with_capacity(cohort.len());
        for chunk in cohort.trajectories.chunks(CHUNK) {
            let refs: Vec<&Trajectory> = chunk.iter().collect();
            let seqs = vec![sequence; refs.len()];
            out.extend(self.predict_batch(&refs, &seqs)?);
        }
        Ok(out)
    }

    /// Curves under each individual's own observed treatments.
    pub fn predict_factual(&self, cohort: &Cohort) -> Result<Vec<SurvivalCurve>> {
        const CHUNK: usize = 512;
        let mut out = Vec::with_capacity(cohort.len());
        for chunk in cohort.trajectories.chunks(CHUNK) {
            let refs: Vec<&Trajectory> = chunk.iter().collect();
            let seqs: Vec<&[u8]> = chunk.iter().map(|t| t.treatments.as_slice()).collect();
            out.extend(self.predict_batch(&refs, &seqs)?);
        }
        Ok(out)
    }

    pub fn predict_survival(&self, trajectory: &Trajectory, sequence: &[u8]) -> Result<SurvivalCurve> {
        Ok(self.predict_batch(&[trajectory], &[sequence])?.remove(0))
    }

    /// Survival difference `S_ā − S_ā′` at `τ_1..τ_m` and the difference in
    /// restricted mean survival time up to `τ_m`.
    pub fn tv_cate(
        &self,
        trajectory: &Trajectory,
        a: &[u8],
        a_prime: &[u8],
        grid: &TimeGrid,
    ) -> Result<Cate> {
        if grid.m() != self.config.m {
            return Err(Error::Grid(format!(
                "model has {} intervals, grid has {}",
                self.config.m,
                grid.m()
            )));
        }
        let curves = self.predict_batch(&[trajectory, trajectory], &[a, a_prime])?;
        let survival_diff: Vec<f64> = curves[0]
            .survival
            .iter()
            .zip(&curves[1].survival)
            .map(|(x, y)| x - y)
            .collect();
        let with_origin: Vec<f64> = std::iter::once(0.0).chain(survival_diff.iter().copied()).collect();
        let rmst_diff = trapezoid(grid.boundaries(), &with_origin);
        Ok(Cate {
            survival_diff,
            rmst_diff,
        })
    }

    pub fn save(&self, path: &Path, grid: &TimeGrid) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            grid: grid.boundaries().to_vec(),
            model: self.clone(),
        };
        let text = serde_json::to_string(&ck)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, TimeGrid)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format tag {:?}",
                path.display(),
                ck.format
            )));
        }
        let fresh = Self::init(&ck.model.config)?;
        let same_layout = fresh.params.len() == ck.model.params.len()
            && fresh
                .params
                .iter()
                .zip(&ck.model.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if !same_layout {
            return Err(Error::Checkpoint(format!(
                "{}: parameter layout does not match its config",
                path.display()
            )));
        }
        let grid = TimeGrid::new(ck.grid)?;
        if grid.m() != ck.model.config.m {
            return Err(Error::Checkpoint("grid and model disagree on m".into()));
        }
        Ok((ck.model, grid))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cate {
    pub survival_diff: Vec<f64>,
    pub rmst_diff: f64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    grid: Vec<f64>,
    model: ModelParams,
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    let (r, _) = t.dims2().expect("rank 2");
    (0..r).map(|i| t.row_slice(i).to_vec()).collect()
}

/// Hazards with their log and log-complement, kept separate so the
/// sigmoid link never forms `1 − λ` explicitly.
pub struct HazardOutput {
    pub hazards: Var,
    pub log_hazards: Var,
    pub log_complement: Var,
}

/// Parameters placed on a graph.
pub struct Bound {
    config: ModelConfig,
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        self.vars[i]
    }

    /// `(name, var, regularized)` for every parameter.
    pub fn vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.names.iter().map(String::as_str).zip(self.vars.iter().copied())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check(&self, trajectories: &[&Trajectory]) -> Result<()> {
        if trajectories.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        for t in trajectories {
            if t.treatments.len() != self.config.k + 1 || t.covariates.len() != self.config.k + 1 {
                return Err(Error::Data(format!(
                    "trajectory {} has {} steps, model expects {}",
                    t.id,
                    t.treatments.len(),
                    self.config.k + 1
                )));
            }
            if t.covariates.iter().any(|x| x.len() != self.config.d) {
                return Err(Error::Data(format!(
                    "trajectory {} covariate dimension differs from the model's {}",
                    t.id, self.config.d
                )));
            }
        }
        Ok(())
    }

    /// GRU step in the `r, z, n` convention:
    /// `n = tanh(x W_n + b_n + r ⊙ (h U_n + c_n))`, `h' = (1 − z) ⊙ n + z ⊙ h`.
    fn gru_step(
        g: &mut Graph,
        x: Var,
        h: Var,
        (w_x, w_h, b_x, b_h): (Var, Var, Var, Var),
        width: usize,
    ) -> Result<Var> {
        let gx = g.matmul(x, w_x)?;
        let gx = g.add(gx, b_x)?;
        let gh = g.matmul(h, w_h)?;
        let gh = g.add(gh, b_h)?;
        let xr = g.slice_cols(gx, 0, width)?;
        let hr = g.slice_cols(gh, 0, width)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let xz = g.slice_cols(gx, width, 2 * width)?;
        let hz = g.slice_cols(gh, width, 2 * width)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let xn = g.slice_cols(gx, 2 * width, 3 * width)?;
        let hn = g.slice_cols(gh, 2 * width, 3 * width)?;
        let rn = g.mul(r, hn)?;
        let n = g.add(xn, rn)?;
        let n = g.tanh(n);
        let keep = g.mul(z, h)?;
        let one_minus_z = g.one_minus(z);
        let update = g.mul(one_minus_z, n)?;
        Ok(g.add(update, keep)?)
    }

    /// Final encoder state `s = h(K)` per trajectory, `[B, hidden]`.
    pub fn encode(&self, g: &mut Graph, batch: &[&Trajectory]) -> Result<Var> {
        self.check(batch)?;
        let c = &self.config;
        let b = batch.len();
        match c.encoder {
            EncoderKind::Gru => {
                let weights = (
                    self.var("enc.w_x"),
                    self.var("enc.w_h"),
                    self.var("enc.b_x"),
                    self.var("enc.b_h"),
                );
                let mut h = g.constant(Tensor::zeros(&[b, c.hidden]));
                for k in 0..=c.k {
                    let x: Vec<f64> = batch
                        .iter()
                        .flat_map(|t| t.covariates[k].iter().copied())
                        .collect();
                    let x = g.constant(Tensor::matrix(b, c.d, x)?);
                    let emb = if k == 0 {
                        g.select_rows(self.var("enc.t_none"), &vec![0; b])?
                    } else {
                        let prev: Vec<usize> =
                            batch.iter().map(|t| t.treatments[k - 1] as usize).collect();
                        g.select_rows(self.var("enc.t_embed"), &prev)?
                    };
                    let input = g.concat(&[x, emb])?;
                    h = Self::gru_step(g, input, h, weights, c.hidden)?;
                }
                Ok(h)
            }
            EncoderKind::Flattened => {
                let width = (c.k + 1) * c.d + c.k;
                let mut flat = Vec::with_capacity(b * width);
                for t in batch {
                    for x in &t.covariates {
                        flat.extend_from_slice(x);
                    }
                    flat.extend(t.treatments[..c.k].iter().map(|&v| v as f64));
                }
                let x = g.constant(Tensor::matrix(b, width, flat)?);
                let a = g.matmul(x, self.var("enc.w_flat"))?;
                let a = g.add(a, self.var("enc.b_flat"))?;
                Ok(g.tanh(a))
            }
        }
    }

    fn activate(&self, g: &mut Graph, a: Var) -> Var {
        match self.config.activation {
            Activation::Tanh => g.tanh(a),
            Activation::Identity => a,
        }
    }

    /// `z = act(act(s W_1 + b_1) W_2 + b_2)`, `[B, repr_dim]`.
    pub fn represent(&self, g: &mut Graph, s: Var) -> Result<Var> {
        let a = g.matmul(s, self.var("phi.w1"))?;
        let a = g.add(a, self.var("phi.b1"))?;
        let a = self.activate(g, a);
        let a = g.matmul(a, self.var("phi.w2"))?;
        let a = g.add(a, self.var("phi.b2"))?;
        Ok(self.activate(g, a))
    }

    /// GRU over the bits of each target sequence, `[B, treat_embed_dim]`.
    pub fn sequence_embedding(&self, g: &mut Graph, sequences: &[&[u8]]) -> Result<Var> {
        let c = &self.config;
        let b = sequences.len();
        if let Some(bad) = sequences.iter().find(|s| s.len() != c.k + 1 || s.iter().any(|&v| v > 1)) {
            return Err(Error::Data(format!(
                "target sequence {bad:?} is not {} binary values",
                c.k + 1
            )));
        }
        let weights = (
            self.var("seq.w_x"),
            self.var("seq.w_h"),
            self.var("seq.b_x"),
            self.var("seq.b_h"),
        );
        let mut h = g.constant(Tensor::zeros(&[b, c.treat_embed_dim]));
        for k in 0..=c.k {
            let bits = sequences.iter().map(|s| s[k] as f64).collect();
            let x = g.constant(Tensor::matrix(b, 1, bits)?);
            h = Self::gru_step(g, x, h, weights, c.treat_embed_dim)?;
        }
        Ok(h)
    }

    /// Per-interval hazards from `[z, e]`, each row `[m]`.
    pub fn hazards(&self, g: &mut Graph, z: Var, e: Var) -> Result<HazardOutput> {
        let input = g.concat(&[z, e])?;
        let a = g.matmul(input, self.var("head.w1"))?;
        let a = g.add(a, self.var("head.b1"))?;
        let a = g.tanh(a);
        let logits = g.matmul(a, self.var("head.w2"))?;
        let logits = g.add(logits, self.var("head.b2"))?;
        Ok(match self.config.hazard {
            HazardLink::Sigmoid => {
                let hazards = g.sigmoid(logits);
                let neg = g.scale(logits, -1.0);
                let complement = g.sigmoid(neg);
                let log_hazards = g.log(hazards);
                let log_complement = g.log(complement);
                HazardOutput {
                    hazards,
                    log_hazards,
                    log_complement,
                }
            }
            HazardLink::Softmax => {
                let hazards = g.softmax(logits)?;
                let complement = g.one_minus(hazards);
                let log_hazards = g.log(hazards);
                let log_complement = g.log(complement);
                HazardOutput {
                    hazards,
                    log_hazards,
                    log_complement,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ModelConfig {
        ModelConfig {
            d: 2,
            k: 1,
            hidden: 2,
            repr_dim: 3,
            head_hidden: 3,
            m: 4,
            treat_embed_dim: 2,
            seed: 7,
            ..ModelConfig::default()
        }
    }

    fn traj(id: &str, x: Vec<Vec<f64>>, t: Vec<u8>) -> Trajectory {
        Trajectory {
            id: id.into(),
            covariates: x,
            treatments: t,
            observed_time: 1.0,
            event: true,
        }
    }

    fn sample() -> Trajectory {
        traj("a", vec![vec![0.3, -1.2], vec![1.5, 0.4]], vec![1, 0])
    }

    #[test]
    fn zero_parameters_encode_to_zero() {
        let mut p = ModelParams::init(&config()).unwrap();
        p.map_values(|_| 0.0);
        let z = p.represent_batch(&[&sample()]).unwrap();
        assert!(z[0].iter().all(|&v| v == 0.0));
        let mut g = Graph::new();
        let b = p.bind(&mut g, &[]);
        let s = b.encode(&mut g, &[&sample()]).unwrap();
        assert!(g.value(s).data().iter().all(|&v| v == 0.0));
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn gru_matches_hand_unrolled_cell() {
        let cfg = config();
        let p = ModelParams::init(&cfg).unwrap();
        let tr = sample();
        let get = |n: &str| p.get(n).unwrap().clone();
        let (wx, wh, bx, bh) = (get("enc.w_x"), get("enc.w_h"), get("enc.b_x"), get("enc.b_h"));
        let (none, table) = (get("enc.t_none"), get("enc.t_embed"));
        let hdim = cfg.hidden;
        let mut h = vec![0.0; hdim];
        for k in 0..=cfg.k {
            let mut input = tr.covariates[k].clone();
            let emb = if k == 0 {
                none.row_slice(0).to_vec()
            } else {
                table.row_slice(tr.treatments[k - 1] as usize).to_vec()
            };
            input.extend(emb);
            let gate = |col: usize| -> (f64, f64) {
                let a: f64 = input.iter().enumerate().map(|(i, v)| v * wx.get2(i, col)).sum::<f64>()
                    + bx.get2(0, col);
                let b: f64 =
                    h.iter().enumerate().map(|(i, v)| v * wh.get2(i, col)).sum::<f64>() + bh.get2(0, col);
                (a, b)
            };
            let mut next = vec![0.0; hdim];
            for u in 0..hdim {
                let (ar, br) = gate(u);
                let (az, bz) = gate(hdim + u);
                let (an, bn) = gate(2 * hdim + u);
                let r = sig(ar + br);
                let z = sig(az + bz);
                let n = (an + r * bn).tanh();
                next[u] = (1.0 - z) * n + z * h[u];
            }
            h = next;
        }
        let mut g = Graph::new();
        let b = p.bind(&mut g, &[]);
        let s = b.encode(&mut g, &[&tr]).unwrap();
        for (a, e) in g.value(s).data().iter().zip(&h) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_order_is_irrelevant() {
        let p = ModelParams::init(&config()).unwrap();
        let a = sample();
        let b = traj("b", vec![vec![-0.7, 0.1], vec![0.2, 2.0]], vec![0, 1]);
        let ab = p.predict_batch(&[&a, &b], &[&[1, 1], &[0, 1]]).unwrap();
        let ba = p.predict_batch(&[&b, &a], &[&[0, 1], &[1, 1]]).unwrap();
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
    }

    #[test]
    fn identity_representation_is_linear() {
        let cfg = ModelConfig {
            activation: Activation::Identity,
            ..config()
        };
        let p = ModelParams::init(&cfg).unwrap();
        let s = Tensor::matrix(1, 2, vec![0.4, -1.1]).unwrap();
        let z_of = |s: Tensor| {
            let mut g = Graph::new();
            let b = p.bind(&mut g, &[]);
            let sv = g.constant(s);
            let z = b.represent(&mut g, sv).unwrap();
            g.value(z).data().to_vec()
        };
        let z1 = z_of(s.clone());
        let z3 = z_of(s.map(|v| -2.5 * v));
        for (a, b) in z1.iter().zip(&z3) {
            assert!((-2.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_head_bias_gives_no_risk() {
        let mut p = ModelParams::init(&config()).unwrap();
        *p.get_mut("head.w2").unwrap() = Tensor::zeros(&[3, 4]);
        *p.get_mut("head.b2").unwrap() = Tensor::full(&[1, 4], -20.0);
        let c = p.predict_survival(&sample(), &[1, 1]).unwrap();
        assert!(c.hazards.iter().all(|&h| h < 1e-8));
        assert!(c.survival.iter().all(|&s| s > 1.0 - 1e-7));
        *p.get_mut("head.b2").unwrap() = Tensor::zeros(&[1, 4]);
        let c = p.predict_survival(&sample(), &[0, 1]).unwrap();
        for (j, s) in c.survival.iter().enumerate() {
            assert!((s - 0.5f64.powi(j as i32 + 1)).abs() < 1e-15);
        }
    }

    #[test]
    fn cate_is_antisymmetric_and_zero_on_diagonal() {
        let p = ModelParams::init(&config()).unwrap();
        let grid = TimeGrid::new(vec![0.0, 0.5, 1.0, 2.0, 3.0]).unwrap();
        let tr = sample();
        let same = p.tv_cate(&tr, &[1, 0], &[1, 0], &grid).unwrap();
        assert!(same.survival_diff.iter().all(|&v| v == 0.0));
        assert_eq!(same.rmst_diff, 0.0);
        let ab = p.tv_cate(&tr, &[1, 1], &[0, 0], &grid).unwrap();
        let ba = p.tv_cate(&tr, &[0, 0], &[1, 1], &grid).unwrap();
        for (x, y) in ab.survival_diff.iter().zip(&ba.survival_diff) {
            assert_eq!(*x, -*y);
        }
        assert_eq!(ab.rmst_diff, -ba.rmst_diff);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = ModelConfig {
            encoder: EncoderKind::Flattened,
            ..config()
        };
        let p = ModelParams::init(&cfg).unwrap();
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        p.save(&path, &grid).unwrap();
        let (q, g2) = ModelParams::load(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(grid, g2);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace(CHECKPOINT_FORMAT, "tvsurv-checkpoint-v0")).unwrap();
        assert!(matches!(ModelParams::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_wrong_dimensions() {
        let p = ModelParams::init(&config()).unwrap();
        let bad = traj("x", vec![vec![0.0; 3]; 2], vec![0, 0]);
        assert!(p.predict_survival(&bad, &[0, 0]).is_err());
        assert!(p.predict_survival(&sample(), &[0, 2]).is_err());
    }
}
