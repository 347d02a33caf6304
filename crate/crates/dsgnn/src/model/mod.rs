//! The degree-specific network: seed map plus multi-task neighborhood
//! aggregation (explicit per-degree weights or hash maps), a renormalized
//! adjacency baseline, and degree-sliced graph readout.

mod gcn;
mod pool;

pub use gcn::norm_adjacency;
pub use pool::{build_pool_plan, GraphRepr, ReprSlot};

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeIndex, Graph, GraphSet};
use crate::hashing::{derive_task_specs, mix64, HashSpec, PhiTable};
use crate::tensor::{HashRowPlan, Scalar, SymCsr, Tape, TaskAssign, Tensor, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Weight,
    Hash,
    Gcn,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weight" => Ok(Variant::Weight),
            "hash" => Ok(Variant::Hash),
            "gcn" => Ok(Variant::Gcn),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Node,
    Graph,
}

/// What to do with a node whose degree has no convolution task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackRule {
    /// Use the shared matrix / global hash map alone (warn counter).
    GlobalOnly,
    /// Refuse to run, naming the degree.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// Degree-sliced sums concatenated across layers.
    DegreeSliced,
    /// Mean over nodes per layer (the ablation baseline).
    Mean,
}

impl std::str::FromStr for PoolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree" => Ok(PoolKind::DegreeSliced),
            "mean" => Ok(PoolKind::Mean),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub variant: Variant,
    pub classes: usize,
    pub task: TaskKind,
    pub pooling: PoolKind,
    pub fallback: FallbackRule,
    pub hash_dim: Option<usize>,
    pub hash_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("need at least one layer".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("need at least one class".into()));
        }
        if matches!(self.variant, Variant::Weight | Variant::Hash) && self.hidden % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden width {} must be even to split between seed and neighbor halves",
                self.hidden
            )));
        }
        Ok(())
    }
}

enum Layer<T: Scalar> {
    Weight {
        w0: Tensor<T>,
        wg: Tensor<T>,
        wdeg: Vec<Tensor<T>>,
    },
    Hash {
        w0: Tensor<T>,
        wshared: Tensor<T>,
        spec_global: HashSpec,
        spec_tasks: Vec<HashSpec>,
        table_global: PhiTable,
        table_tasks: Vec<PhiTable>,
    },
    Gcn {
        w: Tensor<T>,
    },
}

/// Degree-specific network with per-degree-task convolution parameters.
pub struct DegreeNet<T: Scalar> {
    pub cfg: ModelConfig,
    degree_index: DegreeIndex,
    /// Ascending raw-degree vocabulary used by the degree-sliced readout.
    pool_vocab: Vec<usize>,
    attr_dim: usize,
    layers: Vec<Layer<T>>,
    classifier: Tensor<T>,
    task_labels: Vec<String>,
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized to match")
}

impl<T: Scalar> DegreeNet<T> {
    /// Builds a network with seeded Glorot-uniform weights. `pool_vocab`
    /// fixes the readout degree slots (the training-split union for graph
    /// tasks); pass the index's degree values for node tasks.
    pub fn new(
        cfg: ModelConfig,
        degree_index: DegreeIndex,
        attr_dim: usize,
        pool_vocab: Vec<usize>,
        init_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if attr_dim == 0 {
            return Err(Error::Config("input attribute dimension is zero".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let n_tasks = degree_index.n_tasks();
        let d_split = cfg.hidden / 2;

        let mut layers = Vec::with_capacity(cfg.layers);
        for k in 0..cfg.layers {
            let in_dim = if k == 0 { attr_dim } else { cfg.hidden };
            let layer = match cfg.variant {
                Variant::Weight => Layer::Weight {
                    w0: glorot(&mut rng, in_dim, d_split),
                    wg: glorot(&mut rng, in_dim, d_split),
                    wdeg: (0..n_tasks).map(|_| glorot(&mut rng, in_dim, d_split)).collect(),
                },
                Variant::Hash => {
                    let m = cfg.hash_dim.unwrap_or(in_dim);
                    let master = HashSpec::from_master(m, cfg.hash_seed ^ mix64(k as u64));
                    let (spec_tasks, reseeds) = derive_task_specs(&master, n_tasks, in_dim);
                    if reseeds > 0 {
                        eprintln!(
                            "warning: layer {k}: {reseeds} hash reseed attempts while separating task tables"
                        );
                    }
                    let table_tasks = spec_tasks
                        .iter()
                        .map(|s| PhiTable::from_spec(s, in_dim))
                        .collect();
                    Layer::Hash {
                        w0: glorot(&mut rng, in_dim, d_split),
                        wshared: glorot(&mut rng, m, d_split),
                        table_global: PhiTable::from_spec(&master, in_dim),
                        spec_global: master,
                        spec_tasks,
                        table_tasks,
                    }
                }
                Variant::Gcn => Layer::Gcn {
                    w: glorot(&mut rng, in_dim, cfg.hidden),
                },
            };
            layers.push(layer);
        }

        let clf_in = match cfg.task {
            TaskKind::Node => cfg.hidden,
            TaskKind::Graph => match cfg.pooling {
                PoolKind::DegreeSliced => {
                    pool_vocab.len() * (attr_dim + cfg.layers * cfg.hidden)
                }
                PoolKind::Mean => attr_dim + cfg.layers * cfg.hidden,
            },
        };
        let classifier = glorot(&mut rng, clf_in, cfg.classes);
        let task_labels = degree_index.task_labels();

        Ok(Self {
            cfg,
            degree_index,
            pool_vocab,
            attr_dim,
            layers,
            classifier,
            task_labels,
        })
    }

    pub fn degree_index(&self) -> &DegreeIndex {
        &self.degree_index
    }

    pub fn pool_vocab(&self) -> &[usize] {
        &self.pool_vocab
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    pub fn seed_width(&self) -> usize {
        self.cfg.hidden / 2
    }

    /// Per-layer hash specs (global, per-task), present on hash models.
    pub fn hash_specs(&self) -> Vec<(HashSpec, Vec<HashSpec>)> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Hash { spec_global, spec_tasks, .. } => {
                    Some((*spec_global, spec_tasks.clone()))
                }
                _ => None,
            })
            .collect()
    }

    /// Weight-variant layer parameters, used by the kernel-identity check:
    /// `(W0, Wg, [W_task])` for layer `k` (0-based).
    pub fn weight_layer(&self, k: usize) -> Option<(&Tensor<T>, &Tensor<T>, &[Tensor<T>])> {
        match &self.layers[k] {
            Layer::Weight { w0, wg, wdeg } => Some((w0, wg, wdeg)),
            _ => None,
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Weight { w0, wg, wdeg } => {
                    out.push((format!("layer{k}.w0"), w0));
                    out.push((format!("layer{k}.wg"), wg));
                    for (t, w) in wdeg.iter().enumerate() {
                        out.push((format!("layer{k}.w_{}", self.task_labels[t]), w));
                    }
                }
                Layer::Hash { w0, wshared, .. } => {
                    out.push((format!("layer{k}.w0"), w0));
                    out.push((format!("layer{k}.wshared"), wshared));
                }
                Layer::Gcn { w } => {
                    out.push((format!("layer{k}.w"), w));
                }
            }
        }
        out.push(("classifier".to_string(), &self.classifier));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Weight { w0, wg, wdeg } => {
                    out.push(w0);
                    out.push(wg);
                    out.extend(wdeg.iter_mut());
                }
                Layer::Hash { w0, wshared, .. } => {
                    out.push(w0);
                    out.push(wshared);
                }
                Layer::Gcn { w } => out.push(w),
            }
        }
        out.push(&mut self.classifier);
        out
    }

    /// Applies an update to every parameter, in `named_params` order.
    pub fn update_params(&mut self, f: impl Fn(usize, &mut Tensor<T>)) {
        for (i, p) in self.params_mut().into_iter().enumerate() {
            f(i, p);
        }
    }

    /// Overwrites parameters from `(name, tensor)` pairs (checkpoint load).
    pub fn set_params(&mut self, values: &[(String, Tensor<T>)]) -> Result<()> {
        let names: Vec<String> = self.named_params().iter().map(|(n, _)| n.clone()).collect();
        if names.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters in checkpoint, model has {}",
                values.len(),
                names.len()
            )));
        }
        let mut slots = self.params_mut();
        for (i, (name, tensor)) in values.iter().enumerate() {
            if *name != names[i] {
                return Err(Error::Checkpoint(format!(
                    "parameter {i} named {name:?}, expected {:?}",
                    names[i]
                )));
            }
            if tensor.shape() != slots[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    tensor.shape(),
                    slots[i].shape()
                )));
            }
            *slots[i] = tensor.clone();
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.named_params().into_iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<T>]) {
        self.update_params(|i, p| *p = snapshot[i].clone());
    }

    /// Total trainable parameter entries.
    pub fn param_count(&self) -> usize {
        self.named_params()
            .iter()
            .map(|(_, t)| t.rows() * t.cols())
            .sum()
    }

    /// Resolves the per-node convolution task table for a graph. Unseen
    /// degrees either fall back to the shared branch (counted) or error,
    /// per the configured rule.
    pub fn bind(&self, graph: &Arc<Graph>) -> Result<GraphBinding<T>> {
        let mut task_of_node = Vec::with_capacity(graph.n());
        let mut fallback_nodes = 0usize;
        for v in 0..graph.n() {
            match self.degree_index.task_of(graph.degree(v)) {
                Some(t) => task_of_node.push(Some(t)),
                None => match self.cfg.fallback {
                    FallbackRule::Strict => return Err(Error::UnseenDegree(graph.degree(v))),
                    FallbackRule::GlobalOnly => {
                        fallback_nodes += 1;
                        task_of_node.push(None);
                    }
                },
            }
        }
        let assign = Arc::new(TaskAssign {
            task_of_node: task_of_node.clone(),
            n_tasks: self.degree_index.n_tasks(),
        });
        let hash_plans = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Hash { table_global, table_tasks, .. } => Some(Arc::new(HashRowPlan {
                    global: table_global.clone(),
                    per_task: table_tasks.clone(),
                    task_of_node: task_of_node.clone(),
                })),
                _ => None,
            })
            .collect();
        let norm_adj = match self.cfg.variant {
            Variant::Gcn => Some(Arc::new(norm_adjacency::<T>(graph))),
            _ => None,
        };
        Ok(GraphBinding {
            graph: Arc::clone(graph),
            assign,
            hash_plans,
            norm_adj,
            fallback_nodes,
        })
    }
}

/// Model/graph pairing with the per-node task table and cached layer plans.
pub struct GraphBinding<T> {
    pub graph: Arc<Graph>,
    pub assign: Arc<TaskAssign>,
    pub hash_plans: Vec<Option<Arc<HashRowPlan>>>,
    pub norm_adj: Option<Arc<SymCsr<T>>>,
    pub fallback_nodes: usize,
}

/// Parameter vars registered on a tape, in `named_params` order.
pub struct ModelVars {
    layer_vars: Vec<LayerVars>,
    pub classifier: VarId,
    pub all: Vec<VarId>,
}

enum LayerVars {
    Weight { w0: VarId, wg: VarId, wdeg: Vec<VarId> },
    Hash { w0: VarId, wshared: VarId },
    Gcn { w: VarId },
}

/// Puts every model parameter on the tape as a trainable leaf.
pub fn register<T: Scalar>(tape: &mut Tape<T>, model: &DegreeNet<T>) -> ModelVars {
    let mut all = Vec::new();
    let mut layer_vars = Vec::new();
    for layer in &model.layers {
        match layer {
            Layer::Weight { w0, wg, wdeg } => {
                let w0 = tape.param(w0.clone());
                let wg = tape.param(wg.clone());
                let wdeg: Vec<VarId> = wdeg.iter().map(|w| tape.param(w.clone())).collect();
                all.push(w0);
                all.push(wg);
                all.extend(&wdeg);
                layer_vars.push(LayerVars::Weight { w0, wg, wdeg });
            }
            Layer::Hash { w0, wshared, .. } => {
                let w0 = tape.param(w0.clone());
                let wshared = tape.param(wshared.clone());
                all.push(w0);
                all.push(wshared);
                layer_vars.push(LayerVars::Hash { w0, wshared });
            }
            Layer::Gcn { w } => {
                let w = tape.param(w.clone());
                all.push(w);
                layer_vars.push(LayerVars::Gcn { w });
            }
        }
    }
    let classifier = tape.param(model.classifier.clone());
    all.push(classifier);
    ModelVars { layer_vars, classifier, all }
}

/// Runs the layer stack, returning `[H_0, ..., H_K]` on the tape. Optional
/// per-layer masks are multiplied into each hidden layer's input (inverted
/// dropout; `masks[k]` gates the input of layer `k`).
pub fn forward_layers<T: Scalar>(
    tape: &mut Tape<T>,
    model: &DegreeNet<T>,
    vars: &ModelVars,
    binding: &GraphBinding<T>,
    masks: Option<&[Tensor<T>]>,
) -> Result<Vec<VarId>> {
    let attrs = binding
        .graph
        .attributes()
        .ok_or_else(|| Error::Validation("graph has no attributes".into()))?;
    if attrs.cols() != model.attr_dim {
        return Err(Error::shape(
            format!("{} attribute columns", model.attr_dim),
            format!("{}", attrs.cols()),
        ));
    }
    let h0 = tape.constant(attrs.cast::<T>());
    let mut hs = vec![h0];

    for (k, layer_vars) in vars.layer_vars.iter().enumerate() {
        let mut input = *hs.last().expect("at least H_0");
        if let Some(masks) = masks {
            let mask = tape.constant(masks[k].clone());
            input = tape.mul_elem(input, mask)?;
        }
        let h = match layer_vars {
            LayerVars::Weight { w0, wg, wdeg } => {
                let seed_lin = tape.matmul(input, *w0)?;
                let seed = tape.relu(seed_lin);
                let s = tape.neighbor_sum(&binding.graph, input)?;
                let nb_lin = tape.degree_matmul(s, *wg, wdeg, &binding.assign)?;
                let nb = tape.relu(nb_lin);
                tape.concat_cols(seed, nb)?
            }
            LayerVars::Hash { w0, wshared } => {
                let seed_lin = tape.matmul(input, *w0)?;
                let seed = tape.relu(seed_lin);
                let s = tape.neighbor_sum(&binding.graph, input)?;
                let plan = binding.hash_plans[k]
                    .as_ref()
                    .ok_or_else(|| Error::Validation("hash plan missing for layer".into()))?;
                let hashed = tape.hash_agg(s, plan)?;
                let nb_lin = tape.matmul(hashed, *wshared)?;
                let nb = tape.relu(nb_lin);
                tape.concat_cols(seed, nb)?
            }
            LayerVars::Gcn { w } => {
                let adj = binding
                    .norm_adj
                    .as_ref()
                    .ok_or_else(|| Error::Validation("normalized adjacency missing".into()))?;
                let xw = tape.matmul(input, *w)?;
                let agg = tape.sym_spmm(adj, xw)?;
                tape.relu(agg)
            }
        };
        hs.push(h);
    }
    Ok(hs)
}

/// Node-task logits: linear classifier on the final node features.
pub fn forward_node<T: Scalar>(
    tape: &mut Tape<T>,
    model: &DegreeNet<T>,
    vars: &ModelVars,
    binding: &GraphBinding<T>,
    masks: Option<&[Tensor<T>]>,
) -> Result<VarId> {
    let hs = forward_layers(tape, model, vars, binding, masks)?;
    tape.matmul(*hs.last().expect("layers"), vars.classifier)
}

/// Graph-task logits over a disjoint-union binding: pool every layer's
/// features per graph, concatenate across layers, classify.
pub fn forward_graphs<T: Scalar>(
    tape: &mut Tape<T>,
    model: &DegreeNet<T>,
    vars: &ModelVars,
    binding: &GraphBinding<T>,
    graph_of_node: &[usize],
    n_graphs: usize,
    masks: Option<&[Tensor<T>]>,
) -> Result<VarId> {
    let hs = forward_layers(tape, model, vars, binding, masks)?;
    let plan = Arc::new(build_pool_plan(
        &binding.graph,
        graph_of_node,
        n_graphs,
        &model.pool_vocab,
    ));
    let mut pooled = Vec::with_capacity(hs.len());
    for &h in &hs {
        let p = match model.cfg.pooling {
            PoolKind::DegreeSliced => tape.degree_pool(h, &plan)?,
            PoolKind::Mean => tape.mean_pool(h, &plan)?,
        };
        pooled.push(p);
    }
    let mut repr = pooled[0];
    for &p in &pooled[1..] {
        repr = tape.concat_cols(repr, p)?;
    }
    tape.matmul(repr, vars.classifier)
}

/// Value-level layer activations (`H_0..H_K`) for analysis paths that need
/// the forward intermediates without gradients.
pub fn activations<T: Scalar>(model: &DegreeNet<T>, graph: &Arc<Graph>) -> Result<Vec<Tensor<T>>> {
    let binding = model.bind(graph)?;
    let mut tape = Tape::new();
    let vars = register(&mut tape, model);
    let hs = forward_layers(&mut tape, model, &vars, &binding, None)?;
    Ok(hs.into_iter().map(|h| tape.value(h).clone()).collect())
}

/// Argmax per row with ties broken toward the lowest class id.
pub fn argmax_rows<T: Scalar>(logits: &Tensor<T>) -> Vec<u32> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

/// Builds the union binding plus bookkeeping for a graph-level task.
pub struct SetBinding<T> {
    pub binding: GraphBinding<T>,
    pub graph_of_node: Vec<usize>,
    pub n_graphs: usize,
}

pub fn bind_set<T: Scalar>(model: &DegreeNet<T>, set: &GraphSet) -> Result<SetBinding<T>> {
    let (union, graph_of_node) = set.union_graph();
    let union = Arc::new(union);
    let binding = model.bind(&union)?;
    Ok(SetBinding {
        binding,
        graph_of_node,
        n_graphs: set.len(),
    })
}

pub mod checkpoint {
    //! Model checkpoint: DMN1 binary parameters plus a JSON header with the
    //! config, degree vocabulary and hash seeds.

    use super::*;
    use std::path::Path;

    #[derive(Debug, Serialize, Deserialize)]
    pub struct Header {
        pub config: ModelConfig,
        pub degree_values: Vec<usize>,
        pub bucketing: bool,
        pub pool_vocab: Vec<usize>,
        pub attr_dim: usize,
        pub hash_specs: Vec<(HashSpec, Vec<HashSpec>)>,
    }

    pub fn save<T: Scalar>(model: &DegreeNet<T>, bin: &Path, json: &Path) -> Result<()> {
        let named: Vec<(String, Tensor<T>)> = model
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        crate::tensor::save_params(bin, &named)?;
        let header = Header {
            config: model.cfg.clone(),
            degree_values: model.degree_index.degree_values().to_vec(),
            bucketing: model.degree_index.bucketing(),
            pool_vocab: model.pool_vocab.clone(),
            attr_dim: model.attr_dim,
            hash_specs: model.hash_specs(),
        };
        std::fs::write(json, serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    pub fn load<T: Scalar>(bin: &Path, json: &Path) -> Result<DegreeNet<T>> {
        let header: Header = serde_json::from_str(&std::fs::read_to_string(json)?)?;
        let index = DegreeIndex::from_degree_values(&header.degree_values, header.bucketing);
        let mut model = DegreeNet::new(
            header.config,
            index,
            header.attr_dim,
            header.pool_vocab,
            0,
        )?;
        let params: Vec<(String, Tensor<T>)> = crate::tensor::load_params(bin)?;
        model.set_params(&params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_graph, DegreeClassSpec, SynthKind};

    fn small_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden: 8,
            variant,
            classes: 3,
            task: TaskKind::Node,
            pooling: PoolKind::DegreeSliced,
            fallback: FallbackRule::GlobalOnly,
            hash_dim: None,
            hash_seed: 7,
        }
    }

    fn test_graph() -> Arc<Graph> {
        let spec = vec![
            DegreeClassSpec { class_id: 0, degree: 2, count: 6 },
            DegreeClassSpec { class_id: 1, degree: 3, count: 6 },
        ];
        Arc::new(synth_graph(SynthKind::DegreeClasses { spec }, 4).unwrap())
    }

    fn logits_for(model: &DegreeNet<f64>, graph: &Arc<Graph>) -> Tensor<f64> {
        let binding = model.bind(graph).unwrap();
        let mut tape = Tape::new();
        let vars = register(&mut tape, model);
        let out = forward_node(&mut tape, model, &vars, &binding, None).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn weight_variant_param_count_formula() {
        let graph = test_graph();
        let ix = DegreeIndex::from_graph(&graph, None, false);
        let t = ix.n_tasks();
        let cfg = small_config(Variant::Weight);
        let model: DegreeNet<f64> =
            DegreeNet::new(cfg.clone(), ix.clone(), 1, ix.degree_values().to_vec(), 1).unwrap();
        let d_split = cfg.hidden / 2;
        let f_in_0 = 1;
        let f_in_1 = cfg.hidden;
        let layer0 = f_in_0 * d_split + (t + 1) * f_in_0 * d_split;
        let layer1 = f_in_1 * d_split + (t + 1) * f_in_1 * d_split;
        let clf = cfg.hidden * cfg.classes;
        assert_eq!(model.param_count(), layer0 + layer1 + clf);
    }

    #[test]
    fn isolated_node_gets_zero_neighbor_half() {
        let graph = Arc::new(Graph::from_edges(3, &[(0, 1)]).unwrap()
            .with_attributes(Tensor::from_vec(3, 2, vec![1.0, 2.0, 0.5, -1.0, 0.3, 0.9]).unwrap())
            .unwrap());
        let ix = DegreeIndex::from_graph(&graph, None, false);
        let mut cfg = small_config(Variant::Weight);
        cfg.layers = 1;
        let model: DegreeNet<f64> =
            DegreeNet::new(cfg, ix.clone(), 2, ix.degree_values().to_vec(), 3).unwrap();
        let binding = model.bind(&graph).unwrap();
        let mut tape = Tape::new();
        let vars = register(&mut tape, &model);
        let hs = forward_layers(&mut tape, &model, &vars, &binding, None).unwrap();
        let h1 = tape.value(hs[1]);
        // node 2 is isolated: neighbor half must be exactly relu(0) = 0
        let d = model.seed_width();
        assert!(h1.row(2)[d..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn untrained_zero_classifier_gives_uniform_loss() {
        let graph = test_graph();
        let ix = DegreeIndex::from_graph(&graph, None, false);
        let cfg = small_config(Variant::Weight);
        let classes = cfg.classes;
        let mut model: DegreeNet<f64> =
            DegreeNet::new(cfg, ix.clone(), 1, ix.degree_values().to_vec(), 5).unwrap();
        let n_params = model.named_params().len();
        model.update_params(|i, p| {
            if i == n_params - 1 {
                *p = Tensor::zeros(p.rows(), p.cols());
            }
        });
        let binding = model.bind(&graph).unwrap();
        let mut tape = Tape::new();
        let vars = register(&mut tape, &model);
        let logits = forward_node(&mut tape, &model, &vars, &binding, None).unwrap();
        let labels = Arc::new(vec![0u32; graph.n()]);
        let mask = Arc::new((0..graph.n()).collect::<Vec<_>>());
        let loss = tape.softmax_xent(logits, &labels, &mask).unwrap();
        assert!((tape.scalar(loss) - (classes as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_deterministic_given_seed() {
        let graph = test_graph();
        let ix = DegreeIndex::from_graph(&graph, None, false);
        for variant in [Variant::Weight, Variant::Hash, Variant::Gcn] {
            let cfg = small_config(variant);
            let a: DegreeNet<f64> =
                DegreeNet::new(cfg.clone(), ix.clone(), 1, ix.degree_values().to_vec(), 11).unwrap();
            let b: DegreeNet<f64> =
                DegreeNet::new(cfg, ix.clone(), 1, ix.degree_values().to_vec(), 11).unwrap();
            assert_eq!(logits_for(&a, &graph).data(), logits_for(&b, &graph).data());
        }
    }

    #[test]
    fn neighbor_storage_order_does_not_change_output() {
        let graph = test_graph();
        let ix = DegreeIndex::from_graph(&graph, None, false);
        for variant in [Variant::Weight, Variant::Hash] {
            let cfg = small_config(variant);
            let model: DegreeNet<f64> =
                DegreeNet::new(cfg, ix.clone(), 1, ix.degree_values().to_vec(), 13).unwrap();
            let base = logits_for(&model, &graph);
            for seed in 0..3 {
                let shuffled = Arc::new(graph.shuffle_neighbor_storage(seed));
                let out = logits_for(&model, &shuffled);
                assert_eq!(out.data(), base.data(), "variant {variant:?} seed {seed}");
            }
        }
    }

    #[test]
    fn nodes_differing_only_in_degree_get_different_neighbor_halves() {
        // two stars with identical attributes everywhere: centers have
        // degree 2 vs 3, so their neighbor halves must differ
        let graph = Arc::new(
            Graph::from_edges(7, &[(0, 1), (0, 2), (3, 4), (3, 5), (3, 6)])
                .unwrap()
                .with_attributes(Tensor::full(7, 1, 1.0))
                .unwrap(),
        );
        let ix = DegreeIndex::from_graph(&graph, None, false);
        for variant in [Variant::Weight, Variant::Hash] {
            let mut cfg = small_config(variant);
            cfg.layers = 1;
            cfg.hash_dim = Some(8);
            let model: DegreeNet<f64> =
                DegreeNet::new(cfg, ix.clone(), 1, ix.degree_values().to_vec(), 17).unwrap();
            let binding = model.bind(&graph).unwrap();
            let mut tape = Tape::new();
            let vars = register(&mut tape, &model);
            let hs = forward_layers(&mut tape, &model, &vars, &binding, None).unwrap();
            let h1 = tape.value(hs[1]);
            let d = model.seed_width();
            let diff: f64 = h1.row(0)[d..]
                .iter()
                .zip(&h1.row(3)[d..])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(diff > 1e-6, "variant {variant:?}: diff {diff}");
        }
    }

    #[test]
    fn strict_fallback_names_the_degree() {
        let train_graph = Arc::new(
            Graph::from_edges(3, &[(0, 1), (1, 2)])
                .unwrap()
                .with_attributes(Tensor::full(3, 1, 1.0))
                .unwrap(),
        );
        // index over degrees {1, 2} only
        let ix = DegreeIndex::from_graph(&train_graph, None, false);
        let mut cfg = small_config(Variant::Weight);
        cfg.fallback = FallbackRule::Strict;
        let model: DegreeNet<f64> =
            DegreeNet::new(cfg, ix.clone(), 1, ix.degree_values().to_vec(), 19).unwrap();
        let star = Arc::new(
            Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)])
                .unwrap()
                .with_attributes(Tensor::full(4, 1, 1.0))
                .unwrap(),
        );
        match model.bind(&star) {
            Err(Error::UnseenDegree(3)) => {}
            Err(other) => panic!("expected UnseenDegree(3), got {other:?}"),
            Ok(_) => panic!("expected UnseenDegree(3), got a binding"),
        }
    }

    #[test]
    fn global_fallback_counts_nodes() {
        let train_graph = Arc::new(
            Graph::from_edges(3, &[(0, 1), (1, 2)])
                .unwrap()
                .with_attributes(Tensor::full(3, 1, 1.0))
                .unwrap(),
        );
        let ix = DegreeIndex::from_graph(&train_graph, None, false);
        let model: DegreeNet<f64> = DegreeNet::new(
            small_config(Variant::Weight),
            ix.clone(),
            1,
            ix.degree_values().to_vec(),
            19,
        )
        .unwrap();
        let star = Arc::new(
            Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)])
                .unwrap()
                .with_attributes(Tensor::full(4, 1, 1.0))
                .unwrap(),
        );
        let binding = model.bind(&star).unwrap();
        assert_eq!(binding.fallback_nodes, 1);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let graph = test_graph();
        let ix = DegreeIndex::from_graph(&graph, None, false);
        let model: DegreeNet<f32> = DegreeNet::new(
            small_config(Variant::Hash),
            ix.clone(),
            1,
            ix.degree_values().to_vec(),
            23,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("ckpt.bin");
        let json = dir.path().join("ckpt.json");
        checkpoint::save(&model, &bin, &json).unwrap();
        let loaded: DegreeNet<f32> = checkpoint::load(&bin, &json).unwrap();
        for ((n0, t0), (n1, t1)) in model.named_params().iter().zip(loaded.named_params()) {
            assert_eq!(*n0, n1);
            assert_eq!(t0.data(), t1.data());
        }
        assert_eq!(loaded.degree_index().degree_values(), ix.degree_values());
    }
}
