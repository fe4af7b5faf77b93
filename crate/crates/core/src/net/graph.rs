//! Declarative layer graphs (JSON) and shape inference.
//!
//! Feature maps are `T × F × C`, sequences `T × D`. The time axis is left
//! free in a graph description and fixed only when shapes are inferred.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT: &str = "input";

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Layer {
    /// 3×3 depthwise then 1×1 pointwise with bias, "same" padding.
    DsepConv {
        filters: usize,
    },
    /// k×k convolution, odd `kernel`, "same" padding.
    Conv {
        filters: usize,
        #[serde(default = "one")]
        kernel: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// Inference-mode normalization over the last axis.
    BatchNorm,
    Relu,
    Tanh,
    Sigmoid,
    MaxPool {
        time: usize,
        freq: usize,
    },
    /// Along the last axis.
    Concat,
    Add,
    /// `T × F × C` to `T × (F·C)`, channel index fastest.
    Reshape,
    Gru {
        units: usize,
        #[serde(default)]
        bidirectional: bool,
    },
    /// Applied independently at every time step.
    Dense {
        units: usize,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::DsepConv { .. } => "dsep_conv",
            Layer::Conv { .. } => "conv",
            Layer::BatchNorm => "batch_norm",
            Layer::Relu => "relu",
            Layer::Tanh => "tanh",
            Layer::Sigmoid => "sigmoid",
            Layer::MaxPool { .. } => "max_pool",
            Layer::Concat => "concat",
            Layer::Add => "add",
            Layer::Reshape => "reshape",
            Layer::Gru { .. } => "gru",
            Layer::Dense { .. } => "dense",
        }
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            Layer::Concat | Layer::Add => n >= 2,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    #[serde(flatten)]
    pub layer: Layer,
    /// Empty means "the previous node" (or the graph input for the first).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub freq: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub input: InputSpec,
    pub nodes: Vec<Node>,
    pub output: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pivots: Vec<String>,
}

/// A validated graph: node inputs resolved to indices.
///
/// Index 0 is the graph input; node `i` of the spec has index `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub spec: GraphSpec,
    pub(crate) edges: Vec<Vec<usize>>,
    pub(crate) output: usize,
}

impl GraphSpec {
    pub fn from_json(text: &str) -> Result<GraphSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GraphSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn compile(self) -> Result<Graph> {
        Graph::new(self)
    }
}

impl Graph {
    pub fn new(spec: GraphSpec) -> Result<Graph> {
        if spec.input.freq == 0 || spec.input.channels == 0 {
            return Err(Error::Graph("input dimensions must be positive".into()));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        index.insert(INPUT, 0);
        let mut edges = vec![Vec::new()];
        for (i, node) in spec.nodes.iter().enumerate() {
            let id = i + 1;
            let ins: Vec<usize> = if node.inputs.is_empty() {
                vec![id - 1]
            } else {
                node.inputs
                    .iter()
                    .map(|n| {
                        index.get(n.as_str()).copied().ok_or_else(|| {
                            Error::Graph(format!(
                                "node '{}': unknown or later input '{n}'",
                                node.name
                            ))
                        })
                    })
                    .collect::<Result<_>>()?
            };
            if !node.layer.arity_ok(ins.len()) {
                return Err(Error::Graph(format!(
                    "node '{}': {} cannot take {} inputs",
                    node.name,
                    node.layer.kind(),
                    ins.len()
                )));
            }
            if index.insert(&node.name, id).is_some() {
                return Err(Error::Graph(format!("duplicate node name '{}'", node.name)));
            }
            edges.push(ins);
        }
        let output = *index
            .get(spec.output.as_str())
            .ok_or_else(|| Error::Graph(format!("unknown output node '{}'", spec.output)))?;
        for p in &spec.pivots {
            if !index.contains_key(p.as_str()) {
                return Err(Error::Graph(format!("unknown pivot node '{p}'")));
            }
        }
        let g = Graph {
            spec,
            edges,
            output,
        };
        g.shapes(g.min_frames())?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spec.nodes.is_empty()
    }

    pub fn output_index(&self) -> usize {
        self.output
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        if name == INPUT {
            return Some(0);
        }
        self.spec
            .nodes
            .iter()
            .position(|n| n.name == name)
            .map(|i| i + 1)
    }

    pub fn name(&self, id: usize) -> &str {
        if id == 0 {
            INPUT
        } else {
            &self.spec.nodes[id - 1].name
        }
    }

    /// `None` for the input.
    pub fn layer(&self, id: usize) -> Option<&Layer> {
        id.checked_sub(1).map(|i| &self.spec.nodes[i].layer)
    }

    pub fn inputs(&self, id: usize) -> &[usize] {
        &self.edges[id]
    }

    /// Product of all time pooling factors: the smallest `T` that survives.
    pub fn time_reduction(&self) -> usize {
        self.spec
            .nodes
            .iter()
            .map(|n| match n.layer {
                Layer::MaxPool { time, .. } => time.max(1),
                _ => 1,
            })
            .product()
    }

    fn min_frames(&self) -> usize {
        self.time_reduction()
    }

    /// Shape of every node (input first) for `frames` input frames.
    pub fn shapes(&self, frames: usize) -> Result<Vec<Vec<usize>>> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.len());
        shapes.push(vec![frames, self.spec.input.freq, self.spec.input.channels]);
        for id in 1..self.len() {
            let node = &self.spec.nodes[id - 1];
            let ins: Vec<&Vec<usize>> = self.edges[id].iter().map(|&i| &shapes[i]).collect();
            let s = output_shape(&node.layer, &ins)
                .map_err(|m| Error::Graph(format!("node '{}': {m}", node.name)))?;
            if s.contains(&0) {
                return Err(Error::Graph(format!(
                    "node '{}': empty output shape {s:?}",
                    node.name
                )));
            }
            shapes.push(s);
        }
        Ok(shapes)
    }

    /// Indices of nodes that depend (transitively) on `from`, in order.
    pub fn downstream(&self, from: usize) -> Vec<usize> {
        let mut dirty = vec![false; self.len()];
        dirty[from] = true;
        let mut out = Vec::new();
        for id in from + 1..self.len() {
            if self.edges[id].iter().any(|&i| dirty[i]) {
                dirty[id] = true;
                out.push(id);
            }
        }
        out
    }
}

fn output_shape(layer: &Layer, ins: &[&Vec<usize>]) -> std::result::Result<Vec<usize>, String> {
    let x = ins[0];
    let map = |what: &str| -> std::result::Result<(usize, usize, usize), String> {
        match x.as_slice() {
            &[t, f, c] => Ok((t, f, c)),
            _ => Err(format!("{what} needs a T×F×C map, got {x:?}")),
        }
    };
    let seq = |what: &str| -> std::result::Result<(usize, usize), String> {
        match x.as_slice() {
            &[t, d] => Ok((t, d)),
            _ => Err(format!("{what} needs a T×D sequence, got {x:?}")),
        }
    };
    Ok(match layer {
        Layer::DsepConv { filters } => {
            let (t, f, _) = map("dsep_conv")?;
            vec![t, f, *filters]
        }
        Layer::Conv {
            filters, kernel, ..
        } => {
            if kernel % 2 == 0 {
                return Err(format!("conv kernel must be odd, got {kernel}"));
            }
            let (t, f, _) = map("conv")?;
            vec![t, f, *filters]
        }
        Layer::BatchNorm | Layer::Relu | Layer::Tanh | Layer::Sigmoid => x.clone(),
        Layer::MaxPool { time, freq } => {
            if *time == 0 || *freq == 0 {
                return Err("pool factors must be positive".into());
            }
            let (t, f, c) = map("max_pool")?;
            vec![t / time, f / freq, c]
        }
        Layer::Concat => {
            let lead = &x[..x.len() - 1];
            let mut last = 0;
            for s in ins {
                if s.len() != x.len() || &s[..s.len() - 1] != lead {
                    return Err(format!("concat inputs disagree: {x:?} vs {s:?}"));
                }
                last += s[s.len() - 1];
            }
            let mut s = lead.to_vec();
            s.push(last);
            s
        }
        Layer::Add => {
            if let Some(s) = ins.iter().find(|s| **s != x) {
                return Err(format!("add inputs disagree: {x:?} vs {s:?}"));
            }
            x.clone()
        }
        Layer::Reshape => {
            let (t, f, c) = map("reshape")?;
            vec![t, f * c]
        }
        Layer::Gru {
            units,
            bidirectional,
        } => {
            let (t, _) = seq("gru")?;
            vec![t, if *bidirectional { 2 * units } else { *units }]
        }
        Layer::Dense { units } => {
            let (t, _) = seq("dense")?;
            vec![t, *units]
        }
    })
}
