//! Per-layer parameter shapes and closed-form parameter counts.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Layer};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParamCount {
    pub trainable: usize,
    pub non_trainable: usize,
    pub total: usize,
}

impl ParamCount {
    fn add(&mut self, trainable: usize, non_trainable: usize) {
        self.trainable += trainable;
        self.non_trainable += non_trainable;
        self.total = self.trainable + self.non_trainable;
    }
}

fn p(node: &str, suffix: &str, shape: Vec<usize>, trainable: bool) -> ParamSpec {
    ParamSpec {
        name: format!("{node}/{suffix}"),
        shape,
        trainable,
    }
}

/// Weight arrays a node needs, given its (first) input shape.
pub fn layer_params(node: &str, layer: &Layer, input: &[usize]) -> Vec<ParamSpec> {
    let last = *input.last().unwrap_or(&0);
    match *layer {
        Layer::DsepConv { filters } => vec![
            p(node, "depthwise", vec![3, 3, last], true),
            p(node, "pointwise", vec![last, filters], true),
            p(node, "bias", vec![filters], true),
        ],
        Layer::Conv {
            filters,
            kernel,
            bias,
        } => {
            let mut v = vec![p(node, "kernel", vec![kernel, kernel, last, filters], true)];
            if bias {
                v.push(p(node, "bias", vec![filters], true));
            }
            v
        }
        Layer::BatchNorm => vec![
            p(node, "gamma", vec![last], true),
            p(node, "beta", vec![last], true),
            p(node, "moving_mean", vec![last], false),
            p(node, "moving_variance", vec![last], false),
        ],
        Layer::Gru {
            units,
            bidirectional,
        } => {
            let dirs: &[&str] = if bidirectional {
                &["forward", "backward"]
            } else {
                &["forward"]
            };
            dirs.iter()
                .flat_map(|d| {
                    [
                        p(node, &format!("{d}/kernel"), vec![last, 3 * units], true),
                        p(
                            node,
                            &format!("{d}/recurrent_kernel"),
                            vec![units, 3 * units],
                            true,
                        ),
                        p(node, &format!("{d}/bias"), vec![3 * units], true),
                    ]
                })
                .collect()
        }
        Layer::Dense { units } => vec![
            p(node, "kernel", vec![last, units], true),
            p(node, "bias", vec![units], true),
        ],
        Layer::Relu
        | Layer::Tanh
        | Layer::Sigmoid
        | Layer::MaxPool { .. }
        | Layer::Concat
        | Layer::Add
        | Layer::Reshape => Vec::new(),
    }
}

impl Graph {
    /// Every weight array of the graph in node order.
    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        let shapes = self.shapes(self.time_reduction())?;
        let mut out = Vec::new();
        for id in 1..self.len() {
            let node = &self.spec.nodes[id - 1];
            out.extend(layer_params(
                &node.name,
                &node.layer,
                &shapes[self.inputs(id)[0]],
            ));
        }
        Ok(out)
    }
}

/// `(trainable, non_trainable)` for one layer from its closed form.
pub fn layer_count(layer: &Layer, input: &[usize]) -> (usize, usize) {
    let c = *input.last().unwrap_or(&0);
    match *layer {
        Layer::DsepConv { filters } => (9 * c + c * filters + filters, 0),
        Layer::Conv {
            filters,
            kernel,
            bias,
        } => (
            kernel * kernel * c * filters + if bias { filters } else { 0 },
            0,
        ),
        Layer::BatchNorm => (2 * c, 2 * c),
        Layer::Gru {
            units,
            bidirectional,
        } => {
            let dirs = if bidirectional { 2 } else { 1 };
            (dirs * 3 * (c * units + units * units + units), 0)
        }
        Layer::Dense { units } => (c * units + units, 0),
        _ => (0, 0),
    }
}

pub fn count_params(graph: &Graph) -> Result<ParamCount> {
    let shapes = graph.shapes(graph.time_reduction())?;
    let mut count = ParamCount::default();
    for id in 1..graph.len() {
        let layer = &graph.spec.nodes[id - 1].layer;
        let (t, n) = layer_count(layer, &shapes[graph.inputs(id)[0]]);
        count.add(t, n);
    }
    Ok(count)
}
