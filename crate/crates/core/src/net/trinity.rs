//! Trinity kernel allocation, a small graph builder and the default
//! BiSELDnet-v4 topology.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, GraphSpec, InputSpec, Layer, Node, INPUT};
use crate::error::{Error, Result};

/// Output channels per branch and the kernel counts of each stacked
/// depthwise separable convolution inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelAllocation {
    pub c_out: usize,
    pub blocks: [usize; 3],
    /// `[[b1], [b2/2, b2], [b3/4, b3/2, b3]]`, floors.
    pub branches: [Vec<usize>; 3],
}

impl KernelAllocation {
    /// Number of 3×3 (depthwise) kernels over all branches.
    pub fn total_kernels(&self) -> usize {
        self.branches.iter().flatten().sum()
    }
}

pub fn trinity_allocation(c_out: usize) -> Result<KernelAllocation> {
    if c_out < 3 {
        return Err(Error::invalid(format!(
            "a Trinity module needs at least 3 output channels, got {c_out}"
        )));
    }
    let third = c_out / 3;
    let (b1, b2, b3) = (third, third, c_out - 2 * third);
    Ok(KernelAllocation {
        c_out,
        blocks: [b1, b2, b3],
        branches: [vec![b1], vec![b2 / 2, b2], vec![b3 / 4, b3 / 2, b3]],
    })
}

/// Appends nodes to a [`GraphSpec`] under construction.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    input: InputSpec,
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new(freq: usize, channels: usize) -> Self {
        GraphBuilder {
            input: InputSpec { freq, channels },
            nodes: Vec::new(),
        }
    }

    /// Name of the most recent node (the input when empty).
    pub fn last(&self) -> &str {
        self.nodes.last().map_or(INPUT, |n| n.name.as_str())
    }

    pub fn push(&mut self, name: impl Into<String>, layer: Layer, inputs: &[&str]) -> String {
        let name = name.into();
        self.nodes.push(Node {
            name: name.clone(),
            layer,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        });
        name
    }

    /// Appends Trinity module `index` reading `input` (with `c_in`
    /// channels). Branches run 1, 2 and 3 stacked 3×3 depthwise separable
    /// convolutions with ReLU between them; their concatenation (`concat{index}`)
    /// is added to the skip path (projected by a 1×1 convolution when the
    /// channel counts differ), then normalized and rectified.
    pub fn trinity(
        &mut self,
        input: &str,
        c_in: usize,
        c_out: usize,
        index: usize,
    ) -> Result<String> {
        let alloc = trinity_allocation(c_out)?;
        if let Some(k) = alloc.branches.iter().flatten().find(|&&k| k == 0) {
            return Err(Error::Graph(format!(
                "Trinity module {index}: {c_out} channels leaves a convolution with {k} kernels"
            )));
        }
        let p = format!("trinity{index}");
        let mut heads = Vec::new();
        for (b, kernels) in alloc.branches.iter().enumerate() {
            let mut prev = input.to_string();
            for (j, &filters) in kernels.iter().enumerate() {
                if j > 0 {
                    prev = self.push(format!("{p}_b{}_{j}_relu", b + 1), Layer::Relu, &[&prev]);
                }
                prev = self.push(
                    format!("{p}_b{}_{}", b + 1, j + 1),
                    Layer::DsepConv { filters },
                    &[&prev],
                );
            }
            heads.push(prev);
        }
        let refs: Vec<&str> = heads.iter().map(String::as_str).collect();
        let cat = self.push(format!("concat{index}"), Layer::Concat, &refs);
        let skip = if c_in == c_out {
            input.to_string()
        } else {
            self.push(
                format!("{p}_proj"),
                Layer::Conv {
                    filters: c_out,
                    kernel: 1,
                    bias: true,
                },
                &[input],
            )
        };
        let add = self.push(format!("{p}_add"), Layer::Add, &[&cat, &skip]);
        let bn = self.push(format!("{p}_bn"), Layer::BatchNorm, &[&add]);
        Ok(self.push(format!("{p}_relu"), Layer::Relu, &[&bn]))
    }

    pub fn spec(self, output: &str, pivots: Vec<String>) -> GraphSpec {
        GraphSpec {
            input: self.input,
            nodes: self.nodes,
            output: output.to_string(),
            pivots,
        }
    }

    pub fn finish(self, output: &str, pivots: Vec<String>) -> Result<Graph> {
        self.spec(output, pivots).compile()
    }
}

/// Topology knobs of the v4 network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct V4Config {
    pub freq: usize,
    pub channels: usize,
    pub stem_filters: usize,
    /// Output channels of each Trinity module.
    pub modules: Vec<usize>,
    /// `(after module n, time factor, frequency factor)`, 1-based.
    pub pools: Vec<(usize, usize, usize)>,
    pub gru_units: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub outputs: usize,
}

impl Default for V4Config {
    fn default() -> Self {
        V4Config {
            freq: 64,
            channels: 8,
            stem_filters: 32,
            modules: vec![32, 32, 64, 64, 128, 128, 256, 256, 512, 512],
            pools: vec![(2, 5, 2), (4, 1, 2), (6, 1, 2), (8, 1, 2), (10, 1, 2)],
            gru_units: vec![256, 128],
            dense_units: vec![128, 128],
            outputs: 36,
        }
    }
}

pub const DEFAULT_PIVOT: &str = "concat8";

/// Stem (dsep conv, norm, ReLU), Trinity modules with pooling, reshape,
/// bidirectional GRUs, dense layers and a tanh output named `doa`.
pub fn biseldnet_v4(cfg: &V4Config) -> Result<Graph> {
    let mut b = GraphBuilder::new(cfg.freq, cfg.channels);
    b.push(
        "stem_conv",
        Layer::DsepConv {
            filters: cfg.stem_filters,
        },
        &[INPUT],
    );
    b.push("stem_bn", Layer::BatchNorm, &[]);
    let mut prev = b.push("stem_relu", Layer::Relu, &[]);
    let mut c = cfg.stem_filters;
    for (i, &c_out) in cfg.modules.iter().enumerate() {
        let n = i + 1;
        prev = b.trinity(&prev, c, c_out, n)?;
        c = c_out;
        for &(after, time, freq) in &cfg.pools {
            if after == n {
                prev = b.push(format!("pool{n}"), Layer::MaxPool { time, freq }, &[&prev]);
            }
        }
    }
    b.push("reshape", Layer::Reshape, &[&prev]);
    for (i, &units) in cfg.gru_units.iter().enumerate() {
        b.push(
            format!("bigru{}", i + 1),
            Layer::Gru {
                units,
                bidirectional: true,
            },
            &[],
        );
    }
    for (i, &units) in cfg.dense_units.iter().enumerate() {
        b.push(format!("fc{}", i + 1), Layer::Dense { units }, &[]);
    }
    b.push(
        format!("fc{}", cfg.dense_units.len() + 1),
        Layer::Dense { units: cfg.outputs },
        &[],
    );
    b.push("doa", Layer::Tanh, &[]);
    let pivots = if cfg.modules.len() >= 8 {
        vec![DEFAULT_PIVOT.to_string()]
    } else {
        Vec::new()
    };
    b.finish("doa", pivots)
}
