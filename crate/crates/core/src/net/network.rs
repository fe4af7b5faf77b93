//! A compiled graph bound to its weights.

use ndarray::{Array2, Array3, ArrayD, Ix1, Ix2, Ix3};

use super::graph::{Graph, Layer};
use super::gru::{gru_forward, GruWeights};
use super::layers;
use super::weights::Weights;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Network {
    graph: Graph,
    weights: Weights,
}

fn dim<'a, D: ndarray::Dimension>(
    a: &'a ArrayD<f64>,
    what: &str,
) -> Result<ndarray::ArrayView<'a, f64, D>> {
    a.view()
        .into_dimensionality::<D>()
        .map_err(|_| Error::shape(format!("{what}: unexpected rank {:?}", a.shape())))
}

impl Network {
    pub fn new(graph: Graph, weights: Weights) -> Result<Network> {
        weights.check_against(&graph)?;
        Ok(Network { graph, weights })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    fn w(&self, node: &str, suffix: &str) -> Result<&ArrayD<f64>> {
        self.weights.get(&format!("{node}/{suffix}"))
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (_, f, c) = x.dim();
        let spec = self.graph.spec.input;
        if (f, c) != (spec.freq, spec.channels) {
            return Err(Error::shape(format!(
                "input is T×{f}×{c}, network expects T×{}×{}",
                spec.freq, spec.channels
            )));
        }
        Ok(())
    }

    fn eval(&self, id: usize, ins: &[&ArrayD<f64>]) -> Result<ArrayD<f64>> {
        let node = &self.graph.spec.nodes[id - 1];
        let name = node.name.as_str();
        let x = ins[0];
        let ctx = |e: Error| Error::Graph(format!("node '{name}': {e}"));
        let out = match &node.layer {
            Layer::DsepConv { .. } => layers::dsep_conv(
                dim::<Ix3>(x, name)?,
                dim::<Ix3>(self.w(name, "depthwise")?, name)?,
                dim::<Ix2>(self.w(name, "pointwise")?, name)?,
                dim::<Ix1>(self.w(name, "bias")?, name)?,
            )
            .map(|a| a.into_dyn()),
            Layer::Conv { bias, .. } => {
                let b = if *bias {
                    Some(dim::<Ix1>(self.w(name, "bias")?, name)?)
                } else {
                    None
                };
                layers::conv2d(dim::<Ix3>(x, name)?, dim(self.w(name, "kernel")?, name)?, b)
                    .map(|a| a.into_dyn())
            }
            Layer::BatchNorm => layers::batch_norm(
                x.clone(),
                dim::<Ix1>(self.w(name, "gamma")?, name)?,
                dim::<Ix1>(self.w(name, "beta")?, name)?,
                dim::<Ix1>(self.w(name, "moving_mean")?, name)?,
                dim::<Ix1>(self.w(name, "moving_variance")?, name)?,
            ),
            Layer::Relu => Ok(x.mapv(layers::relu)),
            Layer::Tanh => Ok(x.mapv(layers::tanh)),
            Layer::Sigmoid => Ok(x.mapv(layers::sigmoid)),
            Layer::MaxPool { time, freq } => {
                layers::max_pool(dim::<Ix3>(x, name)?, *time, *freq).map(|a| a.into_dyn())
            }
            Layer::Concat => layers::concat_last(ins),
            Layer::Add => layers::add_all(ins),
            Layer::Reshape => {
                Ok(layers::reshape_to_sequence(dim::<Ix3>(x, name)?.to_owned()).into_dyn())
            }
            Layer::Gru { bidirectional, .. } => {
                let dir = |d: &str| -> Result<GruWeights> {
                    Ok(GruWeights {
                        kernel: dim::<Ix2>(self.w(name, &format!("{d}/kernel"))?, name)?,
                        recurrent: dim::<Ix2>(
                            self.w(name, &format!("{d}/recurrent_kernel"))?,
                            name,
                        )?,
                        bias: dim::<Ix1>(self.w(name, &format!("{d}/bias"))?, name)?,
                    })
                };
                let bw = if *bidirectional {
                    Some(dir("backward")?)
                } else {
                    None
                };
                gru_forward(dim::<Ix2>(x, name)?, dir("forward")?, bw).map(|a| a.into_dyn())
            }
            Layer::Dense { .. } => layers::dense(
                dim::<Ix2>(x, name)?,
                dim::<Ix2>(self.w(name, "kernel")?, name)?,
                Some(dim::<Ix1>(self.w(name, "bias")?, name)?),
            )
            .map(|a| a.into_dyn()),
        };
        out.map_err(ctx)
    }

    /// Activations of every node, input first.
    pub fn forward_all(&self, x: &Array3<f64>) -> Result<Vec<ArrayD<f64>>> {
        self.check_input(x)?;
        let mut acts: Vec<ArrayD<f64>> = Vec::with_capacity(self.graph.len());
        acts.push(x.clone().into_dyn());
        for id in 1..self.graph.len() {
            let ins: Vec<&ArrayD<f64>> = self.graph.inputs(id).iter().map(|&i| &acts[i]).collect();
            let y = self.eval(id, &ins)?;
            acts.push(y);
        }
        Ok(acts)
    }

    /// Output node activation as a `T' × D` sequence.
    pub fn forward(&self, x: &Array3<f64>) -> Result<Array2<f64>> {
        let mut acts = self.forward_all(x)?;
        to_sequence(acts.swap_remove(self.graph.output_index()))
    }

    /// Re-evaluates only what depends on node `pivot` after replacing its
    /// activation; everything else comes from `cache` (from [`forward_all`]).
    ///
    /// [`forward_all`]: Network::forward_all
    pub fn forward_from(
        &self,
        cache: &[ArrayD<f64>],
        pivot: usize,
        replacement: ArrayD<f64>,
    ) -> Result<Array2<f64>> {
        if cache.len() != self.graph.len() {
            return Err(Error::shape("activation cache does not match the graph"));
        }
        if replacement.shape() != cache[pivot].shape() {
            return Err(Error::shape(format!(
                "pivot replacement {:?} vs cached {:?}",
                replacement.shape(),
                cache[pivot].shape()
            )));
        }
        let out_id = self.graph.output_index();
        if out_id == pivot {
            return to_sequence(replacement);
        }
        let mut fresh: Vec<Option<ArrayD<f64>>> = vec![None; self.graph.len()];
        fresh[pivot] = Some(replacement);
        for id in self.graph.downstream(pivot) {
            let ins: Vec<&ArrayD<f64>> = self
                .graph
                .inputs(id)
                .iter()
                .map(|&i| fresh[i].as_ref().unwrap_or(&cache[i]))
                .collect();
            let y = self.eval(id, &ins)?;
            fresh[id] = Some(y);
            if id == out_id {
                break;
            }
        }
        to_sequence(
            fresh[out_id]
                .take()
                .unwrap_or_else(|| cache[out_id].clone()),
        )
    }
}

fn to_sequence(a: ArrayD<f64>) -> Result<Array2<f64>> {
    let shape = a.shape().to_vec();
    a.into_dimensionality::<Ix2>()
        .map_err(|_| Error::Graph(format!("output must be a T×D sequence, got {shape:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::graph::GraphSpec;
    use ndarray::Array;

    fn net(json: &str, seed: u64) -> Network {
        let g = GraphSpec::from_json(json).unwrap().compile().unwrap();
        let w = Weights::random(&g, seed).unwrap();
        Network::new(g, w).unwrap()
    }

    const SMALL: &str = r#"{"input":{"freq":8,"channels":2},
        "nodes":[{"name":"a","op":"dsep_conv","filters":4},
                 {"name":"bn","op":"batch_norm"},
                 {"name":"r1","op":"relu"},
                 {"name":"b","op":"dsep_conv","filters":4},
                 {"name":"s","op":"add","inputs":["r1","b"]},
                 {"name":"p","op":"max_pool","time":2,"freq":4},
                 {"name":"flat","op":"reshape"},
                 {"name":"g","op":"gru","units":3,"bidirectional":true},
                 {"name":"d","op":"dense","units":6},
                 {"name":"out","op":"tanh"}],
        "output":"out"}"#;

    #[test]
    fn forward_shapes_match_declared() {
        let n = net(SMALL, 5);
        let x = Array::from_shape_fn((6, 8, 2), |(i, j, k)| {
            ((i * 7 + j * 3 + k) % 11) as f64 / 5.0 - 1.0
        });
        let acts = n.forward_all(&x).unwrap();
        let shapes = n.graph().shapes(6).unwrap();
        for (a, s) in acts.iter().zip(&shapes) {
            assert_eq!(a.shape(), s.as_slice());
        }
        let y = n.forward(&x).unwrap();
        assert_eq!(y.dim(), (3, 6));
        assert!(y.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn partial_recompute_matches_full_forward() {
        let n = net(SMALL, 9);
        let x = Array::from_shape_fn((4, 8, 2), |(i, j, k)| {
            ((i * 5 + j + 2 * k) % 7) as f64 / 3.0 - 1.0
        });
        let acts = n.forward_all(&x).unwrap();
        let pivot = n.graph().find("r1").unwrap();
        let mut bumped = acts[pivot].clone();
        bumped[[1, 2, 3]] += 0.25;
        let partial = n.forward_from(&acts, pivot, bumped.clone()).unwrap();

        // full recompute with the pivot overridden by hand
        let mut full = acts.clone();
        full[pivot] = bumped;
        for id in pivot + 1..n.graph().len() {
            let ins: Vec<&ArrayD<f64>> = n.graph().inputs(id).iter().map(|&i| &full[i]).collect();
            full[id] = n.eval(id, &ins).unwrap();
        }
        let want = full.pop().unwrap().into_dimensionality::<Ix2>().unwrap();
        assert_eq!(partial, want);
        assert_ne!(partial, n.forward(&x).unwrap());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let n = net(SMALL, 1);
        assert!(n.forward(&Array3::zeros((4, 7, 2))).is_err());
    }
}
