//! Named weight arrays and the `BSWT` binary container.
//!
//! Layout (little endian): magic `BSWT`, `u32` array count, then per array
//! `u32` name length, UTF-8 name, `u8` dtype (0 = f32), `u32` ndim,
//! `u32` dims, and the row-major f32 data.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::Graph;
use super::params::ParamSpec;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BSWT";
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Weights {
    pub arrays: BTreeMap<String, ArrayD<f64>>,
}

fn bad(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}

impl Weights {
    pub fn get(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Graph(format!("missing weight array '{name}'")))
    }

    pub fn insert(&mut self, name: impl Into<String>, a: ArrayD<f64>) {
        self.arrays.insert(name.into(), a);
    }

    pub fn n_elements(&self) -> usize {
        self.arrays.values().map(|a| a.len()).sum()
    }

    /// Seeded initialization. Kernels are Glorot-uniform, biases and
    /// normalization statistics small perturbations around their neutral values.
    pub fn random(graph: &Graph, seed: u64) -> Result<Weights> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Weights::default();
        for spec in graph.param_specs()? {
            let a = init_array(&spec, &mut rng);
            w.insert(spec.name, a);
        }
        Ok(w)
    }

    /// Every array set to zero except normalization scale and variance (one).
    pub fn neutral(graph: &Graph) -> Result<Weights> {
        let mut w = Weights::default();
        for spec in graph.param_specs()? {
            let v = if spec.name.ends_with("/gamma") || spec.name.ends_with("/moving_variance") {
                1.0
            } else {
                0.0
            };
            w.insert(spec.name, ArrayD::from_elem(IxDyn(&spec.shape), v));
        }
        Ok(w)
    }

    /// Exactly the arrays `graph` needs, with matching shapes.
    pub fn check_against(&self, graph: &Graph) -> Result<()> {
        let specs = graph.param_specs()?;
        for s in &specs {
            let a = self.get(&s.name)?;
            if a.shape() != s.shape.as_slice() {
                return Err(Error::Graph(format!(
                    "weight '{}' has shape {:?}, expected {:?}",
                    s.name,
                    a.shape(),
                    s.shape
                )));
            }
        }
        if self.arrays.len() != specs.len() {
            let known: std::collections::HashSet<&str> =
                specs.iter().map(|s| s.name.as_str()).collect();
            let extra: Vec<&String> = self
                .arrays
                .keys()
                .filter(|k| !known.contains(k.as_str()))
                .collect();
            return Err(Error::Graph(format!("unexpected weight arrays {extra:?}")));
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.arrays.len() as u32)?;
        for (name, a) in &self.arrays {
            w.write_u32::<LittleEndian>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            w.write_u8(DTYPE_F32)?;
            w.write_u32::<LittleEndian>(a.ndim() as u32)?;
            for &d in a.shape() {
                w.write_u32::<LittleEndian>(d as u32)?;
            }
            for &v in a.iter() {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> std::io::Result<Weights> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a BSWT weight file"));
        }
        let n = r.read_u32::<LittleEndian>()?;
        let mut out = Weights::default();
        for _ in 0..n {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("array name is not UTF-8"))?;
            let dtype = r.read_u8()?;
            if dtype != DTYPE_F32 {
                return Err(bad(format!("array '{name}': unsupported dtype {dtype}")));
            }
            let nd = r.read_u32::<LittleEndian>()? as usize;
            let shape: Vec<usize> = (0..nd)
                .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
                .collect::<std::io::Result<_>>()?;
            let count: usize = shape.iter().product();
            let mut data = vec![0f32; count];
            r.read_f32_into::<LittleEndian>(&mut data)?;
            let a =
                ArrayD::from_shape_vec(IxDyn(&shape), data.into_iter().map(f64::from).collect())
                    .map_err(|e| bad(e.to_string()))?;
            if out.arrays.insert(name.clone(), a).is_some() {
                return Err(bad(format!("duplicate array '{name}'")));
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ctx = || format!("writing {}", path.display());
        let f = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(ctx(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Weights> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Weights::read_from(&mut std::io::BufReader::new(f))
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))
    }

    /// Rounds every value to f32, as stored on disk.
    pub fn quantized(&self) -> Weights {
        Weights {
            arrays: self
                .arrays
                .iter()
                .map(|(k, a)| (k.clone(), a.mapv(|v| v as f32 as f64)))
                .collect(),
        }
    }
}

fn init_array(spec: &ParamSpec, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    let shape = IxDyn(&spec.shape);
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        ArrayD::from_shape_simple_fn(shape.clone(), || rng.gen_range(lo..hi))
    };
    let leaf = spec.name.rsplit('/').next().unwrap_or("");
    match leaf {
        "gamma" | "moving_variance" => uniform(rng, 0.8, 1.2),
        "beta" | "moving_mean" | "bias" => uniform(rng, -0.05, 0.05),
        _ => {
            let n = spec.shape.len();
            let fan_out = spec.shape[n - 1].max(1);
            let fan_in: usize = spec.shape[..n - 1].iter().product::<usize>().max(1);
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            uniform(rng, -lim, lim)
        }
    }
}
