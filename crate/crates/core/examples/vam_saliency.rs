//! Vector activation map of a small Trinity network.

use biseld::net::{GraphBuilder, Layer, Network, Weights};
use biseld::vam::network_vam;
use ndarray::Array3;

fn main() -> biseld::Result<()> {
    let mut b = GraphBuilder::new(16, 8);
    b.push("c1", Layer::DsepConv { filters: 12 }, &["input"]);
    b.push("c1_relu", Layer::Relu, &[]);
    let t1 = b.trinity("c1_relu", 12, 12, 1)?;
    b.push("pool", Layer::MaxPool { time: 5, freq: 4 }, &[&t1]);
    b.push("flat", Layer::Reshape, &[]);
    b.push("fc", Layer::Dense { units: 36 }, &[]);
    b.push("doa", Layer::Tanh, &[]);
    let g = b.finish("doa", vec![t1.clone()])?;
    let net = Network::new(g.clone(), Weights::random(&g, 5)?)?;

    let x = Array3::from_shape_fn((10, 16, 8), |(t, f, c)| {
        if f == 6 {
            1.0
        } else {
            0.1 * ((t + c) as f64).cos()
        }
    });
    let r = network_vam(&net, &x, 3, &t1)?;
    println!(
        "pivot {t1}, class {}, |v| {:.4}, kink {}",
        r.class_idx, r.vector_norm, r.kink
    );
    let bands: Vec<f64> = (0..16).map(|f| r.upscaled.column(f).sum()).collect();
    let peak = bands
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    println!("saliency per band: {bands:.3?}");
    println!("most salient band {peak}");
    Ok(())
}
