//! Trinity block allocation, the default network and a forward pass.

use biseld::net::{
    biseldnet_v4, count_params, decode_output, trinity_allocation, Network, V4Config, Weights,
};
use ndarray::Array3;

fn main() -> biseld::Result<()> {
    for c in [12, 64, 256] {
        let a = trinity_allocation(c)?;
        println!(
            "c_out {c:>3}: blocks {:?}, {} kernels",
            a.blocks,
            a.total_kernels()
        );
    }

    let g = biseldnet_v4(&V4Config::default())?;
    let pc = count_params(&g)?;
    println!(
        "params: {} trainable + {} fixed = {}",
        pc.trainable, pc.non_trainable, pc.total
    );

    let frames = 10;
    for (name, shape) in ["input", "concat8", "reshape"]
        .iter()
        .filter_map(|n| g.find(n).map(|i| (n, i)))
        .map(|(n, i)| (n, g.shapes(frames).map(|s| s[i].clone())))
    {
        println!("{name:>8}: {:?}", shape?);
    }

    let w = Weights::random(&g, 0)?;
    let (freq, ch) = (g.spec.input.freq, g.spec.input.channels);
    let net = Network::new(g, w)?;
    let x = Array3::from_shape_fn((frames, freq, ch), |(t, f, c)| {
        ((t * 7 + f * 3 + c) as f64 * 0.1).sin()
    });
    let y = net.forward(&x)?;
    println!("output {:?}", y.dim());
    for d in decode_output(&y.row(0).to_vec(), 0.1)? {
        println!(
            "  class {} az {:.1} el {:.1} |v| {:.3}",
            d.class_idx, d.azimuth_deg, d.elevation_deg, d.magnitude
        );
    }
    Ok(())
}
