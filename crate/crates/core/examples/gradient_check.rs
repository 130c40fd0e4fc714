//! Checks the hand-written back-propagation of the MLP against central
//! differences, for parameter and input gradients.

use tiwlab::nn::{Activation, Mlp, NetArch, TimeEmbed};

fn central(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            p[i] += h;
            let up = f(&p);
            p[i] -= 2.0 * h;
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    n(&d) / n(a).max(n(b)).max(f64::MIN_POSITIVE)
}

fn main() -> tiwlab::Result<()> {
    let (x, t) = ([0.4, -0.9], 0.3);
    for activation in [Activation::Tanh, Activation::Silu] {
        for time_embed in [TimeEmbed::AppendScalar, TimeEmbed::Sinusoidal { frequencies: 4 }] {
            let arch = NetArch { input_dim: 2, output_dim: 2, hidden: vec![16, 16], activation, time_embed };
            let net = Mlp::init(arch.clone(), 1)?;
            let cotangent = [1.0, -0.5];
            let g = net.param_gradient(&net.forward_cached(&x, t)?, &cotangent)?;
            let fd = central(net.params(), 1e-5, |p| {
                let y = Mlp::from_params(arch.clone(), p.to_vec()).unwrap().forward(&x, t).unwrap();
                cotangent[0] * y[0] + cotangent[1] * y[1]
            });
            let jac = net.input_gradient(&x, t)?;
            let fd_x = central(&x, 1e-5, |xx| net.forward(xx, t).unwrap()[0]);
            println!(
                "{activation:?} / {time_embed:?}: params rel {:.2e}, inputs rel {:.2e}",
                rel(&g, &fd),
                rel(jac.row(0).as_slice().unwrap(), &fd_x)
            );
        }
    }
    Ok(())
}
