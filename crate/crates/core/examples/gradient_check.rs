//! Backpropagation through a small dense stack, checked against central
//! differences, then a few Adam steps on a regression target.
use ris_semopt::nn::{adam_step, gradient_check, Activation, AdamConfig, AdamState, LayerStack, Parameters, Tensor};
use ris_semopt::seed;

fn loss(net: &LayerStack, x: &Tensor, y: &[f64]) -> f64 {
    let (out, _) = net.run(x).expect("shapes match");
    out.data().iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

fn main() -> ris_semopt::Result<()> {
    let mut rng = seed::rng(3, &[]);
    let mut net = LayerStack::new(&[2, 16, 1], Activation::Tanh, Activation::Identity, &mut rng);
    let xs: Vec<f64> = (0..32).flat_map(|i| [i as f64 / 16.0 - 1.0, (i % 5) as f64 / 5.0]).collect();
    let x = Tensor::matrix(32, 2, xs.clone())?;
    let y: Vec<f64> = xs.chunks(2).map(|p| p[0] * p[0] - 0.5 * p[1]).collect();

    let grads = |net: &LayerStack| -> ris_semopt::Result<Vec<Tensor>> {
        let (out, tape) = net.run(&x)?;
        let dy: Vec<f64> = out.data().iter().zip(&y).map(|(a, b)| 2.0 * (a - b) / y.len() as f64).collect();
        let mut g = net.zero_grads();
        net.backprop(&tape, &Tensor::matrix(32, 1, dy)?, &mut g);
        Ok(g)
    };

    let g = grads(&net)?;
    let worst = gradient_check(&mut net, &g, 1e-6, 1e-4, |n| loss(n, &x, &y));
    println!("worst relative gradient error {worst:.2e}");

    let mut adam = AdamState::new(&net.parameters(), AdamConfig { lr: 1e-2, ..AdamConfig::default() });
    for step in 0..=500 {
        let g = grads(&net)?;
        if step % 100 == 0 {
            println!("step {step:>3}  loss {:.5}", loss(&net, &x, &y));
        }
        adam_step(net.parameters_mut(), &g, &mut adam)?;
    }
    Ok(())
}
