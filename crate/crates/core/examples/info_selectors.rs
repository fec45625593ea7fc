// Greedy MRMR, JMI and CMIM selection over discretized bands.

use bandsel::infosel::{self, Criterion};
use bandsel::synth::ToyScene;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let x = [0, 0, 1, 1, 0, 0, 1, 1];
    let y = [0, 1, 0, 1, 0, 1, 0, 1];
    let z = [0, 0, 0, 0, 1, 1, 1, 1];
    println!(
        "I(X;Y) = {:.3} bits, I(X;X) = {:.3} bits, I(X;Y|Z) = {:.3} bits",
        infosel::mutual_info(&x, &y),
        infosel::mutual_info(&x, &x),
        infosel::conditional_mi(&x, &y, &z)
    );

    let scene = ToyScene {
        bands: 16,
        ..ToyScene::default()
    };
    let train = scene.generate()?;
    let dd = infosel::discretize(&train, infosel::DEFAULT_BINS)?;
    for criterion in [Criterion::Mrmr, Criterion::Jmi, Criterion::Cmim] {
        let (ranking, _) = infosel::select_greedy(&dd, train.labels(), 5, criterion)?;
        println!("{:<5} picks {:?}", ranking.method, ranking.order);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
