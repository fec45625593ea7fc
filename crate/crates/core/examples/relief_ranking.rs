// RELIEF band weights from near-hit and near-miss distances.

use bandsel::data::{self, Dataset};
use bandsel::relief;
use bandsel::synth::ToyScene;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // One draw of the first point: hit at 0.1, miss at 1.0, so W = 1 - 0.01.
    let three = Dataset::new(vec![0.0, 0.1, 1.0], 1, vec![1, 1, 2])?;
    println!("three-point weight {:?}", relief::relief_weights_for(&three, &[0])?);

    let scene = ToyScene::default();
    let train = data::normalize(&scene.generate()?);
    let weights = relief::relief_weights(&train, None, 7)?;
    let ranking = relief::rank_relief(&weights);
    println!(
        "{} draws, top bands {:?}, class-1 bands {:?}",
        weights.iterations,
        ranking.top(4),
        scene.informative_bands(1)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
