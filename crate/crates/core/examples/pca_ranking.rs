// Covariance eigen-decomposition and the PCA band ranking.

use bandsel::pca;
use bandsel::synth::ToyScene;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let train = ToyScene {
        bands: 8,
        ..ToyScene::default()
    }
    .generate()?;
    let eigen = pca::covariance_eigen(&train)?;
    let total: f64 = eigen.values.iter().sum();
    println!(
        "leading eigenvalue explains {:.1}% of the variance",
        100.0 * eigen.values[0] / total
    );
    let ranking = pca::rank_pca(&eigen);
    for (band, score) in ranking.order.iter().zip(&ranking.scores).take(4) {
        println!("band {:>2}  score {score:.5}", band + 1);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
