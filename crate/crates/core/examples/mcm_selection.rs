// Ranks the bands of a synthetic scene with the minimal complexity machine.

use bandsel::data;
use bandsel::mcm::{self, McmOptions};
use bandsel::synth::ToyScene;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // Two points on a line: the hyperplane is x = 0 with h = 1.
    let line = bandsel::data::Dataset::new(vec![-1.0, 1.0], 1, vec![1, 2])?;
    let model = mcm::fit_binary(&line, &[-1.0, 1.0], &McmOptions::default())?;
    println!("two-point MCM: w = {:?}, b = {:.3}, h = {:.3}", model.w, model.b, model.h);

    let scene = ToyScene {
        classes: 3,
        class_sizes: vec![25],
        bands: 12,
        informative: 1,
        ..ToyScene::default()
    };
    let train = data::normalize(&scene.generate()?);
    let ranking = mcm::rank_bands_multiclass(&train, &McmOptions::default())?;
    let lifted: Vec<usize> = (1..=3).flat_map(|c| scene.informative_bands(c)).collect();
    println!("class-specific bands {lifted:?}, MCM top 3 {:?}", ranking.top(3));

    let (c, _) = mcm::rank_with_c_grid(&train, &mcm::C_GRID, &McmOptions::default())?;
    println!("C chosen from the grid: {c}");
    ranking.write_csv(std::io::stdout().lock())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
