// One-vs-rest RBF SVM on a band subset, with model save and reload.

use bandsel::data;
use bandsel::metrics::McReport;
use bandsel::svm::{self, GammaChoice, KernelSpec, OvrClassifier, SmoOptions};
use bandsel::synth::ToyScene;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let xor = data::Dataset::new(vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0], 2, vec![1, 1, 2, 2])?;
    let y = [1.0, 1.0, -1.0, -1.0];
    let m = svm::train_binary(&xor, &y, KernelSpec::rbf(1.0)?, &SmoOptions::with_c(100.0))?;
    println!("XOR machine: {} support vectors, bias {:.4}", m.n_support(), m.bias);

    let scene = ToyScene::default();
    let d = data::normalize(&scene.generate()?);
    let split = data::stratified_split(&d, 0.5, 3)?;
    let (train, test) = (split.train(&d), split.test(&d));
    let bands: Vec<usize> = (1..=scene.classes).flat_map(|c| scene.informative_bands(c)).collect();
    let model = svm::train_ovr_with(&train, &bands, GammaChoice::Grid, &SmoOptions::default(), 3)?;
    let predicted = model.predict(&test)?;
    let report = McReport::evaluate(test.labels(), &predicted, test.class_ids(), &test.class_sizes())?;
    println!("{:?} on bands {bands:?}: weighted MCC {:.4}", model.kernel, report.weighted);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("ovr.model");
    model.save(&path)?;
    let reloaded = OvrClassifier::load(&path)?;
    assert_eq!(reloaded.predict(&test)?, predicted);
    println!("reloaded model predicts identically");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
