// A small sweep over methods and band counts on a synthetic scene, writing
// the records and tables to a temporary directory.

use bandsel::data;
use bandsel::harness::{self, ExperimentConfig, NoObserver};
use bandsel::svm::GammaChoice;
use bandsel::synth::ToyScene;
use bandsel::Method;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let dataset = data::normalize(&ToyScene::default().generate()?);
    let config = ExperimentConfig {
        methods: vec![Method::Mcm, Method::Mrmr, Method::Relief, Method::Pca],
        band_counts: vec![1, 2, 4, 8],
        ratios: vec![0.5],
        seeds: vec![1, 2],
        gamma: GammaChoice::Fixed(1.0),
        output: out.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let report = harness::run_on(&config, &dataset, &NoObserver)?;
    println!("{} records, {} failed", report.records.len(), report.failed().count());
    for r in report.failed() {
        println!("failed {} k={}: {:?}", r.method, r.k, r.status);
    }
    print!("{}", std::fs::read_to_string(out.path().join(harness::SUMMARY_FILE))?);
    print!("{}", std::fs::read_to_string(out.path().join(harness::SELECTED_BANDS_FILE))?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
