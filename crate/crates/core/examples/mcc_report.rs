// Matthews correlation per class and the class-weighted average.

use bandsel::metrics::{self, ConfusionCounts, McReport, Weighting};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for c in [
        ConfusionCounts::new(5, 0, 5, 0),
        ConfusionCounts::new(0, 3, 7, 0),
        ConfusionCounts::new(4, 1, 3, 2),
    ] {
        println!("{c:?} -> MCC {:.6}", metrics::mcc(&c));
    }

    let truth = [1, 1, 1, 2, 2, 3, 3, 3, 3];
    let predicted = [1, 1, 2, 2, 2, 3, 3, 1, 3];
    let train_sizes = [10, 2, 6];
    let test_sizes = [3, 2, 4];
    for w in [Weighting::Test, Weighting::Train, Weighting::Total] {
        let report = McReport::evaluate(&truth, &predicted, &[1, 2, 3], &w.sizes(&train_sizes, &test_sizes))?;
        println!("{w:<5} weighting: {:.6}", report.weighted);
    }
    McReport::evaluate(&truth, &predicted, &[1, 2, 3], &test_sizes)?
        .with_names(vec!["water".into(), "grass".into(), "road".into()])
        .write_csv(std::io::stdout().lock())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
