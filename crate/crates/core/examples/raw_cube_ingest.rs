// Writes a tiny raw cube with a label raster, reads it back and converts it
// to CSV, as the `ingest` subcommand does.

use bandsel::data;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let (rows, cols, bands) = (2, 3, 4);
    let values: Vec<f32> = (0..rows * cols * bands).map(|v| v as f32 / 10.0).collect();
    // Label 0 marks unlabeled pixels, which are dropped.
    let labels: Vec<u16> = vec![1, 0, 2, 2, 1, 0];
    let (_, header) = data::write_raw_cube(dir.path(), "scene", (rows, cols, bands), &values, &labels)?;

    let cube = data::load_any(&header)?;
    println!(
        "{} labeled pixels of {}, {} bands, class sizes {:?}",
        cube.n_samples(),
        rows * cols,
        cube.n_bands(),
        cube.class_sizes()
    );
    let csv = dir.path().join("scene.csv");
    data::save_csv(&cube, &csv)?;
    let back = data::load_csv(&csv)?;
    assert_eq!(back.dataset.samples(), cube.samples());
    print!("{}", std::fs::read_to_string(&csv)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
