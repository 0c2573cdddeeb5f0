// Drives the command-line workflows in-process: build a tile from a patient
// CSV, then evaluate a user CSV against it.
//
// ```text
// cargo run --example cli_workflow
// ```

use std::fs::File;

use privytrac::cli::{run_from, write_path_csv};
use privytrac::grid::PathSample;

pub fn run_example(dir: &std::path::Path) -> privytrac::Result<String> {
    let patient = dir.join("patient.csv");
    let user = dir.join("user.csv");
    write_path_csv(&[PathSample::new(0.0, 0.0, 0.0), PathSample::new(60.0, 60.0, 0.0)], File::create(&patient)?)?;
    write_path_csv(&[PathSample::new(30.0, 30.0, 2.0), PathSample::new(50.0, 30.0, 2.0)], File::create(&user)?)?;

    let maps = dir.join("maps");
    let mut log = Vec::new();
    run_from(
        ["privytrac", "build-map", "--sigma-t", "50", "--out", maps.to_str().unwrap(), patient.to_str().unwrap()],
        &mut log,
    )?;
    let tile = maps.join("1.tile");
    run_from(
        ["privytrac", "evaluate", "--tile", tile.to_str().unwrap(), "--trajectory", user.to_str().unwrap()],
        &mut log,
    )?;
    Ok(String::from_utf8_lossy(&log).into_owned())
}

fn main() -> privytrac::Result<()> {
    let dir = std::env::temp_dir().join(format!("privytrac-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    print!("{}", run_example(&dir)?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
