// Builds a risk map from two patients' paths, evaluates a user's path on it,
// and checks the tile encoding round trip.
//
// ```text
// cargo run --example build_and_evaluate
// ```

use privytrac::grid::PathSample;
use privytrac::{build_risk_map, discretize, tile, trajectory_risk, GridSpec, RiskParams};

pub struct Outcome {
    pub map_cells: usize,
    pub tile_bytes: usize,
    pub map_risk: f64,
    pub direct_risk: f64,
}

pub fn run_example() -> privytrac::Result<Outcome> {
    let spec = GridSpec::default();
    let params = RiskParams::reference().with_sigma_t(30.0)?;

    // a patient walking east, another lingering near the corner
    let east = discretize(&[PathSample::new(0.0, 0.0, 5.0), PathSample::new(40.0, 40.0, 5.0)], &spec)?;
    let corner = discretize(
        &[PathSample::new(10.0, 30.0, 30.0), PathSample::new(70.0, 32.0, 31.0), PathSample::new(90.0, 30.0, 30.0)],
        &spec,
    )?;
    let map = build_risk_map(&[east.clone(), corner.clone()], &params, &spec, 1e-9)?;

    // the user crosses the first patient's path shortly after
    let user = discretize(&[PathSample::new(20.0, 20.0, 0.0), PathSample::new(40.0, 20.0, 20.0)], &spec)?;
    let map_risk = map.evaluate_trajectory(&user)?;
    let all: Vec<_> = east.cells().iter().chain(corner.cells()).copied().collect();
    let direct_risk = trajectory_risk(&user, &all, &params);

    let bytes = tile::encode(&map);
    assert_eq!(tile::decode(&bytes)?, map);
    Ok(Outcome { map_cells: map.len(), tile_bytes: bytes.len(), map_risk, direct_risk })
}

fn main() -> privytrac::Result<()> {
    let o = run_example()?;
    println!("map: {} cells, {} tile bytes", o.map_cells, o.tile_bytes);
    println!("user risk from map:    {:.6e}", o.map_risk);
    println!("user risk from direct: {:.6e}", o.direct_risk);
    Ok(())
}
