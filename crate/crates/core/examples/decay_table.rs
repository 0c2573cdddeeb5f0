// Pairwise infection probability as a function of spatial and temporal lag.
//
// ```text
// cargo run --example decay_table
// ```

use privytrac::{pairwise_risk, PresenceCell, RiskParams};

pub const DISTANCES: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
pub const LAGS: [f64; 5] = [0.0, 30.0, 60.0, 120.0, 300.0];

/// Rows are distances (m), columns lags (s).
pub fn run_example() -> privytrac::Result<Vec<Vec<f64>>> {
    let params = RiskParams::reference();
    let patient = PresenceCell::new(0.0, 0.0, 0.0);
    Ok(DISTANCES
        .iter()
        .map(|&d| LAGS.iter().map(|&lag| pairwise_risk(&PresenceCell::new(d, 0.0, lag), &patient, &params)).collect())
        .collect())
}

fn main() -> privytrac::Result<()> {
    let table = run_example()?;
    print!("{:>8}", "d \\ lag");
    for lag in LAGS {
        print!("{lag:>12}");
    }
    println!();
    for (d, row) in DISTANCES.iter().zip(&table) {
        print!("{d:>8}");
        for p in row {
            print!("{p:>12.3e}");
        }
        println!();
    }
    Ok(())
}
