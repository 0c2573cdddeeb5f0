// Crossing-walker experiment: risk-score vs proximity ROC areas per sigma_t.
//
// ```text
// cargo run --release --example roc_sweep -- 2000
// ```

use privytrac::simulation::{roc, run_experiment, Metric, ScenarioConfig};
use privytrac::RiskParams;

#[derive(Debug)]
pub struct Row {
    pub sigma_t: f64,
    pub infected: usize,
    pub auc_risk: Option<f64>,
    pub auc_proximity: Option<f64>,
}

pub fn run_example(trials: usize, seed: u64) -> privytrac::Result<Vec<Row>> {
    let config = ScenarioConfig { n_trials: trials, rng_seed: seed, ..ScenarioConfig::default() };
    let mut rows = Vec::new();
    for sigma_t in [10.0, 50.0, 100.0, 150.0] {
        let records = run_experiment(&config, &RiskParams::reference().with_sigma_t(sigma_t)?)?;
        rows.push(Row {
            sigma_t,
            infected: records.iter().filter(|r| r.infected).count(),
            // too few infections leave a single class
            auc_risk: roc(&records, Metric::Risk).ok().map(|c| c.auc()),
            auc_proximity: roc(&records, Metric::Proximity).ok().map(|c| c.auc()),
        });
    }
    Ok(rows)
}

fn main() -> privytrac::Result<()> {
    let trials = std::env::args().nth(1).map_or(Ok(2_000), |s| s.parse()).expect("trial count");
    println!("{:>8} {:>9} {:>9} {:>10}", "sigma_t", "infected", "auc_risk", "auc_prox");
    for r in run_example(trials, 42)? {
        let fmt = |a: Option<f64>| a.map_or("-".to_string(), |a| format!("{a:.3}"));
        println!("{:>8} {:>9} {:>9} {:>10}", r.sigma_t, r.infected, fmt(r.auc_risk), fmt(r.auc_proximity));
    }
    Ok(())
}
