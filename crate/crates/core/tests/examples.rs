//! Runs every cargo example through its `run_example` entry point.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }
    };
}

example!(decay_table);
example!(build_and_evaluate);
example!(roc_sweep);
example!(refine_posterior);
example!(serve_and_evaluate);
example!(cli_workflow);

#[test]
fn decay_table_is_monotone() {
    let t = decay_table::run_example().unwrap();
    assert_eq!(t[0][0], privytrac::risk::DEFAULT_P0);
    for row in &t {
        assert!(row.windows(2).all(|w| w[1] < w[0]));
    }
    for col in 0..t[0].len() {
        assert!(t.windows(2).all(|w| w[1][col] < w[0][col]));
    }
}

#[test]
fn map_evaluation_tracks_direct_risk() {
    let o = build_and_evaluate::run_example().unwrap();
    assert!(o.map_cells > 0);
    assert_eq!(o.tile_bytes, 98 + 24 * o.map_cells);
    assert!(o.direct_risk > 0.0);
    // truncation only removes mass
    assert!(o.map_risk <= o.direct_risk);
    assert!(o.direct_risk - o.map_risk < 1e-6);
}

#[test]
fn roc_sweep_runs() {
    let rows = roc_sweep::run_example(300, 1).unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        if let (Some(a), Some(b)) = (r.auc_risk, r.auc_proximity) {
            assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        }
    }
}

#[test]
fn refine_posterior_runs() {
    let (s, cells) = refine_posterior::run_example(100, 1_000).unwrap();
    assert!(s.tau.mean > 0.0 && s.tau_t.mean > 0.0);
    assert!(s.acceptance_rate > 0.05);
    assert!(cells > 0);
}

#[test]
fn served_clients_send_identical_bytes() {
    let (evals, same) = serve_and_evaluate::run_example().unwrap();
    assert!(same);
    assert!(evals[0].advise_test);
    assert_eq!(evals[1].risk, 0.0);
}

#[test]
fn cli_workflow_reports_risk() {
    let dir = tempfile::tempdir().unwrap();
    let log = cli_workflow::run_example(dir.path()).unwrap();
    let json = log.lines().last().unwrap();
    let eval: serde_json::Value = serde_json::from_str(json).unwrap();
    assert!(eval["risk"].as_f64().unwrap() > 0.0);
}
