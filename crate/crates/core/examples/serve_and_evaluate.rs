// Publishes a map over TCP and evaluates two users' trajectories on the
// client side. The bytes each client sends are captured and compared.
//
// ```text
// cargo run --example serve_and_evaluate
// ```

use std::sync::Arc;

use privytrac::distribution::{
    client_evaluate, list_versions, spawn_server, CaptureTransport, Evaluation, MapRequest, MapStore, TcpTransport,
    DEFAULT_THRESHOLD,
};
use privytrac::{build_risk_map, GridSpec, PresenceCell, RiskParams, Trajectory};

fn line(y: f64, t0: i64, len: i64) -> privytrac::Result<Trajectory> {
    Trajectory::new((0..len).map(|n| PresenceCell::new(n as f64 + 0.5, y, (t0 + n) as f64 + 0.5)).collect())
}

pub fn run_example() -> privytrac::Result<(Vec<Evaluation>, bool)> {
    let spec = GridSpec::default();
    let map = build_risk_map(&[line(10.5, 0, 50)?], &RiskParams::reference().with_sigma_t(60.0)?, &spec, 1e-9)?;
    let store = Arc::new(MapStore::new());
    store.publish(1, map)?;
    let server = spawn_server("127.0.0.1:0", Arc::clone(&store))?;

    // a coarse block; it says nothing about where inside it a user was
    let request = MapRequest::new(0..=63, 0..=31, 0..=255)?;
    let mut evals = Vec::new();
    let mut sent = Vec::new();
    for user in [line(10.5, 20, 30)?, line(25.5, 5, 40)?] {
        let mut tcp = CaptureTransport::new(TcpTransport::connect(server.local_addr())?);
        list_versions(&mut tcp)?;
        evals.push(client_evaluate(&mut tcp, &request, &user, DEFAULT_THRESHOLD)?);
        sent.push(tcp.outbound);
    }
    server.stop();
    Ok((evals, sent[0] == sent[1]))
}

fn main() -> privytrac::Result<()> {
    let (evals, same) = run_example()?;
    for (n, e) in evals.iter().enumerate() {
        println!("user {n}: risk {:.4e}, advise test: {}, map v{}", e.risk, e.advise_test, e.map_version);
    }
    println!("clients sent identical bytes: {same}");
    Ok(())
}
