use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use compliant_core::harness::{run_scenario, HarnessError, RunOptions, RunOutput, Scenario, Server};
use compliant_core::{ChainModel, DynamicsWorkspace};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Writes `body` as a scenario next to a temp dir, with the planar model
/// referenced by absolute path.
fn scenario(dir: &tempfile::TempDir, body: &str) -> Scenario<f64> {
    let path = dir.path().join("s.cfg");
    let text = format!("model {}\n{body}", configs().join("models/planar2.model").display());
    std::fs::write(&path, text).unwrap();
    Scenario::load(&path).unwrap()
}

fn try_scenario(body: &str) -> Result<Scenario<f64>, HarnessError> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.cfg");
    std::fs::write(&path, body.replace("@MODEL", &configs().join("models/planar2.model").display().to_string()))
        .unwrap();
    Scenario::load(&path)
}

const GAINS: &str = "kp 20\nkd 4\ntau_d_max 10\nkpx 200 200 200 0 0 0\nkdx 20 20 20 0 0 0\nwrench_d_max 50 50 50 0 0 0\n";

fn run(sc: &Scenario<f64>) -> RunOutput {
    run_scenario(sc, &RunOptions::default()).unwrap()
}

fn csv_bytes(out: &RunOutput) -> Vec<u8> {
    let mut b = Vec::new();
    out.log.write_csv(&mut b).unwrap();
    b
}

#[test]
fn hold_without_friction_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(&dir, &format!("duration 2\nstart 0.3 -0.6\nfriction off\n{GAINS}alpha 0.5\n"));
    let out = run(&sc);
    assert!(out.metrics.rmse_xyz_cm.iter().all(|e| *e < 1e-4), "{:?}", out.metrics.rmse_xyz_cm);
    assert_eq!(out.diverged, None);
}

#[test]
fn row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenario(&dir, "duration 1\n"));
    assert_eq!(out.log.len(), 1001);
    assert_eq!(out.log.t(1000), 1.0);
    let out = run(&scenario(&dir, "duration 0\n"));
    assert!(out.log.is_empty());
    assert_eq!(String::from_utf8(csv_bytes(&out)).unwrap().lines().count(), 1);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(
        &dir,
        &format!("duration 1\nstart_offset 0.05\nnoise 1e-4 1e-3 0.05\nobserver on\nkl 60\nklp 60\nkli 300\n{GAINS}alpha 0.3\n"),
    );
    let a = csv_bytes(&run(&sc));
    let b = csv_bytes(&run(&sc));
    assert_eq!(a, b);
    let c = csv_bytes(&run_scenario(&sc, &RunOptions { seed: Some(2), ..Default::default() }).unwrap());
    assert_ne!(a, c);
}

#[test]
fn alpha_ramp_shifts_torque_to_task_loop() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = format!("duration 6\nstart 0.3 -0.6\nfriction off\n{GAINS}alpha 0\njoint_torque 0 6 1 3\n");
    for k in 1..=50 {
        body.push_str(&format!("event {} alpha {}\n", 0.5 + k as f64 * 0.1, k as f64 / 50.0));
    }
    let out = run(&scenario(&dir, &body));
    assert!(out.metrics.events.iter().all(|e| e.accepted));
    // Mean share of |τ_x| in each 100 ms interval between events.
    let mut shares = Vec::new();
    for k in 0..=50 {
        let t0 = 0.5 + k as f64 * 0.1 + 0.01;
        let rows = (0..out.log.len()).filter(|&i| out.log.t(i) >= t0 && out.log.t(i) < t0 + 0.08);
        let (mut x, mut total, mut count) = (0.0, 0.0, 0);
        for i in rows {
            let tx: f64 = out.log.tau_x(i).iter().map(|v| v.abs()).sum();
            let tq: f64 = out.log.tau_q(i).iter().map(|v| v.abs()).sum();
            x += tx;
            total += tx + tq;
            count += 1;
        }
        assert!(count > 0);
        shares.push(x / total);
    }
    assert_eq!(shares[0], 0.0);
    assert!((shares[50] - 1.0).abs() < 1e-12);
    for w in shares.windows(2) {
        assert!(w[1] >= w[0], "{shares:?}");
    }
    let alpha_at = |t: f64| out.log.alpha((t * 1000.0).round() as usize);
    assert_eq!((alpha_at(0.55), alpha_at(3.05), alpha_at(5.9)), (0.0, 0.5, 1.0));
}

#[test]
fn doubling_kp_mid_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("duration 2\nstart 0.3 -0.6\nfriction off\n{GAINS}alpha 0\njoint_torque 0 2 1 2\nevent 1.0 kp 40\n");
    let out = run(&scenario(&dir, &body));
    let (before, at) = (999, 1000);
    assert_eq!(out.log.q_star(before), out.log.q_star(at));
    for j in 0..2 {
        let err = (out.log.q(at)[j] - out.log.q_star(at)[j]).abs();
        let step = (out.log.tau_q(at)[j] - out.log.tau_q(before)[j]).abs();
        assert!(step <= 20.0 * err + 1e-3, "joint {j}: step {step}, bound {}", 20.0 * err);
    }
}

#[test]
fn rejected_gain_change_leaves_loop_alone() {
    let dir = tempfile::tempdir().unwrap();
    let base = format!("duration 1\nstart 0.3 -0.6\n{GAINS}alpha 0.5\n");
    let clean = run(&scenario(&dir, &base));
    let with_bad = run(&scenario(&dir, &format!("{base}event 0.5 kp -5\nevent 0.6 alpha 1.5\n")));
    assert_eq!(csv_bytes(&clean), csv_bytes(&with_bad));
    assert!(with_bad.metrics.events.iter().all(|e| !e.accepted && e.reason.is_some()));
}

#[test]
fn command_breakdown_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(
        &dir,
        &format!("duration 2\nobserver on\nkl 60\nklp 60\nkli 300\n{GAINS}alpha 0.5\nevent 1 alpha 0.8\nevent 1.5 kp 30\nreference trajectory {}\n",
            configs().join("friction_step.traj").display()),
    );
    let out = run(&sc);
    let model: &ChainModel<f64> = &sc.model;
    let mut ws = DynamicsWorkspace::for_model(model);
    let mut g = vec![0.0; 2];
    for i in 0..out.log.len() {
        model.gravity_torques_into(&mut ws, out.log.q_star(i), &mut g).unwrap();
        for j in 0..2 {
            let raw = out.log.tau_q(i)[j] + out.log.tau_x(i)[j] - out.log.tau_f_hat(i)[j] + g[j];
            let limit = model.joints()[j].torque_limit;
            let expect = raw.clamp(-limit, limit);
            assert!((out.log.tau_m(i)[j] - expect).abs() < 1e-9, "row {i} joint {j}");
        }
    }
}

#[test]
fn observer_is_inert_without_friction() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("duration 3\nfriction off\nkl 60\nklp 60\nkli 300\n{GAINS}alpha 0.5\nreference trajectory {}\n",
        configs().join("friction_step.traj").display());
    let off = run(&scenario(&dir, &format!("{body}observer off\n")));
    let on = run(&scenario(&dir, &format!("{body}observer on\n")));
    let mut worst: f64 = 0.0;
    for i in 0..off.log.len() {
        for j in 0..2 {
            worst = worst.max((off.log.q(i)[j] - on.log.q(i)[j]).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn runaway_is_reported_with_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenario(&dir, "duration 10\nfriction off\ngravity_at measured\njoint_torque 0 10 2 15\n"));
    let t = out.diverged.expect("should diverge");
    assert!(t < 10.0);
    assert!(out.log.len() < 10001 && !out.log.is_empty());
}

#[test]
fn config_errors_name_the_line() {
    let line_of = |body: &str| match try_scenario(body).unwrap_err() {
        HarnessError::Config { line, .. } => line,
        other => panic!("{other}"),
    };
    assert_eq!(line_of("model @MODEL\nduration 1\nfoo 3\n"), 3);
    assert_eq!(line_of("model @MODEL\nkp 1 2 3\n"), 2);
    assert_eq!(line_of("model @MODEL\nstart 0\n"), 2);
    assert_eq!(line_of("model @MODEL\nevent 2 alpha 0.5\nevent 1 alpha 0.2\n"), 3);
    assert_eq!(line_of("model @MODEL\nreference trajectory missing.traj\n"), 2);
    assert_eq!(line_of("model @MODEL\npush 2 1 0 1 0\n"), 2);
    assert_eq!(line_of("model @MODEL\nlink_force 0 1 3 0 0 0 1 0 0\n"), 2);
    assert!(matches!(try_scenario("duration 1\n"), Err(HarnessError::Config { .. })));
    assert!(matches!(try_scenario("model @MODEL\nkp -1\n"), Err(HarnessError::Config { .. })));
    assert!(matches!(try_scenario("model @MODEL\nduration 1\nwindow 0 2\n"), Err(HarnessError::Config { .. })));
    assert_eq!(try_scenario("model @MODEL\nkp -1\n").unwrap_err().exit_code(), 2);
}

#[test]
fn bundled_scenarios_parse() {
    for name in ["hold", "pin_insertion", "intervention", "elbow_push", "friction_2dof", "teleop"] {
        let sc = Scenario::<f64>::load(configs().join(format!("{name}.cfg"))).unwrap();
        assert!(sc.steps() > 0, "{name}");
    }
    let f32_sc = Scenario::<f32>::load(configs().join("friction_2dof.cfg")).unwrap();
    let out = run_scenario(&f32_sc, &RunOptions::default()).unwrap();
    assert_eq!(out.diverged, None);
    assert!(out.metrics.rmse_joint.iter().all(|e| *e < 0.1));
}

#[test]
fn socket_reference_is_rejected_offline() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(&dir, "duration 1\nreference socket\n");
    assert!(matches!(run_scenario(&sc, &RunOptions::default()), Err(HarnessError::Config { .. })));
}

#[test]
fn serve_applies_streamed_setpoints() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(&dir, &format!("duration 1.5\nfriction off\nreference socket\n{GAINS}alpha 0\n"));
    let server = Server::bind("127.0.0.1:0").unwrap();
    let addr = server.local_addr().unwrap();
    let handle = std::thread::spawn(move || server.run(&sc, None).unwrap());

    let mut stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    stream.write_all(b"SP t=0 q=0.2,-0.1\nSP t=0 q=nope\n").unwrap();
    let mut reply = String::new();
    BufReader::new(stream.try_clone().unwrap()).read_line(&mut reply).unwrap();
    assert!(reply.starts_with("ERR line 2"), "{reply}");

    let out = handle.join().unwrap();
    let last = out.log.len() - 1;
    assert_eq!(out.log.q_star(last), &[0.2, -0.1]);
}
