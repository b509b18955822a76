//! Writes the pin-insertion reference used by `configs/pin_insertion.cfg`.
//!
//! The end effector moves from the home pose to a point above the hole on a
//! minimum-jerk Cartesian path, dwells, then descends 10 mm. Each knot is
//! solved with damped least-squares IK seeded from the previous knot.
//!
//! cargo run -p compliant-core --example pin_insertion_path -- configs/models/gen3_like.model configs/pin_insertion.traj

use nalgebra::{DMatrix, DVector, Vector3};

use compliant_core::controller::pose_error;
use compliant_core::trajectory::{format_trajectory, Interpolation, Trajectory, TrajectoryPoint};
use compliant_core::{load_model, ChainModel, Pose};

const HOME: [f64; 7] = [0.0, 0.262, std::f64::consts::PI, -2.269, 0.0, 0.960, std::f64::consts::FRAC_PI_2];
const KNOT_DT: f64 = 0.25;
const TRANSFER_END: f64 = 16.0;
const DWELL_END: f64 = 19.0;
const DESCENT_END: f64 = 24.0;

fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn ik(model: &ChainModel<f64>, target: &Pose<f64>, seed: &[f64]) -> Vec<f64> {
    let mut q = seed.to_vec();
    for _ in 0..200 {
        let x = model.forward_kinematics(&q).unwrap();
        let e = -pose_error(&x, target);
        if e.norm() < 1e-12 {
            break;
        }
        let j = model.geometric_jacobian(&q).unwrap();
        let j = DMatrix::from_iterator(6, q.len(), j.iter().copied());
        let jjt = &j * j.transpose() + DMatrix::identity(6, 6) * 1e-6;
        let dq = j.transpose() * jjt.lu().solve(&DVector::from_column_slice(e.as_slice())).unwrap();
        for (qi, d) in q.iter_mut().zip(dq.iter()) {
            *qi += d;
        }
    }
    q
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (model_path, out) = match args.as_slice() {
        [_, m, o] => (m, o),
        _ => {
            eprintln!("usage: pin_insertion_path <model> <out.traj>");
            std::process::exit(2);
        }
    };
    let model: ChainModel<f64> = load_model(model_path).expect("model");
    let home = model.forward_kinematics(&HOME).unwrap();
    let above_hole = home.position + Vector3::new(0.12, -0.15, -0.15);
    let descent = Vector3::new(0.0, 0.0, -0.010);

    let mut q = HOME.to_vec();
    let mut points = Vec::new();
    let knots = (DESCENT_END / KNOT_DT).round() as usize;
    for k in 0..=knots {
        let t = k as f64 * KNOT_DT;
        let p = if t <= TRANSFER_END {
            home.position + (above_hole - home.position) * min_jerk(t / TRANSFER_END)
        } else if t <= DWELL_END {
            above_hole
        } else {
            above_hole + descent * min_jerk((t - DWELL_END) / (DESCENT_END - DWELL_END))
        };
        let target = Pose::new(p, *home.orientation());
        q = ik(&model, &target, &q);
        let reached = pose_error(&model.forward_kinematics(&q).unwrap(), &target).norm();
        assert!(reached < 1e-9, "IK did not converge at t = {t}: {reached}");
        assert!(model.within_limits(&q), "IK left the joint limits at t = {t}");
        points.push(TrajectoryPoint::new(t, q.clone(), None));
    }
    let traj = Trajectory::new(points, Interpolation::Cubic).unwrap();
    let mut text = String::from("# Pin insertion: transfer 0-16 s, dwell 16-19 s, 10 mm descent 19-24 s.\n");
    text.push_str("# Generated by the pin_insertion_path example.\n");
    text.push_str(&format_trajectory(0.0, &traj));
    std::fs::write(out, text).expect("write");
    println!("home EE {:?}", home.position.as_slice());
    println!("wrote {} knots to {out}", traj.points().len());
}
