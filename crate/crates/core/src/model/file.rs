use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3};

use super::{ChainModel, Joint, ModelError};
use crate::kv::{SyntaxError, Tokens};
use crate::scalar::{lit, Real};

/// Reads and validates a chain model file.
pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<ChainModel<T>, ModelError> {
    let src = std::fs::read_to_string(path)?;
    parse_model(&src)
}

#[derive(Default)]
struct RawJoint {
    xyz: Option<[f64; 3]>,
    rpy: Option<[f64; 3]>,
    axis: Option<[f64; 3]>,
    mass: Option<f64>,
    com: Option<[f64; 3]>,
    inertia: Option<[f64; 6]>,
    rotor: Option<f64>,
    coulomb: Option<f64>,
    viscous: Option<f64>,
    qmin: Option<f64>,
    qmax: Option<f64>,
    vmax: Option<f64>,
    taumax: Option<f64>,
}

const TOP_LEVEL: [&str; 4] = ["njoints", "gravity", "joint", "ee"];

fn syntax(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse(SyntaxError { line, message: message.into() })
}

/// Parses model text. See the README for the format.
pub fn parse_model<T: Real>(src: &str) -> Result<ChainModel<T>, ModelError> {
    let mut toks = Tokens::new(src);
    let mut njoints: Option<usize> = None;
    let mut gravity = [0.0, 0.0, -9.81];
    let mut joints: Vec<RawJoint> = Vec::new();
    let mut ee_xyz = [0.0; 3];
    let mut ee_rpy = [0.0; 3];

    while let Some(tok) = toks.peek().cloned() {
        toks.next_token("keyword")?;
        match tok.text {
            "njoints" => njoints = Some(toks.parse("njoints")?),
            "gravity" => gravity = toks.parse_n::<3>("gravity")?,
            "joint" => {
                let idx_line = toks.line();
                let index: usize = toks.parse("joint index")?;
                if index != joints.len() + 1 {
                    return Err(syntax(idx_line, format!("expected joint {}, found joint {index}", joints.len() + 1)));
                }
                joints.push(parse_joint_fields(&mut toks)?);
            }
            "ee" => loop {
                match toks.peek().map(|t| t.text) {
                    Some("xyz") => {
                        toks.next_token("xyz")?;
                        ee_xyz = toks.parse_n::<3>("ee xyz")?;
                    }
                    Some("rpy") => {
                        toks.next_token("rpy")?;
                        ee_rpy = toks.parse_n::<3>("ee rpy")?;
                    }
                    _ => break,
                }
            },
            other => return Err(syntax(tok.line, format!("unknown keyword `{other}`"))),
        }
    }

    let n = njoints.ok_or_else(|| syntax(1, "missing `njoints` header"))?;
    if n != joints.len() {
        return Err(ModelError::Chain(format!("njoints is {n} but {} joint blocks were given", joints.len())));
    }

    let mut out = Vec::with_capacity(n);
    for (i, raw) in joints.into_iter().enumerate() {
        out.push(build_joint(i + 1, raw)?);
    }
    ChainModel::new(out, vec3(gravity), isometry(ee_xyz, ee_rpy))
}

fn parse_joint_fields(toks: &mut Tokens<'_>) -> Result<RawJoint, ModelError> {
    let mut raw = RawJoint::default();
    while let Some(tok) = toks.peek().cloned() {
        if TOP_LEVEL.contains(&tok.text) {
            break;
        }
        toks.next_token("field")?;
        match tok.text {
            "xyz" => raw.xyz = Some(toks.parse_n("xyz")?),
            "rpy" => raw.rpy = Some(toks.parse_n("rpy")?),
            "axis" => raw.axis = Some(toks.parse_n("axis")?),
            "mass" => raw.mass = Some(toks.parse("mass")?),
            "com" => raw.com = Some(toks.parse_n("com")?),
            "inertia" => raw.inertia = Some(toks.parse_n("inertia")?),
            "rotor" => raw.rotor = Some(toks.parse("rotor")?),
            "coulomb" => raw.coulomb = Some(toks.parse("coulomb")?),
            "viscous" => raw.viscous = Some(toks.parse("viscous")?),
            "qmin" => raw.qmin = Some(toks.parse("qmin")?),
            "qmax" => raw.qmax = Some(toks.parse("qmax")?),
            "vmax" => raw.vmax = Some(toks.parse("vmax")?),
            "taumax" => raw.taumax = Some(toks.parse("taumax")?),
            other => return Err(syntax(tok.line, format!("unknown joint field `{other}`"))),
        }
    }
    Ok(raw)
}

fn vec3<T: Real>(v: [f64; 3]) -> Vector3<T> {
    Vector3::new(lit(v[0]), lit(v[1]), lit(v[2]))
}

fn isometry<T: Real>(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<T> {
    Isometry3::from_parts(
        Translation3::from(vec3::<T>(xyz)),
        UnitQuaternion::from_euler_angles(lit(rpy[0]), lit(rpy[1]), lit(rpy[2])),
    )
}

fn build_joint<T: Real>(idx: usize, raw: RawJoint) -> Result<Joint<T>, ModelError> {
    fn req<V>(idx: usize, field: &'static str, v: Option<V>) -> Result<V, ModelError> {
        v.ok_or_else(|| ModelError::Invalid { joint: idx, field, message: "missing field".into() })
    }
    let inertia = req(idx, "inertia", raw.inertia)?;
    let [ixx, iyy, izz, ixy, ixz, iyz] = inertia.map(lit::<T>);
    Ok(Joint {
        parent: isometry(raw.xyz.unwrap_or_default(), raw.rpy.unwrap_or_default()),
        // Normalization is deliberately skipped so validation sees the raw axis.
        axis: Unit::new_unchecked(vec3(req(idx, "axis", raw.axis)?)),
        mass: lit(req(idx, "mass", raw.mass)?),
        com: vec3(req(idx, "com", raw.com)?),
        inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
        rotor_inertia: lit(req(idx, "rotor", raw.rotor)?),
        coulomb: lit(raw.coulomb.unwrap_or(0.0)),
        viscous: lit(raw.viscous.unwrap_or(0.0)),
        position_limits: (lit(req(idx, "qmin", raw.qmin)?), lit(req(idx, "qmax", raw.qmax)?)),
        velocity_limit: lit(req(idx, "vmax", raw.vmax)?),
        torque_limit: lit(req(idx, "taumax", raw.taumax)?),
    })
}
