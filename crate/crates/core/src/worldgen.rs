//! Procedural door worlds.
//!
//! A world is a pure function of `(master_seed, index, knob_type,
//! open_direction)`. Fields are drawn in declaration order from one
//! xoshiro256++ stream keyed by [`derive_seed`]`(master_seed, [index])`:
//! hinge side first (`u < 0.5` is left), then every ranged field below.
//!
//! The damper / spring / frictionloss values are the raw dimensionless
//! factors; [`crate::dynamics`] turns them into SI coefficients.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, stream, uniform, unit_f64};

pub const WORLD_SCHEMA_VERSION: &str = "doorgym_world_v1";
pub const MANIFEST_SCHEMA_VERSION: &str = "doorgym_manifest_v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KnobType {
    Pull,
    Lever,
    Round,
}

impl KnobType {
    pub const ALL: [KnobType; 3] = [KnobType::Pull, KnobType::Lever, KnobType::Round];

    pub fn name(self) -> &'static str {
        match self {
            KnobType::Pull => "pull",
            KnobType::Lever => "lever",
            KnobType::Round => "round",
        }
    }

    pub fn has_latch(self) -> bool {
        self != KnobType::Pull
    }
}

impl std::str::FromStr for KnobType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pull" => Ok(KnobType::Pull),
            "lever" => Ok(KnobType::Lever),
            "round" => Ok(KnobType::Round),
            other => Err(format!("unknown knob type `{other}` (pull|lever|round)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpenDirection {
    Push,
    Pull,
}

impl OpenDirection {
    pub const ALL: [OpenDirection; 2] = [OpenDirection::Push, OpenDirection::Pull];

    pub fn name(self) -> &'static str {
        match self {
            OpenDirection::Push => "push",
            OpenDirection::Pull => "pull",
        }
    }
}

impl std::str::FromStr for OpenDirection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "push" => Ok(OpenDirection::Push),
            "pull" => Ok(OpenDirection::Pull),
            other => Err(format!("unknown direction `{other}` (push|pull)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HingeSide {
    Left,
    Right,
}

/// One fully sampled door world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub world_id: String,
    pub schema_version: String,
    pub knob_type: KnobType,
    pub open_direction: OpenDirection,
    pub hinge_side: HingeSide,
    pub door_height_m: f64,
    pub door_width_m: f64,
    pub door_thickness_m: f64,
    pub door_mass_kg: f64,
    /// Table value as sampled (read as hectograms).
    pub knob_mass_raw: f64,
    pub knob_mass_kg: f64,
    pub knob_height_m: f64,
    pub knob_edge_ratio: f64,
    pub wall_offset_y_m: f64,
    pub frame_damper: f64,
    pub frame_spring: f64,
    pub frame_frictionloss: f64,
    pub knob_damper: f64,
    pub knob_spring: f64,
    pub knob_frictionloss: f64,
    pub knob_rot_range_rad: f64,
    pub knob_surface_friction: f64,
    pub robot_joint_damping: f64,
    pub rng_seed: u64,
}

/// Closed sampling interval of one scalar field.
#[derive(Clone, Copy, Debug)]
pub struct FieldRange {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub get: fn(&WorldSpec) -> f64,
}

const DEG: f64 = std::f64::consts::PI / 180.0;

/// Every ranged field, in sampling order.
pub const FIELD_RANGES: [FieldRange; 18] = [
    FieldRange { name: "door_height_m", lo: 2.0, hi: 2.5, get: |w| w.door_height_m },
    FieldRange { name: "door_width_m", lo: 0.8, hi: 1.2, get: |w| w.door_width_m },
    FieldRange { name: "door_thickness_m", lo: 0.02, hi: 0.03, get: |w| w.door_thickness_m },
    FieldRange { name: "door_mass_kg", lo: 22.4, hi: 76.5, get: |w| w.door_mass_kg },
    FieldRange { name: "knob_mass_raw", lo: 4.0, hi: 7.0, get: |w| w.knob_mass_raw },
    FieldRange { name: "knob_mass_kg", lo: 0.4, hi: 0.7, get: |w| w.knob_mass_kg },
    FieldRange { name: "knob_height_m", lo: 0.95, hi: 1.05, get: |w| w.knob_height_m },
    FieldRange { name: "knob_edge_ratio", lo: 0.10, hi: 0.20, get: |w| w.knob_edge_ratio },
    FieldRange { name: "wall_offset_y_m", lo: -0.2, hi: 0.2, get: |w| w.wall_offset_y_m },
    FieldRange { name: "frame_damper", lo: 0.1, hi: 0.2, get: |w| w.frame_damper },
    FieldRange { name: "frame_spring", lo: 0.1, hi: 0.2, get: |w| w.frame_spring },
    FieldRange { name: "frame_frictionloss", lo: 0.0, hi: 1.0, get: |w| w.frame_frictionloss },
    FieldRange { name: "knob_damper", lo: 0.1, hi: 0.2, get: |w| w.knob_damper },
    FieldRange { name: "knob_spring", lo: 0.1, hi: 0.15, get: |w| w.knob_spring },
    FieldRange { name: "knob_frictionloss", lo: 0.0, hi: 1.0, get: |w| w.knob_frictionloss },
    FieldRange { name: "knob_rot_range_rad", lo: 75.0 * DEG, hi: 80.0 * DEG, get: |w| w.knob_rot_range_rad },
    FieldRange { name: "knob_surface_friction", lo: 0.5, hi: 1.0, get: |w| w.knob_surface_friction },
    FieldRange { name: "robot_joint_damping", lo: 0.1, hi: 0.3, get: |w| w.robot_joint_damping },
];

pub fn world_id(master_seed: u64, index: u64, knob: KnobType, dir: OpenDirection) -> String {
    format!("{}-{}-s{}-i{}", knob.name(), dir.name(), master_seed, index)
}

/// Samples world `index` of the stream keyed by `master_seed`.
pub fn sample_world(
    master_seed: u64,
    index: u64,
    knob_type: KnobType,
    open_direction: OpenDirection,
) -> WorldSpec {
    let rng_seed = derive_seed(master_seed, &[index]);
    let mut rng = stream(rng_seed);
    let hinge_side = if unit_f64(&mut rng) < 0.5 {
        HingeSide::Left
    } else {
        HingeSide::Right
    };
    let mut draw = |i: usize| {
        let r = &FIELD_RANGES[i];
        uniform(&mut rng, r.lo, r.hi)
    };

    let door_height_m = draw(0);
    let door_width_m = draw(1);
    let door_thickness_m = draw(2);
    let door_mass_kg = draw(3);
    let knob_mass_raw = draw(4);
    let knob_height_m = draw(6);
    let knob_edge_ratio = draw(7);
    let wall_offset_y_m = draw(8);
    let frame_damper = draw(9);
    let frame_spring = draw(10);
    let frame_frictionloss = draw(11);
    let knob_damper = draw(12);
    let knob_spring = draw(13);
    let knob_frictionloss = draw(14);
    let knob_rot_range_rad = draw(15);
    let knob_surface_friction = draw(16);
    let robot_joint_damping = draw(17);

    WorldSpec {
        world_id: world_id(master_seed, index, knob_type, open_direction),
        schema_version: WORLD_SCHEMA_VERSION.to_string(),
        knob_type,
        open_direction,
        hinge_side,
        door_height_m,
        door_width_m,
        door_thickness_m,
        door_mass_kg,
        knob_mass_raw,
        knob_mass_kg: knob_mass_raw / 10.0,
        knob_height_m,
        knob_edge_ratio,
        wall_offset_y_m,
        frame_damper,
        frame_spring,
        frame_frictionloss,
        knob_damper,
        knob_spring,
        knob_frictionloss,
        knob_rot_range_rad,
        knob_surface_friction,
        robot_joint_damping,
        rng_seed,
    }
}

impl WorldSpec {
    /// Checks every ranged field against its sampling interval.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != WORLD_SCHEMA_VERSION {
            return Err(Error::Version {
                found: self.schema_version.clone(),
                expected: WORLD_SCHEMA_VERSION.to_string(),
            });
        }
        for r in &FIELD_RANGES {
            let v = (r.get)(self);
            if !(v >= r.lo && v <= r.hi) {
                return Err(Error::Range {
                    field: r.name.to_string(),
                    value: v,
                    lo: r.lo,
                    hi: r.hi,
                });
            }
        }
        Ok(())
    }

    /// Horizontal distance from the hinge axis to the knob center.
    pub fn knob_hinge_distance(&self) -> f64 {
        (1.0 - self.knob_edge_ratio) * self.door_width_m
    }

    pub fn to_json_string(&self) -> String {
        to_exact_json(self)
    }

    pub fn from_json_str(text: &str) -> Result<WorldSpec> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::schema("<document>", e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::schema("<document>", "expected a JSON object"))?;
        match obj.get("schema_version") {
            None => return Err(Error::schema("schema_version", "missing field")),
            Some(Value::String(v)) if v == WORLD_SCHEMA_VERSION => {}
            Some(Value::String(v)) => {
                return Err(Error::Version {
                    found: v.clone(),
                    expected: WORLD_SCHEMA_VERSION.to_string(),
                })
            }
            Some(_) => return Err(Error::schema("schema_version", "expected a string")),
        }
        let spec: WorldSpec = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            let field = offending_field(&msg).unwrap_or("<document>").to_string();
            Error::schema(field, msg)
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Pulls the backticked field name out of a serde message such as
/// "missing field `knob_type`".
fn offending_field(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(&msg[start..end])
}

/// JSON formatter that writes every double with 17 significant digits.
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub(crate) fn to_exact_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

pub fn write_world(spec: &WorldSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, spec.to_json_string()).map_err(|e| Error::io(path, e))
}

pub fn read_world(path: impl AsRef<Path>) -> Result<WorldSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    WorldSpec::from_json_str(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub master_seed: u64,
    pub count: usize,
    pub files: Vec<String>,
}

/// A generated collection of world files indexed by a manifest.
#[derive(Clone, Debug)]
pub struct WorldSet {
    pub manifest_path: PathBuf,
    pub files: Vec<PathBuf>,
    pub master_seed: u64,
}

impl WorldSet {
    pub fn load(&self) -> Result<Vec<WorldSpec>> {
        self.files.iter().map(read_world).collect()
    }
}

pub fn world_file_name(index: u64) -> String {
    format!("world_{index:05}.json")
}

/// Samples `n` worlds in parallel; output is independent of thread count.
pub fn sample_worlds(master_seed: u64, n: usize, knob: KnobType, dir: OpenDirection) -> Vec<WorldSpec> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| sample_world(master_seed, i, knob, dir))
        .collect()
}

pub fn generate_world_set(
    master_seed: u64,
    n: usize,
    knob: KnobType,
    dir: OpenDirection,
    out_dir: impl AsRef<Path>,
) -> Result<WorldSet> {
    if n == 0 {
        return Err(Error::Contract("world set needs n >= 1".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let worlds = sample_worlds(master_seed, n, knob, dir);
    let mut files = Vec::with_capacity(n);
    let mut names = Vec::with_capacity(n);
    for (i, w) in worlds.iter().enumerate() {
        let name = world_file_name(i as u64);
        let path = out_dir.join(&name);
        write_world(w, &path)?;
        files.push(path);
        names.push(name);
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION.to_string(),
        master_seed,
        count: n,
        files: names,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let mut f = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(WorldSet {
        manifest_path,
        files,
        master_seed,
    })
}

/// Opens a world set from its directory or its manifest file.
pub fn open_world_set(path: impl AsRef<Path>) -> Result<WorldSet> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::schema("<manifest>", e.to_string()))?;
    match value.get("schema_version").and_then(Value::as_str) {
        Some(MANIFEST_SCHEMA_VERSION) => {}
        Some(other) => {
            return Err(Error::Version {
                found: other.to_string(),
                expected: MANIFEST_SCHEMA_VERSION.to_string(),
            })
        }
        None => return Err(Error::schema("schema_version", "missing or not a string")),
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        let field = offending_field(&msg).unwrap_or("<manifest>").to_string();
        Error::schema(field, msg)
    })?;
    if manifest.count != manifest.files.len() {
        return Err(Error::schema("count", "does not match number of files"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    Ok(WorldSet {
        files: manifest.files.iter().map(|f| base.join(f)).collect(),
        manifest_path,
        master_seed: manifest.master_seed,
    })
}

/// Loads worlds from a world-set directory, a manifest, or a single world file.
pub fn load_worlds(path: impl AsRef<Path>) -> Result<Vec<WorldSpec>> {
    let path = path.as_ref();
    if path.is_dir() || path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        open_world_set(path)?.load()
    } else {
        Ok(vec![read_world(path)?])
    }
}
