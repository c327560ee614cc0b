//! Ray-cast synthetic RGB-D scenes with exact ground-truth surface labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{dot3, norm3, normalize3, scale3, sub3, Vec3};
use crate::rag::LabelMap;
use crate::rgbd_features::{Intrinsics, RgbdFrame};

/// Scene primitives in camera coordinates (x right, y down, z forward,
/// meters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Unbounded plane through `point`.
    Plane { point: Vec3<f64>, normal: Vec3<f64>, color: [u8; 3] },
    /// Axis-aligned box; each face is its own ground-truth surface.
    Box { center: Vec3<f64>, half_size: Vec3<f64>, color: [u8; 3] },
    Sphere { center: Vec3<f64>, radius: f64, color: [u8; 3] },
    /// Lateral surface of a finite cylinder starting at `base` along `axis`.
    Cylinder {
        base: Vec3<f64>,
        axis: Vec3<f64>,
        radius: f64,
        height: f64,
        color: [u8; 3],
    },
}

impl Primitive {
    fn color(&self) -> [u8; 3] {
        match self {
            Primitive::Plane { color, .. }
            | Primitive::Box { color, .. }
            | Primitive::Sphere { color, .. }
            | Primitive::Cylinder { color, .. } => *color,
        }
    }

    /// Number of ground-truth surfaces the primitive contributes.
    pub fn surfaces(&self) -> usize {
        match self {
            Primitive::Box { .. } => 6,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(format!("malformed scene primitive: {m}")));
        match self {
            Primitive::Plane { normal, .. } if norm3(normal) == 0.0 => bad("plane normal is zero"),
            Primitive::Box { half_size, .. } if half_size.iter().any(|&h| !(h > 0.0)) => bad("box half sizes must be positive"),
            Primitive::Sphere { radius, .. } if !(*radius > 0.0) => bad("sphere radius must be positive"),
            Primitive::Cylinder { axis, radius, height, .. } if norm3(axis) == 0.0 || !(*radius > 0.0) || !(*height > 0.0) => {
                bad("cylinder needs a nonzero axis and positive radius and height")
            }
            _ => Ok(()),
        }
    }

    /// Nearest hit along `dir` from the origin with `t > 0`: distance
    /// parameter, surface index within the primitive and outward normal.
    fn intersect(&self, dir: &Vec3<f64>) -> Option<(f64, usize, Vec3<f64>)> {
        const EPS: f64 = 1e-9;
        match self {
            Primitive::Plane { point, normal, .. } => {
                let n = normalize3(normal)?;
                let den = dot3(&n, dir);
                if den.abs() < EPS {
                    return None;
                }
                let t = dot3(&n, point) / den;
                (t > EPS).then_some((t, 0, n))
            }
            Primitive::Box { center, half_size, .. } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut face = 0;
                for a in 0..3 {
                    let (lo, hi) = (center[a] - half_size[a], center[a] + half_size[a]);
                    if dir[a].abs() < EPS {
                        if 0.0 < lo || 0.0 > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut ta, mut tb) = (lo / dir[a], hi / dir[a]);
                    let mut f = 2 * a;
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                        f += 1;
                    }
                    if ta > t0 {
                        t0 = ta;
                        face = f;
                    }
                    t1 = t1.min(tb);
                }
                if t0 > t1 || t0 <= EPS {
                    return None;
                }
                let a = face / 2;
                let mut n = [0.0; 3];
                n[a] = if face % 2 == 0 { -1.0 } else { 1.0 };
                Some((t0, face, n))
            }
            Primitive::Sphere { center, radius, .. } => {
                let b = dot3(dir, center);
                let a = dot3(dir, dir);
                let c = dot3(center, center) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let t = (b - disc.sqrt()) / a;
                if t <= EPS {
                    return None;
                }
                let p = scale3(dir, t);
                Some((t, 0, normalize3(&sub3(&p, center))?))
            }
            Primitive::Cylinder {
                base,
                axis,
                radius,
                height,
                ..
            } => {
                let k = normalize3(axis)?;
                // Components orthogonal to the axis.
                let perp = |v: &Vec3<f64>| sub3(v, &scale3(&k, dot3(v, &k)));
                let d = perp(dir);
                let o = perp(&scale3(base, -1.0));
                let a = dot3(&d, &d);
                if a < EPS {
                    return None;
                }
                let b = dot3(&d, &o);
                let c = dot3(&o, &o) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                for t in [(-b - disc.sqrt()) / a, (-b + disc.sqrt()) / a] {
                    if t <= EPS {
                        continue;
                    }
                    let p = scale3(dir, t);
                    let h = dot3(&sub3(&p, base), &k);
                    if (0.0..=*height).contains(&h) {
                        let n = normalize3(&perp(&sub3(&p, base)))?;
                        let n = if dot3(&n, dir) > 0.0 { scale3(&n, -1.0) } else { n };
                        return Some((t, 0, n));
                    }
                }
                None
            }
        }
    }
}

/// A renderable scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Defaults to a 525 px focal length at 640 px width, scaled to `width`.
    #[serde(default)]
    pub intrinsics: Option<Intrinsics>,
    /// Standard deviation of additive depth noise in meters.
    #[serde(default)]
    pub depth_noise_m: f64,
    /// Standard deviation of additive per-channel color noise in 8-bit levels.
    #[serde(default)]
    pub color_noise: f64,
    #[serde(default)]
    pub seed: u64,
    pub primitives: Vec<Primitive>,
}

impl SceneSpec {
    pub fn intrinsics(&self) -> Intrinsics {
        self.intrinsics.clone().unwrap_or_else(|| {
            let f = 525.0 * self.width as f64 / 640.0;
            Intrinsics::new(f, f, (self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Input("scene size must be positive".into()));
        }
        if self.primitives.is_empty() {
            return Err(Error::Input("scene has no primitives".into()));
        }
        if !(self.depth_noise_m >= 0.0 && self.color_noise >= 0.0) {
            return Err(Error::Input("noise levels must be non-negative".into()));
        }
        self.intrinsics().validate()?;
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "parsing scene description".into(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A rendered scene.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub frame: RgbdFrame<f64>,
    /// Dense surface labels `0..n` in order of first appearance; pixels that
    /// hit nothing share one extra label.
    pub ground_truth: LabelMap,
    /// Analytic surface normals facing the camera; `None` where nothing was hit.
    pub normals: Grid<Option<Vec3<f64>>>,
}

/// Renders depth, color, ground truth and analytic normals by ray casting.
pub fn render(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let intr = spec.intrinsics();
    let (w, h) = (spec.width, spec.height);
    let mut offsets = Vec::with_capacity(spec.primitives.len());
    let mut total = 0;
    for p in &spec.primitives {
        offsets.push(total);
        total += p.surfaces();
    }
    let background = total as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let depth_noise = Normal::new(0.0, spec.depth_noise_m).map_err(|e| Error::Input(e.to_string()))?;
    let color_noise = Normal::new(0.0, spec.color_noise).map_err(|e| Error::Input(e.to_string()))?;
    let mut depth = Grid::filled(w, h, 0.0);
    let mut color = Grid::filled(w, h, [0u8; 3]);
    let mut raw = Grid::filled(w, h, background);
    let mut normals = Grid::filled(w, h, None);
    for v in 0..h {
        for u in 0..w {
            let dir = [(u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0];
            let hit = spec
                .primitives
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.intersect(&dir).map(|(t, s, n)| (t, i, s, n)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((t, i, s, n)) = hit else { continue };
            let n = if dot3(&n, &dir) > 0.0 { scale3(&n, -1.0) } else { n };
            depth.set(u, v, (t + depth_noise.sample(&mut rng)).max(1e-6));
            let c = spec.primitives[i].color();
            color.set(u, v, c.map(|ch| (ch as f64 + color_noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8));
            raw.set(u, v, (offsets[i] + s) as u32);
            normals.set(u, v, Some(n));
        }
    }
    let ground_truth = dense_by_first_appearance(&raw);
    Ok(SyntheticScene {
        frame: RgbdFrame::new(color, depth, intr)?,
        ground_truth,
        normals,
    })
}

fn dense_by_first_appearance(labels: &LabelMap) -> LabelMap {
    let mut table = std::collections::HashMap::new();
    labels.map(|&l| {
        let n = table.len() as u32;
        *table.entry(l).or_insert(n)
    })
}

/// Floor, back wall and left wall: three mutually orthogonal planes.
pub fn room_scene(width: usize, height: usize, depth_noise_m: f64, seed: u64) -> SceneSpec {
    SceneSpec {
        width,
        height,
        intrinsics: None,
        depth_noise_m,
        color_noise: 2.0,
        seed,
        primitives: vec![
            Primitive::Plane {
                point: [0.0, 1.0, 0.0],
                normal: [0.0, -1.0, 0.0],
                color: [150, 110, 70],
            },
            Primitive::Plane {
                point: [0.0, 0.0, 4.0],
                normal: [0.0, 0.0, -1.0],
                color: [210, 205, 190],
            },
            Primitive::Plane {
                point: [-1.6, 0.0, 0.0],
                normal: [1.0, 0.0, 0.0],
                color: [90, 130, 170],
            },
        ],
    }
}

/// [`room_scene`] plus a red cube on the floor, centered on the optical axis
/// so that its front and top faces are visible.
pub fn box_scene(width: usize, height: usize, depth_noise_m: f64, seed: u64) -> SceneSpec {
    let mut spec = room_scene(width, height, depth_noise_m, seed);
    spec.primitives.push(Primitive::Box {
        center: [0.0, 0.7, 2.6],
        half_size: [0.3, 0.3, 0.3],
        color: [200, 40, 40],
    });
    spec
}

/// Single frontal plane at `distance` meters.
pub fn frontal_plane(width: usize, height: usize, distance: f64) -> SceneSpec {
    SceneSpec {
        width,
        height,
        intrinsics: None,
        depth_noise_m: 0.0,
        color_noise: 0.0,
        seed: 0,
        primitives: vec![Primitive::Plane {
            point: [0.0, 0.0, distance],
            normal: [0.0, 0.0, -1.0],
            color: [128, 128, 128],
        }],
    }
}
