use crate::grid::Grid;
use crate::linalg::Vec3;
use crate::scalar::Scalar;

/// D65 reference white in XYZ.
pub const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// Inverse sRGB transfer function of an 8-bit channel value.
pub fn srgb_to_linear(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIELAB `(L*, a*, b*)` of an 8-bit sRGB triple under D65.
pub fn srgb_to_cielab<S: Scalar>(rgb: [u8; 3]) -> Vec3<S> {
    let lin = rgb.map(srgb_to_linear);
    let mut f = [0.0; 3];
    for (i, row) in SRGB_TO_XYZ.iter().enumerate() {
        let xyz = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
        f[i] = lab_f(xyz / D65_WHITE[i]);
    }
    [
        S::lit(116.0 * f[1] - 16.0),
        S::lit(500.0 * (f[0] - f[1])),
        S::lit(200.0 * (f[1] - f[2])),
    ]
}

/// Per-pixel CIELAB conversion of an sRGB image.
pub fn lab_image<S: Scalar>(color: &Grid<[u8; 3]>) -> Grid<Vec3<S>> {
    color.map(|&c| srgb_to_cielab(c))
}
