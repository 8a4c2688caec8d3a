//! Deterministic multi-octave value noise for plane textures.

/// Texture field parameters. The band-limited base octave keeps photometric
/// basins wide; the finer octaves keep gradients informative everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    pub octaves: u32,
    pub base_frequency: f64,
    pub seed: u64,
    /// Output intensity range, kept away from 0 and 1 so brightness
    /// perturbations do not saturate.
    pub low: f64,
    pub high: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec { octaves: 4, base_frequency: 0.18, seed: 7, low: 0.08, high: 0.92 }
    }
}

/// Lattice hash in [0, 1).
fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x9e3779b97f4a7c15;
    h = h.wrapping_add((ix as u64).wrapping_mul(0xff51afd7ed558ccd));
    h ^= h >> 33;
    h = h.wrapping_add((iy as u64).wrapping_mul(0xc4ceb9fe1a85ec53));
    h ^= h >> 29;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 32;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Quintic fade, C2 at lattice points.
#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// One octave of smooth value noise in [0, 1].
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ix, iy) = (x0 as i64, y0 as i64);
    let fx = fade(x - x0);
    let fy = fade(y - y0);
    let v00 = lattice(ix, iy, seed);
    let v10 = lattice(ix + 1, iy, seed);
    let v01 = lattice(ix, iy + 1, seed);
    let v11 = lattice(ix + 1, iy + 1, seed);
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
}

/// Multi-octave texture intensity at a surface point, in [low, high].
pub fn texture_at(spec: &TextureSpec, x: f64, y: f64) -> f64 {
    let mut acc = 0.0;
    let mut amp = 1.0;
    let mut freq = spec.base_frequency;
    let mut norm = 0.0;
    for o in 0..spec.octaves.max(1) {
        acc += amp * value_noise(x * freq, y * freq, spec.seed.wrapping_add(o as u64));
        norm += amp;
        amp *= 0.55;
        freq *= 2.0;
    }
    spec.low + (spec.high - spec.low) * (acc / norm)
}
