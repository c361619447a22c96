//! Deterministic test-problem generators: the inverse-heat Volterra problem,
//! 1D Gaussian blur, 2D deblurring with reflexive boundaries, parallel-beam
//! tomography with exact cell-intersection ray tracing, the Shepp-Logan
//! phantom, and seeded Gaussian noise with an exact noise level.
//!
//! Problems serialize to a directory as an operator spec (JSON) plus raw
//! little-endian `f64` vector files with JSON sidecars.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{DenseOperator, LinearOperator, OpRef};
use crate::rng;
use crate::transforms::HaarTransform;

/// RNG identity recorded in serialized problems and experiment outputs.
pub const RNG_ALGORITHM: &str = rng::ALGORITHM;

/// A generated inverse problem `b = A x_true + e`.
pub struct TestProblem {
    pub a: OpRef,
    pub b: DVector<f64>,
    pub b_true: DVector<f64>,
    pub e: DVector<f64>,
    pub x_true: DVector<f64>,
    pub noise_level: f64,
    pub psi: Option<Arc<HaarTransform>>,
    pub spec: ProblemSpec,
}

/// Generator identity plus parameters; enough to rebuild the operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    Heat {
        n: usize,
    },
    Blur1d {
        n: usize,
        variance: f64,
        band: usize,
    },
    Deblur2d {
        side: usize,
        psf: Psf,
    },
    Tomo {
        n_grid: usize,
        angles_deg: Vec<f64>,
        rays_per_angle: usize,
        detector_width: f64,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Psf {
    Gaussian { sigma: f64 },
    Disk { radius: f64 },
}

impl TestProblem {
    fn noiseless(a: OpRef, x_true: DVector<f64>, spec: ProblemSpec) -> Self {
        let b_true = a.apply(&x_true);
        Self {
            e: DVector::zeros(b_true.len()),
            b: b_true.clone(),
            b_true,
            a,
            x_true,
            noise_level: 0.0,
            psi: None,
            spec,
        }
    }

    pub fn with_transform(mut self, psi: Arc<HaarTransform>) -> Result<Self> {
        if psi.len() != self.a.ncols() {
            return Err(Error::TransformDims {
                transform_len: psi.len(),
                operator_dim: self.a.ncols(),
            });
        }
        self.psi = Some(psi);
        Ok(self)
    }
}

/// Adds seeded white Gaussian noise scaled so that
/// `||e|| / ||b_true|| == level` exactly.
pub fn add_noise(p: TestProblem, level: f64, seed: u64) -> TestProblem {
    assert!(level >= 0.0, "noise level must be nonnegative");
    if level == 0.0 {
        return TestProblem {
            b: p.b_true.clone(),
            e: DVector::zeros(p.b_true.len()),
            noise_level: 0.0,
            ..p
        };
    }
    let g = rng::standard_normal(&mut rng::from_seed(seed), p.b_true.len());
    let e = &g * (level * p.b_true.norm() / g.norm());
    TestProblem {
        b: &p.b_true + &e,
        e,
        noise_level: level,
        ..p
    }
}

// ---------------------------------------------------------------------------
// heat

/// Inverse heat equation: lower triangular Toeplitz quadrature of the
/// Volterra kernel `h(t) = t^{-3/2} / (2 sqrt(pi)) exp(-1/(4 t))` on a
/// midpoint grid, with the classical piecewise true solution whose second
/// half is identically zero.
pub fn gen_heat(n: usize) -> TestProblem {
    assert!(n >= 16, "heat problem needs n >= 16");
    let h = 1.0 / n as f64;
    let c = 1.0 / (2.0 * std::f64::consts::PI.sqrt());
    let kernel: Vec<f64> = (1..=n)
        .map(|i| {
            let t = (i as f64 - 0.5) * h;
            c * t.powf(-1.5) * (-1.0 / (4.0 * t)).exp()
        })
        .collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            a[(i, j)] = h * kernel[i - j];
        }
    }
    let mut x = DVector::zeros(n);
    for i in 1..=n / 2 {
        let ti = i as f64 * 20.0 / n as f64;
        x[i - 1] = if ti < 2.0 {
            0.75 * ti * ti / 4.0
        } else if ti < 3.0 {
            0.75 + (ti - 2.0) * (3.0 - ti)
        } else {
            0.75 * (-(ti - 3.0) * 2.0).exp()
        };
    }
    TestProblem::noiseless(Arc::new(DenseOperator::new(a)), x, ProblemSpec::Heat { n })
}

// ---------------------------------------------------------------------------
// 1D Gaussian blur

/// Banded symmetric Toeplitz operator: Gaussian kernel of the given variance
/// truncated to an odd total bandwidth, normalized to sum one.
pub struct BandedToeplitzOperator {
    n: usize,
    /// kernel[half + o] is the weight at offset o
    kernel: Vec<f64>,
    half: usize,
}

impl BandedToeplitzOperator {
    fn new(n: usize, variance: f64, band: usize) -> Self {
        let half = band / 2;
        let mut kernel: Vec<f64> = (0..band)
            .map(|i| {
                let o = i as f64 - half as f64;
                if variance == 0.0 {
                    if o == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-o * o / (2.0 * variance)).exp()
                }
            })
            .collect();
        let sum: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|v| *v /= sum);
        Self { n, kernel, half }
    }

    fn correlate(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for (idx, &w) in self.kernel.iter().enumerate() {
                let j = i as isize + idx as isize - self.half as isize;
                if j >= 0 && (j as usize) < self.n {
                    acc += w * x[j as usize];
                }
            }
            out[i] = acc;
        }
        out
    }
}

impl LinearOperator for BandedToeplitzOperator {
    fn nrows(&self) -> usize {
        self.n
    }

    fn ncols(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n);
        self.correlate(x)
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.n);
        // symmetric kernel and symmetric truncation: A' = A
        self.correlate(y)
    }
}

/// 1D Gaussian blur of a piecewise-constant signal whose 1-level Haar
/// transform has exactly eight nonzero coefficients.
pub fn gen_blur1d(n: usize, variance: f64, band: usize) -> Result<TestProblem> {
    if band % 2 == 0 || band == 0 {
        return Err(Error::Config(format!(
            "band must be an odd width, got {band}"
        )));
    }
    if n < band {
        return Err(Error::Config(format!("n = {n} smaller than band = {band}")));
    }
    if variance < 0.0 {
        return Err(Error::Config("variance must be nonnegative".into()));
    }
    let a = BandedToeplitzOperator::new(n, variance, band);
    let x_true = if n == 64 {
        sparse_haar_signal_64()
    } else {
        // scale the same three-plateau construction to other lengths
        let mut x = DVector::zeros(n);
        let block = n / 16;
        for i in 4 * block..7 * block {
            x[i] = 1.0;
        }
        for i in 10 * block..11 * block {
            x[i] = 2.0;
        }
        x
    };
    Ok(TestProblem::noiseless(
        Arc::new(a),
        x_true,
        ProblemSpec::Blur1d { n, variance, band },
    ))
}

/// Three plateaus aligned to sample pairs: the 1-level Haar transform has
/// eight nonzero approximation coefficients and no detail coefficients.
fn sparse_haar_signal_64() -> DVector<f64> {
    let mut x = DVector::zeros(64);
    for i in 16..24 {
        x[i] = 1.0;
    }
    for i in 24..28 {
        x[i] = 0.5;
    }
    for i in 40..44 {
        x[i] = 2.0;
    }
    x
}

// ---------------------------------------------------------------------------
// 2D deblurring with reflexive boundaries

/// 2D correlation with a centro-symmetric PSF under reflexive (symmetric
/// half-sample) boundary padding. The adjoint correlates with the flipped
/// PSF under the same padding, which is exact for the symmetric PSFs
/// generated here.
pub struct ReflexiveBlurOperator {
    side: usize,
    /// (2r+1) x (2r+1) stencil, row-major
    stencil: Vec<f64>,
    radius: usize,
}

impl ReflexiveBlurOperator {
    fn new(side: usize, psf: &Psf) -> Self {
        let radius = match psf {
            Psf::Gaussian { sigma } => (3.0 * sigma).ceil().max(1.0) as usize,
            Psf::Disk { radius } => radius.ceil().max(1.0) as usize,
        };
        let w = 2 * radius + 1;
        let mut stencil = vec![0.0; w * w];
        for r in 0..w {
            for c in 0..w {
                let dy = r as f64 - radius as f64;
                let dx = c as f64 - radius as f64;
                stencil[r * w + c] = match psf {
                    Psf::Gaussian { sigma } => {
                        if *sigma == 0.0 {
                            f64::from(dx == 0.0 && dy == 0.0)
                        } else {
                            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
                        }
                    }
                    Psf::Disk { radius: rr } => f64::from(dx * dx + dy * dy <= rr * rr),
                };
            }
        }
        let sum: f64 = stencil.iter().sum();
        stencil.iter_mut().for_each(|v| *v /= sum);
        Self {
            side,
            stencil,
            radius,
        }
    }

    /// Reflect an out-of-range index back into `[0, side)` (half-sample
    /// symmetric: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...).
    fn reflect(&self, i: isize) -> usize {
        let n = self.side as isize;
        let mut v = i;
        // at most two folds for radius < side
        if v < 0 {
            v = -v - 1;
        }
        if v >= n {
            v = 2 * n - 1 - v;
        }
        debug_assert!(v >= 0 && v < n, "psf radius larger than image side");
        v as usize
    }

    fn correlate(&self, x: &DVector<f64>, flipped: bool) -> DVector<f64> {
        let s = self.side;
        let w = 2 * self.radius + 1;
        let mut out = DVector::zeros(s * s);
        for row in 0..s {
            for col in 0..s {
                let mut acc = 0.0;
                for kr in 0..w {
                    for kc in 0..w {
                        let weight = if flipped {
                            self.stencil[(w - 1 - kr) * w + (w - 1 - kc)]
                        } else {
                            self.stencil[kr * w + kc]
                        };
                        if weight == 0.0 {
                            continue;
                        }
                        let rr = self.reflect(row as isize + kr as isize - self.radius as isize);
                        let cc = self.reflect(col as isize + kc as isize - self.radius as isize);
                        acc += weight * x[rr * s + cc];
                    }
                }
                out[row * s + col] = acc;
            }
        }
        out
    }
}

impl LinearOperator for ReflexiveBlurOperator {
    fn nrows(&self) -> usize {
        self.side * self.side
    }

    fn ncols(&self) -> usize {
        self.side * self.side
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.side * self.side);
        self.correlate(x, false)
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.side * self.side);
        self.correlate(y, true)
    }
}

/// 2D deblurring of the Shepp-Logan phantom under reflexive boundaries.
/// `side` must be a power of two so wavelet transforms apply.
pub fn gen_deblur2d(side: usize, psf: Psf) -> Result<TestProblem> {
    if !side.is_power_of_two() || side < 16 {
        return Err(Error::Config(format!(
            "side must be a power of two >= 16, got {side}"
        )));
    }
    let op = ReflexiveBlurOperator::new(side, &psf);
    if op.radius >= side {
        return Err(Error::Config("psf radius exceeds image side".into()));
    }
    let x_true = gen_shepp_logan(side);
    Ok(TestProblem::noiseless(
        Arc::new(op),
        x_true,
        ProblemSpec::Deblur2d { side, psf },
    ))
}

// ---------------------------------------------------------------------------
// Shepp-Logan phantom

/// intensity, semi-axis a, semi-axis b, center x, center y, rotation (deg)
const SHEPP_LOGAN_ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.046, 0.06, -0.605, 0.0),
];

/// Ten-ellipse phantom (modified intensities) rasterized by pixel-center
/// evaluation on `[-1, 1]^2`, clamped to `[0, 1]` to absorb floating-point
/// cancellation in regions where intensities sum to zero.
pub fn gen_shepp_logan(side: usize) -> DVector<f64> {
    assert!(side >= 16, "phantom needs side >= 16");
    let mut img = DVector::zeros(side * side);
    for row in 0..side {
        for col in 0..side {
            let x = (col as f64 + 0.5) * 2.0 / side as f64 - 1.0;
            let y = 1.0 - (row as f64 + 0.5) * 2.0 / side as f64;
            let mut v = 0.0;
            for &(amp, a, b, x0, y0, phi_deg) in SHEPP_LOGAN_ELLIPSES.iter() {
                let phi = phi_deg.to_radians();
                let (s, c) = phi.sin_cos();
                let xr = (x - x0) * c + (y - y0) * s;
                let yr = -(x - x0) * s + (y - y0) * c;
                if (xr / a) * (xr / a) + (yr / b) * (yr / b) <= 1.0 {
                    v += amp;
                }
            }
            img[row * side + col] = v.clamp(0.0, 1.0);
        }
    }
    img
}

// ---------------------------------------------------------------------------
// parallel-beam tomography

/// Sparse CSR ray-tracing operator for 2D equidistant parallel beams.
///
/// Geometry: an `n x n` pixel grid of unit cells centered at the origin;
/// rays at angle `theta` have direction `(-sin theta, cos theta)` and pass
/// through detector points `(t cos theta, t sin theta)` with `t` equispaced
/// (inclusive) over `[-width/2, width/2]`. Entry `(i, j)` is the
/// intersection length of ray `i` with pixel `j`; rays that miss the grid
/// keep their (zero) rows. Pixels are indexed row-major with row 0 at the
/// top (`y = n/2`).
pub struct TomoOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl TomoOperator {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

impl LinearOperator for TomoOperator {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut out = DVector::zeros(self.nrows);
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[idx] * x[self.col_idx[idx] as usize];
            }
            out[i] = acc;
        }
        out
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[idx] as usize] += self.values[idx] * yi;
            }
        }
        out
    }
}

/// Traces one ray through the grid, appending `(pixel, length)` pairs.
/// Exact cell-intersection lengths via incremental boundary crossings; cell
/// membership is decided at segment midpoints, which is robust for rays
/// riding pixel boundaries.
fn trace_ray(
    n: usize,
    p0: (f64, f64),
    dir: (f64, f64),
    cols: &mut Vec<u32>,
    vals: &mut Vec<f64>,
) {
    let half = n as f64 / 2.0;
    // clip the infinite line against the grid square
    let (mut s_min, mut s_max) = (f64::NEG_INFINITY, f64::INFINITY);
    for (o, d) in [(p0.0, dir.0), (p0.1, dir.1)] {
        if d.abs() < 1e-14 {
            // boundary-riding rays attribute to the higher-index cell
            // (half-open cells via floor), matching the traversal below
            if o < -half || o >= half {
                return;
            }
        } else {
            let s1 = (-half - o) / d;
            let s2 = (half - o) / d;
            s_min = s_min.max(s1.min(s2));
            s_max = s_max.min(s1.max(s2));
        }
    }
    if !(s_max > s_min) {
        return;
    }
    let eps = 1e-12 * n as f64;
    let mut s = s_min;
    while s < s_max - eps {
        let x = p0.0 + s * dir.0;
        let y = p0.1 + s * dir.1;
        let mut s_next = s_max;
        for (coord, d) in [(x, dir.0), (y, dir.1)] {
            if d.abs() < 1e-14 {
                continue;
            }
            let boundary = if d > 0.0 {
                (coord + 1e-9).floor() + 1.0
            } else {
                (coord - 1e-9).ceil() - 1.0
            };
            let sc = s + (boundary - coord) / d;
            if sc < s_next {
                s_next = sc;
            }
        }
        if s_next <= s + eps {
            s_next = (s + eps).min(s_max);
        }
        let mx = p0.0 + 0.5 * (s + s_next) * dir.0;
        let my = p0.1 + 0.5 * (s + s_next) * dir.1;
        let cx = (mx + half).floor() as isize;
        let cy = (my + half).floor() as isize;
        if cx >= 0 && (cx as usize) < n && cy >= 0 && (cy as usize) < n {
            let row_img = n - 1 - cy as usize;
            cols.push((row_img * n + cx as usize) as u32);
            vals.push(s_next - s);
        }
        s = s_next;
    }
}

/// Builds the parallel-beam operator; rows are ordered angle-major and the
/// Shepp-Logan phantom is used as the true image.
pub fn gen_tomo(
    n_grid: usize,
    angles_deg: &[f64],
    rays_per_angle: usize,
    detector_width: f64,
) -> TestProblem {
    assert!(n_grid >= 1 && !angles_deg.is_empty() && rays_per_angle >= 1);
    let offsets: Vec<f64> = if rays_per_angle == 1 {
        vec![0.0]
    } else {
        (0..rays_per_angle)
            .map(|j| -detector_width / 2.0 + detector_width * j as f64 / (rays_per_angle - 1) as f64)
            .collect()
    };
    let mut row_ptr = Vec::with_capacity(angles_deg.len() * rays_per_angle + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    let mut scratch_cols: Vec<u32> = Vec::new();
    let mut scratch_vals: Vec<f64> = Vec::new();
    for &theta_deg in angles_deg {
        let theta = theta_deg.to_radians();
        let (sin_t, cos_t) = theta.sin_cos();
        for &t in &offsets {
            scratch_cols.clear();
            scratch_vals.clear();
            trace_ray(
                n_grid,
                (t * cos_t, t * sin_t),
                (-sin_t, cos_t),
                &mut scratch_cols,
                &mut scratch_vals,
            );
            // merge duplicate pixels (can occur at grazing boundary steps)
            let mut order: Vec<usize> = (0..scratch_cols.len()).collect();
            order.sort_by_key(|&i| scratch_cols[i]);
            let row_start = col_idx.len();
            for &i in &order {
                match col_idx.last() {
                    Some(&last) if col_idx.len() > row_start && last == scratch_cols[i] => {
                        *values.last_mut().unwrap() += scratch_vals[i];
                    }
                    _ => {
                        col_idx.push(scratch_cols[i]);
                        values.push(scratch_vals[i]);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    let op = TomoOperator {
        nrows: angles_deg.len() * rays_per_angle,
        ncols: n_grid * n_grid,
        row_ptr,
        col_idx,
        values,
    };
    let x_true = if n_grid >= 16 {
        gen_shepp_logan(n_grid)
    } else {
        DVector::from_element(n_grid * n_grid, 1.0)
    };
    TestProblem::noiseless(
        Arc::new(op),
        x_true,
        ProblemSpec::Tomo {
            n_grid,
            angles_deg: angles_deg.to_vec(),
            rays_per_angle,
            detector_width,
        },
    )
}

/// Inclusive arithmetic range of angles, MATLAB-colon style.
pub fn angle_range(start: f64, step: f64, stop: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut a = start;
    let mut i = 0usize;
    while a <= stop + 1e-9 {
        out.push(a);
        i += 1;
        a = start + step * i as f64;
    }
    out
}

/// Rebuilds a problem's operator from its spec.
pub fn build_operator(spec: &ProblemSpec) -> Result<OpRef> {
    Ok(match spec {
        ProblemSpec::Heat { n } => gen_heat(*n).a,
        ProblemSpec::Blur1d { n, variance, band } => gen_blur1d(*n, *variance, *band)?.a,
        ProblemSpec::Deblur2d { side, psf } => gen_deblur2d(*side, *psf)?.a,
        ProblemSpec::Tomo {
            n_grid,
            angles_deg,
            rays_per_angle,
            detector_width,
        } => gen_tomo(*n_grid, angles_deg, *rays_per_angle, *detector_width).a,
    })
}

// ---------------------------------------------------------------------------
// serialization

#[derive(Serialize, Deserialize)]
struct ProblemManifest {
    schema_version: u32,
    generator: ProblemSpec,
    noise_level: f64,
    rng: String,
    vectors: Vec<VectorSidecar>,
}

#[derive(Serialize, Deserialize, Clone)]
struct VectorSidecar {
    role: String,
    file: String,
    shape: Vec<usize>,
}

fn write_raw_f64(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(v.len() * 8);
    for &x in v.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn read_raw_f64(path: &Path, len: usize) -> Result<DVector<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != len * 8 {
        return Err(Error::Deserialize(format!(
            "{} has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            len * 8
        )));
    }
    let mut v = DVector::zeros(len);
    for i in 0..len {
        v[i] = f64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
    }
    Ok(v)
}

/// Writes the operator spec and all vectors into `dir`.
pub fn save_dir(p: &TestProblem, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let shape_of = |len: usize, solution_space: bool| -> Vec<usize> {
        match (&p.spec, solution_space) {
            (ProblemSpec::Deblur2d { side, .. }, true) => vec![*side, *side],
            (ProblemSpec::Tomo { n_grid, .. }, true) => vec![*n_grid, *n_grid],
            _ => vec![len],
        }
    };
    let entries: [(&str, &DVector<f64>, bool); 4] = [
        ("b", &p.b, false),
        ("b_true", &p.b_true, false),
        ("e", &p.e, false),
        ("x_true", &p.x_true, true),
    ];
    let mut sidecars = Vec::new();
    for (role, vec, in_solution_space) in entries {
        let file = format!("{role}.f64");
        write_raw_f64(&dir.join(&file), vec)?;
        let sc = VectorSidecar {
            role: role.to_string(),
            file,
            shape: shape_of(vec.len(), in_solution_space),
        };
        std::fs::write(
            dir.join(format!("{role}.json")),
            serde_json::to_string_pretty(&sc).expect("sidecar serializes"),
        )?;
        sidecars.push(sc);
    }
    let manifest = ProblemManifest {
        schema_version: 1,
        generator: p.spec.clone(),
        noise_level: p.noise_level,
        rng: RNG_ALGORITHM.to_string(),
        vectors: sidecars,
    };
    std::fs::write(
        dir.join("problem.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

/// Reloads a problem saved by [`save_dir`], rebuilding the operator from the
/// stored generator spec and validating `b = b_true + e`.
pub fn load_dir(dir: &Path) -> Result<TestProblem> {
    let manifest: ProblemManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("problem.json"))?)
            .map_err(|e| Error::Deserialize(e.to_string()))?;
    let a = build_operator(&manifest.generator)?;
    let find = |role: &str| -> Result<&VectorSidecar> {
        manifest
            .vectors
            .iter()
            .find(|v| v.role == role)
            .ok_or_else(|| Error::Deserialize(format!("missing vector role `{role}`")))
    };
    let read = |sc: &VectorSidecar| read_raw_f64(&dir.join(&sc.file), sc.shape.iter().product());
    let b = read(find("b")?)?;
    let b_true = read(find("b_true")?)?;
    let e = read(find("e")?)?;
    let x_true = read(find("x_true")?)?;
    if (&b - &b_true - &e).norm() > 1e-12 * b.norm().max(1.0) {
        return Err(Error::Deserialize("b != b_true + e".into()));
    }
    Ok(TestProblem {
        a,
        b,
        b_true,
        e,
        x_true,
        noise_level: manifest.noise_level,
        psi: None,
        spec: manifest.generator,
    })
}
