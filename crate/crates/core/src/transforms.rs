//! Orthonormal discrete Haar wavelet transforms, 1D and 2D, multi-level.
//!
//! Coefficient layout is fixed for determinism: the approximation block comes
//! first, followed by detail blocks coarse-to-fine. In 2D the blocks are
//! `LL_L`, then `LH_l, HL_l, HH_l` for `l = L..1`, each flattened row-major
//! (`LH` = low rows / high columns).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{LinearOperator, OrthonormalTransform};

const SQRT2_INV: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Shape {
    OneD { len: usize },
    TwoD { side: usize },
}

/// Orthonormal Haar analysis/synthesis pair on a fixed-size signal or image.
///
/// `forward` followed by `inverse` reconstructs the input to machine
/// precision, and both preserve the Euclidean norm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaarTransform {
    shape: Shape,
    levels: usize,
}

impl HaarTransform {
    /// 1D transform; `len` must be divisible by `2^levels`.
    pub fn new_1d(len: usize, levels: usize) -> Result<Self> {
        if levels == 0 || len == 0 || len % (1usize << levels) != 0 {
            return Err(Error::IndivisibleLength { len, levels });
        }
        Ok(Self {
            shape: Shape::OneD { len },
            levels,
        })
    }

    /// 2D transform on a `side x side` image flattened row-major; `side` must
    /// be a power of two admitting `levels` halvings.
    pub fn new_2d(side: usize, levels: usize) -> Result<Self> {
        if levels == 0 || side < 2 || !side.is_power_of_two() || side < (1usize << levels) {
            return Err(Error::InvalidSide { side, levels });
        }
        Ok(Self {
            shape: Shape::TwoD { side },
            levels,
        })
    }

    /// Total number of samples (and of coefficients).
    pub fn len(&self) -> usize {
        match self.shape {
            Shape::OneD { len } => len,
            Shape::TwoD { side } => side * side,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn is_two_d(&self) -> bool {
        matches!(self.shape, Shape::TwoD { .. })
    }

    pub fn side(&self) -> Option<usize> {
        match self.shape {
            Shape::TwoD { side } => Some(side),
            Shape::OneD { .. } => None,
        }
    }

    /// Analysis: signal or image to coefficient vector.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.len(), "input length mismatch");
        match self.shape {
            Shape::OneD { .. } => {
                let mut buf: Vec<f64> = x.iter().copied().collect();
                forward_1d_in_place(&mut buf, self.levels);
                DVector::from_vec(buf)
            }
            Shape::TwoD { side } => {
                let mut img: Vec<f64> = x.iter().copied().collect();
                forward_2d_quadrant(&mut img, side, self.levels);
                DVector::from_vec(serialize_blocks(&img, side, self.levels))
            }
        }
    }

    /// Synthesis: coefficient vector back to signal or image.
    pub fn inverse(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        if s.len() != self.len() {
            return Err(Error::CoefficientLength {
                got: s.len(),
                expected: self.len(),
            });
        }
        Ok(match self.shape {
            Shape::OneD { .. } => {
                let mut buf: Vec<f64> = s.iter().copied().collect();
                inverse_1d_in_place(&mut buf, self.levels);
                DVector::from_vec(buf)
            }
            Shape::TwoD { side } => {
                let coeffs: Vec<f64> = s.iter().copied().collect();
                let mut img = deserialize_blocks(&coeffs, side, self.levels);
                inverse_2d_quadrant(&mut img, side, self.levels);
                DVector::from_vec(img)
            }
        })
    }
}

impl LinearOperator for HaarTransform {
    fn nrows(&self) -> usize {
        self.len()
    }

    fn ncols(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward(x)
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        // orthonormal: adjoint == inverse; length is checked above
        self.inverse(y).expect("length checked")
    }
}

impl OrthonormalTransform for HaarTransform {}

/// Number of entries with `|s_i| > tol`.
pub fn count_sparsity(s: &DVector<f64>, tol: f64) -> usize {
    assert!(tol >= 0.0, "tolerance must be nonnegative");
    s.iter().filter(|v| v.abs() > tol).count()
}

/// One analysis level on the first `m` entries: pairs `(a, b)` map to
/// `((a+b)/sqrt(2), (a-b)/sqrt(2))`, averages packed first.
fn analyze_step(buf: &mut [f64], m: usize, scratch: &mut Vec<f64>) {
    let half = m / 2;
    scratch.clear();
    scratch.extend_from_slice(&buf[..m]);
    for i in 0..half {
        let a = scratch[2 * i];
        let b = scratch[2 * i + 1];
        buf[i] = (a + b) * SQRT2_INV;
        buf[half + i] = (a - b) * SQRT2_INV;
    }
}

fn synthesize_step(buf: &mut [f64], m: usize, scratch: &mut Vec<f64>) {
    let half = m / 2;
    scratch.clear();
    scratch.extend_from_slice(&buf[..m]);
    for i in 0..half {
        let a = scratch[i];
        let d = scratch[half + i];
        buf[2 * i] = (a + d) * SQRT2_INV;
        buf[2 * i + 1] = (a - d) * SQRT2_INV;
    }
}

fn forward_1d_in_place(buf: &mut [f64], levels: usize) {
    let mut scratch = Vec::new();
    let mut m = buf.len();
    for _ in 0..levels {
        analyze_step(buf, m, &mut scratch);
        m /= 2;
    }
}

fn inverse_1d_in_place(buf: &mut [f64], levels: usize) {
    let mut scratch = Vec::new();
    let mut m = buf.len() >> (levels - 1);
    for _ in 0..levels {
        synthesize_step(buf, m, &mut scratch);
        m *= 2;
    }
}

/// Multi-level 2D analysis in the usual quadrant layout: at each level the
/// 1D step runs along the rows and then the columns of the current `LL`
/// block (top-left `cur x cur`).
fn forward_2d_quadrant(img: &mut [f64], side: usize, levels: usize) {
    let mut scratch = Vec::new();
    let mut row = vec![0.0; side];
    let mut cur = side;
    for _ in 0..levels {
        for r in 0..cur {
            row[..cur].copy_from_slice(&img[r * side..r * side + cur]);
            analyze_step(&mut row, cur, &mut scratch);
            img[r * side..r * side + cur].copy_from_slice(&row[..cur]);
        }
        for c in 0..cur {
            for r in 0..cur {
                row[r] = img[r * side + c];
            }
            analyze_step(&mut row, cur, &mut scratch);
            for r in 0..cur {
                img[r * side + c] = row[r];
            }
        }
        cur /= 2;
    }
}

fn inverse_2d_quadrant(img: &mut [f64], side: usize, levels: usize) {
    let mut scratch = Vec::new();
    let mut row = vec![0.0; side];
    let mut cur = side >> (levels - 1);
    for _ in 0..levels {
        for c in 0..cur {
            for r in 0..cur {
                row[r] = img[r * side + c];
            }
            synthesize_step(&mut row, cur, &mut scratch);
            for r in 0..cur {
                img[r * side + c] = row[r];
            }
        }
        for r in 0..cur {
            row[..cur].copy_from_slice(&img[r * side..r * side + cur]);
            synthesize_step(&mut row, cur, &mut scratch);
            img[r * side..r * side + cur].copy_from_slice(&row[..cur]);
        }
        cur *= 2;
    }
}

fn copy_block(src: &[f64], side: usize, r0: usize, c0: usize, h: usize, out: &mut Vec<f64>) {
    for r in 0..h {
        let base = (r0 + r) * side + c0;
        out.extend_from_slice(&src[base..base + h]);
    }
}

fn paste_block(dst: &mut [f64], side: usize, r0: usize, c0: usize, h: usize, src: &[f64]) {
    for r in 0..h {
        let base = (r0 + r) * side + c0;
        dst[base..base + h].copy_from_slice(&src[r * h..(r + 1) * h]);
    }
}

fn serialize_blocks(img: &[f64], side: usize, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(side * side);
    let coarse = side >> levels;
    copy_block(img, side, 0, 0, coarse, &mut out);
    for level in (1..=levels).rev() {
        let h = side >> level;
        copy_block(img, side, 0, h, h, &mut out); // LH
        copy_block(img, side, h, 0, h, &mut out); // HL
        copy_block(img, side, h, h, h, &mut out); // HH
    }
    out
}

fn deserialize_blocks(coeffs: &[f64], side: usize, levels: usize) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    let coarse = side >> levels;
    let mut pos = coarse * coarse;
    paste_block(&mut img, side, 0, 0, coarse, &coeffs[..pos]);
    for level in (1..=levels).rev() {
        let h = side >> level;
        let n = h * h;
        paste_block(&mut img, side, 0, h, h, &coeffs[pos..pos + n]);
        pos += n;
        paste_block(&mut img, side, h, 0, h, &coeffs[pos..pos + n]);
        pos += n;
        paste_block(&mut img, side, h, h, h, &coeffs[pos..pos + n]);
        pos += n;
    }
    img
}
