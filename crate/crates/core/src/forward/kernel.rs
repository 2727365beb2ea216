use std::f64::consts::PI;

use crate::field::{Fft3, C64};

use super::ForwardError;

/// Lattice constant of the simple cubic `1/r` sum: the limit of
/// `int_{|x|<R} dx/|x| - sum_{0<|m|<R} 1/|m|` for unit spacing.
const SELF_TERM_CONSTANT: f64 = 2.837_297_479_480_6;

/// Free-space Helmholtz Green's function `exp(i k r) / (4 pi r)`.
pub fn greens_kernel(r: f64, k: f64) -> Result<C64, ForwardError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(ForwardError::InvalidArgument(format!("kernel distance must be positive, got {r}")));
    }
    Ok(kernel_unchecked(r, k))
}

#[inline]
pub(crate) fn kernel_unchecked(r: f64, k: f64) -> C64 {
    C64::from_polar(1.0 / (4.0 * PI * r), k * r)
}

/// Weight of displacement `m` (in nodes) in the nodal quadrature of the
/// volume potential. The diagonal weight integrates the singularity so the
/// lattice sum reproduces the integral to fourth order for smooth densities.
pub(crate) fn quadrature_weight(m: [isize; 3], spacing: [f64; 3], k: f64, self_constant: f64) -> C64 {
    let vol = spacing[0] * spacing[1] * spacing[2];
    if m == [0, 0, 0] {
        let h = vol.cbrt();
        return C64::new(self_constant * h * h, k * vol) / (4.0 * PI);
    }
    let r = ((m[0] as f64 * spacing[0]).powi(2) + (m[1] as f64 * spacing[1]).powi(2) + (m[2] as f64 * spacing[2]).powi(2))
        .sqrt();
    kernel_unchecked(r, k) * vol
}

pub(crate) fn default_self_constant() -> f64 {
    SELF_TERM_CONSTANT
}

/// Smallest `n >= need` whose only prime factors are 2, 3 and 5.
pub(crate) fn good_fft_size(need: usize) -> usize {
    let mut n = need.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Discrete convolution with the quadrature kernel from an input box to an
/// output box on the same lattice, evaluated exactly by zero-padded FFTs.
///
/// `offset` is the output-box origin minus the input-box origin, in nodes.
pub(crate) struct BoxConvolution {
    fft: Fft3,
    kernel_hat: Vec<C64>,
    s_in: [usize; 3],
    s_out: [usize; 3],
}

impl BoxConvolution {
    pub fn new(spacing: [f64; 3], k: f64, s_in: [usize; 3], s_out: [usize; 3], offset: [isize; 3], self_constant: f64) -> Self {
        let dims = [0, 1, 2].map(|a| good_fft_size(s_in[a] + s_out[a] - 1));
        let fft = Fft3::new(dims);
        // displacement for padded index p: offset + p on the output side,
        // offset + p - P on the wrapped input side, unused in between
        let disp = |a: usize, p: usize| -> Option<isize> {
            if p < s_out[a] {
                Some(offset[a] + p as isize)
            } else if p + s_in[a] > dims[a] {
                Some(offset[a] + p as isize - dims[a] as isize)
            } else {
                None
            }
        };
        let mut kernel = vec![C64::new(0.0, 0.0); fft.len()];
        for p0 in 0..dims[0] {
            let Some(m0) = disp(0, p0) else { continue };
            for p1 in 0..dims[1] {
                let Some(m1) = disp(1, p1) else { continue };
                for p2 in 0..dims[2] {
                    let Some(m2) = disp(2, p2) else { continue };
                    kernel[(p0 * dims[1] + p1) * dims[2] + p2] = quadrature_weight([m0, m1, m2], spacing, k, self_constant);
                }
            }
        }
        fft.forward(&mut kernel);
        let scale = 1.0 / fft.len() as f64;
        kernel.iter_mut().for_each(|v| *v *= scale);
        Self { fft, kernel_hat: kernel, s_in, s_out }
    }

    /// `out[o] = sum_j W(offset + o - j) input[j]`, both boxes x3-fastest.
    pub fn apply(&self, input: &[C64]) -> Vec<C64> {
        let [_, d1, d2] = self.fft.dims();
        let [i0, i1, i2] = self.s_in;
        debug_assert_eq!(input.len(), i0 * i1 * i2);
        let mut buf = vec![C64::new(0.0, 0.0); self.fft.len()];
        for a in 0..i0 {
            for b in 0..i1 {
                let src = (a * i1 + b) * i2;
                let dst = (a * d1 + b) * d2;
                buf[dst..dst + i2].copy_from_slice(&input[src..src + i2]);
            }
        }
        self.fft.forward_supported(&mut buf, self.s_in);
        for (v, w) in buf.iter_mut().zip(&self.kernel_hat) {
            *v *= w;
        }
        self.fft.inverse_kept(&mut buf, self.s_out);
        let [o0, o1, o2] = self.s_out;
        let mut out = vec![C64::new(0.0, 0.0); o0 * o1 * o2];
        for a in 0..o0 {
            for b in 0..o1 {
                let src = (a * d1 + b) * d2;
                let dst = (a * o1 + b) * o2;
                out[dst..dst + o2].copy_from_slice(&buf[src..src + o2]);
            }
        }
        out
    }
}
