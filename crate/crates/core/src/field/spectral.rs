//! Discrete Fourier transforms: a planned 3D FFT for padded convolutions, the
//! two-dimensional plane transform used for angular-spectrum propagation and
//! trapezoid quadrature of time traces.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::{FieldError, PlaneField, PlaneGrid, C64};

/// Unnormalized 3D FFT on a fixed box with x3-fastest storage. Plans are
/// built once and reused.
pub struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = dims.map(|n| planner.plan_fft_forward(n));
        let inv = dims.map(|n| planner.plan_fft_inverse(n));
        Self { dims, fwd, inv }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forward transform (`exp(-i ...)`), in place.
    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd, self.dims);
    }

    /// Unnormalized inverse transform (`exp(+i ...)`), in place.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv, self.dims);
    }

    /// Forward transform of data that is zero outside the corner block
    /// `0..support[a]`; lines known to be zero are skipped.
    pub fn forward_supported(&self, data: &mut [C64], support: [usize; 3]) {
        let [p1, p2, p3] = self.dims;
        let [s1, s2, _] = support.map(|s| s.max(1));
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len()];
        for i in 0..s1.min(p1) {
            let row = &mut data[i * p2 * p3..i * p2 * p3 + s2.min(p2) * p3];
            self.fwd[2].process_with_scratch(row, &mut scratch);
        }
        for i in 0..s1.min(p1) {
            self.axis1_slab(data, i, &self.fwd[1], &mut scratch);
        }
        self.axis0_all(data, &self.fwd[0], &mut scratch);
    }

    /// Inverse transform where only the corner block `0..keep[a]` of the
    /// output is needed; the rest of `data` is left in an unspecified state.
    pub fn inverse_kept(&self, data: &mut [C64], keep: [usize; 3]) {
        let [p1, p2, p3] = self.dims;
        let [k1, k2, _] = keep.map(|s| s.max(1));
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len()];
        self.axis0_all(data, &self.inv[0], &mut scratch);
        for i in 0..k1.min(p1) {
            self.axis1_slab(data, i, &self.inv[1], &mut scratch);
        }
        for i in 0..k1.min(p1) {
            let row = &mut data[i * p2 * p3..i * p2 * p3 + k2.min(p2) * p3];
            self.inv[2].process_with_scratch(row, &mut scratch);
        }
    }

    fn scratch_len(&self) -> usize {
        (0..3)
            .map(|a| self.fwd[a].get_inplace_scratch_len().max(self.inv[a].get_inplace_scratch_len()))
            .max()
            .unwrap_or(0)
    }

    fn run(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>; 3], dims: [usize; 3]) {
        assert_eq!(data.len(), self.len(), "buffer does not match FFT box");
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len()];
        plans[2].process_with_scratch(data, &mut scratch);
        for i in 0..dims[0] {
            self.axis1_slab(data, i, &plans[1], &mut scratch);
        }
        self.axis0_all(data, &plans[0], &mut scratch);
    }

    /// Transforms along axis 1 inside the slab with fixed first index.
    fn axis1_slab(&self, data: &mut [C64], i: usize, plan: &Arc<dyn Fft<f64>>, scratch: &mut [C64]) {
        let [_, p2, p3] = self.dims;
        let slab = &mut data[i * p2 * p3..(i + 1) * p2 * p3];
        let mut buf = vec![C64::new(0.0, 0.0); p2 * p3];
        for j in 0..p2 {
            for k in 0..p3 {
                buf[k * p2 + j] = slab[j * p3 + k];
            }
        }
        plan.process_with_scratch(&mut buf, scratch);
        for j in 0..p2 {
            for k in 0..p3 {
                slab[j * p3 + k] = buf[k * p2 + j];
            }
        }
    }

    /// Transforms along axis 0 for every (j, k) line.
    fn axis0_all(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>, scratch: &mut [C64]) {
        let [p1, p2, p3] = self.dims;
        let mut buf = vec![C64::new(0.0, 0.0); p1 * p3];
        for j in 0..p2 {
            for i in 0..p1 {
                let base = (i * p2 + j) * p3;
                for k in 0..p3 {
                    buf[k * p1 + i] = data[base + k];
                }
            }
            plan.process_with_scratch(&mut buf, scratch);
            for i in 0..p1 {
                let base = (i * p2 + j) * p3;
                for k in 0..p3 {
                    data[base + k] = buf[k * p1 + i];
                }
            }
        }
    }
}

/// Transverse spectrum of a plane field on the reciprocal lattice.
/// `kx[m]` and `ky[n]` are in FFT (wrapped) order; `values[m * ny + n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2 {
    /// The lattice the spectrum was taken on; the inverse lands back on it.
    pub plane: PlaneGrid,
    pub k: f64,
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    pub values: Vec<C64>,
}

impl Spectrum2 {
    /// Reciprocal-lattice cell area `dkx * dky`.
    pub fn cell_area(&self) -> f64 {
        let [n1, n2] = self.plane.counts;
        (2.0 * PI / (n1 as f64 * self.plane.spacing[0])) * (2.0 * PI / (n2 as f64 * self.plane.spacing[1]))
    }

    /// Weighted 2-norm `sqrt(sum |P|^2 dkx dky)`; equals the weighted norm of
    /// the plane field (Parseval).
    pub fn weighted_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_area()).sqrt()
    }
}

/// Wave numbers `2 pi m / (n d)` in wrapped FFT order.
pub fn wrapped_frequencies(n: usize, d: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * d);
    (0..n)
        .map(|m| {
            let s = if m <= (n - 1) / 2 { m as f64 } else { m as f64 - n as f64 };
            s * dk
        })
        .collect()
}

fn fft2_inplace(values: &mut [C64], counts: [usize; 2], inverse: bool) {
    let [n1, n2] = counts;
    let mut planner = FftPlanner::new();
    let (p1, p2) = if inverse {
        (planner.plan_fft_inverse(n1), planner.plan_fft_inverse(n2))
    } else {
        (planner.plan_fft_forward(n1), planner.plan_fft_forward(n2))
    };
    p2.process(values);
    let mut col = vec![C64::new(0.0, 0.0); n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            col[j * n1 + i] = values[i * n2 + j];
        }
    }
    p1.process(&mut col);
    for i in 0..n1 {
        for j in 0..n2 {
            values[i * n2 + j] = col[j * n1 + i];
        }
    }
}

/// `P(kx, ky) = (dx dy / 2 pi) sum_x p(x) exp(+i (x1 kx + x2 ky))`, a
/// Riemann-sum approximation of the continuous transform with the physical
/// origin of the lattice included in the phase.
pub fn dft2_forward(p: &PlaneField) -> Spectrum2 {
    let plane = &p.plane;
    let [n1, n2] = plane.counts;
    let kx = wrapped_frequencies(n1, plane.spacing[0]);
    let ky = wrapped_frequencies(n2, plane.spacing[1]);
    let mut values = p.values.clone();
    // exp(+i ...) is the unnormalized inverse FFT
    fft2_inplace(&mut values, plane.counts, true);
    let w = plane.spacing[0] * plane.spacing[1] / (2.0 * PI);
    for m in 0..n1 {
        for n in 0..n2 {
            let phase = plane.origin[0] * kx[m] + plane.origin[1] * ky[n];
            values[m * n2 + n] *= C64::from_polar(w, phase);
        }
    }
    Spectrum2 { plane: plane.clone(), k: p.k, kx, ky, values }
}

/// `p(x) = (dkx dky / 2 pi) sum_k P(k) exp(-i (x1 kx + x2 ky))`, the exact
/// inverse of [`dft2_forward`] on the same lattice.
pub fn dft2_inverse(s: &Spectrum2) -> Result<PlaneField, FieldError> {
    let plane = &s.plane;
    let [n1, n2] = plane.counts;
    if s.values.len() != n1 * n2 {
        return Err(FieldError::LengthMismatch { expected: n1 * n2, got: s.values.len() });
    }
    let mut values = s.values.clone();
    for m in 0..n1 {
        for n in 0..n2 {
            let phase = -(plane.origin[0] * s.kx[m] + plane.origin[1] * s.ky[n]);
            values[m * n2 + n] *= C64::from_polar(1.0, phase);
        }
    }
    fft2_inplace(&mut values, plane.counts, false);
    let w = s.cell_area() / (2.0 * PI);
    for v in values.iter_mut() {
        *v *= w;
    }
    PlaneField::new(plane.clone(), s.k, values)
}

/// Trapezoid quadrature of `int_0^T f(t) exp(i k t) dt` with `t_j = j dt`,
/// for every `k` in `ks`.
pub fn dft_time(samples: &[f64], dt: f64, ks: &[f64]) -> Result<Vec<C64>, FieldError> {
    if samples.is_empty() {
        return Err(FieldError::Empty("time trace"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FieldError::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(FieldError::InvalidArgument("non-finite trace sample".into()));
    }
    let last = samples.len() - 1;
    let out = ks
        .iter()
        .map(|&k| {
            let step = C64::from_polar(1.0, k * dt);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for (j, &f) in samples.iter().enumerate() {
                // re-anchor the recurrence to bound phase drift
                if j % 256 == 0 {
                    phase = C64::from_polar(1.0, k * dt * j as f64);
                }
                if f != 0.0 {
                    let w = if last > 0 && (j == 0 || j == last) { 0.5 } else { 1.0 };
                    acc += w * f * phase;
                }
                phase *= step;
            }
            acc * dt
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lattice(n: usize, d: f64) -> PlaneGrid {
        let o = -0.5 * (n - 1) as f64 * d;
        PlaneGrid::new(-1.0, [o, o + 0.1], [d, d], [n, n]).unwrap()
    }

    #[test]
    fn fft3_roundtrip_and_supported_paths() {
        let dims = [4, 6, 8];
        let f = Fft3::new(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut data = vec![C64::new(0.0, 0.0); f.len()];
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    data[(i * 6 + j) * 8 + k] = C64::new(rng.random(), rng.random());
                }
            }
        }
        let orig = data.clone();
        let mut full = data.clone();
        f.forward(&mut full);
        f.forward_supported(&mut data, [2, 3, 4]);
        for (a, b) in full.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
        f.inverse_kept(&mut data, [2, 3, 4]);
        let n = f.len() as f64;
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    let idx = (i * 6 + j) * 8 + k;
                    assert!((data[idx] / n - orig[idx]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fft3_matches_direct_sum() {
        let dims = [3, 4, 5];
        let f = Fft3::new(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<C64> = (0..f.len()).map(|_| C64::new(rng.random(), rng.random())).collect();
        let mut out = data.clone();
        f.forward(&mut out);
        for (m, o) in out.iter().enumerate() {
            let mm = [m / 20, (m / 5) % 4, m % 5];
            let mut acc = C64::new(0.0, 0.0);
            for (x, v) in data.iter().enumerate() {
                let xx = [x / 20, (x / 5) % 4, x % 5];
                let ph: f64 = (0..3).map(|a| (mm[a] * xx[a]) as f64 / dims[a] as f64).sum();
                acc += v * C64::from_polar(1.0, -2.0 * PI * ph);
            }
            assert!((acc - o).norm() < 1e-10);
        }
    }

    #[test]
    fn dft2_roundtrip_random() {
        let plane = lattice(17, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values = (0..plane.len()).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let p = PlaneField::new(plane, 6.0, values).unwrap();
        let back = dft2_inverse(&dft2_forward(&p)).unwrap();
        let err = back.values.iter().zip(&p.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12 * p.max_abs());
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let plane = lattice(9, 0.25);
        let mut p = PlaneField::zeros(&plane, 6.0).unwrap();
        p.values[plane.index(4, 4)] = C64::new(1.0, 0.0);
        let s = dft2_forward(&p);
        let m0 = s.values[0].norm();
        assert!(s.values.iter().all(|v| (v.norm() - m0).abs() < 1e-13));
    }

    #[test]
    fn gaussian_matches_direct_summation() {
        let plane = lattice(24, 0.4);
        let p = PlaneField::from_fn(&plane, 6.0, |x| C64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0)).unwrap();
        let s = dft2_forward(&p);
        let w = plane.spacing[0] * plane.spacing[1] / (2.0 * PI);
        for m in 0..24 {
            for n in 0..24 {
                let mut acc = C64::new(0.0, 0.0);
                for idx in 0..plane.len() {
                    let x = plane.coord_of(idx);
                    acc += p.values[idx] * C64::from_polar(w, x[0] * s.kx[m] + x[1] * s.ky[n]);
                }
                assert!((acc - s.values[m * 24 + n]).norm() < 1e-12);
            }
        }
        // continuous transform of exp(-r^2) with this convention: exp(-kappa^2/4)/2
        let center = s.values[0].re;
        assert!((center - 0.5).abs() < 1e-6);
        let v = s.values[1].norm();
        assert!((v - 0.5 * (-s.kx[1] * s.kx[1] / 4.0).exp()).abs() < 1e-6);
    }

    #[test]
    fn parseval_with_weights() {
        let plane = lattice(12, 0.2);
        let p = PlaneField::from_fn(&plane, 6.0, |x| C64::new(x[0].sin(), x[1] * x[0])).unwrap();
        let s = dft2_forward(&p);
        let lhs = p.norm() * (plane.spacing[0] * plane.spacing[1]).sqrt();
        assert!((lhs - s.weighted_norm()).abs() < 1e-12 * lhs);
    }

    #[test]
    fn time_transform_cases() {
        let ks = [6.0, 13.75, 20.0];
        let z = dft_time(&[0.0; 10], 0.1, &ks).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));

        let mut s = vec![0.0; 50];
        s[30] = 2.0;
        let dt = 0.03;
        let v = dft_time(&s, dt, &ks).unwrap();
        for (k, vi) in ks.iter().zip(&v) {
            let want = C64::from_polar(2.0 * dt, k * 30.0 * dt);
            assert!((vi - want).norm() < 1e-14);
        }
        assert!(dft_time(&[], 0.1, &ks).is_err());
    }

    #[test]
    fn gaussian_pulse_closed_form() {
        let (t0, sigma, dt) = (3.0, 0.1, 0.01);
        let samples: Vec<f64> = (0..700)
            .map(|j| {
                let t = j as f64 * dt - t0;
                (-t * t / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        for i in 0..=28 {
            let k = 6.0 + 0.5 * i as f64;
            let got = dft_time(&samples, dt, &[k]).unwrap()[0];
            let want = C64::from_polar(sigma * (2.0 * PI).sqrt() * (-k * k * sigma * sigma / 2.0).exp(), k * t0);
            assert!((got - want).norm() < 1e-6 * want.norm(), "k={k}");
        }
    }
}
