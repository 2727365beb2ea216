//! Dirichlet problems for `Δq - b·∇q = f` on a box, discretized with the
//! compact 7-point Laplacian and central first differences. A fast sine
//! transform inverts the pure Laplacian exactly; it serves as the direct
//! solver for harmonic problems and as a right preconditioner otherwise.

use std::sync::Arc;

use log::warn;
use rustdct::{DctPlanner, Dst1};

use crate::field::{Grid3, VolumeWave, C64};
use crate::linalg::{gmres, GmresConfig, LinalgError};

use super::GcmError;

/// Grid Péclet number above which central convection is flagged.
pub const PECLET_WARNING: f64 = 2.0;

/// Outcome of one elliptic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticReport {
    pub iterations: usize,
    /// Relative residual of the interior system.
    pub residual: f64,
    /// `max_a |b_a| h_a / 2` over the grid.
    pub peclet: f64,
    pub warning: Option<String>,
}

/// Exact inverse of the 7-point Dirichlet Laplacian on the interior nodes.
pub struct DirichletPoisson {
    inner: [usize; 3],
    spacing: [f64; 3],
    plans: [Arc<dyn Dst1<f64>>; 3],
    axis_eigen: [Vec<f64>; 3],
    eigen: Vec<f64>,
    scale: f64,
}

impl DirichletPoisson {
    pub fn new(grid: &Grid3) -> Result<Self, GcmError> {
        if grid.counts.iter().any(|&n| n < 3) {
            return Err(GcmError::InvalidConfig(format!("grid {:?} has no interior", grid.counts)));
        }
        let inner = grid.counts.map(|n| n - 2);
        let mut planner = DctPlanner::new();
        let plans = inner.map(|m| planner.plan_dst1(m));
        let axis_eigen = |a: usize| -> Vec<f64> {
            let m = inner[a];
            let h2 = grid.spacing[a] * grid.spacing[a];
            (1..=m)
                .map(|p| {
                    let s = (std::f64::consts::PI * p as f64 / (2.0 * (m + 1) as f64)).sin();
                    -4.0 * s * s / h2
                })
                .collect()
        };
        let (e0, e1, e2) = (axis_eigen(0), axis_eigen(1), axis_eigen(2));
        let mut eigen = Vec::with_capacity(inner.iter().product());
        for a in &e0 {
            for b in &e1 {
                for c in &e2 {
                    eigen.push(a + b + c);
                }
            }
        }
        let scale = inner.iter().map(|&m| 2.0 / (m + 1) as f64).product();
        Ok(Self { inner, spacing: grid.spacing, plans, axis_eigen: [e0, e1, e2], eigen, scale })
    }

    pub fn interior_dims(&self) -> [usize; 3] {
        self.inner
    }

    fn transform(&self, data: &mut [f64]) {
        for line in data.chunks_exact_mut(self.inner[2]) {
            self.plans[2].process_dst1(line);
        }
        self.transform_transverse(data);
    }

    fn transform_transverse(&self, data: &mut [f64]) {
        let [m0, m1, m2] = self.inner;
        let mut buf = vec![0.0; m0.max(m1)];
        for a in 0..m0 {
            for c in 0..m2 {
                for b in 0..m1 {
                    buf[b] = data[(a * m1 + b) * m2 + c];
                }
                self.plans[1].process_dst1(&mut buf[..m1]);
                for b in 0..m1 {
                    data[(a * m1 + b) * m2 + c] = buf[b];
                }
            }
        }
        for b in 0..m1 {
            for c in 0..m2 {
                for a in 0..m0 {
                    buf[a] = data[(a * m1 + b) * m2 + c];
                }
                self.plans[0].process_dst1(&mut buf[..m0]);
                for a in 0..m0 {
                    data[(a * m1 + b) * m2 + c] = buf[a];
                }
            }
        }
    }

    /// Overwrites `f` (interior layout, x3 fastest) with `x` solving
    /// `L7 x = f` with zero boundary values.
    pub fn solve_in_place(&self, f: &mut [C64]) {
        let mut re: Vec<f64> = f.iter().map(|v| v.re).collect();
        let mut im: Vec<f64> = f.iter().map(|v| v.im).collect();
        for part in [&mut re, &mut im] {
            self.transform(part);
            for (v, e) in part.iter_mut().zip(&self.eigen) {
                *v /= e;
            }
            self.transform(part);
        }
        for (o, (r, i)) in f.iter_mut().zip(re.iter().zip(&im)) {
            *o = C64::new(r * self.scale, i * self.scale);
        }
    }

    /// Like [`Self::solve_in_place`] for `L7 x - beta D3 x = f`, with `D3`
    /// the central first difference along x3: sine transforms across x3
    /// and a pivoted tridiagonal solve along it.
    pub fn solve_axial_in_place(&self, f: &mut [C64], beta: C64) {
        let [m0, m1, m2] = self.inner;
        let mut re: Vec<f64> = f.iter().map(|v| v.re).collect();
        let mut im: Vec<f64> = f.iter().map(|v| v.im).collect();
        self.transform_transverse(&mut re);
        self.transform_transverse(&mut im);
        let h = self.spacing[2];
        let (off, conv) = (1.0 / (h * h), beta * (0.5 / h));
        let (upper, lower) = (off - conv, off + conv);
        let mut col = vec![C64::new(0.0, 0.0); m2];
        for a in 0..m0 {
            for b in 0..m1 {
                let lam = self.axis_eigen[0][a] + self.axis_eigen[1][b] - 2.0 * off;
                let base = (a * m1 + b) * m2;
                for c in 0..m2 {
                    col[c] = C64::new(re[base + c], im[base + c]);
                }
                solve_tridiagonal(lower, C64::new(lam, 0.0), upper, &mut col);
                for c in 0..m2 {
                    re[base + c] = col[c].re;
                    im[base + c] = col[c].im;
                }
            }
        }
        self.transform_transverse(&mut re);
        self.transform_transverse(&mut im);
        let scale = 4.0 / ((m0 + 1) * (m1 + 1)) as f64;
        for (o, (r, i)) in f.iter_mut().zip(re.iter().zip(&im)) {
            *o = C64::new(r * scale, i * scale);
        }
    }
}

/// Solves the constant tridiagonal system `lower x[i-1] + diag x[i] +
/// upper x[i+1] = b[i]` in place by elimination with partial pivoting.
fn solve_tridiagonal(lower: C64, diag: C64, upper: C64, b: &mut [C64]) {
    let n = b.len();
    if n == 0 {
        return;
    }
    let zero = C64::new(0.0, 0.0);
    let mut d = vec![diag; n];
    let mut du = vec![upper; n];
    let mut du2 = vec![zero; n];
    for i in 0..n.saturating_sub(1) {
        if d[i].norm() >= lower.norm() {
            let fact = lower / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] = b[i + 1] - fact * b[i];
        } else {
            let fact = d[i] / lower;
            d[i] = lower;
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let bi = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bi - fact * b[i + 1];
        }
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
}

/// Interior node indices of `grid` in interior order.
fn interior_indices(grid: &Grid3) -> Vec<usize> {
    let [n0, n1, n2] = grid.counts;
    let mut out = Vec::with_capacity((n0 - 2) * (n1 - 2) * (n2 - 2));
    for i in 1..n0 - 1 {
        for j in 1..n1 - 1 {
            for k in 1..n2 - 1 {
                out.push(grid.index(i, j, k));
            }
        }
    }
    out
}

/// `Δq - b·∇q` at the interior nodes listed in `interior`, for `q` on the full grid.
fn apply_operator(grid: &Grid3, b: Option<&[VolumeWave; 3]>, q: &[C64], interior: &[usize], out: &mut [C64]) {
    let inv_h2 = grid.spacing.map(|h| 1.0 / (h * h));
    let inv_2h = grid.spacing.map(|h| 0.5 / h);
    let strides = [grid.stride(0), grid.stride(1), grid.stride(2)];
    for (o, &idx) in out.iter_mut().zip(interior) {
        let centre = q[idx];
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..3 {
            let (p, m) = (q[idx + strides[a]], q[idx - strides[a]]);
            acc += (p + m - 2.0 * centre) * inv_h2[a];
            if let Some(b) = b {
                acc -= b[a].values[idx] * (p - m) * inv_2h[a];
            }
        }
        *o = acc;
    }
}

/// Mean of the x3 convection component over the interior nodes.
fn axial_mean(b: &[VolumeWave; 3], interior: &[usize]) -> C64 {
    let sum: C64 = interior.iter().map(|&idx| b[2].values[idx]).sum();
    sum / interior.len().max(1) as f64
}

fn peclet(grid: &Grid3, b: Option<&[VolumeWave; 3]>) -> f64 {
    let Some(b) = b else { return 0.0 };
    (0..3)
        .map(|a| b[a].max_abs() * grid.spacing[a] / 2.0)
        .fold(0.0, f64::max)
}

/// Solves `Δq - b·∇q = rhs` in the interior with `q = boundary` on the
/// boundary nodes (interior entries of `boundary` are ignored).
///
/// Without convection the sine-transform inverse is applied directly;
/// otherwise right-preconditioned GMRES runs to relative residual `tol`,
/// starting from the interior values of `guess` when given.
pub fn solve_dirichlet(
    poisson: &DirichletPoisson,
    convection: Option<&[VolumeWave; 3]>,
    rhs: &VolumeWave,
    boundary: &VolumeWave,
    guess: Option<&VolumeWave>,
    tol: f64,
) -> Result<(VolumeWave, EllipticReport), GcmError> {
    let grid = &rhs.grid;
    if !grid.same_shape(&boundary.grid) || poisson.inner != grid.counts.map(|n| n.saturating_sub(2)) {
        return Err(GcmError::Field(crate::field::FieldError::GridMismatch));
    }
    if let Some(b) = convection {
        if b.iter().chain(guess).any(|c| !c.grid.same_shape(grid)) {
            return Err(GcmError::Field(crate::field::FieldError::GridMismatch));
        }
    }
    let interior = interior_indices(grid);
    let mut lifted = vec![C64::new(0.0, 0.0); grid.len()];
    for idx in grid.boundary_indices() {
        lifted[idx] = boundary.values[idx];
    }
    let mut lift_op = vec![C64::new(0.0, 0.0); interior.len()];
    apply_operator(grid, convection, &lifted, &interior, &mut lift_op);
    let b: Vec<C64> = interior.iter().zip(&lift_op).map(|(&idx, l)| rhs.values[idx] - l).collect();

    let pe = peclet(grid, convection);
    let warning = (pe > PECLET_WARNING).then(|| {
        let msg = format!("grid Péclet number {pe:.2} exceeds {PECLET_WARNING}; central convection may oscillate");
        warn!("{msg}");
        msg
    });

    let (x, iterations, residual) = match convection {
        None => {
            let mut x = b.clone();
            poisson.solve_in_place(&mut x);
            (x, 0, 0.0)
        }
        Some(_) => {
            let mut full = vec![C64::new(0.0, 0.0); grid.len()];
            let apply = |v: &[C64], out: &mut [C64]| {
                for (&idx, val) in interior.iter().zip(v) {
                    full[idx] = *val;
                }
                apply_operator(grid, convection, &full, &interior, out);
            };
            let beta = axial_mean(convection.expect("convection present"), &interior);
            let precond = |v: &[C64], out: &mut [C64]| {
                out.copy_from_slice(v);
                poisson.solve_axial_in_place(out, beta);
            };
            let mut x = match guess {
                Some(g) => interior.iter().map(|&idx| g.values[idx]).collect(),
                None => vec![C64::new(0.0, 0.0); b.len()],
            };
            let cfg = GmresConfig { restart: 60, max_iters: 3000, tol };
            match gmres(apply, Some(precond), &b, &mut x, &cfg) {
                Ok(o) => (x, o.iterations, o.residual),
                Err(LinalgError::NotConverged { iterations, residual }) => {
                    return Err(GcmError::EllipticNotConverged { iterations, residual })
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    let mut out = lifted;
    for (&idx, v) in interior.iter().zip(x) {
        out[idx] = v;
    }
    let q = VolumeWave::new(grid.clone(), out)?;
    Ok((q, EllipticReport { iterations, residual, peclet: pe, warning }))
}
