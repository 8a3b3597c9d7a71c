use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Field2D, SolverError};

/// FFT plans and wavenumber tables for one grid geometry.
///
/// Spectra are stored like fields, row-major `[ky][kx]`, unnormalized on the
/// forward side; `inverse` applies the `1/(nx*ny)` factor. Not `Sync`: each
/// worker thread builds its own instance.
pub struct Spectral {
    nx: usize,
    ny: usize,
    box_length: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// `kx^2 + ky^2` per spectral point.
    k2: Vec<f64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    scratch: RefCell<Vec<Complex<f64>>>,
    transposed: RefCell<Vec<Complex<f64>>>,
}

/// Signed frequency integer for index `i` of an `n`-point transform.
fn signed_mode(i: usize, n: usize) -> isize {
    if i <= n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

impl Spectral {
    pub fn new(nx: usize, ny: usize, box_length: f64) -> Result<Self, SolverError> {
        if !nx.is_power_of_two() || !ny.is_power_of_two() {
            return Err(SolverError::NonPowerOfTwoGrid { nx, ny });
        }
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(nx);
        let inv_x = planner.plan_fft_inverse(nx);
        let fwd_y = planner.plan_fft_forward(ny);
        let inv_y = planner.plan_fft_inverse(ny);
        let scratch_len = fwd_x
            .get_inplace_scratch_len()
            .max(inv_x.get_inplace_scratch_len())
            .max(fwd_y.get_inplace_scratch_len())
            .max(inv_y.get_inplace_scratch_len());

        let base = 2.0 * std::f64::consts::PI / box_length;
        let kx: Vec<f64> = (0..nx).map(|i| base * signed_mode(i, nx) as f64).collect();
        let ky: Vec<f64> = (0..ny).map(|j| base * signed_mode(j, ny) as f64).collect();
        let mut k2 = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                k2[j * nx + i] = kx[i] * kx[i] + ky[j] * ky[j];
            }
        }

        Ok(Self {
            nx,
            ny,
            box_length,
            kx,
            ky,
            k2,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            scratch: RefCell::new(vec![Complex::new(0.0, 0.0); scratch_len]),
            transposed: RefCell::new(vec![Complex::new(0.0, 0.0); nx * ny]),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn kx(&self) -> &[f64] {
        &self.kx
    }

    pub fn ky(&self) -> &[f64] {
        &self.ky
    }

    fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], rows: usize, cols: usize) {
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            for (c, v) in row.iter().enumerate() {
                dst[c * rows + r] = *v;
            }
        }
    }

    fn fft2_inplace(&self, buf: &mut [Complex<f64>], forward: bool) {
        let (fx, fy) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        let mut scratch = self.scratch.borrow_mut();
        let mut tr = self.transposed.borrow_mut();
        // Rows along x.
        fx.process_with_scratch(buf, &mut scratch);
        // Columns along y, via transpose so each transform is contiguous.
        Self::transpose(buf, &mut tr, self.ny, self.nx);
        fy.process_with_scratch(&mut tr, &mut scratch);
        Self::transpose(&tr, buf, self.nx, self.ny);
    }

    /// Unnormalized 2D DFT of a real field.
    pub fn forward(&self, f: &Field2D) -> Vec<Complex<f64>> {
        debug_assert_eq!((f.nx(), f.ny()), (self.nx, self.ny));
        let mut buf: Vec<Complex<f64>> =
            f.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft2_inplace(&mut buf, true);
        buf
    }

    /// Normalized inverse transform, real part.
    pub fn inverse(&self, mut spec: Vec<Complex<f64>>) -> Field2D {
        self.fft2_inplace(&mut spec, false);
        let norm = 1.0 / (self.nx * self.ny) as f64;
        let values: Vec<f64> = spec.iter().map(|c| c.re * norm).collect();
        Field2D::from_values(self.nx, self.ny, values).expect("shape fixed by construction")
    }

    /// Solves `laplacian(phi) = omega - mean(omega)` with the zero-mean gauge:
    /// the k=0 mode of `phi` is set to zero.
    pub fn poisson_solve(&self, omega: &Field2D) -> Field2D {
        let spec = self.forward(omega);
        self.inverse(self.poisson_spec(&spec))
    }

    /// Spectral-space Poisson inversion: `phi_hat = -omega_hat / k^2`, DC zeroed.
    pub fn poisson_spec(&self, omega_spec: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let mut phi = vec![Complex::new(0.0, 0.0); omega_spec.len()];
        for (idx, (&w, &k2)) in omega_spec.iter().zip(&self.k2).enumerate() {
            if idx != 0 && k2 > 0.0 {
                phi[idx] = -w / k2;
            }
        }
        phi
    }

    /// d/dy from a precomputed spectrum; the Nyquist row is zeroed as usual
    /// for odd derivatives of real data.
    pub fn ddy_spec(&self, spec: &[Complex<f64>]) -> Field2D {
        let mut out = vec![Complex::new(0.0, 0.0); spec.len()];
        for j in 0..self.ny {
            let ky = if j == self.ny / 2 { 0.0 } else { self.ky[j] };
            let row = &spec[j * self.nx..(j + 1) * self.nx];
            let dst = &mut out[j * self.nx..(j + 1) * self.nx];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d = Complex::new(0.0, ky) * s;
            }
        }
        self.inverse(out)
    }

    pub fn ddx_spec(&self, spec: &[Complex<f64>]) -> Field2D {
        let mut out = vec![Complex::new(0.0, 0.0); spec.len()];
        for j in 0..self.ny {
            let row = &spec[j * self.nx..(j + 1) * self.nx];
            let dst = &mut out[j * self.nx..(j + 1) * self.nx];
            for i in 0..self.nx {
                let kx = if i == self.nx / 2 { 0.0 } else { self.kx[i] };
                dst[i] = Complex::new(0.0, kx) * row[i];
            }
        }
        self.inverse(out)
    }

    pub fn ddy(&self, f: &Field2D) -> Field2D {
        self.ddy_spec(&self.forward(f))
    }

    pub fn ddx(&self, f: &Field2D) -> Field2D {
        self.ddx_spec(&self.forward(f))
    }

    /// `laplacian^2` from a spectrum: multiplier `k^4`.
    pub fn biharmonic_spec(&self, spec: &[Complex<f64>]) -> Field2D {
        let out: Vec<Complex<f64>> = spec
            .iter()
            .zip(&self.k2)
            .map(|(&s, &k2)| s * (k2 * k2))
            .collect();
        self.inverse(out)
    }

    pub fn biharmonic(&self, f: &Field2D) -> Field2D {
        self.biharmonic_spec(&self.forward(f))
    }

    pub fn laplacian(&self, f: &Field2D) -> Field2D {
        let spec = self.forward(f);
        let out: Vec<Complex<f64>> = spec.iter().zip(&self.k2).map(|(&s, &k2)| s * -k2).collect();
        self.inverse(out)
    }
}
