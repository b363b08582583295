//! Amplification factors of one-step methods on `y' = z y`.
//!
//! The complex test equation is run through the real rotation embedding
//! `[[Re z, −Im z], [Im z, Re z]]` with `Δt = 1` and `y(0) = (1, 0)`, so any
//! real stepper (explicit or implicit) can be scanned without change.

use crate::error::{Error, Result};
use crate::explicit::OneStepMethod;
use crate::linalg::DenseMatrix;
use crate::ode::{linear_system, OdeSystem};
use crate::scalar::Real;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Cells with `|amp − 1|` below this are reported as boundary cells.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

fn rotation_system<T: Real>(z: Complex<T>) -> OdeSystem<T> {
    let a = DenseMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => -z.im,
        (1, 0) => z.im,
        _ => z.re,
    });
    linear_system("rotation", a, vec![T::one(), T::zero()])
}

/// Complex value `φ(z)` of one unit step from `y = 1`.
pub fn amplification_factor<T: Real, S>(stepper: &S, z: Complex<T>) -> Result<Complex<T>>
where
    S: OneStepMethod<T> + ?Sized,
{
    let sys = rotation_system(z);
    let y = stepper.step(&sys, T::zero(), sys.initial(), T::one())?;
    Ok(Complex::new(y[0], y[1]))
}

/// `|φ(z)|`, or `+∞` when the step diverges or fails.
pub fn amplification<T: Real, S>(stepper: &S, z: Complex<T>) -> T
where
    S: OneStepMethod<T> + ?Sized,
{
    match amplification_factor(stepper, z) {
        Ok(phi) if phi.re.is_finite() && phi.im.is_finite() => phi.norm(),
        _ => T::infinity(),
    }
}

/// Rectangle and resolution of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridBounds {
    fn default() -> Self {
        Self {
            re_min: -6.0,
            re_max: 1.0,
            im_min: -4.0,
            im_max: 4.0,
            nx: 101,
            ny: 101,
        }
    }
}

impl GridBounds {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidArgument(format!(
                "stability grid needs at least 2 points per axis, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.re_min < self.re_max && self.im_min < self.im_max) {
            return Err(Error::InvalidArgument("stability grid bounds are empty".into()));
        }
        Ok(())
    }
}

// Symmetric about the midpoint so mirrored indices give exactly negated values.
fn axis<T: Real>(min: f64, max: f64, n: usize, i: usize) -> T {
    let centre = T::lit(0.5 * (min + max));
    let half = T::lit(0.5 * (max - min));
    let offset = T::from_index(2 * i) - T::from_index(n - 1);
    centre + half * offset / T::from_index(n - 1)
}

/// Amplification magnitudes on a rectangular grid, stored row by row
/// (fixed imaginary part per row).
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityGrid<T> {
    pub bounds: GridBounds,
    amp: Vec<T>,
}

impl<T: Real> StabilityGrid<T> {
    /// Scans the grid, one rayon task per row.
    pub fn compute<S>(stepper: &S, bounds: GridBounds) -> Result<Self>
    where
        S: OneStepMethod<T> + ?Sized,
    {
        bounds.validate()?;
        let rows: Vec<Vec<T>> = (0..bounds.ny)
            .into_par_iter()
            .map(|j| {
                let im = axis::<T>(bounds.im_min, bounds.im_max, bounds.ny, j);
                (0..bounds.nx)
                    .map(|i| {
                        let re = axis::<T>(bounds.re_min, bounds.re_max, bounds.nx, i);
                        amplification(stepper, Complex::new(re, im))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            bounds,
            amp: rows.into_iter().flatten().collect(),
        })
    }

    pub fn nx(&self) -> usize {
        self.bounds.nx
    }

    pub fn ny(&self) -> usize {
        self.bounds.ny
    }

    pub fn re(&self, i: usize) -> T {
        axis(self.bounds.re_min, self.bounds.re_max, self.bounds.nx, i)
    }

    pub fn im(&self, j: usize) -> T {
        axis(self.bounds.im_min, self.bounds.im_max, self.bounds.ny, j)
    }

    pub fn amp(&self, i: usize, j: usize) -> T {
        self.amp[j * self.bounds.nx + i]
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amp
    }

    pub fn is_member(&self, i: usize, j: usize) -> bool {
        self.amp(i, j) < T::one()
    }

    /// Row-major `amp < 1` mask.
    pub fn membership(&self) -> Vec<bool> {
        self.amp.iter().map(|&a| a < T::one()).collect()
    }

    pub fn member_count(&self) -> usize {
        self.amp.iter().filter(|&&a| a < T::one()).count()
    }

    pub fn boundary_count(&self) -> usize {
        let tol = T::lit(BOUNDARY_TOLERANCE);
        self.amp.iter().filter(|&&a| (a - T::one()).abs() < tol).count()
    }

    /// Writes `re,im,amp` rows; divergent cells print as `inf`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re,im,amp")?;
        for j in 0..self.ny() {
            for i in 0..self.nx() {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e}",
                    self.re(i).as_f64(),
                    self.im(j).as_f64(),
                    self.amp(i, j).as_f64()
                )?;
            }
        }
        Ok(())
    }

    /// Cells whose `amp < 1` membership differs between two scans of the same
    /// grid. With `skip_boundary`, cells within [`BOUNDARY_TOLERANCE`] of 1 in
    /// either scan are ignored.
    pub fn mismatched_cells(&self, other: &Self, skip_boundary: bool) -> Result<usize> {
        if self.bounds != other.bounds {
            return Err(Error::GridMismatch("stability grids have different bounds".into()));
        }
        let tol = T::lit(BOUNDARY_TOLERANCE);
        let on_boundary = |a: T| (a - T::one()).abs() < tol;
        Ok(self
            .amp
            .iter()
            .zip(&other.amp)
            .filter(|&(&a, &b)| !(skip_boundary && (on_boundary(a) || on_boundary(b))))
            .filter(|&(&a, &b)| (a < T::one()) != (b < T::one()))
            .count())
    }

    pub fn summary(&self) -> StabilitySummary {
        StabilitySummary {
            bounds: self.bounds,
            member_cells: self.member_count(),
            boundary_cells: self.boundary_count(),
            total_cells: self.amp.len(),
        }
    }
}

/// JSON-friendly description of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub bounds: GridBounds,
    pub member_cells: usize,
    pub boundary_cells: usize,
    pub total_cells: usize,
}
