//! Discrete minimization of the homogenized functional
//! `∫ |∇u|^q + λ φ(u) − ψ u` on a cube with zero boundary values.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::capacity::{average_capacity_density, CapacityModel, REG};
use crate::error::{invalid, Error, Result};
use crate::process::MarkLaw;

/// `n` interior nodes per axis on `[-half_width, half_width]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n + 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Coordinates of interior node `idx` (first axis fastest).
    pub fn coords(&self, mut idx: usize) -> Vec<f64> {
        let h = self.h();
        (0..self.dim)
            .map(|_| {
                let i = idx % self.n;
                idx /= self.n;
                -self.half_width + (i + 1) as f64 * h
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.dim == 2 || self.dim == 3) {
            return invalid(format!("homogenized grids are 2-D or 3-D, got {}", self.dim));
        }
        if self.n < 2 || !(self.half_width > 0.0) {
            return invalid("grid needs at least two interior nodes and positive width");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HomogenizedSolution {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    /// Max-norm of the energy gradient divided by the cell volume.
    pub residual: f64,
    /// `φ(1)`, the averaged capacity density at unit amplitude.
    pub cap: f64,
}

impl HomogenizedSolution {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema=homogenized/v1 dim={} n={}", self.grid.dim, self.grid.n)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.grid.dim).map(|d| format!("x{d}")).collect();
        header.push("u".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.grid.coords(i).iter().map(|c| format!("{c:.17e}")).collect();
            row.push(format!("{v:.17e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Residual target on `|∇E|/hⁿ` and iteration cap.
pub const GRADIENT_TOL: f64 = 1e-11;
const MAX_ITER: usize = 20_000;

struct Functional<'a> {
    grid: GridSpec,
    q: f64,
    lambda_cap: f64,
    psi: &'a [f64],
    strides: Vec<usize>,
}

impl Functional<'_> {
    fn vol(&self) -> f64 {
        self.grid.h().powi(self.grid.dim as i32)
    }

    /// `|s|` with the regularization used below `q = 2`.
    fn magnitude(&self, s2: f64) -> f64 {
        if self.q < 2.0 {
            (s2 + REG).sqrt()
        } else {
            s2.sqrt()
        }
    }

    /// Visit every node `(i_1..i_d) ∈ {0..n}^d` of the forward-difference stencil,
    /// passing the interior index of the node and of each forward neighbour
    /// (`None` on the boundary).
    fn for_each_cell(&self, mut visit: impl FnMut(Option<usize>, &[Option<usize>])) {
        let n = self.grid.n;
        let d = self.grid.dim;
        let mut idx = vec![0usize; d];
        let mut fwd = vec![None; d];
        loop {
            let inside = |i: &[usize]| i.iter().all(|&v| v >= 1 && v <= n);
            let flat = |i: &[usize]| i.iter().enumerate().map(|(k, &v)| (v - 1) * self.strides[k]).sum::<usize>();
            let here = if inside(&idx) { Some(flat(&idx)) } else { None };
            for k in 0..d {
                idx[k] += 1;
                fwd[k] = if inside(&idx) { Some(flat(&idx)) } else { None };
                idx[k] -= 1;
            }
            visit(here, &fwd);
            let mut k = 0;
            loop {
                if k == d {
                    return;
                }
                idx[k] += 1;
                if idx[k] <= n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn energy_and_gradient(&self, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let h = self.grid.h();
        let vol = self.vol();
        let q = self.q;
        let mut e = 0.0;
        let mut g_local = grad;
        if let Some(g) = g_local.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let val = |i: Option<usize>| i.map(|k| u[k]).unwrap_or(0.0);
        let mut diffs = vec![0.0; self.grid.dim];
        self.for_each_cell(|here, fwd| {
            let u0 = val(here);
            let mut s2 = 0.0;
            for (k, f) in fwd.iter().enumerate() {
                diffs[k] = (val(*f) - u0) / h;
                s2 += diffs[k] * diffs[k];
            }
            if s2 == 0.0 && q >= 2.0 {
                return;
            }
            let t = self.magnitude(s2);
            let floor = if q < 2.0 { REG.sqrt().powf(q) } else { 0.0 };
            e += (t.powf(q) - floor) * vol;
            if let Some(g) = g_local.as_deref_mut() {
                let c = q * t.powf(q - 2.0) * vol / h;
                for (k, f) in fwd.iter().enumerate() {
                    let w = c * diffs[k];
                    if let Some(j) = f {
                        g[*j] += w;
                    }
                    if let Some(j) = here {
                        g[j] -= w;
                    }
                }
            }
        });
        for (i, &ui) in u.iter().enumerate() {
            let a = ui.abs();
            e += (self.lambda_cap * a.powf(q) - self.psi[i] * ui) * vol;
            if let Some(g) = g_local.as_deref_mut() {
                let dphi = if a == 0.0 { 0.0 } else { q * a.powf(q - 1.0) * ui.signum() };
                g[i] += (self.lambda_cap * dphi - self.psi[i]) * vol;
            }
        }
        e
    }

    fn directional(&self, u: &[f64], d: &[f64], t: f64, scratch: &mut [f64], grad: &mut [f64]) -> f64 {
        for ((s, a), b) in scratch.iter_mut().zip(u).zip(d) {
            *s = a + t * b;
        }
        self.energy_and_gradient(scratch, Some(grad));
        grad.iter().zip(d).map(|(g, di)| g * di).sum()
    }
}

/// Minimize the discrete energy by Polak–Ribière conjugate gradients with a
/// secant line search on the directional derivative.
pub fn homogenized_minimize(
    grid: GridSpec,
    model: &CapacityModel,
    law: &MarkLaw,
    lambda: f64,
    forcing: impl Fn(&[f64]) -> f64,
) -> Result<HomogenizedSolution> {
    grid.validate()?;
    if grid.dim != model.n {
        return invalid("grid dimension differs from the capacity model");
    }
    if !(lambda >= 0.0) {
        return invalid(format!("intensity must be non-negative, got {lambda}"));
    }
    let cap = average_capacity_density(model, law, 1.0)?;
    let psi: Vec<f64> = (0..grid.len()).map(|i| forcing(&grid.coords(i))).collect();
    let strides: Vec<usize> = (0..grid.dim).map(|k| grid.n.pow(k as u32)).collect();
    let f = Functional {
        grid,
        q: model.q,
        lambda_cap: lambda * cap,
        psi: &psi,
        strides,
    };
    let m = grid.len();
    let vol = f.vol();
    let mut u = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut g_new = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    f.energy_and_gradient(&u, Some(&mut g));
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut step = 1.0 / vol;
    let residual = |g: &[f64]| g.iter().fold(0.0f64, |a, v| a.max(v.abs())) / vol;
    let mut iterations = 0;
    while residual(&g) > GRADIENT_TOL {
        iterations += 1;
        if iterations > MAX_ITER {
            return Err(Error::NonConvergence {
                what: "homogenized descent",
                iterations: MAX_ITER,
                achieved: residual(&g),
                wanted: GRADIENT_TOL,
            });
        }
        let slope0: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if slope0 >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            continue;
        }
        // secant iteration on t ↦ ∇E(u + t d)·d
        let (mut t0, mut s0) = (0.0, slope0);
        let mut t1 = step;
        let mut s1 = f.directional(&u, &d, t1, &mut scratch, &mut g_new);
        for _ in 0..50 {
            if s1.abs() <= 1e-12 * slope0.abs() || s1 == s0 {
                break;
            }
            let t2 = t1 - s1 * (t1 - t0) / (s1 - s0);
            let t2 = if t2.is_finite() && t2 > 0.0 { t2 } else { 2.0 * t1 };
            t0 = t1;
            s0 = s1;
            t1 = t2;
            s1 = f.directional(&u, &d, t1, &mut scratch, &mut g_new);
        }
        step = t1;
        for (ui, di) in u.iter_mut().zip(&d) {
            *ui += t1 * di;
        }
        f.energy_and_gradient(&u, Some(&mut g_new));
        let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
        let den: f64 = g.iter().map(|v| v * v).sum();
        let beta = (num / den).max(0.0);
        for (di, gi) in d.iter_mut().zip(&g_new) {
            *di = -gi + beta * *di;
        }
        std::mem::swap(&mut g, &mut g_new);
    }
    let energy = f.energy_and_gradient(&u, None);
    Ok(HomogenizedSolution {
        grid,
        residual: residual(&g),
        values: u,
        energy,
        iterations,
        cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_forcing_gives_zero() {
        let grid = GridSpec { dim: 2, n: 8, half_width: 0.5 };
        let model = CapacityModel::model(2, 1.5).unwrap();
        let sol = homogenized_minimize(grid, &model, &MarkLaw::Constant { rho0: 1.0 }, 3.0, |_| 0.0).unwrap();
        assert!(sol.values.iter().all(|v| *v == 0.0));
        assert_eq!(sol.energy, 0.0);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn quadratic_case_satisfies_discrete_equation() {
        let grid = GridSpec { dim: 2, n: 12, half_width: 0.5 };
        let model = CapacityModel::model(2, 1.5).unwrap();
        assert!(homogenized_minimize(grid, &model, &MarkLaw::Constant { rho0: 1.0 }, 1.0, |x| x[0]).is_ok());
        let model3 = CapacityModel::model(3, 2.0).unwrap();
        let grid3 = GridSpec { dim: 3, n: 6, half_width: 0.5 };
        let sol = homogenized_minimize(grid3, &model3, &MarkLaw::Constant { rho0: 1.0 }, 2.0, |_| 1.0).unwrap();
        let n = 6usize;
        let h = grid3.h();
        let at = |i: isize, j: isize, k: isize| {
            if i < 0 || j < 0 || k < 0 || i >= n as isize || j >= n as isize || k >= n as isize {
                0.0
            } else {
                sol.values[i as usize + n * (j as usize + n * k as usize)]
            }
        };
        let lc = 2.0 * sol.cap;
        for k in 0..n as isize {
            for j in 0..n as isize {
                for i in 0..n as isize {
                    let lap = (at(i + 1, j, k) + at(i - 1, j, k) + at(i, j + 1, k) + at(i, j - 1, k) + at(i, j, k + 1)
                        + at(i, j, k - 1)
                        - 6.0 * at(i, j, k))
                        / (h * h);
                    let res = 2.0 * (-lap + lc * at(i, j, k)) - 1.0;
                    assert!(res.abs() < 1e-8, "residual {res}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let model = CapacityModel::model(3, 2.0).unwrap();
        let law = MarkLaw::Constant { rho0: 1.0 };
        assert!(homogenized_minimize(GridSpec { dim: 4, n: 4, half_width: 0.5 }, &model, &law, 1.0, |_| 1.0).is_err());
        assert!(homogenized_minimize(GridSpec { dim: 2, n: 4, half_width: 0.5 }, &model, &law, 1.0, |_| 1.0).is_err());
    }
}
