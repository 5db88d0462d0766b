//! Quadrature rules: Gauss–Legendre, adaptive Simpson, and equal-volume
//! midpoint rules on spherical shells.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

/// Surface measure of the unit sphere 𝕊ⁿ⁻¹ ⊂ ℝⁿ.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            let h = n as f64 / 2.0;
            2.0 * PI.powf(h) / gamma(h)
        }
    }
}

/// Volume of the unit ball in ℝⁿ.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let m = order;
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = m as f64 * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre over `[a, b]` split into `panels` equal pieces.
pub fn gauss_legendre_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * f(mid + 0.5 * h * xi);
        }
    }
    total * 0.5 * h
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Sample counts for shell quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ShellResolution {
    pub radial: usize,
    pub angular: usize,
}

impl Default for ShellResolution {
    fn default() -> Self {
        Self {
            radial: 64,
            angular: 64,
        }
    }
}

/// Equal-volume midpoint rule on a spherical shell `r1 < |x - c| < r2`.
///
/// Radial nodes are midpoints in the variable `rⁿ`; angular nodes are equal
/// area cells (polar angle via `cos θ` in 3-D). Every node carries the same
/// weight, so the shell average is a plain mean. Dimensions other than 2 and
/// 3 use a tensor midpoint grid restricted to the shell.
#[derive(Debug, Clone)]
pub struct ShellRule {
    dim: usize,
    radial_fracs: Vec<f64>,
    directions: Vec<Vec<f64>>,
    box_nodes: Option<usize>,
}

impl ShellRule {
    pub fn new(dim: usize, res: ShellResolution) -> Self {
        assert!(dim >= 1 && res.radial >= 1 && res.angular >= 1);
        let radial_fracs = (0..res.radial)
            .map(|k| (k as f64 + 0.5) / res.radial as f64)
            .collect();
        let directions = match dim {
            1 => vec![vec![1.0], vec![-1.0]],
            2 => (0..res.angular)
                .map(|k| {
                    let t = 2.0 * PI * (k as f64 + 0.5) / res.angular as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
            3 => {
                let polar = (res.angular as f64).sqrt().round().max(1.0) as usize;
                let azim = (res.angular / polar).max(1);
                let mut dirs = Vec::with_capacity(polar * azim);
                for i in 0..polar {
                    let c = -1.0 + 2.0 * (i as f64 + 0.5) / polar as f64;
                    let s = (1.0 - c * c).sqrt();
                    for j in 0..azim {
                        // staggered azimuth per ring reduces aliasing
                        let t = 2.0 * PI * (j as f64 + 0.5 + 0.5 * (i % 2) as f64) / azim as f64;
                        dirs.push(vec![s * t.cos(), s * t.sin(), c]);
                    }
                }
                dirs
            }
            _ => Vec::new(),
        };
        let box_nodes = if dim > 3 { Some(res.radial.max(4)) } else { None };
        Self {
            dim,
            radial_fracs,
            directions,
            box_nodes,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Visit every node of the shell.
    pub fn for_each_node(&self, centre: &[f64], r1: f64, r2: f64, mut visit: impl FnMut(&[f64])) {
        let n = self.dim as i32;
        let mut x = vec![0.0; self.dim];
        if let Some(m) = self.box_nodes {
            let h = 2.0 * r2 / m as f64;
            let mut idx = vec![0usize; self.dim];
            loop {
                let mut r2sum = 0.0;
                for d in 0..self.dim {
                    let off = -r2 + (idx[d] as f64 + 0.5) * h;
                    x[d] = centre[d] + off;
                    r2sum += off * off;
                }
                if r2sum > r1 * r1 && r2sum < r2 * r2 {
                    visit(&x);
                }
                let mut d = 0;
                loop {
                    if d == self.dim {
                        return;
                    }
                    idx[d] += 1;
                    if idx[d] < m {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
            }
        }
        let a = r1.powi(n);
        let b = r2.powi(n);
        for &t in &self.radial_fracs {
            let r = (a + t * (b - a)).powf(1.0 / n as f64);
            for dir in &self.directions {
                for d in 0..self.dim {
                    x[d] = centre[d] + r * dir[d];
                }
                visit(&x);
            }
        }
    }

    /// Volume average of `f` over the shell.
    pub fn average(&self, centre: &[f64], r1: f64, r2: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        self.for_each_node(centre, r1, r2, |x| {
            sum += f(x);
            count += 1;
        });
        if count == 0 {
            f(centre)
        } else {
            sum / count as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_constants() {
        assert_relative_eq!(sphere_area(2), 2.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(sphere_area(3), 4.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for order in 1..12 {
            let (x, w) = gauss_legendre(order);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
            let deg = 2 * order - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg + 1) as f64 };
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
            assert!((q - exact).abs() < 1e-12, "order {order}");
            let q2: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(2 * (order as i32 - 1))).sum();
            assert_relative_eq!(q2, 2.0 / (2 * order - 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, PI, 1e-12);
        assert_relative_eq!(v, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn shell_rule_volume_average_of_radius() {
        // (n/(n+1)) (r2^{n+1} - r1^{n+1}) / (r2^n - r1^n)
        for n in [2usize, 3] {
            let rule = ShellRule::new(n, ShellResolution::default());
            let c = vec![0.3; n];
            let (r1, r2) = (0.5, 2.0);
            let avg = rule.average(&c, r1, r2, |x| dist2(x, &c).sqrt());
            let nf = n as f64;
            let exact = nf / (nf + 1.0) * (r2.powf(nf + 1.0) - r1.powf(nf + 1.0)) / (r2.powf(nf) - r1.powf(nf));
            assert_relative_eq!(avg, exact, max_relative = 5e-4);
        }
    }

    fn dist2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}
