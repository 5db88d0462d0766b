//! Uniform-cell spatial hash over points in ℝⁿ.

use std::collections::HashMap;

/// Points bucketed into cubic cells of a fixed side. Coordinates are stored
/// flat (`dim` values per point) in insertion order.
#[derive(Debug, Clone)]
pub struct CellIndex {
    dim: usize,
    cell: f64,
    origin: Vec<f64>,
    extent: Vec<i64>,
    coords: Vec<f64>,
    order: Vec<u32>,
    /// Coordinates permuted into bucket order, for cache-friendly scans.
    sorted: Vec<f64>,
    buckets: Buckets,
}

#[derive(Debug, Clone)]
enum Buckets {
    /// Prefix offsets over every cell of the bounding grid.
    Dense(Vec<u32>),
    Sparse(HashMap<u64, (u32, u32)>),
}

impl Buckets {
    #[inline]
    fn range(&self, key: u64) -> Option<(u32, u32)> {
        match self {
            Buckets::Dense(starts) => {
                let k = key as usize;
                let (s, e) = (starts[k], starts[k + 1]);
                (e > s).then_some((s, e))
            }
            Buckets::Sparse(map) => map.get(&key).copied(),
        }
    }
}

impl CellIndex {
    /// Build the index. `cell` must be positive; very small cells only cost memory.
    pub fn new(coords: Vec<f64>, dim: usize, cell: f64) -> Self {
        assert!(dim > 0 && coords.len().is_multiple_of(dim));
        assert!(cell > 0.0 && cell.is_finite());
        let n = coords.len() / dim;
        let mut origin = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for p in coords.chunks_exact(dim) {
            for d in 0..dim {
                origin[d] = origin[d].min(p[d]);
                upper[d] = upper[d].max(p[d]);
            }
        }
        if n == 0 {
            origin.iter_mut().for_each(|o| *o = 0.0);
            upper.iter_mut().for_each(|u| *u = 0.0);
        }
        let extent: Vec<i64> = (0..dim)
            .map(|d| ((upper[d] - origin[d]) / cell).floor() as i64 + 1)
            .collect();

        let mut keyed: Vec<(u64, u32)> = coords
            .chunks_exact(dim)
            .enumerate()
            .map(|(i, p)| {
                let c: Vec<i64> = (0..dim)
                    .map(|d| (((p[d] - origin[d]) / cell).floor() as i64).clamp(0, extent[d] - 1))
                    .collect();
                (linear_key(&c, &extent), i as u32)
            })
            .collect();
        keyed.sort_unstable();

        let total_cells = extent.iter().map(|&e| e as f64).product::<f64>();
        let buckets = if total_cells <= 8.0 * n as f64 + 1024.0 {
            let mut starts = vec![0u32; total_cells as usize + 1];
            for &(key, _) in &keyed {
                starts[key as usize + 1] += 1;
            }
            for k in 1..starts.len() {
                starts[k] += starts[k - 1];
            }
            Buckets::Dense(starts)
        } else {
            let mut map = HashMap::new();
            let mut start = 0usize;
            while start < keyed.len() {
                let key = keyed[start].0;
                let mut end = start;
                while end < keyed.len() && keyed[end].0 == key {
                    end += 1;
                }
                map.insert(key, (start as u32, end as u32));
                start = end;
            }
            Buckets::Sparse(map)
        };
        let order: Vec<u32> = keyed.into_iter().map(|(_, i)| i).collect();
        let mut sorted = Vec::with_capacity(coords.len());
        for &i in &order {
            let i = i as usize;
            sorted.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
        }
        Self {
            dim,
            cell,
            origin,
            extent,
            coords,
            order,
            sorted,
            buckets,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Call `visit(index, squared_distance)` for every point with
    /// `|p - centre| <= radius`.
    pub fn for_each_within(&self, centre: &[f64], radius: f64, mut visit: impl FnMut(usize, f64)) {
        self.scan(centre, radius, |i, d2| {
            visit(i, d2);
            false
        });
    }

    /// Visit points within `radius` until `visit` returns `true`.
    fn scan(&self, centre: &[f64], radius: f64, mut visit: impl FnMut(usize, f64) -> bool) {
        debug_assert_eq!(centre.len(), self.dim);
        if self.is_empty() || radius < 0.0 {
            return;
        }
        let r2 = radius * radius;
        let mut lo = vec![0i64; self.dim];
        let mut hi = vec![0i64; self.dim];
        let mut cells = 1f64;
        for d in 0..self.dim {
            let a = ((centre[d] - radius - self.origin[d]) / self.cell).floor() as i64;
            let b = ((centre[d] + radius - self.origin[d]) / self.cell).floor() as i64;
            lo[d] = a.max(0);
            hi[d] = b.min(self.extent[d] - 1);
            if lo[d] > hi[d] {
                return;
            }
            cells *= (hi[d] - lo[d] + 1) as f64;
        }

        if cells > self.len() as f64 {
            for i in 0..self.len() {
                let d2 = dist2(self.point(i), centre);
                if d2 <= r2 && visit(i, d2) {
                    return;
                }
            }
            return;
        }

        let mut cur = lo.clone();
        loop {
            if let Some((s, e)) = self.buckets.range(linear_key(&cur, &self.extent)) {
                for slot in s as usize..e as usize {
                    let p = &self.sorted[slot * self.dim..(slot + 1) * self.dim];
                    let d2 = dist2(p, centre);
                    if d2 <= r2 && visit(self.order[slot] as usize, d2) {
                        return;
                    }
                }
            }
            // odometer increment
            let mut d = 0;
            loop {
                if d == self.dim {
                    return;
                }
                cur[d] += 1;
                if cur[d] <= hi[d] {
                    break;
                }
                cur[d] = lo[d];
                d += 1;
            }
        }
    }

    /// Whether some point within `radius` of `centre` satisfies `pred(index, squared_distance)`.
    pub fn any_within(&self, centre: &[f64], radius: f64, mut pred: impl FnMut(usize, f64) -> bool) -> bool {
        let mut found = false;
        self.scan(centre, radius, |i, d2| {
            found = pred(i, d2);
            found
        });
        found
    }

    /// Indices of points within `radius` of `centre`, sorted ascending.
    pub fn within(&self, centre: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(centre, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Distance from point `i` to its nearest other point, looking no
    /// further than `cap`. Returns `f64::INFINITY` when nothing lies within `cap`.
    pub fn nearest_other_within(&self, i: usize, cap: f64) -> f64 {
        let mut best = f64::INFINITY;
        let p = self.point(i).to_vec();
        self.for_each_within(&p, cap, |j, d2| {
            if j != i && d2 < best {
                best = d2;
            }
        });
        best.sqrt()
    }
}

fn linear_key(c: &[i64], extent: &[i64]) -> u64 {
    let mut key = 0u64;
    for d in (0..c.len()).rev() {
        key = key.wrapping_mul(extent[d] as u64).wrapping_add(c[d] as u64);
    }
    key
}

#[inline]
pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(coords: &[f64], dim: usize, c: &[f64], r: f64) -> Vec<usize> {
        coords
            .chunks_exact(dim)
            .enumerate()
            .filter(|(_, p)| dist2(p, c) <= r * r)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 1..=3 {
            let coords: Vec<f64> = (0..600 * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let idx = CellIndex::new(coords.clone(), dim, 0.3);
            for _ in 0..50 {
                let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.5..2.5)).collect();
                let r = rng.random_range(0.0..1.5);
                assert_eq!(idx.within(&c, r), brute(&coords, dim, &c, r));
            }
            // covering query
            assert_eq!(idx.within(&vec![0.0; dim], 100.0).len(), 600);
        }
    }

    #[test]
    fn zero_radius_hits_exact_centres_only() {
        let coords = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let idx = CellIndex::new(coords, 2, 0.5);
        assert_eq!(idx.within(&[0.0, 0.0], 0.0), vec![0, 2]);
    }

    #[test]
    fn any_within_stops_on_match() {
        let idx = CellIndex::new(vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0], 2, 0.5);
        let mut seen = 0;
        assert!(idx.any_within(&[0.0, 0.0], 3.0, |_, _| {
            seen += 1;
            true
        }));
        assert_eq!(seen, 1);
        assert!(!idx.any_within(&[0.0, 0.0], 3.0, |i, _| i == 7));
    }

    #[test]
    fn empty_index() {
        let idx = CellIndex::new(vec![], 3, 1.0);
        assert!(idx.within(&[0.0, 0.0, 0.0], 10.0).is_empty());
    }
}
