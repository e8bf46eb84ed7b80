//! Finite-support scalar fields on the integer lattice `Z^d` and the
//! L1-ball geometry used by the counting and support arguments.
//!
//! Fields are stored as a dense box with an integer offset. Every site
//! outside the box reads as exactly `0.0`, and the box always keeps a
//! one-cell zero halo around the support so stencil reads never need
//! bounds checks on the hot path.

use crate::error::{Error, Result};

/// Hard cap on the spatial dimension. Desk-scale memory makes d <= 4 the
/// practical envelope; larger d is rejected at validation, never truncated.
pub const MAX_DIM: usize = 4;

/// Cap on dense-box allocation (cells). 2^28 cells = 2 GiB of f64.
const MAX_FIELD_CELLS: usize = 1 << 28;

/// L1 norm of a lattice vector: sum of absolute components.
pub fn l1_norm(site: &[i64]) -> u64 {
    site.iter().map(|c| c.unsigned_abs()).sum()
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidDim { got: dim, max: MAX_DIM });
    }
    Ok(())
}

/// The set of lattice points with L1 norm at most `radius`.
///
/// Enumeration is lexicographic and yields each point exactly once, so any
/// reduction over the ball is bit-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L1Ball {
    dim: usize,
    radius: u64,
}

impl L1Ball {
    pub fn new(dim: usize, radius: u64) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> u64 {
        self.radius
    }

    /// Visits every site of the ball in lexicographic order.
    pub fn for_each_site(&self, mut f: impl FnMut(&[i64])) {
        let mut coords = [0i64; MAX_DIM];
        visit(&mut coords, 0, self.dim, self.radius as i64, &mut f);
    }

    /// Lexicographic iterator over the ball's sites.
    pub fn iter(&self) -> L1BallIter {
        let mut coords = [0i64; MAX_DIM];
        // Lexicographically smallest site: (-R, 0, ..., 0).
        coords[0] = -(self.radius as i64);
        L1BallIter {
            ball: *self,
            coords,
            exhausted: false,
        }
    }
}

fn visit(
    coords: &mut [i64; MAX_DIM],
    axis: usize,
    dim: usize,
    budget: i64,
    f: &mut impl FnMut(&[i64]),
) {
    if axis == dim - 1 {
        for v in -budget..=budget {
            coords[axis] = v;
            f(&coords[..dim]);
        }
    } else {
        for v in -budget..=budget {
            coords[axis] = v;
            visit(coords, axis + 1, dim, budget - v.abs(), f);
        }
    }
}

/// See [`L1Ball::iter`].
pub struct L1BallIter {
    ball: L1Ball,
    coords: [i64; MAX_DIM],
    exhausted: bool,
}

impl Iterator for L1BallIter {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.exhausted {
            return None;
        }
        let dim = self.ball.dim;
        let out = self.coords[..dim].to_vec();

        // Advance to the lexicographic successor: bump the rightmost axis
        // that still has L1 budget, then reset everything to its right to
        // the smallest admissible suffix (-remaining, 0, ..., 0).
        let r = self.ball.radius as i64;
        let mut prefix: i64 = 0;
        let mut budgets = [0i64; MAX_DIM];
        for k in 0..dim {
            budgets[k] = r - prefix;
            prefix += self.coords[k].abs();
        }
        let mut advanced = false;
        for k in (0..dim).rev() {
            let v = self.coords[k] + 1;
            if v.abs() <= budgets[k] {
                self.coords[k] = v;
                let mut used: i64 = self.coords[..=k].iter().map(|c| c.abs()).sum();
                for j in k + 1..dim {
                    self.coords[j] = -(r - used);
                    used += self.coords[j].abs();
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            self.exhausted = true;
        }
        Some(out)
    }
}

/// Exact number of lattice points with `||i||_1 <= radius` in dimension
/// `dim`, obtained by enumeration.
pub fn count_l1_ball(dim: usize, radius: u64) -> Result<u64> {
    check_dim(dim)?;
    // Reject sizes whose count cannot fit in 64 bits before enumerating.
    if radius >= 1 {
        ball_bound_u128(dim, radius)?;
    }
    let ball = L1Ball::new(dim, radius)?;
    let mut count: u64 = 0;
    ball.for_each_site(|_| count += 1);
    Ok(count)
}

fn ball_bound_u128(dim: usize, radius: u64) -> Result<u64> {
    let overflow = Error::CountOverflow { dim, radius };
    let pow = (radius as u128)
        .checked_pow(dim as u32)
        .ok_or(Error::CountOverflow { dim, radius })?;
    let bound = (1u128 << (2 * dim + 1)).checked_mul(pow).ok_or(overflow)?;
    u64::try_from(bound).map_err(|_| Error::CountOverflow { dim, radius })
}

/// The combinatorial ceiling `2^(2d+1) * R^d` on the ball count.
pub fn l1_ball_bound(dim: usize, radius: u64) -> Result<u64> {
    check_dim(dim)?;
    if radius == 0 {
        return Err(Error::InvalidParam {
            name: "radius",
            reason: "the counting bound requires R >= 1".into(),
        });
    }
    ball_bound_u128(dim, radius)
}

/// Finite-support field on `Z^d`, stored as a dense box.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    dim: usize,
    lo: [i64; MAX_DIM],
    shape: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    values: Vec<f64>,
}

impl LatticeField {
    /// Zero field on the box `[lo, hi]` (inclusive, componentwise).
    pub fn new_zero(dim: usize, lo: &[i64], hi: &[i64]) -> Result<Self> {
        check_dim(dim)?;
        assert_eq!(lo.len(), dim, "box lower bound has wrong dimension");
        assert_eq!(hi.len(), dim, "box upper bound has wrong dimension");
        let mut cells: u128 = 1;
        for k in 0..dim {
            if lo[k] > hi[k] {
                return Err(Error::InvalidParam {
                    name: "box",
                    reason: format!("lo {:?} exceeds hi {:?} on axis {}", lo, hi, k),
                });
            }
            cells *= (hi[k] - lo[k] + 1) as u128;
        }
        if cells > MAX_FIELD_CELLS as u128 {
            return Err(Error::BoxTooLarge {
                cells,
                max: MAX_FIELD_CELLS,
            });
        }
        let mut slo = [0i64; MAX_DIM];
        let mut shape = [1usize; MAX_DIM];
        for k in 0..dim {
            slo[k] = lo[k];
            shape[k] = (hi[k] - lo[k] + 1) as usize;
        }
        let strides = strides_for(dim, &shape);
        Ok(Self {
            dim,
            lo: slo,
            shape,
            strides,
            values: vec![0.0; cells as usize],
        })
    }

    /// Zero field on the origin-centered hypercube `[-radius, radius]^d`.
    pub fn centered(dim: usize, radius: u64) -> Result<Self> {
        let lo = vec![-(radius as i64); dim];
        let hi = vec![radius as i64; dim];
        Self::new_zero(dim, &lo, &hi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_lo(&self) -> &[i64] {
        &self.lo[..self.dim]
    }

    pub fn box_hi(&self) -> Vec<i64> {
        (0..self.dim)
            .map(|k| self.lo[k] + self.shape[k] as i64 - 1)
            .collect()
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides[..self.dim]
    }

    pub(crate) fn take_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_parts(dim: usize, lo: [i64; MAX_DIM], shape: [usize; MAX_DIM], values: Vec<f64>) -> Self {
        let strides = strides_for(dim, &shape);
        debug_assert_eq!(values.len(), shape[..dim].iter().product::<usize>());
        Self {
            dim,
            lo,
            shape,
            strides,
            values,
        }
    }

    pub(crate) fn lo_arr(&self) -> [i64; MAX_DIM] {
        self.lo
    }

    pub(crate) fn shape_arr(&self) -> [usize; MAX_DIM] {
        self.shape
    }

    /// Flat index of a site, or `None` when it lies outside the box.
    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        assert_eq!(site.len(), self.dim, "site has wrong dimension");
        let mut idx = 0usize;
        for k in 0..self.dim {
            let off = site[k] - self.lo[k];
            if off < 0 || off as usize >= self.shape[k] {
                return None;
            }
            idx += off as usize * self.strides[k];
        }
        Some(idx)
    }

    fn site_of(&self, mut idx: usize) -> Vec<i64> {
        let mut site = vec![0i64; self.dim];
        for k in 0..self.dim {
            site[k] = self.lo[k] + (idx / self.strides[k]) as i64;
            idx %= self.strides[k];
        }
        site
    }

    /// Value at a site; exactly `0.0` outside the stored box.
    pub fn get(&self, site: &[i64]) -> f64 {
        match self.index_of(site) {
            Some(idx) => self.values[idx],
            None => 0.0,
        }
    }

    /// Writes a value. Panics when the site lies outside the box; callers
    /// grow the box first.
    pub fn set(&mut self, site: &[i64], value: f64) {
        let idx = self
            .index_of(site)
            .unwrap_or_else(|| panic!("site {:?} outside stored box", site));
        self.values[idx] = value;
    }

    /// True when the box contains the hypercube `[-radius, radius]^d`.
    pub fn contains_centered(&self, radius: u64) -> bool {
        (0..self.dim).all(|k| {
            self.lo[k] <= -(radius as i64) && self.lo[k] + self.shape[k] as i64 - 1 >= radius as i64
        })
    }

    /// Reallocates to an origin-centered hypercube of the given radius,
    /// copying existing values. No-op when already large enough.
    pub fn grow_to_centered(&mut self, radius: u64) -> Result<()> {
        if self.contains_centered(radius) {
            return Ok(());
        }
        let mut grown = LatticeField::centered(self.dim, radius)?;
        // Existing nonzero content must fit inside the new box.
        for (site, v) in self.iter_nonzero() {
            grown.set(&site, v);
        }
        *self = grown;
        Ok(())
    }

    /// Largest absolute value over the box (0.0 for an all-zero field).
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for &v in &self.values {
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    /// One-pass `(sum, max_abs)`. The sum accumulates in the same fixed
    /// lexicographic order as the standalone lattice sum, so the two agree
    /// bit for bit.
    pub fn sum_and_max_abs(&self) -> (f64, f64) {
        let mut acc = 0.0f64;
        let mut m = 0.0f64;
        for &v in &self.values {
            acc += v;
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        (acc, m)
    }

    /// Iterates `(site, value)` over nonzero cells in lexicographic order.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(idx, v)| (self.site_of(idx), *v))
    }
}

fn strides_for(dim: usize, shape: &[usize; MAX_DIM]) -> [usize; MAX_DIM] {
    let mut strides = [1usize; MAX_DIM];
    for k in (0..dim.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Max L1 norm over nonzero sites; `None` for the zero field.
pub fn support_radius(field: &LatticeField) -> Option<u64> {
    let mut best: Option<u64> = None;
    // Odometer walk keeps coordinates in sync with the flat index.
    let dim = field.dim;
    let mut coords = [0i64; MAX_DIM];
    for k in 0..dim {
        coords[k] = field.lo[k];
    }
    let mut l1: u64 = (0..dim).map(|k| coords[k].unsigned_abs()).sum();
    let last = dim - 1;
    for (idx, &v) in field.values.iter().enumerate() {
        if v != 0.0 {
            let r = l1;
            if best.map_or(true, |b| r > b) {
                best = Some(r);
            }
        }
        // advance odometer
        if idx + 1 == field.values.len() {
            break;
        }
        l1 -= coords[last].unsigned_abs();
        coords[last] += 1;
        let mut k = last;
        while k > 0 && coords[k] - field.lo[k] == field.shape[k] as i64 {
            coords[k] = field.lo[k];
            k -= 1;
            l1 -= coords[k].unsigned_abs();
            coords[k] += 1;
            l1 += coords[k].unsigned_abs();
        }
        l1 += coords[last].unsigned_abs();
    }
    best
}

/// Sum of the 2d axis neighbors of a site: `sum_j u(i+e_j) + u(i-e_j)`.
///
/// Reads outside the box are zero. The accumulation order (ascending axis,
/// plus then minus) is fixed; the stepping kernel uses the same order.
pub fn neighbor_sum(field: &LatticeField, site: &[i64]) -> f64 {
    assert_eq!(site.len(), field.dim, "site has wrong dimension");
    let mut nb = 0.0;
    let mut probe = [0i64; MAX_DIM];
    probe[..field.dim].copy_from_slice(site);
    for j in 0..field.dim {
        probe[j] = site[j] + 1;
        nb += field.get(&probe[..field.dim]);
        probe[j] = site[j] - 1;
        nb += field.get(&probe[..field.dim]);
        probe[j] = site[j];
    }
    nb
}

/// Writes the field as CSV: one row per nonzero site, columns
/// `i_1..i_d,value`, lexicographic site order.
pub fn write_snapshot<W: std::io::Write>(field: &LatticeField, w: &mut W) -> std::io::Result<()> {
    for k in 0..field.dim() {
        write!(w, "i_{},", k + 1)?;
    }
    writeln!(w, "value")?;
    for (site, v) in field.iter_nonzero() {
        for c in &site {
            write!(w, "{},", c)?;
        }
        writeln!(w, "{}", v)?;
    }
    Ok(())
}

/// Reads a field snapshot produced by [`write_snapshot`]. The header names
/// the dimension through its `i_1..i_d` columns.
pub fn read_snapshot<R: std::io::BufRead>(r: R) -> Result<LatticeField> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Snapshot {
        line: 1,
        reason: "empty snapshot".into(),
    })?;
    let header = header.map_err(|e| Error::Io {
        context: "reading snapshot header".into(),
        source: e,
    })?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols[cols.len() - 1] != "value" {
        return Err(Error::Snapshot {
            line: 1,
            reason: format!("expected header `i_1,..,i_d,value`, got `{}`", header.trim()),
        });
    }
    let dim = cols.len() - 1;
    check_dim(dim)?;

    let mut sites: Vec<(Vec<i64>, f64)> = Vec::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::Io {
            context: "reading snapshot".into(),
            source: e,
        })?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() != dim + 1 {
            return Err(Error::Snapshot {
                line: lineno + 1,
                reason: format!("expected {} columns, got {}", dim + 1, parts.len()),
            });
        }
        let mut site = Vec::with_capacity(dim);
        for p in &parts[..dim] {
            site.push(p.trim().parse::<i64>().map_err(|e| Error::Snapshot {
                line: lineno + 1,
                reason: format!("bad coordinate `{}`: {}", p, e),
            })?);
        }
        let v: f64 = parts[dim].trim().parse().map_err(|e| Error::Snapshot {
            line: lineno + 1,
            reason: format!("bad value `{}`: {}", parts[dim], e),
        })?;
        if !v.is_finite() {
            return Err(Error::Snapshot {
                line: lineno + 1,
                reason: format!("non-finite value {}", v),
            });
        }
        sites.push((site, v));
    }

    let radius = sites
        .iter()
        .map(|(s, _)| l1_norm(s))
        .max()
        .unwrap_or(0);
    let mut field = LatticeField::centered(dim, radius + 1)?;
    for (site, v) in sites {
        field.set(&site, v);
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: filter the enclosing box by the L1 condition.
    fn brute_force_ball(dim: usize, radius: u64) -> Vec<Vec<i64>> {
        let r = radius as i64;
        let mut out = Vec::new();
        let mut site = vec![0i64; dim];
        fn rec(site: &mut Vec<i64>, axis: usize, r: i64, out: &mut Vec<Vec<i64>>) {
            if axis == site.len() {
                if site.iter().map(|c| c.abs()).sum::<i64>() <= r {
                    out.push(site.clone());
                }
                return;
            }
            for v in -r..=r {
                site[axis] = v;
                rec(site, axis + 1, r, out);
            }
        }
        rec(&mut site, 0, r, &mut out);
        out.sort();
        out
    }

    #[test]
    fn l1_norm_examples() {
        assert_eq!(l1_norm(&[0, 0]), 0);
        assert_eq!(l1_norm(&[1, -2, 3]), 6);
        assert_eq!(l1_norm(&[-5]), 5);
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_l1_ball(1, 2).unwrap(), 5);
        // Oracle value: 5x5 box filtered by the L1 condition has 13 points.
        assert_eq!(brute_force_ball(2, 2).len(), 13);
        assert_eq!(count_l1_ball(2, 2).unwrap(), 13);
        assert_eq!(count_l1_ball(2, 0).unwrap(), 1);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(l1_ball_bound(1, 1).unwrap(), 8);
        assert_eq!(l1_ball_bound(2, 2).unwrap(), 128);
        assert_eq!(l1_ball_bound(1, 2).unwrap(), 16);
        assert_eq!(count_l1_ball(1, 2).unwrap(), 5);
        assert!(count_l1_ball(1, 2).unwrap() <= l1_ball_bound(1, 2).unwrap());
        assert!(l1_ball_bound(1, 0).is_err());
        assert!(l1_ball_bound(4, u64::MAX / 2).is_err());
    }

    #[test]
    fn enumeration_matches_brute_force_and_is_lexicographic() {
        for dim in 1..=4usize {
            for radius in 0..=5u64 {
                let expected = brute_force_ball(dim, radius);
                let ball = L1Ball::new(dim, radius).unwrap();
                let mut seen = Vec::new();
                ball.for_each_site(|s| seen.push(s.to_vec()));
                assert_eq!(seen, expected, "d={} R={}", dim, radius);
                let mut sorted = seen.clone();
                sorted.sort();
                assert_eq!(seen, sorted, "enumeration not lexicographic");
                let via_iter: Vec<Vec<i64>> = ball.iter().collect();
                assert_eq!(via_iter, seen, "iterator disagrees with visitor");
            }
        }
    }

    #[test]
    fn closed_forms_small() {
        for r in 0..=20u64 {
            assert_eq!(count_l1_ball(1, r).unwrap(), 2 * r + 1);
            assert_eq!(count_l1_ball(2, r).unwrap(), 2 * r * r + 2 * r + 1);
        }
    }

    #[test]
    fn field_get_outside_box_is_zero() {
        let mut f = LatticeField::centered(2, 3).unwrap();
        f.set(&[2, -1], 0.5);
        assert_eq!(f.get(&[2, -1]), 0.5);
        assert_eq!(f.get(&[100, 100]), 0.0);
        assert_eq!(f.get(&[-4, 0]), 0.0);
    }

    #[test]
    fn support_radius_examples() {
        let f = LatticeField::centered(2, 4).unwrap();
        assert_eq!(support_radius(&f), None);

        let mut f = LatticeField::centered(2, 4).unwrap();
        f.set(&[2, -1], 0.5);
        assert_eq!(support_radius(&f), Some(3));

        let mut f = LatticeField::centered(2, 5).unwrap();
        L1Ball::new(2, 4).unwrap().for_each_site(|s| f.set(s, 1.0));
        assert_eq!(support_radius(&f), Some(4));
    }

    #[test]
    fn neighbor_sum_examples() {
        let z = LatticeField::centered(1, 3).unwrap();
        assert_eq!(neighbor_sum(&z, &[0]), 0.0);

        let mut f = LatticeField::centered(1, 3).unwrap();
        f.set(&[0], 1.0);
        assert_eq!(neighbor_sum(&f, &[0]), 0.0);
        assert_eq!(neighbor_sum(&f, &[1]), 1.0);

        let mut g = LatticeField::centered(2, 3).unwrap();
        g.set(&[0, 0], 2.0);
        assert_eq!(neighbor_sum(&g, &[1, 0]), 2.0);
    }

    #[test]
    fn neighbor_sum_translation_invariance() {
        let mut f = LatticeField::centered(2, 4).unwrap();
        f.set(&[0, 1], 1.5);
        f.set(&[1, -1], -0.25);
        f.set(&[-2, 0], 3.0);
        let mut g = LatticeField::new_zero(2, &[-2, -3], &[7, 6]).unwrap();
        let shift = [3i64, 2];
        for (site, v) in f.iter_nonzero() {
            g.set(&[site[0] + shift[0], site[1] + shift[1]], v);
        }
        for site in L1Ball::new(2, 3).unwrap().iter() {
            let moved = [site[0] + shift[0], site[1] + shift[1]];
            assert_eq!(neighbor_sum(&f, &site), neighbor_sum(&g, &moved));
        }
    }

    #[test]
    fn grow_preserves_values() {
        let mut f = LatticeField::centered(2, 2).unwrap();
        f.set(&[1, 1], 4.25);
        f.set(&[-2, 0], -1.0);
        f.grow_to_centered(10).unwrap();
        assert_eq!(f.get(&[1, 1]), 4.25);
        assert_eq!(f.get(&[-2, 0]), -1.0);
        assert_eq!(support_radius(&f), Some(2));
        assert!(f.contains_centered(10));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut f = LatticeField::centered(3, 2).unwrap();
        f.set(&[1, 0, -1], 0.125);
        f.set(&[0, 0, 0], -7.5e-3);
        f.set(&[-1, 1, 0], 1.0 / 3.0);
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i_1,i_2,i_3,value\n"));
        let g = read_snapshot(&mut buf.as_slice()).unwrap();
        for (site, v) in f.iter_nonzero() {
            assert_eq!(g.get(&site), v, "value mismatch at {:?}", site);
        }
        assert_eq!(
            f.iter_nonzero().count(),
            g.iter_nonzero().count(),
            "site count mismatch"
        );
    }

    #[test]
    fn snapshot_rejects_garbage() {
        let bad = "i_1,value\nx,1.0\n";
        assert!(read_snapshot(&mut bad.as_bytes()).is_err());
        let bad = "i_1,val\n0,1.0\n";
        assert!(read_snapshot(&mut bad.as_bytes()).is_err());
        let bad = "i_1,value\n0,NaN\n";
        assert!(read_snapshot(&mut bad.as_bytes()).is_err());
    }
}
