//! Index geometry of radial and ring filters.
//!
//! Offsets `(i, j)` are measured in rows and columns from the filter
//! center, so they range over `-R..=R` with `R = (k - 1) / 2`. A ring of
//! radius `r` is the set of offsets at Chebyshev distance `r`; it holds one
//! position for `r = 0` and `8r` positions otherwise.

use crate::error::{ensure_dim, Error, Result};
use crate::scalar::Real;
use crate::tensor::FilterBank;

/// Weight slot for offset `(i, j)` of a radial filter:
/// `min(round(sqrt(i² + j²)), radius)`, rounding half away from zero.
pub fn radius_index(i: i64, j: i64, radius: usize) -> Result<usize> {
    let r = radius as i64;
    if i.abs() > r || j.abs() > r {
        return Err(Error::OffsetOutOfRange { i, j, radius });
    }
    let d = ((i * i + j * j) as f64).sqrt().round() as usize;
    Ok(d.min(radius))
}

/// Perimeter positions of every ring of a `k × k` filter.
///
/// Ring `r >= 1` is traced clockwise (right along the top row, down the
/// right column, left along the bottom row, up the left column) starting at
/// offset `(-r, -r)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingLayout {
    k: usize,
    rings: Vec<Vec<(i64, i64)>>,
}

impl RingLayout {
    pub fn new(k: usize) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(Error::invalid(format!("ring layout needs an odd filter size, got {k}")));
        }
        let radius = (k - 1) / 2;
        let mut rings = vec![vec![(0, 0)]];
        for r in 1..=radius as i64 {
            let mut ring = Vec::with_capacity(8 * r as usize);
            ring.extend((-r..r).map(|j| (-r, j)));
            ring.extend((-r..r).map(|i| (i, r)));
            ring.extend((-r + 1..=r).rev().map(|j| (r, j)));
            ring.extend((-r + 1..=r).rev().map(|i| (i, -r)));
            rings.push(ring);
        }
        Ok(Self { k, rings })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn radius(&self) -> usize {
        (self.k - 1) / 2
    }

    pub fn rings(&self) -> &[Vec<(i64, i64)>] {
        &self.rings
    }

    pub fn ring(&self, r: usize) -> &[(i64, i64)] {
        &self.rings[r]
    }

    /// Number of distinct rotations of ring `r` (`8r`, or 1 for the center).
    pub fn ring_len(&self, r: usize) -> usize {
        self.rings[r].len()
    }

    /// Flat index of an offset inside a `size × size` kernel centered on the
    /// same point.
    #[inline]
    pub fn flat_index(offset: (i64, i64), size: usize) -> usize {
        let c = ((size - 1) / 2) as i64;
        ((offset.0 + c) as usize) * size + (offset.1 + c) as usize
    }

    /// Total rotated filters a RING layer of this size evaluates: `Σ_{r≥1} 8r`.
    pub fn rotation_count(&self) -> usize {
        (1..=self.radius()).map(|r| 8 * r).sum()
    }

    /// Side length of the dense filters evaluated for ring group `r`.
    pub fn group_size(&self, r: usize) -> usize {
        if r == 1 {
            3
        } else {
            self.k
        }
    }

    /// Multiply-accumulates per output pixel and channel pair when every
    /// rotated filter of every group is evaluated densely.
    pub fn dense_macs_per_pixel(&self) -> usize {
        (1..=self.radius())
            .map(|r| 8 * r * self.group_size(r) * self.group_size(r))
            .sum()
    }
}

/// Radial weights: one value per radius for every (out, in) channel pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialWeights<T> {
    out_channels: usize,
    in_channels: usize,
    radius: usize,
    values: Vec<T>,
}

impl<T: Real> RadialWeights<T> {
    pub fn zeros(out_channels: usize, in_channels: usize, radius: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            radius,
            values: vec![T::zero(); out_channels * in_channels * (radius + 1)],
        }
    }

    pub fn from_vec(out_channels: usize, in_channels: usize, radius: usize, values: Vec<T>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::invalid("radial weights need at least one channel pair"));
        }
        ensure_dim(
            "RadialWeights::from_vec",
            "values length",
            out_channels * in_channels * (radius + 1),
            values.len(),
        )?;
        Ok(Self {
            out_channels,
            in_channels,
            radius,
            values,
        })
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Filter size these weights expand to.
    #[inline]
    pub fn k(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// The `radius + 1` values of channel pair `(o, c)`.
    pub fn pair(&self, o: usize, c: usize) -> &[T] {
        let len = self.radius + 1;
        let start = (o * self.in_channels + c) * len;
        &self.values[start..start + len]
    }

    pub fn pair_mut(&mut self, o: usize, c: usize) -> &mut [T] {
        let len = self.radius + 1;
        let start = (o * self.in_channels + c) * len;
        &mut self.values[start..start + len]
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum()
    }
}

/// RING weights: an unrotated `k × k` filter bank, `k >= 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct RingWeights<T> {
    canonical: FilterBank<T>,
}

impl<T: Real> RingWeights<T> {
    pub fn new(canonical: FilterBank<T>) -> Result<Self> {
        if canonical.k() < 3 {
            return Err(Error::invalid(format!(
                "ring filters need k >= 3, got {}",
                canonical.k()
            )));
        }
        Ok(Self { canonical })
    }

    pub fn canonical(&self) -> &FilterBank<T> {
        &self.canonical
    }

    pub fn canonical_mut(&mut self) -> &mut FilterBank<T> {
        &mut self.canonical
    }

    pub fn into_canonical(self) -> FilterBank<T> {
        self.canonical
    }

    pub fn k(&self) -> usize {
        self.canonical.k()
    }

    pub fn in_channels(&self) -> usize {
        self.canonical.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.canonical.out_channels()
    }
}

/// Radius slot of every tap of a `k × k` kernel, row-major.
fn radius_map(k: usize) -> Vec<usize> {
    let r = ((k - 1) / 2) as i64;
    let mut map = Vec::with_capacity(k * k);
    for i in -r..=r {
        for j in -r..=r {
            map.push(radius_index(i, j, r as usize).expect("offset inside the filter"));
        }
    }
    map
}

/// Expands radial weights into dense kernels:
/// `filter[o,c,i,j] = values[o,c][radius_index(i − R, j − R)]`.
pub fn build_radial_filter<T: Real>(w: &RadialWeights<T>, k: usize) -> Result<FilterBank<T>> {
    ensure_dim("build_radial_filter", "filter size", w.k(), k)?;
    let map = radius_map(k);
    let mut f = FilterBank::zeros(w.out_channels(), w.in_channels(), k);
    for o in 0..w.out_channels() {
        for c in 0..w.in_channels() {
            let vals = w.pair(o, c);
            for (dst, &slot) in f.kernel_mut(o, c).iter_mut().zip(&map) {
                *dst = vals[slot];
            }
        }
    }
    Ok(f)
}

/// Adjoint of [`build_radial_filter`]: sums the dense gradient over all taps
/// sharing a radius slot.
pub fn accumulate_radial_grad<T: Real>(dense_grad: &FilterBank<T>, radius: usize) -> Result<RadialWeights<T>> {
    ensure_dim("accumulate_radial_grad", "filter size", 2 * radius + 1, dense_grad.k())?;
    let map = radius_map(dense_grad.k());
    let mut g = RadialWeights::zeros(dense_grad.out_channels(), dense_grad.in_channels(), radius);
    for o in 0..dense_grad.out_channels() {
        for c in 0..dense_grad.in_channels() {
            let acc = g.pair_mut(o, c);
            for (&v, &slot) in dense_grad.kernel(o, c).iter().zip(&map) {
                acc[slot] += v;
            }
        }
    }
    Ok(g)
}

/// Copies ring `ring` of `src` (side `src_size`) into `dst` (side
/// `dst_size`), advancing every weight `steps` positions along the layout
/// order. Other positions of `dst` are left untouched.
fn shift_ring<T: Copy>(
    layout: &RingLayout,
    ring: usize,
    steps: usize,
    src: &[T],
    src_size: usize,
    dst: &mut [T],
    dst_size: usize,
) {
    let pos = layout.ring(ring);
    let n = pos.len();
    for (p, &from) in pos.iter().enumerate() {
        let to = pos[(p + steps) % n];
        dst[RingLayout::flat_index(to, dst_size)] = src[RingLayout::flat_index(from, src_size)];
    }
}

/// Inverse of [`shift_ring`], accumulating: the value found at position
/// `p + steps` of `src` is added to position `p` of `dst`.
fn unshift_ring_acc<T: Real>(
    layout: &RingLayout,
    ring: usize,
    steps: usize,
    src: &[T],
    src_size: usize,
    dst: &mut [T],
    dst_size: usize,
) {
    let pos = layout.ring(ring);
    let n = pos.len();
    for (p, &to) in pos.iter().enumerate() {
        let from = pos[(p + steps) % n];
        dst[RingLayout::flat_index(to, dst_size)] += src[RingLayout::flat_index(from, src_size)];
    }
}

/// Cyclically shifts the weights on ring `ring` by `steps` positions along
/// the clockwise layout order. `2r` steps turn the ring a quarter turn
/// clockwise; the rest of the filter is unchanged.
pub fn rotate_ring<T: Real>(
    canonical: &FilterBank<T>,
    layout: &RingLayout,
    ring: usize,
    steps: usize,
) -> Result<FilterBank<T>> {
    ensure_dim("rotate_ring", "filter size", layout.k(), canonical.k())?;
    if ring == 0 {
        if steps > 0 {
            return Err(Error::invalid("the center position cannot rotate"));
        }
        return Ok(canonical.clone());
    }
    if ring > layout.radius() {
        return Err(Error::invalid(format!(
            "ring {ring} does not exist in a {}x{} filter",
            layout.k(),
            layout.k()
        )));
    }
    if steps >= layout.ring_len(ring) {
        return Err(Error::invalid(format!(
            "ring {ring} has {} rotation steps, got {steps}",
            layout.ring_len(ring)
        )));
    }
    let k = canonical.k();
    let mut out = canonical.clone();
    for o in 0..canonical.out_channels() {
        for c in 0..canonical.in_channels() {
            shift_ring(layout, ring, steps, canonical.kernel(o, c), k, out.kernel_mut(o, c), k);
        }
    }
    Ok(out)
}

/// All rotated filters of one ring group.
#[derive(Clone, Debug, PartialEq)]
pub struct RingGroup<T> {
    /// Ring index `r >= 1`.
    pub ring: usize,
    /// Side of the group's filters: 3 for the innermost group, `k` otherwise.
    pub size: usize,
    /// One filter bank per rotation step, `8r` in total.
    pub filters: Vec<FilterBank<T>>,
}

/// Rotated filters of a RING layer, one group per ring `1..=R`.
#[derive(Clone, Debug, PartialEq)]
pub struct RingRotations<T> {
    pub k: usize,
    pub groups: Vec<RingGroup<T>>,
}

impl<T: Real> RingRotations<T> {
    /// Number of rows/columns a group's filter is inset from the full `k × k`
    /// grid.
    pub fn inset(&self, group: usize) -> usize {
        (self.k - self.groups[group].size) / 2
    }

    pub fn filter_count(&self) -> usize {
        self.groups.iter().map(|g| g.filters.len()).sum()
    }
}

/// Expands the canonical weights into every ring rotation.
///
/// Group 1 is the dense 3×3 core (center plus ring 1) with ring 1 turned
/// through its 8 shifts. Each group `r >= 2` is a `k × k` filter holding only
/// ring `r`'s weights, turned through its `8r` shifts. A 5×5 layer therefore
/// evaluates `8 + 16` filters rather than every combination of both rings.
pub fn enumerate_ring_rotations<T: Real>(w: &RingWeights<T>, layout: &RingLayout) -> Result<RingRotations<T>> {
    let canonical = w.canonical();
    let k = canonical.k();
    ensure_dim("enumerate_ring_rotations", "filter size", layout.k(), k)?;
    let (cout, cin) = (canonical.out_channels(), canonical.in_channels());
    let mut groups = Vec::with_capacity(layout.radius());
    for r in 1..=layout.radius() {
        let size = layout.group_size(r);
        let steps = layout.ring_len(r);
        let mut filters = Vec::with_capacity(steps);
        for s in 0..steps {
            let mut f = FilterBank::zeros(cout, cin, size);
            for o in 0..cout {
                for c in 0..cin {
                    let src = canonical.kernel(o, c);
                    let dst = f.kernel_mut(o, c);
                    if r == 1 {
                        dst[RingLayout::flat_index((0, 0), size)] = src[RingLayout::flat_index((0, 0), k)];
                    }
                    shift_ring(layout, r, s, src, k, dst, size);
                }
            }
            filters.push(f);
        }
        groups.push(RingGroup { ring: r, size, filters });
    }
    Ok(RingRotations { k, groups })
}

/// Adjoint of [`enumerate_ring_rotations`]: every rotated-filter gradient is
/// shifted back to canonical position and summed.
pub fn accumulate_ring_grad<T: Real>(
    per_rotation_grads: &RingRotations<T>,
    layout: &RingLayout,
) -> Result<FilterBank<T>> {
    const OP: &str = "accumulate_ring_grad";
    let k = layout.k();
    ensure_dim(OP, "filter size", k, per_rotation_grads.k)?;
    ensure_dim(OP, "ring groups", layout.radius(), per_rotation_grads.groups.len())?;
    let first = per_rotation_grads
        .groups
        .first()
        .and_then(|g| g.filters.first())
        .ok_or_else(|| Error::invalid("accumulate_ring_grad: no rotated gradients"))?;
    let (cout, cin) = (first.out_channels(), first.in_channels());
    let mut grad = FilterBank::zeros(cout, cin, k);
    for (gi, group) in per_rotation_grads.groups.iter().enumerate() {
        let r = gi + 1;
        ensure_dim(OP, "group ring index", r, group.ring)?;
        ensure_dim(OP, "group filter size", layout.group_size(r), group.size)?;
        ensure_dim(OP, "rotations per group", layout.ring_len(r), group.filters.len())?;
        for (s, g) in group.filters.iter().enumerate() {
            ensure_dim(OP, "output channels", cout, g.out_channels())?;
            ensure_dim(OP, "input channels", cin, g.in_channels())?;
            ensure_dim(OP, "rotated filter size", group.size, g.k())?;
            for o in 0..cout {
                for c in 0..cin {
                    let src = g.kernel(o, c);
                    let dst = grad.kernel_mut(o, c);
                    if r == 1 {
                        dst[RingLayout::flat_index((0, 0), k)] += src[RingLayout::flat_index((0, 0), group.size)];
                    }
                    unshift_ring_acc(layout, r, s, src, group.size, dst, k);
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::rot90_filters;

    #[test]
    fn radius_index_examples() {
        assert_eq!(radius_index(0, 0, 1).unwrap(), 0);
        assert_eq!(radius_index(1, 1, 1).unwrap(), 1);
        assert_eq!(radius_index(2, 2, 2).unwrap(), 2);
        assert_eq!(radius_index(-1, 2, 2).unwrap(), 2);
        assert!(matches!(
            radius_index(2, 0, 1).unwrap_err(),
            Error::OffsetOutOfRange { i: 2, j: 0, radius: 1 }
        ));
    }

    #[test]
    fn distinct_radius_slots_match_weight_counts() {
        // Enumerate every offset and count distinct slots: 3×3 uses 2, 5×5 uses 3.
        for (radius, expected) in [(1usize, 2usize), (2, 3)] {
            let r = radius as i64;
            let slots: HashSet<usize> = (-r..=r)
                .flat_map(|i| (-r..=r).map(move |j| (i, j)))
                .map(|(i, j)| radius_index(i, j, radius).unwrap())
                .collect();
            assert_eq!(slots.len(), expected);
        }
    }

    #[test]
    fn layout_partitions_the_grid() {
        for k in [1usize, 3, 5, 7, 9] {
            let layout = RingLayout::new(k).unwrap();
            assert_eq!(layout.ring_len(0), 1);
            for r in 1..=layout.radius() {
                assert_eq!(layout.ring_len(r), 8 * r);
                assert!(layout.ring(r).iter().all(|&(i, j)| i.abs().max(j.abs()) == r as i64));
            }
            let all: HashSet<(i64, i64)> = layout.rings().iter().flatten().copied().collect();
            let total: usize = layout.rings().iter().map(Vec::len).sum();
            assert_eq!(total, k * k);
            assert_eq!(all.len(), k * k);
        }
        assert!(RingLayout::new(4).is_err());
    }

    #[test]
    fn layout_starts_top_left_and_runs_clockwise() {
        let layout = RingLayout::new(3).unwrap();
        assert_eq!(
            layout.ring(1),
            &[(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
        );
    }

    #[test]
    fn rotation_count_matches_perimeter_sum() {
        // Perimeter 2·(s + s − 2) summed over odd side lengths s = 3, 5, …, k.
        for k in [3usize, 5, 7, 9] {
            let perimeter_sum: usize = (3..=k).step_by(2).map(|s| 2 * (s + s - 2)).sum();
            assert_eq!(RingLayout::new(k).unwrap().rotation_count(), perimeter_sum);
        }
        assert_eq!(RingLayout::new(5).unwrap().rotation_count(), 8 + 16);
    }

    #[test]
    fn dense_macs_for_five_by_five() {
        let layout = RingLayout::new(5).unwrap();
        assert_eq!(layout.dense_macs_per_pixel(), 8 * 9 + 16 * 25);
        assert_eq!(layout.dense_macs_per_pixel(), 472);
        assert_eq!(layout.dense_macs_per_pixel(), 8 * (3 * 3 + 2 * 5 * 5));
    }

    #[test]
    fn radial_filter_three_by_three() {
        let w = RadialWeights::from_vec(1, 1, 1, vec![2.0f64, 7.0]).unwrap();
        let f = build_radial_filter(&w, 3).unwrap();
        assert_eq!(f.data(), &[7., 7., 7., 7., 2., 7., 7., 7., 7.]);
        assert!(build_radial_filter(&w, 5).is_err());
    }

    #[test]
    fn radial_filter_five_by_five() {
        let w = RadialWeights::from_vec(1, 1, 2, vec![1.0f64, 2.0, 3.0]).unwrap();
        let f = build_radial_filter(&w, 5).unwrap();
        let layout = RingLayout::new(5).unwrap();
        for (r, expected) in [(0usize, 1.0), (1, 2.0), (2, 3.0)] {
            for &off in layout.ring(r) {
                assert_eq!(f.kernel(0, 0)[RingLayout::flat_index(off, 5)], expected, "offset {off:?}");
            }
        }
        let zero = build_radial_filter(&RadialWeights::<f64>::zeros(2, 3, 2), 5).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn radial_grad_counts_positions() {
        let mut ones = FilterBank::<f64>::zeros(1, 1, 3);
        ones.data_mut().fill(1.0);
        assert_eq!(accumulate_radial_grad(&ones, 1).unwrap().values(), &[1.0, 8.0]);
        let mut ones = FilterBank::<f64>::zeros(1, 1, 5);
        ones.data_mut().fill(1.0);
        assert_eq!(accumulate_radial_grad(&ones, 2).unwrap().values(), &[1.0, 8.0, 16.0]);
        let zeros = FilterBank::<f64>::zeros(2, 2, 3);
        assert!(accumulate_radial_grad(&zeros, 1).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(accumulate_radial_grad(&zeros, 2).is_err());
    }

    #[test]
    fn radial_filters_are_d4_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for radius in 1..=3 {
            let vals = (0..2 * 3 * (radius + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = RadialWeights::<f64>::from_vec(2, 3, radius, vals).unwrap();
            let f = build_radial_filter(&w, 2 * radius + 1).unwrap();
            for q in 1..4 {
                assert_eq!(rot90_filters(&f, q), f);
            }
            let k = f.k();
            let mut mirrored = f.clone();
            for o in 0..2 {
                for c in 0..3 {
                    for i in 0..k {
                        for j in 0..k {
                            mirrored.set(o, c, i, j, f.get(o, c, i, k - 1 - j));
                        }
                    }
                }
            }
            assert_eq!(mirrored, f);
        }
    }

    #[test]
    fn rotate_ring_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let l3 = RingLayout::new(3).unwrap();
        let f3 = FilterBank::<f64>::random(2, 2, 3, 1.0, &mut rng);
        assert_eq!(rotate_ring(&f3, &l3, 1, 0).unwrap(), f3);
        // Two steps around the 8-position ring is a clockwise quarter turn.
        assert_eq!(rotate_ring(&f3, &l3, 1, 2).unwrap(), rot90_filters(&f3, -1));
        assert_eq!(rotate_ring(&f3, &l3, 1, 6).unwrap(), rot90_filters(&f3, 1));
        assert!(rotate_ring(&f3, &l3, 0, 1).is_err());
        assert!(rotate_ring(&f3, &l3, 1, 8).is_err());
        assert!(rotate_ring(&f3, &l3, 2, 0).is_err());

        let l5 = RingLayout::new(5).unwrap();
        let f5 = FilterBank::<f64>::random(1, 2, 5, 1.0, &mut rng);
        assert!(rotate_ring(&f5, &l5, 2, 16).is_err());
        let mut full = f5.clone();
        for _ in 0..16 {
            full = rotate_ring(&full, &l5, 2, 1).unwrap();
        }
        assert_eq!(full, f5);
        // Only ring 2 moves.
        let moved = rotate_ring(&f5, &l5, 2, 5).unwrap();
        for &off in l5.ring(0).iter().chain(l5.ring(1)) {
            let idx = RingLayout::flat_index(off, 5);
            assert_eq!(moved.kernel(0, 1)[idx], f5.kernel(0, 1)[idx]);
        }
    }

    #[test]
    fn turning_every_ring_by_2r_is_a_quarter_turn() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for k in [3usize, 5, 7] {
            let layout = RingLayout::new(k).unwrap();
            let f = FilterBank::<f64>::random(2, 3, k, 1.0, &mut rng);
            let mut turned = f.clone();
            for r in 1..=layout.radius() {
                turned = rotate_ring(&turned, &layout, r, 2 * r).unwrap();
            }
            assert_eq!(turned, rot90_filters(&f, -1));
        }
    }

    #[test]
    fn enumerate_three_by_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let layout = RingLayout::new(3).unwrap();
        let f = FilterBank::<f64>::random(2, 2, 3, 1.0, &mut rng);
        let rots = enumerate_ring_rotations(&RingWeights::new(f.clone()).unwrap(), &layout).unwrap();
        assert_eq!(rots.groups.len(), 1);
        assert_eq!(rots.groups[0].filters.len(), 8);
        for (s, g) in rots.groups[0].filters.iter().enumerate() {
            assert_eq!(g, &rotate_ring(&f, &layout, 1, s).unwrap());
        }
        assert!(RingWeights::new(FilterBank::<f64>::zeros(1, 1, 1)).is_err());
    }

    #[test]
    fn enumerate_five_by_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let layout = RingLayout::new(5).unwrap();
        let f = FilterBank::<f64>::random(1, 1, 5, 1.0, &mut rng);
        let rots = enumerate_ring_rotations(&RingWeights::new(f.clone()).unwrap(), &layout).unwrap();
        assert_eq!(rots.filter_count(), 24);
        let g1 = &rots.groups[0];
        assert_eq!((g1.size, g1.filters.len()), (3, 8));
        assert_eq!(rots.inset(0), 1);
        // s = 0 is the inner 3×3 core unchanged.
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g1.filters[0].get(0, 0, i, j), f.get(0, 0, i + 1, j + 1));
            }
        }
        let g2 = &rots.groups[1];
        assert_eq!((g2.size, g2.filters.len()), (5, 16));
        for (s, g) in g2.filters.iter().enumerate() {
            let full = rotate_ring(&f, &layout, 2, s).unwrap();
            for &off in layout.ring(2) {
                let idx = RingLayout::flat_index(off, 5);
                assert_eq!(g.kernel(0, 0)[idx], full.kernel(0, 0)[idx]);
            }
            for &off in layout.ring(0).iter().chain(layout.ring(1)) {
                assert_eq!(g.kernel(0, 0)[RingLayout::flat_index(off, 5)], 0.0);
            }
        }
    }

    #[test]
    fn single_inverse_shift() {
        let layout = RingLayout::new(3).unwrap();
        let mut grads = enumerate_ring_rotations(&RingWeights::new(FilterBank::<f64>::zeros(1, 1, 3)).unwrap(), &layout).unwrap();
        let zero = accumulate_ring_grad(&grads, &layout).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));

        let (s, p) = (3usize, 5usize);
        let at = RingLayout::flat_index(layout.ring(1)[p], 3);
        grads.groups[0].filters[s].data_mut()[at] = 1.0;
        let g = accumulate_ring_grad(&grads, &layout).unwrap();
        let expected = RingLayout::flat_index(layout.ring(1)[(p + 8 - s) % 8], 3);
        for (idx, &v) in g.data().iter().enumerate() {
            assert_eq!(v, if idx == expected { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn accumulate_rejects_mismatched_shapes() {
        let l3 = RingLayout::new(3).unwrap();
        let l5 = RingLayout::new(5).unwrap();
        let grads = enumerate_ring_rotations(&RingWeights::new(FilterBank::<f64>::zeros(1, 1, 3)).unwrap(), &l3).unwrap();
        assert!(accumulate_ring_grad(&grads, &l5).is_err());
        let mut short = grads.clone();
        short.groups[0].filters.pop();
        assert!(accumulate_ring_grad(&short, &l3).is_err());
    }

    /// Rotates every ring-1 tap of a 3×3 kernel by 45° using the polar angle
    /// of each offset; independent of the layout order.
    fn orn8_rotations(f: &FilterBank<f64>) -> Vec<FilterBank<f64>> {
        let angle = |i: i64, j: i64| (-(i as f64)).atan2(j as f64).rem_euclid(std::f64::consts::TAU);
        let mut ring: Vec<(i64, i64)> = (-1..=1)
            .flat_map(|i| (-1..=1).map(move |j| (i, j)))
            .filter(|&(i, j)| (i, j) != (0, 0))
            .collect();
        // Sorted by decreasing angle = clockwise.
        ring.sort_by(|a, b| angle(b.0, b.1).partial_cmp(&angle(a.0, a.1)).unwrap());
        (0..8)
            .map(|s| {
                let mut out = f.clone();
                for o in 0..f.out_channels() {
                    for c in 0..f.in_channels() {
                        for (p, &(i, j)) in ring.iter().enumerate() {
                            let (ti, tj) = ring[(p + s) % 8];
                            out.set(o, c, (ti + 1) as usize, (tj + 1) as usize, f.get(o, c, (i + 1) as usize, (j + 1) as usize));
                        }
                    }
                }
                out
            })
            .collect()
    }

    #[test]
    fn three_by_three_rotations_match_45_degree_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let layout = RingLayout::new(3).unwrap();
        let f = FilterBank::<f64>::random(2, 2, 3, 1.0, &mut rng);
        let ours = enumerate_ring_rotations(&RingWeights::new(f.clone()).unwrap(), &layout).unwrap();
        let key = |g: &FilterBank<f64>| g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        let a: HashSet<_> = ours.groups[0].filters.iter().map(key).collect();
        let b: HashSet<_> = orn8_rotations(&f).iter().map(key).collect();
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn radial_construction_adjoint(radius in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 2 * radius + 1;
            let vals = (0..2 * 2 * (radius + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = RadialWeights::<f64>::from_vec(2, 2, radius, vals).unwrap();
            let g = FilterBank::<f64>::random(2, 2, k, 1.0, &mut rng);
            let lhs = build_radial_filter(&w, k).unwrap().dot(&g);
            let rhs = w.dot(&accumulate_radial_grad(&g, radius).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn ring_construction_adjoint(k in prop::sample::select(vec![3usize, 5, 7]), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = RingLayout::new(k).unwrap();
            let w = RingWeights::new(FilterBank::<f64>::random(2, 2, k, 1.0, &mut rng)).unwrap();
            let mut g = enumerate_ring_rotations(&w, &layout).unwrap();
            for group in &mut g.groups {
                for f in &mut group.filters {
                    *f = FilterBank::random(2, 2, f.k(), 1.0, &mut rng);
                }
            }
            let rots = enumerate_ring_rotations(&w, &layout).unwrap();
            let lhs: f64 = rots.groups.iter().zip(&g.groups)
                .flat_map(|(a, b)| a.filters.iter().zip(&b.filters).map(|(x, y)| x.dot(y)))
                .sum();
            let rhs = w.canonical().dot(&accumulate_ring_grad(&g, &layout).unwrap());
            // Group r >= 2 filters are zero off ring r, so those entries of g
            // carry no parameter gradient; the identity still holds exactly.
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
