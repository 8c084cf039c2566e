use crate::scalar::Real;

use super::{FilterBank, Tensor4};

/// Rotates one `h × w` plane counter-clockwise by `q` quarter turns.
/// Returns the rotated plane and its `(h, w)`.
pub(crate) fn rotate_plane<T: Copy>(src: &[T], h: usize, w: usize, q: usize, dst: &mut Vec<T>) -> (usize, usize) {
    dst.clear();
    match q % 4 {
        0 => {
            dst.extend_from_slice(src);
            (h, w)
        }
        1 => {
            // out[r][c] = in[c][w-1-r]; out is w × h
            for r in 0..w {
                for c in 0..h {
                    dst.push(src[c * w + (w - 1 - r)]);
                }
            }
            (w, h)
        }
        2 => {
            dst.extend(src.iter().rev());
            (h, w)
        }
        _ => {
            // out[r][c] = in[h-1-c][r]; out is w × h
            for r in 0..w {
                for c in 0..h {
                    dst.push(src[(h - 1 - c) * w + r]);
                }
            }
            (w, h)
        }
    }
}

/// Rotates every channel plane counter-clockwise by `quarter_turns · 90°`.
/// Any integer is accepted and reduced modulo 4.
pub fn rot90<T: Real>(t: &Tensor4<T>, quarter_turns: i32) -> Tensor4<T> {
    let q = quarter_turns.rem_euclid(4) as usize;
    let [n, c, h, w] = t.dims();
    let (oh, ow) = if q % 2 == 1 { (w, h) } else { (h, w) };
    let mut data = Vec::with_capacity(t.data().len());
    let mut buf = Vec::with_capacity(h * w);
    for b in 0..n {
        for ch in 0..c {
            rotate_plane(t.plane(b, ch), h, w, q, &mut buf);
            data.extend_from_slice(&buf);
        }
    }
    Tensor4::from_vec([n, c, oh, ow], data).expect("rotation preserves element count")
}

/// Rotates every kernel of a filter bank counter-clockwise.
pub fn rot90_filters<T: Real>(f: &FilterBank<T>, quarter_turns: i32) -> FilterBank<T> {
    let q = quarter_turns.rem_euclid(4) as usize;
    let k = f.k();
    let mut out = f.zeros_like();
    let mut buf = Vec::with_capacity(k * k);
    for o in 0..f.out_channels() {
        for c in 0..f.in_channels() {
            rotate_plane(f.kernel(o, c), k, k, q, &mut buf);
            out.kernel_mut(o, c).copy_from_slice(&buf);
        }
    }
    out
}

/// Mean over each `h × w` plane; output is `n × c × 1 × 1`.
pub fn global_avg_pool<T: Real>(t: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, _, _] = t.dims();
    let scale = T::lit(t.plane_len() as f64);
    let mut out = Tensor4::zeros(n, c, 1, 1);
    for b in 0..n {
        for ch in 0..c {
            let sum: T = t.plane(b, ch).iter().copied().sum();
            out.set(b, ch, 0, 0, sum / scale);
        }
    }
    out
}

/// Spreads `grad_out[n,c]` evenly over an `h × w` plane.
pub fn global_avg_pool_backward<T: Real>(grad_out: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let [n, c, _, _] = grad_out.dims();
    let scale = T::lit((h * w) as f64);
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.get(b, ch, 0, 0) / scale;
            out.plane_mut(b, ch).fill(g);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_turns_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = Tensor4::<f64>::random([2, 3, 4, 5], 1.0, &mut rng);
        assert_eq!(rot90(&t, 0), t);
    }

    #[test]
    fn one_turn_is_counter_clockwise() {
        let t = Tensor4::from_vec([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(rot90(&t, 1).data(), &[2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn non_square_swaps_dims() {
        let t = Tensor4::from_vec([1, 1, 2, 3], vec![1.0f64, 2., 3., 4., 5., 6.]).unwrap();
        let r = rot90(&t, 1);
        assert_eq!(r.dims(), [1, 1, 3, 2]);
        // [[1,2,3],[4,5,6]] rotated CCW is [[3,6],[2,5],[1,4]]
        assert_eq!(r.data(), &[3., 6., 2., 5., 1., 4.]);
        assert_eq!(rot90(&t, -1), rot90(&t, 3));
    }

    #[test]
    fn mean_pool_examples() {
        let t = Tensor4::from_vec([1, 1, 2, 2], vec![1.0f64, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(global_avg_pool(&t).data(), &[4.0]);
        let c = Tensor4::filled([2, 2, 3, 3], 2.5f64);
        assert!(global_avg_pool(&c).data().iter().all(|&v| v == 2.5));
    }

    proptest! {
        #[test]
        fn rotations_form_z4(n in 1usize..3, c in 1usize..3, h in 1usize..6, w in 1usize..6,
                             a in 0i32..4, b in 0i32..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor4::<f64>::random([n, c, h, w], 1.0, &mut rng);
            prop_assert_eq!(rot90(&rot90(&t, a), b), rot90(&t, (a + b) % 4));
            let mut four = t.clone();
            for _ in 0..4 {
                four = rot90(&four, 1);
            }
            prop_assert_eq!(four, t);
        }

        #[test]
        fn mean_pool_ignores_rotation(h in 1usize..7, q in 0i32..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor4::<f64>::random([2, 3, h, h], 1.0, &mut rng);
            let d = global_avg_pool(&rot90(&t, q)).max_abs_diff(&global_avg_pool(&t));
            prop_assert!(d <= 1e-12);
        }
    }

    #[test]
    fn filter_rotation_matches_tensor_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FilterBank::<f64>::random(2, 3, 5, 1.0, &mut rng);
        let as_tensor = Tensor4::from_vec([2, 3, 5, 5], f.data().to_vec()).unwrap();
        for q in 0..4 {
            assert_eq!(rot90_filters(&f, q).data(), rot90(&as_tensor, q).data());
        }
    }
}
