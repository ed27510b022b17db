//! Latent feature fusion: the first `m` base groups receive the enhancement
//! groups by element-wise addition, the remaining `n - m` pass through
//! untouched. The result is not re-quantized.

use crate::error::{Error, Result};
use crate::model::LatentGroups;
use crate::tensor::Tensor;

/// `yf_k = y_k + ya_k` for `k < m`, `yf_k = y_k` otherwise.
pub fn fuse_groups(base: &LatentGroups, enh: &LatentGroups) -> Result<LatentGroups> {
    let (n, m) = (base.len(), enh.len());
    if m > n {
        return Err(Error::GroupCount {
            what: "fusion: enhancement groups exceed base groups",
            expected: n,
            actual: m,
        });
    }
    let mut fused = Vec::with_capacity(n);
    for (k, y) in base.groups().iter().enumerate() {
        match enh.groups().get(k) {
            Some(ya) => {
                if !y.same_shape(ya) {
                    return Err(Error::Dimension(format!(
                        "fusion group {k}: base {:?} vs enhancement {:?}",
                        y.shape(),
                        ya.shape()
                    )));
                }
                fused.push(y.zip_map(ya, |a, b| a + b)?);
            }
            None => fused.push(y.clone()),
        }
    }
    let quantized = fused.iter().all(|t: &Tensor| t.data().iter().all(|v| v.fract() == 0.0));
    LatentGroups::new(fused, quantized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::split_groups;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn groups(rows: &[&[f64]]) -> LatentGroups {
        LatentGroups::new(
            rows.iter()
                .map(|r| Tensor::from_vec(r.len(), 1, 1, r.to_vec()).unwrap())
                .collect(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn two_groups_one_enhancement() {
        let fused = fuse_groups(&groups(&[&[1.0, 2.0], &[3.0, 4.0]]), &groups(&[&[10.0, 20.0]])).unwrap();
        assert_eq!(fused.group(0).data(), &[11.0, 22.0]);
        assert_eq!(fused.group(1).data(), &[3.0, 4.0]);
    }

    #[test]
    fn zero_enhancement_is_identity() {
        let base = groups(&[&[1.5, -2.0], &[0.25, 4.0], &[9.0, 1.0]]);
        let zero = groups(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(fuse_groups(&base, &zero).unwrap().groups(), base.groups());
    }

    #[test]
    fn five_three_passes_last_two_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = Tensor::from_fn(10, 2, 2, |_, _, _| rng.gen::<f64>() * 1e3);
        let ya = Tensor::from_fn(6, 2, 2, |_, _, _| rng.gen::<f64>());
        let base = split_groups(&y, 5).unwrap();
        let fused = fuse_groups(&base, &split_groups(&ya, 3).unwrap()).unwrap();
        for k in 3..5 {
            let a: Vec<u64> = fused.group(k).data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = base.group(k).data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_excess_or_misshaped_enhancement() {
        let base = groups(&[&[1.0, 2.0]]);
        assert!(fuse_groups(&base, &groups(&[&[1.0, 1.0], &[1.0, 1.0]])).is_err());
        assert!(fuse_groups(&base, &groups(&[&[1.0, 1.0, 1.0]])).is_err());
    }

    proptest! {
        #[test]
        fn additive_and_linear(n in 1usize..6, m_off in 0usize..6, seed in any::<u64>(), a in -3.0f64..3.0) {
            let m = 1 + m_off % n;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = split_groups(&Tensor::from_fn(2 * n, 2, 3, |_, _, _| rng.gen_range(-5.0..5.0)), n).unwrap();
            let ya = split_groups(&Tensor::from_fn(2 * m, 2, 3, |_, _, _| rng.gen_range(-5.0..5.0)), m).unwrap();
            let zero = split_groups(&Tensor::zeros(2 * m, 2, 3), m).unwrap();
            let f = fuse_groups(&y, &ya).unwrap();
            let f0 = fuse_groups(&y, &zero).unwrap();
            for k in 0..m {
                let diff = f.group(k).zip_map(f0.group(k), |p, q| p - q).unwrap();
                let back = diff.zip_map(ya.group(k), |d, e| d - e).unwrap();
                prop_assert!(back.data().iter().all(|v| v.abs() <= 1e-12));
            }
            // scaling both inputs scales the output
            let scale = |g: &LatentGroups| LatentGroups::new(g.groups().iter().map(|t| t.map(|v| a * v)).collect(), false).unwrap();
            let fs = fuse_groups(&scale(&y), &scale(&ya)).unwrap();
            for k in 0..n {
                let expect = f.group(k).map(|v| a * v);
                prop_assert!(fs.group(k).data().iter().zip(expect.data()).all(|(p, q)| (p - q).abs() <= 1e-9));
            }
        }
    }
}
