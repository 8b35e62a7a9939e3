//! Large-sample versions of the randomized acceptance checks. A single
//! 3-sigma or level-0.01 check can fail by chance at any fixed seed; these
//! look at the whole distribution instead.

use discforge::discrepancy::{coupling_from_signing, disc_bruteforce, disc_g_mc};
use discforge::kernel::{slice_sample, SliceSpec};
use discforge::linalg::{dot, norm2, Matrix, RngHandle};
use discforge::stats::{mean_and_se, normal_ks, sign_test_p_value};

#[test]
fn rank_one_coupling_z_scores_are_standard_normal() {
    let mut rng = RngHandle::new(77, 0);
    let zs: Vec<f64> = (0..200u64)
        .map(|k| {
            let a = Matrix::from_vec(4, 8, rng.normals(32)).unwrap();
            let (disc, sigma) = disc_bruteforce(&a).unwrap();
            let est = disc_g_mc(&a, &coupling_from_signing(&sigma).unwrap(), 50_000, &rng.split(k)).unwrap();
            (est.mean - (2.0 / std::f64::consts::PI).sqrt() * disc) / est.std_error
        })
        .collect();
    assert!(normal_ks(&zs, 1.0, 0.001).unwrap().pass);
    let (m, se) = mean_and_se(&zs);
    assert!(m.abs() < 4.0 * se);
}

#[test]
fn slice_direction_is_symmetric() {
    for r in [3usize, 8] {
        let mut rng = RngHandle::new(78, r as u64);
        let n = 100_000;
        let mut positive = 0;
        let mut coords = Vec::with_capacity(n);
        for _ in 0..n {
            let t = 2.0 * rng.uniform() + 1e-3;
            let x: Vec<f64> = rng.unit_vector(r).into_iter().map(|v| v * t).collect();
            let (lo, hi) = ((t - 1.0f64).abs(), t + 1.0);
            let s = lo + (hi - lo) * (0.001 + 0.998 * rng.uniform());
            let y = slice_sample(&SliceSpec { x: x.clone(), s }, &mut rng).unwrap();
            let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let xh: Vec<f64> = x.iter().map(|v| v / t).collect();
            // e_1 projected onto x^⊥
            let mut b: Vec<f64> = xh.iter().map(|h| -xh[0] * h).collect();
            b[0] += 1.0;
            let nb = norm2(&b);
            let c1 = dot(&d, &b) / nb;
            if c1 > 0.0 {
                positive += 1;
            }
            let perp = (1.0 - dot(&d, &xh).powi(2)).max(0.0).sqrt();
            if perp > 1e-6 {
                coords.push(c1 / perp);
            }
        }
        assert!(sign_test_p_value(positive, n) > 0.001, "r = {r}");
        let (m, se) = mean_and_se(&coords);
        assert!(m.abs() < 4.0 * se, "r = {r}: {m} ± {se}");
    }
}
