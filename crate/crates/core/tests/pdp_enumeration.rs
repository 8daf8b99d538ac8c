mod common;

use common::enumeration::{gibbs_invariance_error, grid, predictive_error};

#[test]
fn predictive_matches_enumeration() {
    for child in grid() {
        for root in grid() {
            for k in 1..=3 {
                let e = predictive_error(child, root, k, 6);
                assert!(e < 1e-9, "{child:?} {root:?} k={k}: {e}");
            }
        }
    }
}

#[test]
fn gibbs_kernel_keeps_the_exact_posterior() {
    for child in grid() {
        for root in grid() {
            for k in 1..=3 {
                for n in 1..=6 {
                    let e = gibbs_invariance_error(child, root, k, n);
                    assert!(e < 1e-9, "{child:?} {root:?} k={k} n={n}: {e}");
                }
            }
        }
    }
}
