// SPDX-License-Identifier: Apache-2.0

/// Euclidean projection of `v` onto `{0 <= alpha <= C, sum y alpha = 0}`.
///
/// The minimizer is `alpha_m = clamp(v_m - lambda y_m, 0, C)` where `lambda`
/// is the root of the nonincreasing piecewise-linear map
/// `h(lambda) = sum y_m clamp(v_m - lambda y_m, 0, C)`. The root is located
/// between sorted breakpoints and then interpolated, which is exact for a
/// piecewise-linear function.
pub fn project_box_hyperplane(v: &[f64], y: &[i8], c: f64, out: &mut [f64]) {
    debug_assert_eq!(v.len(), y.len());
    debug_assert_eq!(v.len(), out.len());

    let h = |lambda: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(&vm, &ym)| {
                let yf = f64::from(ym);
                yf * (vm - lambda * yf).clamp(0.0, c)
            })
            .sum()
    };

    let mut bps: Vec<f64> = Vec::with_capacity(2 * v.len());
    for (&vm, &ym) in v.iter().zip(y) {
        if ym > 0 {
            bps.push(vm - c);
            bps.push(vm);
        } else {
            bps.push(-vm);
            bps.push(c - vm);
        }
    }
    bps.sort_by(f64::total_cmp);
    bps.dedup();

    // h(bps[0]) >= 0 >= h(bps[last]) because both classes saturate outside.
    let (mut lo, mut hi) = (0usize, bps.len() - 1);
    let mut h_lo = h(bps[lo]);
    let mut h_hi = h(bps[hi]);
    let lambda = if h_lo <= 0.0 {
        bps[lo]
    } else if h_hi >= 0.0 {
        bps[hi]
    } else {
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let hm = h(bps[mid]);
            if hm >= 0.0 {
                lo = mid;
                h_lo = hm;
            } else {
                hi = mid;
                h_hi = hm;
            }
        }
        let (a, b) = (bps[lo], bps[hi]);
        if h_lo == h_hi {
            a
        } else {
            a + h_lo * (b - a) / (h_lo - h_hi)
        }
    };

    for ((o, &vm), &ym) in out.iter_mut().zip(v).zip(y) {
        let yf = f64::from(ym);
        *o = (vm - lambda * yf).clamp(0.0, c);
    }
}
