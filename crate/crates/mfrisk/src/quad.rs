//! Quadrature and root-finding helpers.
//!
//! Gauss-Hermite rules drive the equilibrium self-consistency integrals,
//! the adaptive Gauss-Kronrod integrator drives the diversity covariance
//! integral, and Brent's method is the scalar root finder used by the
//! critical-noise and shooting searches.

use std::sync::OnceLock;

use crate::{Error, Result};

// ==================== Gauss-Hermite ====================

/// Supported Gauss-Hermite rule sizes, doubled in sequence by callers.
pub const GH_SIZES: [usize; 5] = [64, 128, 256, 512, 1024];

static GH_TABLES: [OnceLock<(Vec<f64>, Vec<f64>)>; 5] = [
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
];

/// Nodes and weights of the n-point Gauss-Hermite rule for weight exp(-x^2).
///
/// n must be one of [`GH_SIZES`]. Tables are computed once and shared.
pub fn gauss_hermite(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    let idx = GH_SIZES
        .iter()
        .position(|&m| m == n)
        .unwrap_or_else(|| panic!("unsupported Gauss-Hermite size {n}"));
    GH_TABLES[idx].get_or_init(|| compute_gauss_hermite(n))
}

/// Orthonormal Hermite values (htilde_{n-1}(x), htilde_n(x)) as mantissas
/// with a shared additive log scale.
///
/// Recurrence: htilde_{k+1} = x sqrt(2/(k+1)) htilde_k - sqrt(k/(k+1)) htilde_{k-1},
/// htilde_0 = pi^{-1/4}. The raw values overflow f64 near the outermost
/// roots of the larger rules, so magnitudes are renormalized into the log
/// scale as they grow; signs and ratios are unaffected.
fn hermite_pair_scaled(n: usize, x: f64) -> (f64, f64, f64) {
    let mut log_scale = 0.0_f64;
    let mut pm = 0.0_f64;
    let mut p = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let kf = k as f64;
        let next = x * (2.0 / (kf + 1.0)).sqrt() * p - (kf / (kf + 1.0)).sqrt() * pm;
        pm = p;
        p = next;
        let mag = p.abs().max(pm.abs());
        if mag > 1e100 {
            p /= mag;
            pm /= mag;
            log_scale += mag.ln();
        }
    }
    (pm, p, log_scale)
}

fn compute_gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2 && n % 2 == 0, "even Gauss-Hermite sizes only, got {n}");
    let nf = n as f64;
    let m = n / 2;
    // Bracket every positive root with a sign scan. The root gaps are
    // smallest at the origin, about pi / sqrt(2n), so a quarter of that
    // step cannot skip a sign change.
    let upper = (2.0 * nf + 1.0).sqrt() + 1.0;
    let step = std::f64::consts::PI / (4.0 * (2.0 * nf).sqrt());
    let value_at = |x: f64| hermite_pair_scaled(n, x).1;
    let mut brackets = Vec::with_capacity(m);
    let mut x0 = 0.0_f64;
    let mut f0 = value_at(x0);
    for j in 1..=(upper / step).ceil() as usize {
        let x1 = j as f64 * step;
        let f1 = value_at(x1);
        if f0 * f1 < 0.0 {
            brackets.push((x0, x1));
        }
        (x0, f0) = (x1, f1);
    }
    assert_eq!(brackets.len(), m, "Gauss-Hermite root scan at size {n}");

    let mut pos_nodes = Vec::with_capacity(m);
    let mut pos_weights = Vec::with_capacity(m);
    for (mut lo, mut hi) in brackets {
        let mut flo = value_at(lo);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let fmid = value_at(mid);
            if flo * fmid <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fmid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..3 {
            // htilde_n'(x) = sqrt(2n) htilde_{n-1}(x); the scale cancels.
            let (pm, p, _) = hermite_pair_scaled(n, z);
            let dp = (2.0 * nf).sqrt() * pm;
            if dp == 0.0 {
                break;
            }
            z -= p / dp;
        }
        let (pm, _, ls) = hermite_pair_scaled(n, z);
        pos_nodes.push(z);
        // w = 1 / (n htilde_{n-1}^2); outermost weights of the big rules
        // underflow to zero, which is their honest f64 value.
        pos_weights.push((-2.0 * ls).exp() / (nf * pm * pm));
    }
    // Mirror into an ascending, exactly symmetric table.
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in (0..m).rev() {
        nodes.push(-pos_nodes[i]);
        weights.push(pos_weights[i]);
    }
    for i in 0..m {
        nodes.push(pos_nodes[i]);
        weights.push(pos_weights[i]);
    }
    (nodes, weights)
}

// ==================== adaptive Gauss-Kronrod 15(7) ====================

const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let fsum = f(c - x) + f(c + x);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Adaptive integral of f over [a, b] to relative tolerance rel_tol.
///
/// Bisects the interval with the largest embedded error estimate until the
/// total estimate falls below rel_tol * |integral| (with a small absolute
/// floor), or fails after 2000 subdivisions.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(&f, a, b);
    let mut segments = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let total: f64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= rel_tol * total.abs() + 1e-300 {
            return Ok(total);
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (sa, sb, _, _) = segments.swap_remove(worst);
        let mid = 0.5 * (sa + sb);
        let (v1, e1) = gk15(&f, sa, mid);
        let (v2, e2) = gk15(&f, mid, sb);
        segments.push((sa, mid, v1, e1));
        segments.push((mid, sb, v2, e2));
    }
    let err: f64 = segments.iter().map(|s| s.3).sum();
    Err(Error::QuadratureNonConvergence(format!(
        "adaptive integrator: error estimate {err:.3e} after 2000 subdivisions"
    )))
}

// ==================== Brent root finder ====================

/// Root of f on the bracketing interval [a, b], |f| driven to machine level.
///
/// Requires f(a) and f(b) of opposite sign.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::BracketNotFound(format!(
            "no sign change on [{a}, {b}]: f = ({fa:.3e}, {fb:.3e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0));
                q = (q0 - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else {
            tol1.copysign(xm)
        };
        fb = f(b);
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(Error::NonConvergence {
        iterations: 200,
        residual: fb.abs(),
    })
}
