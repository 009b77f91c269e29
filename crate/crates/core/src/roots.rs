//! Scalar root finding and minimization on brackets.

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent–Dekker root finder on `[a, b]` with `f(a)`, `f(b)` of opposite sign.
///
/// Terminates when the bracket is narrower than `xtol` (absolute, plus a
/// few ulps of the iterate) or an exact zero is hit.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let fa = f(a);
    let fb = f(b);
    brent_with(f, a, b, fa, fb, xtol)
}

/// As [`brent`], reusing already-known endpoint values.
pub fn brent_with<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NotBracketed(format!(
            "f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::NotBracketed(format!("non-finite value at {b}")));
        }
    }
    Ok(b)
}

/// Plain bisection down to `xtol`, used where the function is only
/// piecewise smooth (e.g. shooting residuals with adaptive steps).
pub fn bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !(fa.is_finite() && fb.is_finite()) {
        return Err(Error::NotBracketed(format!("f({a}) = {fa}, f({b}) = {fb}")));
    }
    while (b - a).abs() > xtol {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Brent's minimizer (golden section with parabolic steps) on `[a, b]`.
///
/// Returns `(x, f(x))` of a local minimum to absolute tolerance `xtol`.
pub fn minimize<F>(mut f: F, a: f64, b: f64, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = f64::EPSILON * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Roots of `f` on a sorted grid: sign changes are polished by Brent, and
/// interior local extrema of `|f|` that do not change sign are inspected
/// by a minimization so that root pairs inside one cell are not lost.
///
/// `values[i]` must equal `f(grid[i])`; `None` marks points where `f` is
/// undefined, which split the grid.
pub fn grid_roots<F>(mut f: F, grid: &[f64], values: &[Option<f64>], xtol: f64) -> Vec<GridRoot>
where
    F: FnMut(f64) -> Option<f64>,
{
    debug_assert_eq!(grid.len(), values.len());
    let mut roots = Vec::new();
    let n = grid.len();
    for i in 0..n.saturating_sub(1) {
        let (Some(fa), Some(fb)) = (values[i], values[i + 1]) else {
            continue;
        };
        if fa == 0.0 {
            roots.push(GridRoot { x: grid[i], double: false });
            continue;
        }
        if fa.signum() != fb.signum() && fb != 0.0 {
            let g = |x: f64| f(x).unwrap_or(f64::NAN);
            if let Ok(x) = brent_with(g, grid[i], grid[i + 1], fa, fb, xtol) {
                roots.push(GridRoot { x, double: false });
            }
        }
    }
    if let (Some(Some(last)), Some(&x)) = (values.last(), grid.last()) {
        if *last == 0.0 {
            roots.push(GridRoot { x, double: false });
        }
    }
    // extrema of |f| without a sign change on either side
    for i in 1..n.saturating_sub(1) {
        let (Some(f0), Some(f1), Some(f2)) = (values[i - 1], values[i], values[i + 1]) else {
            continue;
        };
        if f0 == 0.0 || f1 == 0.0 || f2 == 0.0 {
            continue;
        }
        if f0.signum() != f1.signum() || f1.signum() != f2.signum() {
            continue;
        }
        if !(f1.abs() <= f0.abs() && f1.abs() <= f2.abs()) {
            continue;
        }
        let s = f1.signum();
        let (xe, fe) = minimize(
            |x| f(x).map(|v| s * v).unwrap_or(f64::INFINITY),
            grid[i - 1],
            grid[i + 1],
            xtol.max(1e-15 * grid[i].abs()),
        );
        let fe = s * fe;
        if fe.signum() == s && fe != 0.0 {
            continue;
        }
        if fe == 0.0 || (xe - grid[i - 1]).abs() < xtol || (grid[i + 1] - xe).abs() < xtol {
            roots.push(GridRoot { x: xe, double: true });
            continue;
        }
        let g = |x: f64| f(x).unwrap_or(f64::NAN);
        let left = brent_with(g, grid[i - 1], xe, f0, fe, xtol);
        let g = |x: f64| f(x).unwrap_or(f64::NAN);
        let right = brent_with(g, xe, grid[i + 1], fe, f2, xtol);
        for x in [left, right].into_iter().flatten() {
            roots.push(GridRoot { x, double: false });
        }
    }
    roots.sort_by(|a, b| a.x.total_cmp(&b.x));
    roots.dedup_by(|a, b| (a.x - b.x).abs() <= xtol);
    roots
}

/// A root located by [`grid_roots`]; `double` marks a touching zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRoot {
    pub x: f64,
    pub double: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| x * x * x - 2.0 * x - 5.0, 2.0, 3.0, 1e-15).unwrap();
        assert!((r - 2.094_551_481_542_326_5).abs() < 1e-14);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        assert!(matches!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12), Err(Error::NotBracketed(_))));
    }

    #[test]
    fn bisection_converges() {
        let r = bisect(|x| x.cos() - x, 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 0.739_085_133_215_160_6).abs() < 1e-13);
    }

    #[test]
    fn minimizer_on_parabola_and_quartic() {
        let (x, fx) = minimize(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-15);
        let (x, _) = minimize(|x| (x - 1.1).powi(4) - x, 0.0, 3.0, 1e-10);
        // minimum of (x-1.1)^4 - x at 4(x-1.1)^3 = 1
        assert!((x - (1.1 + 0.25f64.cbrt())).abs() < 1e-7);
    }

    #[test]
    fn grid_roots_catches_pair_inside_cell() {
        // two roots 1e-4 apart, grid spacing 0.1
        let f = |x: f64| Some((x - 0.5) * (x - 0.5) - 2.5e-9);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let values: Vec<_> = grid.iter().map(|&x| f(x)).collect();
        let roots = grid_roots(f, &grid, &values, 1e-14);
        assert_eq!(roots.len(), 2);
        assert!((roots[0].x - (0.5 - 5e-5)).abs() < 1e-12);
        assert!((roots[1].x - (0.5 + 5e-5)).abs() < 1e-12);
    }

    #[test]
    fn grid_roots_plain_sign_changes() {
        let f = |x: f64| Some(x.sin());
        let grid: Vec<f64> = (0..=100).map(|i| 0.05 + i as f64 * 0.1).collect();
        let values: Vec<_> = grid.iter().map(|&x| f(x)).collect();
        let roots = grid_roots(f, &grid, &values, 1e-14);
        assert_eq!(roots.len(), 3);
        for (k, r) in roots.iter().enumerate() {
            assert!((r.x - (k as f64 + 1.0) * std::f64::consts::PI).abs() < 1e-12);
        }
    }
}
