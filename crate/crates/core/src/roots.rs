//! Bracketed scalar root finding.

use crate::{Error, Result};

const MAX_ITER: usize = 200;

/// Brent's method on `[a, b]`. `f(a)` and `f(b)` must have opposite signs
/// (or one of them must be zero). Iterates until the bracket is narrower
/// than `xtol` plus a few ulps of the root.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { quantity: "function", lo: a, hi: b });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for _ in 0..MAX_ITER {
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
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::NoConvergence(MAX_ITER))
}

/// Locates every sign change of `f` on the grid `xs` and returns the
/// bracketing pairs `(x_k, x_{k+1})` together with the function values.
/// Points where `f` fails are treated as gaps.
pub(crate) fn scan_sign_changes<F>(mut f: F, xs: &[f64]) -> Vec<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &x in xs {
        match f(x) {
            Ok(v) => {
                if let Some((px, pv)) = prev {
                    if pv == 0.0 || pv.signum() != v.signum() {
                        out.push((px, x));
                    }
                }
                prev = Some((x, v));
            }
            Err(_) => prev = None,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let r = brent(|x| Ok(x * x * x - 2.0), 0.0, 2.0, 0.0).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn finds_transcendental_root() {
        let r = brent(|x| Ok(x.cos() - x), 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 0.739_085_133_215_160_6).abs() < 1e-13);
    }

    #[test]
    fn rejects_unbracketed() {
        let err = brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn endpoint_root_returned() {
        assert_eq!(brent(|x| Ok(x - 1.0), 1.0, 3.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn scan_skips_failures() {
        let xs: Vec<f64> = (0..=10).map(f64::from).collect();
        let brackets = scan_sign_changes(
            |x| if x == 5.0 { Err(Error::Argument("hole".into())) } else { Ok(x - 2.5) },
            &xs,
        );
        assert_eq!(brackets, vec![(2.0, 3.0)]);
    }
}
