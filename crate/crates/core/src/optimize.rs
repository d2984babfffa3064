//! One-dimensional bracketed maximisation.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximiser of `f` on `[lo, hi]`, to absolute tolerance `tol`.
///
/// Returns the maximiser and the objective value there. A non-finite
/// objective value anywhere along the search is an error.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::Argument(format!("empty bracket [{lo}, {hi}]")));
    }
    let mut eval = |t: f64| -> Result<f64> {
        let v = f(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical(format!("objective is not finite at {t}")))
        }
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    let t = 0.5 * (a + b);
    let ft = eval(t)?;
    // the interior probes can beat the midpoint on flat objectives
    let best = [(t, ft), (c, fc), (d, fd)]
        .into_iter()
        .fold((t, ft), |acc, p| if p.1 > acc.1 { p } else { acc });
    Ok(best)
}

/// Grid scan over `points` equally spaced values followed by golden-section refinement
/// in the cells adjacent to the best grid point.
pub fn scan_then_refine<F>(mut f: F, lo: f64, hi: f64, points: usize, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::Argument(format!("empty bracket [{lo}, {hi}]")));
    }
    let points = points.max(3);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..points {
        let t = if i == points - 1 { hi } else { lo + step * i as f64 };
        let v = f(t);
        if !v.is_finite() {
            return Err(Error::Numerical(format!("objective is not finite at {t}")));
        }
        if v > best.1 {
            best = (i, v);
        }
    }
    let a = lo + step * best.0.saturating_sub(1) as f64;
    let b = (lo + step * (best.0 + 1) as f64).min(hi);
    golden_section_max(f, a, b, tol)
}
