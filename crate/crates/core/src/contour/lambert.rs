use crate::error::{Error, Result};

/// Principal branch of the Lambert W function on `[0, ∞)`.
///
/// Halley iteration seeded with `log(1 + x)` below `e` and
/// `log x - log log x` above.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidInput(format!(
            "lambert_w needs x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < std::f64::consts::E {
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.abs() {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}
