use super::{wrong_variant, Construction, EvalResult, TaskSpec};
use crate::scalar::Scalar;

/// Circle packing in the unit square.
///
/// Containment and non-overlap are checked with an absolute slack of
/// `spec.tolerance` so that tangent circles pass. The raw score is the sum of
/// radii, accumulated in sorted order so it does not depend on circle order.
pub fn eval_cp<T: Scalar>(c: &Construction<T>, spec: &TaskSpec<T>) -> EvalResult<T> {
    let Construction::Cp { circles } = c else {
        return wrong_variant(c, spec);
    };
    if circles.len() != spec.count {
        return EvalResult::invalid(format!(
            "wrong cardinality: {} circles (expected {})",
            circles.len(),
            spec.count
        ));
    }
    let tol = spec.tolerance;
    let one = T::one();
    for (i, c) in circles.iter().enumerate() {
        if !(c.x.is_finite() && c.y.is_finite() && c.r.is_finite()) {
            return EvalResult::invalid(format!("circle {i} has non-finite data"));
        }
        if c.r <= T::zero() {
            return EvalResult::invalid(format!("circle {i} has non-positive radius"));
        }
        let inside = c.x >= c.r - tol && c.x <= one - c.r + tol && c.y >= c.r - tol && c.y <= one - c.r + tol;
        if !inside {
            return EvalResult::invalid(format!("circle {i} leaves the unit square"));
        }
    }
    for i in 0..circles.len() {
        for j in (i + 1)..circles.len() {
            let (a, b) = (circles[i], circles[j]);
            let dist = (a.x - b.x).hypot(a.y - b.y);
            if dist < a.r + b.r - tol {
                return EvalResult::invalid(format!("circles {i} and {j} overlap"));
            }
        }
    }
    let mut radii: Vec<T> = circles.iter().map(|c| c.r).collect();
    radii.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    EvalResult::scored(radii.into_iter().sum(), spec)
}
