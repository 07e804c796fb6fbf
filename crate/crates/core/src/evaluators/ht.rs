use super::{wrong_variant, Construction, EvalResult, Point, TaskSpec};
use crate::scalar::Scalar;

/// Vertices of the unit equilateral triangle `(0,0), (1,0), (1/2, sqrt(3)/2)`.
pub fn triangle_vertices<T: Scalar>() -> [Point<T>; 3] {
    let half = T::lit(0.5);
    [
        Point { x: T::zero(), y: T::zero() },
        Point { x: T::one(), y: T::zero() },
        Point {
            x: half,
            y: T::lit(3.0).sqrt() * half,
        },
    ]
}

/// Barycentric coordinates with respect to [`triangle_vertices`].
fn barycentric<T: Scalar>(p: Point<T>) -> [T; 3] {
    let sqrt3 = T::lit(3.0).sqrt();
    let top = T::lit(2.0) * p.y / sqrt3;
    let right = p.x - p.y / sqrt3;
    [T::one() - right - top, right, top]
}

/// Area of a triangle, computed from a canonical vertex order so that the
/// result does not depend on how the three points are listed.
fn area<T: Scalar>(a: Point<T>, b: Point<T>, c: Point<T>) -> T {
    let mut pts = [a, b, c];
    pts.sort_by(|p, q| {
        p.x.partial_cmp(&q.x)
            .expect("finite")
            .then(p.y.partial_cmp(&q.y).expect("finite"))
    });
    let [p, q, r] = pts;
    let cross = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    cross.abs() / T::lit(2.0)
}

/// Area of the container triangle, `sqrt(3)/4`.
pub fn triangle_area<T: Scalar>() -> T {
    T::lit(3.0).sqrt() / T::lit(4.0)
}

/// Heilbronn triangle problem: the raw score is the smallest area over all
/// point triples, provided every point lies in the triangle.
///
/// Areas are measured in units of the container's area, the scale on which
/// the reference value 0.0365... is stated (the largest achievable absolute
/// area in the side-1 triangle is about 0.0158).
pub fn eval_ht<T: Scalar>(c: &Construction<T>, spec: &TaskSpec<T>) -> EvalResult<T> {
    let Construction::Ht { points } = c else {
        return wrong_variant(c, spec);
    };
    if points.len() != spec.count {
        return EvalResult::invalid(format!(
            "wrong cardinality: {} points (expected {})",
            points.len(),
            spec.count
        ));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return EvalResult::invalid(format!("point {i} is not finite"));
        }
        if barycentric(*p).iter().any(|&l| l < -spec.tolerance) {
            return EvalResult::invalid(format!("point {i} lies outside the triangle"));
        }
    }
    let n = points.len();
    let mut min_area = T::infinity();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                min_area = min_area.min(area(points[i], points[j], points[k]));
            }
        }
    }
    if n < 3 {
        min_area = T::zero();
    }
    EvalResult::scored(min_area / triangle_area(), spec)
}
