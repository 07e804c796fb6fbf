use super::{wrong_variant, Construction, EvalResult, TaskSpec};
use crate::scalar::Scalar;

const MAX_SQ_NORM: i128 = 4;
const MIN_SQ_DIST: i128 = 4;

fn sq_norm(v: &[i64]) -> i128 {
    v.iter().fold(0i128, |acc, &x| acc.saturating_add(i128::from(x) * i128::from(x)))
}

fn sq_dist(a: &[i64], b: &[i64]) -> i128 {
    a.iter().zip(b).fold(0i128, |acc, (&x, &y)| {
        let d = i128::from(x) - i128::from(y);
        acc.saturating_add(d * d)
    })
}

/// Kissing-number configuration check in exact integer arithmetic.
///
/// Valid iff every vector is nonzero with squared norm at most 4 and every
/// pair of vectors is at squared distance at least 4. The raw score is the
/// number of vectors.
pub fn eval_kn<T: Scalar>(c: &Construction<T>, spec: &TaskSpec<T>) -> EvalResult<T> {
    let Construction::Kn { vectors } = c else {
        return wrong_variant(c, spec);
    };
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != spec.dim {
            return EvalResult::invalid(format!("vector {i} has dimension {} (expected {})", v.len(), spec.dim));
        }
        let n = sq_norm(v);
        if n == 0 {
            return EvalResult::invalid(format!("vector {i} is zero"));
        }
        if n > MAX_SQ_NORM {
            return EvalResult::invalid(format!("vector {i} has squared norm {n} > {MAX_SQ_NORM}"));
        }
    }
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let d = sq_dist(&vectors[i], &vectors[j]);
            if d < MIN_SQ_DIST {
                let what = if d == 0 { "duplicate vectors" } else { "vectors too close" };
                return EvalResult::invalid(format!("{what}: {i} and {j} at squared distance {d}"));
            }
        }
    }
    EvalResult::scored(T::from_count(vectors.len()), spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_cross(d: usize) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        for i in 0..d {
            for s in [2, -2] {
                let mut v = vec![0; d];
                v[i] = s;
                out.push(v);
            }
        }
        out
    }

    fn kn(vectors: Vec<Vec<i64>>) -> Construction<f64> {
        Construction::Kn { vectors }
    }

    #[test]
    fn signed_axis_vectors_are_valid() {
        let spec = TaskSpec::kissing_number();
        let r = eval_kn(&kn(axis_cross(11)), &spec);
        assert!(r.valid, "{:?}", r.violation);
        assert_eq!(r.s_raw, 22.0);
        assert_eq!(r.s_norm, 22.0 / 593.0);
    }

    #[test]
    fn empty_set_is_vacuously_valid() {
        let r = eval_kn(&kn(vec![]), &TaskSpec::kissing_number());
        assert!(r.valid);
        assert_eq!(r.s_raw, 0.0);
    }

    #[test]
    fn violations() {
        let spec = TaskSpec::kissing_number();
        let mut short = vec![0; 10];
        short[0] = 2;
        assert!(!eval_kn(&kn(vec![short]), &spec).valid);
        assert!(!eval_kn(&kn(vec![vec![0; 11]]), &spec).valid);
        let mut long = vec![0; 11];
        long[0] = 2;
        long[1] = 1;
        assert!(!eval_kn(&kn(vec![long]), &spec).valid);
        let mut a = vec![0; 11];
        a[0] = 2;
        let dup = eval_kn(&kn(vec![a.clone(), a.clone()]), &spec);
        assert!(dup.violation.unwrap().contains("duplicate"));
        let mut b = vec![0; 11];
        b[0] = 1;
        b[1] = 1;
        b[2] = 1;
        b[3] = 1;
        // |a - b|^2 = 1 + 1 + 1 + 1 = 4: allowed
        assert!(eval_kn(&kn(vec![a.clone(), b.clone()]), &spec).valid);
        b[0] = 2;
        b[1] = 0;
        b[2] = 0;
        b[3] = 0;
        b[4] = 0;
        assert!(!eval_kn(&kn(vec![a, b]), &spec).valid);
    }

    #[test]
    fn huge_entries_do_not_overflow() {
        let mut v = vec![0; 11];
        v[0] = i64::MAX;
        v[1] = i64::MIN;
        assert!(!eval_kn(&kn(vec![v]), &TaskSpec::kissing_number()).valid);
    }

    #[test]
    fn sign_flip_preserves_score() {
        let spec = TaskSpec::kissing_number();
        let mut set = axis_cross(11);
        set.truncate(15);
        let flipped: Vec<Vec<i64>> = set.iter().map(|v| v.iter().map(|x| -x).collect()).collect();
        let a = eval_kn(&kn(set), &spec);
        let b = eval_kn(&kn(flipped), &spec);
        assert_eq!(a, b);
    }
}
