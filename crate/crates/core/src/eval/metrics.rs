use super::EvalError;
use crate::labels::Rel3;

/// F1 of each class; a zero denominator yields 0.
pub fn per_class_f1(preds: &[Rel3], golds: &[Rel3]) -> Result<[f64; 3], EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tp = [0usize; 3];
    let mut fp = [0usize; 3];
    let mut fn_ = [0usize; 3];
    for (p, g) in preds.iter().zip(golds) {
        if p == g {
            tp[p.index()] += 1;
        } else {
            fp[p.index()] += 1;
            fn_[g.index()] += 1;
        }
    }
    // F1 = 2TP / (2TP + FP + FN), which is 0 whenever precision or recall is.
    Ok(std::array::from_fn(|c| {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom == 0 {
            0.0
        } else {
            (2 * tp[c]) as f64 / denom as f64
        }
    }))
}

pub fn macro_f1(preds: &[Rel3], golds: &[Rel3]) -> Result<f64, EvalError> {
    let f = per_class_f1(preds, golds)?;
    Ok((f[0] + f[1] + f[2]) / 3.0)
}

/// Sample Pearson correlation from a single streaming pass. Zero variance
/// in either input gives 0.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewRows {
            needed: 2,
            found: a.len(),
        });
    }
    let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - ma;
        let dy = y - mb;
        ma += dx / n;
        mb += dy / n;
        saa += dx * (x - ma);
        sbb += dy * (y - mb);
        sab += dx * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Rel3::{Complementary as C, Substitute as S, Unrelated as U};

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&[C, S, U], &[C, S, U]).unwrap(), 1.0);
        let v = macro_f1(&[C, S, S, U], &[C, C, S, U]).unwrap();
        assert!((v - 7.0 / 9.0).abs() < 1e-15);
        assert!((macro_f1(&[U; 4], &[U; 4]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_f1(&[], &[]), Err(EvalError::Empty));
        assert!(matches!(macro_f1(&[C], &[C, S]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn all_unrelated_on_balanced_golds() {
        let golds = [C, C, S, S, U, U];
        assert!((macro_f1(&[U; 6], &golds).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&[1.0, 0.0, 1.0, 0.0], &[1.0, 1.0, 0.0, 0.0]).unwrap().abs() < 1e-15);
        assert_eq!(pearson(&[2.0, 2.0, 2.0], &[1.0, 5.0, 3.0]).unwrap(), 0.0);
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }
}
