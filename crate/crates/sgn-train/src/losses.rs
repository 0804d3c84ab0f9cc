//! Scalar and in-graph forms of the adversarial and perceptual objectives.

use sgn_nets::{Graph, Var};

use crate::error::{Result, TrainError};

/// Floor applied to every log argument.
pub const SCORE_EPS: f64 = 1e-7;

fn check_score(name: &str, s: f64) -> Result<f64> {
    if s.is_finite() {
        Ok(s)
    } else {
        Err(TrainError::Divergence { iteration: 0, what: name.to_string(), value: s, dump: None })
    }
}

fn safe_ln(v: f64) -> f64 {
    v.clamp(SCORE_EPS, 1.0).ln()
}

/// `−(ln D(x,a,S) + ln(1 − D(x_g,a,S)) + ln(1 − D(x,a′,S′)))`.
pub fn discriminator_loss(score_real: f64, score_fake: f64, score_mismatch: f64) -> Result<f64> {
    let r = check_score("score_real", score_real)?;
    let f = check_score("score_fake", score_fake)?;
    let m = check_score("score_mismatch", score_mismatch)?;
    Ok(-(safe_ln(r) + safe_ln(1.0 - f) + safe_ln(1.0 - m)))
}

/// `Σ_k −ln D_k(x_g) + λ·perceptual`.
pub fn generator_loss(fake_scores: &[f64], perceptual: f64, lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(TrainError::Config(format!("λ must be non-negative, got {lambda}")));
    }
    let mut adv = 0.0;
    for &s in fake_scores {
        adv -= safe_ln(check_score("score_fake", s)?);
    }
    Ok(adv + lambda * check_score("perceptual", perceptual)?)
}

/// Mean squared difference of two feature vectors.
pub fn feature_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(TrainError::Shape(format!("feature lengths {} and {} differ or are empty", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `ln(clamp(v, ε, 1))`.
fn graph_safe_ln(g: &mut Graph, v: Var) -> Var {
    let c = g.clamp(v, SCORE_EPS, 1.0);
    g.ln(c)
}

/// Batch mean of the discriminator loss over `[N, 1]` score nodes.
pub fn discriminator_loss_graph(g: &mut Graph, real: Var, fake: Var, mismatch: Var) -> Var {
    let lr = graph_safe_ln(g, real);
    let one_f = g.one_minus(fake);
    let lf = graph_safe_ln(g, one_f);
    let one_m = g.one_minus(mismatch);
    let lm = graph_safe_ln(g, one_m);
    let s = g.add(lr, lf);
    let s = g.add(s, lm);
    let m = g.mean_all(s);
    g.scale(m, -1.0)
}

/// `−ln D(x_g)` averaged over the batch for one scale.
pub fn generator_adversarial_graph(g: &mut Graph, fake: Var) -> Var {
    let l = graph_safe_ln(g, fake);
    let m = g.mean_all(l);
    g.scale(m, -1.0)
}

/// Mean squared difference of two feature nodes.
pub fn perceptual_graph(g: &mut Graph, real: Var, fake: Var) -> Var {
    let d = g.sub(real, fake);
    let sq = g.square(d);
    g.mean_all(sq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((discriminator_loss(0.5, 0.5, 0.5).unwrap() - 3.0 * ln2).abs() < 1e-12);
        assert!((generator_loss(&[0.5; 3], 0.0, 10.0).unwrap() - 3.0 * ln2).abs() < 1e-12);
        assert!((generator_loss(&[0.5; 3], 0.1, 10.0).unwrap() - (3.0 * ln2 + 1.0)).abs() < 1e-12);
        let direct = -(0.9f64.ln() + 0.8f64.ln() + 0.9f64.ln());
        assert!((discriminator_loss(0.9, 0.2, 0.1).unwrap() - direct).abs() < 1e-12);
        assert!((direct - 0.4338).abs() < 1e-4);
    }

    #[test]
    fn perfect_discriminator_limit() {
        let e = SCORE_EPS;
        let l = discriminator_loss(1.0 - e, e, e).unwrap();
        assert!(l > 0.0 && (l - 3.0 * e).abs() < 1e-12);
        assert!(discriminator_loss(1.0, 0.0, 0.0).unwrap().is_finite());
        assert!(generator_loss(&[0.0, 0.0, 0.0], 0.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(discriminator_loss(f64::NAN, 0.5, 0.5), Err(TrainError::Divergence { .. })));
        assert!(generator_loss(&[0.5], f64::INFINITY, 1.0).is_err());
        assert!(generator_loss(&[0.5], 0.0, -1.0).is_err());
    }

    #[test]
    fn feature_distance_convention() {
        assert_eq!(feature_distance(&[1.0, 2.0], &[3.0, 2.0]).unwrap(), 2.0);
        assert_eq!(feature_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(feature_distance(&[1.0], &[1.0, 2.0]).is_err());
    }
}
