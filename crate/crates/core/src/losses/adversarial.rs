use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};

fn check_score(s: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "discriminator score {s} outside (0, 1]"
        )));
    }
    Ok(())
}

/// `(L_G, L_D)` with `L_G = (1 - ln D_fake)^2` and
/// `L_D = (ln D_fake)^2 + (1 - ln D_real)^2`.
pub fn adversarial_losses(score_fake: f64, score_real: f64) -> Result<(f64, f64)> {
    check_score(score_fake)?;
    check_score(score_real)?;
    let lf = score_fake.ln();
    let lr = score_real.ln();
    Ok(((1.0 - lf).powi(2), lf * lf + (1.0 - lr).powi(2)))
}

/// Generator side on the tape.
pub fn generator_adversarial(g: &mut Graph, score_fake: NodeId) -> Result<NodeId> {
    check_score(g.scalar(score_fake)?)?;
    let l = g.log(score_fake)?;
    let r = g.affine(l, -1.0, 1.0)?;
    g.square(r)
}

/// Discriminator side on the tape.
pub fn discriminator_adversarial(g: &mut Graph, score_fake: NodeId, score_real: NodeId) -> Result<NodeId> {
    check_score(g.scalar(score_fake)?)?;
    check_score(g.scalar(score_real)?)?;
    let lf = g.log(score_fake)?;
    let a = g.square(lf)?;
    let lr = g.log(score_real)?;
    let r = g.affine(lr, -1.0, 1.0)?;
    let b = g.square(r)?;
    g.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let (lg, _) = adversarial_losses((-1.0f64).exp(), 0.5).unwrap();
        assert!((lg - 4.0).abs() < 1e-12);
        let (lg, ld) = adversarial_losses(1.0, 1.0).unwrap();
        assert_eq!(lg, 1.0);
        assert_eq!(ld, 1.0);
        assert!(adversarial_losses(0.0, 0.5).is_err());
        assert!(adversarial_losses(0.5, 1.5).is_err());
    }
}
