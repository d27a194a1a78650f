use lagrl_autodiff::{Graph, NodeId};

use crate::error::{Error, Result};

/// λ-returns by the backward recursion
/// `R_T = V′(s_T)`, `R_t = r_t + γ((1 − λ)V′(s_{t+1}) + λR_{t+1})`.
///
/// `rewards` has length `T` (reward of the step from `s_t`), `values` has
/// length `T + 1` (`values[0]` is not used). Returns `T + 1` entries.
pub fn lambda_return(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    check(rewards.len(), values.len(), gamma, lambda)?;
    let t_max = rewards.len();
    let mut out = vec![0.0; t_max + 1];
    out[t_max] = values[t_max];
    for t in (0..t_max).rev() {
        out[t] = rewards[t] + gamma * ((1.0 - lambda) * values[t + 1] + lambda * out[t + 1]);
    }
    Ok(out)
}

fn check(t: usize, v: usize, gamma: f64, lambda: f64) -> Result<()> {
    if v != t + 1 {
        return Err(Error::Contract(format!("{t} rewards need {} values, got {v}", t + 1)));
    }
    if !(gamma > 0.0 && gamma <= 1.0) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(format!("need γ ∈ (0,1] and λ ∈ [0,1], got {gamma}, {lambda}")));
    }
    Ok(())
}

/// The same recursion over `B×1` nodes.
pub fn lambda_return_graph(g: &mut Graph, rewards: &[NodeId], values: &[NodeId], gamma: f64, lambda: f64) -> Result<Vec<NodeId>> {
    check(rewards.len(), values.len(), gamma, lambda)?;
    let t_max = rewards.len();
    let mut out = vec![values[t_max]; t_max + 1];
    for t in (0..t_max).rev() {
        let boot = g.scale(values[t + 1], gamma * (1.0 - lambda));
        let next = g.scale(out[t + 1], gamma * lambda);
        let mix = g.add(boot, next);
        out[t] = g.add(rewards[t], mix);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_example() {
        let r = lambda_return(&[1.0, 1.0], &[0.0, 0.5, 2.0], 0.99, 0.95).unwrap();
        assert!((r[1] - 2.98).abs() < 1e-12);
        assert!((r[0] - 3.82744).abs() < 1e-12);
        assert_eq!(r[2], 2.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(lambda_return(&[1.0], &[1.0], 0.9, 0.5).is_err());
    }
}
