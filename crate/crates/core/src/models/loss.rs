use lagrl_autodiff::{Graph, NodeId};

/// `Σ_dims |pred − target|` averaged over rows; angle differences are wrapped.
pub fn l1_state_loss(g: &mut Graph, pred: NodeId, target: NodeId, angle_mask: &[bool]) -> NodeId {
    let rows = g.shape(pred)[0];
    let d = g.sub(pred, target);
    let d = g.wrap_angles(d, angle_mask);
    let a = g.abs(d);
    let s = g.sum(a);
    g.scale(s, 1.0 / rows as f64)
}

/// Mean absolute reward error.
pub fn l1_reward_loss(g: &mut Graph, pred: NodeId, target: NodeId) -> NodeId {
    let d = g.sub(pred, target);
    let a = g.abs(d);
    g.mean(a)
}
