use lagrl_autodiff::{Activation, Checkpoint, Layer, MlpParams};

use super::dnn::DnnModel;
use super::dynamics::Dynamics;
use super::lnn::LnnModel;
use super::normalize::Normalizer;
use super::reward::RewardModel;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelMeta {
    pub env: String,
    pub config_hash: String,
    pub step: u64,
}

pub fn put_mlp(ck: &mut Checkpoint, prefix: &str, net: &MlpParams) {
    for (name, t) in net.named_tensors(prefix) {
        ck.insert(name, t.clone());
    }
    ck.set_meta(format!("{prefix}.activation"), net.activation.name());
}

pub fn get_mlp(ck: &Checkpoint, prefix: &str) -> Result<MlpParams> {
    let act = ck
        .meta(&format!("{prefix}.activation"))
        .ok_or_else(|| Error::Config(format!("checkpoint lacks network `{prefix}`")))?;
    let activation =
        Activation::from_name(act).ok_or_else(|| Error::Config(format!("unknown activation `{act}` for `{prefix}`")))?;
    let mut layers = Vec::new();
    while let Ok(weight) = ck.get(&format!("{prefix}.layer{}.weight", layers.len())) {
        let bias = ck.get(&format!("{prefix}.layer{}.bias", layers.len()))?;
        layers.push(Layer {
            weight: weight.clone(),
            bias: bias.clone(),
        });
    }
    Ok(MlpParams::from_layers(layers, activation)?)
}

pub fn put_norm(ck: &mut Checkpoint, prefix: &str, norm: &Option<Normalizer>) {
    if let Some(n) = norm {
        ck.insert(format!("{prefix}.mean"), n.mean.clone());
        ck.insert(format!("{prefix}.std"), n.std.clone());
    }
}

pub fn get_norm(ck: &Checkpoint, prefix: &str) -> Result<Option<Normalizer>> {
    match ck.get(&format!("{prefix}.mean")) {
        Err(_) => Ok(None),
        Ok(mean) => Ok(Some(Normalizer {
            mean: mean.clone(),
            std: ck.get(&format!("{prefix}.std"))?.clone(),
        })),
    }
}

/// Adds the dynamics and reward models, plus their metadata, to `ck`.
pub fn save_models(ck: &mut Checkpoint, dynamics: &Dynamics, reward: &RewardModel, meta: &ModelMeta) -> Result<()> {
    ck.set_meta("env", meta.env.clone());
    ck.set_meta("config_hash", meta.config_hash.clone());
    ck.set_meta("step", meta.step.to_string());
    ck.set_meta("model", dynamics.name());
    match dynamics {
        Dynamics::Dnn(m) => {
            put_mlp(ck, "dynamics.dnn", &m.net);
            ck.set_meta("dynamics.residual", m.residual.to_string());
            put_norm(ck, "dynamics.norm", &m.input_norm);
        }
        Dynamics::Lnn(m) => {
            put_mlp(ck, "dynamics.lnn_l", &m.l_net);
            put_mlp(ck, "dynamics.lnn_v", &m.v_net);
            ck.set_meta("dynamics.eps", format!("{:e}", m.eps));
            put_norm(ck, "dynamics.norm", &m.q_norm);
        }
        Dynamics::Oracle(_) => {
            return Err(Error::Contract("the oracle model has no parameters to checkpoint".into()));
        }
    }
    put_mlp(ck, "reward", &reward.net);
    put_norm(ck, "reward.norm", &reward.input_norm);
    Ok(())
}

pub fn load_models(ck: &Checkpoint) -> Result<(Dynamics, RewardModel, ModelMeta)> {
    let meta = ModelMeta {
        env: ck.meta("env").unwrap_or_default().to_string(),
        config_hash: ck.meta("config_hash").unwrap_or_default().to_string(),
        step: ck.meta("step").and_then(|s| s.parse().ok()).unwrap_or(0),
    };
    let dynamics = match ck.meta("model") {
        Some("dnn") => {
            let residual = ck.meta("dynamics.residual") == Some("true");
            let mut m = DnnModel::from_params(get_mlp(ck, "dynamics.dnn")?, residual)?;
            m.input_norm = get_norm(ck, "dynamics.norm")?;
            Dynamics::Dnn(m)
        }
        Some("lnn") => {
            let eps = ck
                .meta("dynamics.eps")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config("checkpoint lacks dynamics.eps".into()))?;
            let mut m = LnnModel::from_params(get_mlp(ck, "dynamics.lnn_l")?, get_mlp(ck, "dynamics.lnn_v")?, eps)?;
            m.q_norm = get_norm(ck, "dynamics.norm")?;
            Dynamics::Lnn(m)
        }
        other => return Err(Error::Config(format!("checkpoint has no dynamics model (model = {other:?})"))),
    };
    let reward = RewardModel {
        net: get_mlp(ck, "reward")?,
        input_norm: get_norm(ck, "reward.norm")?,
    };
    Ok((dynamics, reward, meta))
}
