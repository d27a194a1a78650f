use std::io::Write;

use super::env::{Env, State};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub state: State,
    pub action: Vec<f64>,
    pub reward: f64,
    pub energy: f64,
}

/// Per-step log of a rollout; `action`/`reward` on a row are the ones that
/// produced its state (zero and the state's reward on the first row).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn start(env: &Env, s: &State) -> Self {
        TrajectoryLog {
            rows: vec![TrajectoryRow {
                t: 0.0,
                state: s.clone(),
                action: vec![0.0; env.spec().action_dim()],
                reward: env.reward(s),
                energy: env.total_energy(s),
            }],
        }
    }

    pub fn push(&mut self, env: &Env, s: &State, action: &[f64], reward: f64) {
        let t = self.rows.len() as f64 * env.spec().dt;
        self.rows.push(TrajectoryRow {
            t,
            state: s.clone(),
            action: action.to_vec(),
            reward,
            energy: env.total_energy(s),
        });
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let Some(first) = self.rows.first() else {
            return Ok(());
        };
        let n = first.state.dof();
        let m = first.action.len();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("q{i}")));
        header.extend((0..n).map(|i| format!("qdot{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        header.push("r".into());
        header.push("E".into());
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let mut fields = vec![row.t];
            fields.extend(&row.state.q);
            fields.extend(&row.state.qdot);
            fields.extend(&row.action);
            fields.push(row.reward);
            fields.push(row.energy);
            let line: Vec<String> = fields.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_columns() {
        let env = Env::preset("acrobot").unwrap();
        let s = State::zeros(2);
        let mut log = TrajectoryLog::start(&env, &s);
        let (next, r) = env.step(&s, &[0.5]).unwrap();
        log.push(&env, &next, &[0.5], r);
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,q0,q1,qdot0,qdot1,u0,r,E");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("0.02,"));
    }
}
