//! Turning actor samples into environment actions.

use serde::{Deserialize, Serialize};

use super::action::Grammar;
use super::actor::{ActionSequence, Actor, SampleMode, Sampler};
use crate::baselines::Policy;
use crate::channel::ChannelRealization;
use crate::env::{Action, Env, SchedulingMatrix};
use crate::error::Result;

pub enum Phase<'a> {
    /// Emit the scheduling segment, then RIS and compression.
    Full,
    /// `B` is given: it is fed as context and only RIS and compression are emitted.
    Truncated(&'a SchedulingMatrix),
}

/// Samples one action sequence. `FULL` repairs the decoded schedule in
/// canonical order, since no channel is at hand.
pub fn actor_sample(
    actor: &Actor,
    grammar: &Grammar,
    obs: &[f64],
    phase: Phase<'_>,
    mode: &mut SampleMode<'_>,
) -> Result<ActionSequence> {
    let mut s = actor.sampler(obs)?;
    let b = match phase {
        Phase::Full => {
            let bits = s.sample_n(grammar.schedule_len(), mode)?;
            grammar.decode_schedule(&bits)?.repair(|_| 0.0)
        }
        Phase::Truncated(b) => {
            s.feed_context(&grammar.encode_schedule(b))?;
            b.clone()
        }
    };
    s.sample_n(grammar.truncated_len(b.active_count()), mode)?;
    Ok(s.finish())
}

/// Scheduling segment, decoded and repaired by the current link gains.
pub fn sample_schedule(
    s: &mut Sampler<'_>,
    grammar: &Grammar,
    gains: &ChannelRealization,
    mode: &mut SampleMode<'_>,
) -> Result<(SchedulingMatrix, SchedulingMatrix)> {
    let bits = s.sample_n(grammar.schedule_len(), mode)?;
    let raw = grammar.decode_schedule(&bits)?;
    let repaired = raw.repair(|l| gains.gain(l.tx, l.rx, l.band).norm_sqr());
    Ok((raw, repaired))
}

/// RIS and compression segments for a settled `b`; `context` feeds `b` first.
pub fn sample_remainder(
    s: &mut Sampler<'_>,
    grammar: &Grammar,
    b: &SchedulingMatrix,
    previous: &Action,
    context: bool,
    mode: &mut SampleMode<'_>,
) -> Result<Action> {
    if context {
        s.feed_context(&grammar.encode_schedule(b))?;
    }
    let links = b.active_count();
    let ris = s.sample_n(grammar.ris_len(), mode)?;
    let betas = s.sample_n(3 * grammar.beta_groups(links), mode)?;
    Ok(Action {
        schedule: b.clone(),
        phi: grammar.apply_toggles(&previous.phi, &ris)?,
        betas: grammar.decode_betas(&betas, links)?,
    })
}

/// How the trainer lays out a step's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    /// Feed the repaired schedule back as context before the remainder.
    pub context: bool,
}

/// Full decision for the environment's current state, with a hook that runs
/// once the schedule is settled (cache lookup during training).
pub fn decide<F>(
    actor: &Actor,
    grammar: &Grammar,
    layout: Layout,
    env: &Env,
    mode: &mut SampleMode<'_>,
    on_schedule: F,
) -> Result<(Action, ActionSequence)>
where
    F: FnOnce(&SchedulingMatrix) -> Result<()>,
{
    let obs = env.observation().features;
    let mut s = actor.sampler(&obs)?;
    let (_, b) = sample_schedule(&mut s, grammar, env.current_gains(), mode)?;
    on_schedule(&b)?;
    let action = sample_remainder(&mut s, grammar, &b, env.last_action(), layout.context, mode)?;
    Ok((action, s.finish()))
}

/// Greedy decoding of a trained actor.
pub struct ActorPolicy {
    pub actor: Actor,
    pub grammar: Grammar,
    pub layout: Layout,
}

impl Policy for ActorPolicy {
    fn act(&mut self, env: &Env) -> Result<Action> {
        let (a, _) = decide(&self.actor, &self.grammar, self.layout, env, &mut SampleMode::Greedy, |_| Ok(()))?;
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Link;
    use crate::scenario::Scenario;
    use crate::seed;
    use crate::tdrl::actor::ActorConfig;

    fn setup() -> (Env, Grammar, Actor) {
        let env = Env::new(&Scenario::default(), 1).unwrap();
        let m = env.model();
        let g = Grammar::new(m.users, m.bands, m.elements, 4);
        let len = 2 * g.schedule_len() + g.ris_len() + 3 * g.max_links();
        let mut rng = seed::rng(1, &[]);
        let a = Actor::new(m.observation_dim(), len, ActorConfig::default(), &mut rng);
        (env, g, a)
    }

    #[test]
    fn truncated_lengths() {
        let (env, g, a) = setup();
        let obs = env.observation().features;
        let b = SchedulingMatrix::from_links(3, 2, &[Link { tx: 0, rx: 2, band: 1 }]).unwrap();
        let t = actor_sample(&a, &g, &obs, Phase::Truncated(&b), &mut SampleMode::Greedy).unwrap();
        assert_eq!(t.emitted_len(), 4 * 5 + 3);
        assert_eq!(t.len(), t.emitted_len() + g.schedule_len());
        let mut rng = seed::rng(3, &[]);
        for _ in 0..20 {
            let f = actor_sample(&a, &g, &obs, Phase::Full, &mut SampleMode::Stochastic(&mut rng)).unwrap();
            let b = g.decode_schedule(&f.tokens[..g.schedule_len()]).unwrap().repair(|_| 0.0);
            let t = actor_sample(&a, &g, &obs, Phase::Truncated(&b), &mut SampleMode::Stochastic(&mut rng)).unwrap();
            assert_eq!(f.emitted_len() - t.emitted_len(), g.schedule_len());
        }
    }

    #[test]
    fn greedy_decisions_repeat_and_are_valid() {
        let (env, g, a) = setup();
        let layout = Layout { context: true };
        let run = || decide(&a, &g, layout, &env, &mut SampleMode::Greedy, |_| Ok(())).unwrap();
        let (x, sx) = run();
        let (y, sy) = run();
        assert_eq!(x, y);
        assert_eq!(sx, sy);
        assert!(x.schedule.is_valid());
        assert_eq!(x.betas.len(), x.schedule.active_count());
    }
}
