//! The binary-token actor: one full sequence, and the truncated sequence that
//! conditions on a known schedule.
use ris_semopt::env::Env;
use ris_semopt::scenario::Scenario;
use ris_semopt::seed;
use ris_semopt::tdrl::{actor_sample, Actor, ActorConfig, Grammar, Phase, SampleMode};

fn main() -> ris_semopt::Result<()> {
    let env = Env::new(&Scenario::default(), 2)?;
    let m = env.model();
    let g = Grammar::new(m.users, m.bands, m.elements, 4);
    println!(
        "segments: schedule {} bits, RIS {} bits, {} bits per link",
        g.schedule_len(),
        g.ris_len(),
        ris_semopt::tdrl::BETA_BITS
    );

    let mut rng = seed::rng(2, &[1]);
    let capacity = 2 * g.schedule_len() + g.ris_len() + 3 * g.max_links();
    let actor = Actor::new(m.observation_dim(), capacity, ActorConfig::default(), &mut rng);
    let obs = env.observation().features;

    let full = actor_sample(&actor, &g, &obs, Phase::Full, &mut SampleMode::Stochastic(&mut rng))?;
    let bits: String = full.tokens.iter().map(|t| char::from(b'0' + t)).collect();
    println!("full      {:>2} tokens  {bits}  log p {:.2}", full.emitted_len(), full.log_prob());

    let b = g.decode_schedule(&full.tokens[..g.schedule_len()])?.repair(|_| 0.0);
    println!("schedule  {:?}", b.links());
    let t = actor_sample(&actor, &g, &obs, Phase::Truncated(&b), &mut SampleMode::Greedy)?;
    println!(
        "truncated {:>2} tokens emitted after {} context tokens",
        t.emitted_len(),
        t.len() - t.emitted_len()
    );
    Ok(())
}
