//! Run the scripted coltan dialogue through the agent loop and print every
//! event as it streams.
//!
//! cargo run --example chat_replay

use std::path::Path;
use std::sync::Arc;

use chainsight::agents::{Agent, Session, TurnEvent};
use chainsight::cli::render_event;
use chainsight::config::{process_env, AppConfig};

const QUESTIONS: [&str; 3] = [
    "What is the portfolio's exposure to coltan?",
    "Any recent news on coltan and cobalt supply-chain issues in the DRC?",
    "Which risks does this pose for Apple specifically?",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = AppConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/chainsight.toml"))?;
    let agent = Agent::new(config.backend(process_env)?, Arc::new(config.load_stores()?), config.agent_options());
    let mut session = Session::new("example", config.load_portfolio()?);

    for q in QUESTIONS {
        println!("> {q}");
        agent.run_turn(&mut session, q, &mut |e: &TurnEvent| {
            if let Some(line) = render_event(e) {
                println!("{line}");
            }
        })?;
        println!();
    }
    let prompts: usize = session.logged_turns().iter().map(|t| t.prompts.len()).sum();
    println!("{} turns, {prompts} backend calls", session.turn_count());
    Ok(())
}
