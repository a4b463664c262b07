//! Samples completions through the cache. With `TOKENLATTICE_BASE_URL` and
//! `TOKENLATTICE_MODEL` set it talks to that OpenAI-compatible endpoint;
//! otherwise a canned provider stands in. Run it twice: the second run makes
//! no provider calls.

use tokenlattice::client::{
    CompletionProvider, DiskCache, FixtureProvider, OpenAiChatProvider, OpenAiConfig, Sampler, BASE_URL_ENV, MODEL_ENV,
};

fn run<P: CompletionProvider>(provider: P, model: &str) -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("tokenlattice-example-cache");
    let sampler = Sampler::new(provider).with_cache(DiskCache::new(&dir));
    let request = sampler.request("Write one sentence about the ocean.", model, 0.9, 5);
    for g in sampler.sample(&request, "ocean")? {
        println!("{}  {}", g.id, g.text);
    }
    println!(
        "provider calls: {} (cache in {})",
        sampler.provider_calls(),
        dir.display()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    match (std::env::var(BASE_URL_ENV), std::env::var(MODEL_ENV)) {
        (Ok(_), Ok(model)) => run(OpenAiChatProvider::new(OpenAiConfig::from_env()), &model),
        _ => run(
            FixtureProvider::new([
                "The ocean covers most of the planet.",
                "The ocean is deep and mostly unexplored.",
                "Waves roll in from the open ocean.",
            ]),
            "fixture",
        ),
    }
}
