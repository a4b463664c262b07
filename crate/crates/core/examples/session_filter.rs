//! Two prompts in one session: merged vs side-by-side comparison, node
//! selection with focus+context, and a threshold change that keeps the
//! selection on the same tokens.

use std::sync::Arc;
use tokenlattice::generation::RawGeneration;
use tokenlattice::session::{ComparisonLayout, GraphQuery, LatticeEngine, PromptConfig, Session};

fn gens(prompt: &str, texts: &[&str]) -> Vec<RawGeneration> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| RawGeneration::new(format!("{prompt}-{i}"), prompt, *t))
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut session = Session::new(Arc::new(LatticeEngine::default()));
    session.add_prompt(PromptConfig::new("warm", "Describe a summer day"))?;
    session.add_prompt(PromptConfig::new("cold", "Describe a winter day"))?;
    session.add_generations(
        "warm",
        gens(
            "warm",
            &[
                "The sun was shining and the air was warm.",
                "The sun was bright and the beach was crowded.",
                "The air was warm and sticky all afternoon.",
            ],
        ),
    )?;
    session.add_generations(
        "cold",
        gens(
            "cold",
            &[
                "The air was cold and the snow was falling.",
                "The sun was low and the snow was bright.",
                "The wind was bitter and the air was cold.",
            ],
        ),
    )?;

    let cmp = session.assemble_comparison()?;
    let lattice = &cmp.panels()[0].lattice;
    for n in lattice.nodes() {
        println!("{:<28} {:?}", format!("{:?}", n.label), n.prompt_counts);
    }

    // Pick the most shared non-trivial node.
    let node = lattice
        .nodes()
        .iter()
        .filter(|n| n.frequency < lattice.generations().len())
        .max_by_key(|n| n.frequency)
        .expect("some shared node");
    println!("\nselecting {:?}", node.label);
    let filter = session.select_nodes([node.id.clone()])?;
    println!("emphasized:   {:?}", filter.emphasized_generation_ids);
    println!("deemphasized: {:?}", filter.deemphasized_generation_ids);
    for item in session.generation_items(None)? {
        let mark = if item.emphasized { "*" } else { " " };
        println!(" {mark} [{}] {}", item.prompt_id, item.text);
    }

    session.set_merge_threshold(0.8)?;
    println!(
        "\nafter threshold 0.8 the selection is {:?}",
        session.current().view.selected_node_ids
    );

    session.set_comparison_layout(ComparisonLayout::SideBySide)?;
    let view = session.graph(&GraphQuery::default())?;
    for panel in &view.panels {
        println!(
            "panel {:?}: {} nodes, etag-stable view {}",
            panel.prompt_ids,
            panel.lattice.nodes.len(),
            view.etag()
        );
    }
    Ok(())
}
