//! Builds the template × profession corpus and prints a few examples.

use cma::datasets::{build_professions, GenderMode, PROFESSION_WORDS, TEMPLATES};
use cma::toy;

fn main() -> cma::Result<()> {
    println!("{} built-in templates, {} built-in professions", TEMPLATES.len(), PROFESSION_WORDS.len());
    let vocab = toy::vocabulary();
    for mode in [GenderMode::Binary, GenderMode::Neutral] {
        let examples = build_professions(&toy::templates(), &toy::professions(7), &vocab, mode)?;
        println!("{mode:?}: {} examples", examples.len());
        for ex in examples.iter().step_by(97).take(4) {
            println!("  {ex:?}");
        }
    }
    Ok(())
}
