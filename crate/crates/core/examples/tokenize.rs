//! Word-level and byte-level BPE tokenization.
//!
//! ```text
//! cargo run --example tokenize -- [vocab.txt merges.txt] "some text"
//! ```
//! Without files, the built-in toy vocabulary is used.

use std::path::Path;

use cma::Vocabulary;

fn main() -> cma::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (vocab, text) = match args.as_slice() {
        [v, m, text] => (Vocabulary::load(Path::new(v), Some(Path::new(m)))?, text.clone()),
        [text] => (cma::toy::vocabulary(), text.clone()),
        _ => (cma::toy::vocabulary(), "The nurse said that she".to_string()),
    };
    let ids = vocab.encode(&text)?;
    println!("{:?} mode, {} tokens", vocab.mode(), vocab.len());
    for &id in &ids {
        println!("{id:>6}  {:?}", vocab.token(id).unwrap_or("?"));
    }
    println!("decoded: {:?}", vocab.decode(&ids)?);
    Ok(())
}
