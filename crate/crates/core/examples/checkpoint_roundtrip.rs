//! Writes a seeded random checkpoint, reads it back and prints its shape table.

use cma::Checkpoint;

fn main() -> cma::Result<()> {
    let ck = cma::toy::model_checkpoint(2, 1)?;
    let dir = std::env::temp_dir().join("cma-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| cma::Error::Format(e.to_string()))?;
    let path = dir.join("toy.cma1");
    ck.save(&path)?;
    let back = Checkpoint::load(&path)?;
    assert_eq!(back, ck);
    println!("{:?}", back.config());
    for (name, shape) in back.config().shape_table() {
        println!("{name:<24} {shape:?}");
    }
    println!("fingerprint {}", back.fingerprint());
    Ok(())
}
