//! Records a gendered run and patches one neuron and one attention row into a
//! neutral run.

use cma::model::MediatorCoord;
use cma::{toy, InterventionSpec, Model};

fn main() -> cma::Result<()> {
    let model = Model::new(toy::model_checkpoint(2, 5)?);
    let vocab = toy::vocabulary();
    let neutral = vocab.encode("The nurse said that")?;
    let gendered = vocab.encode("The woman said that")?;
    let (she, he) = (vocab.id("she").unwrap() as usize, vocab.id("he").unwrap() as usize);

    let (base, _) = model.forward(&neutral, &InterventionSpec::new(), false)?;
    let (_, trace) = model.forward(&gendered, &InterventionSpec::new(), true)?;
    let trace = trace.expect("recorded");

    let spec = InterventionSpec::from_trace(
        &trace,
        &[
            MediatorCoord::Neuron { layer: 1, position: 1, neuron: 3 },
            MediatorCoord::Head { layer: 2, head: 0, position: 3 },
        ],
    )?;
    let (patched, _) = model.forward(&neutral, &spec, false)?;
    println!("p(she) {:.6} -> {:.6}", base[she], patched[she]);
    println!("p(he)  {:.6} -> {:.6}", base[he], patched[he]);
    Ok(())
}
