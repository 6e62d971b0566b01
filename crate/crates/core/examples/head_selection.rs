//! Greedy and top-k head selection curves.

use cma::datasets::build_winograd;
use cma::effects::Metric;
use cma::mediation::{self, LmSubject, Runner};
use cma::selection::{select_greedy, top_k_curve, NieObjective};
use cma::{toy, Mediator, Model, Unit};

fn main() -> cma::Result<()> {
    let model = Model::new(toy::model_checkpoint(3, 5)?);
    let vocab = toy::vocabulary();
    let units = build_winograd(toy::winograd_records(30, 11), &vocab)?
        .examples
        .iter()
        .map(|e| Unit::from_winograd(e, &vocab, false))
        .collect::<cma::Result<Vec<_>>>()?;
    let subject = LmSubject::new(&model, units);
    let runner = Runner::new(Metric::Original, 4)?;
    let heads = mediation::all_heads(&[1, 2, 3], &[0, 1]);
    let objective = NieObjective::new(&runner, &subject)?;

    let singles: Vec<Vec<Mediator>> = heads.iter().map(|&h| vec![h]).collect();
    let individual: Vec<(Mediator, f64)> = heads.iter().copied().zip(objective.values(&singles)?).collect();
    let topk = top_k_curve(|sets| objective.values(sets), &individual, 1, 4)?;
    let greedy = runner.install(|| select_greedy(&objective, &heads, 4, None))?;

    println!("NIE of all heads {:.5}", greedy.reference);
    for (i, (g, t)) in greedy.steps.iter().zip(&topk.steps).enumerate() {
        println!("step {}: greedy {} {:.5} | top-k {} {:.5}", i + 1, g.added[0], g.value, t.added[0], t.value);
    }
    Ok(())
}
