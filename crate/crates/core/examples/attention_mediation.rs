//! Head NIE/NDE heatmaps on a generated Winograd-style corpus.

use cma::datasets::build_winograd;
use cma::effects::Metric;
use cma::mediation::{self, EffectKind, EffectMap, LmSubject, Runner};
use cma::{toy, Model, Unit};

fn main() -> cma::Result<()> {
    let model = Model::new(toy::model_checkpoint(3, 5)?);
    let vocab = toy::vocabulary();
    let corpus = build_winograd(toy::winograd_records(40, 11), &vocab)?;
    let units = corpus
        .examples
        .iter()
        .map(|e| Unit::from_winograd(e, &vocab, false))
        .collect::<cma::Result<Vec<_>>>()?;
    let subject = LmSubject::new(&model, units);
    let runner = Runner::new(Metric::Original, 4)?;
    let cfg = *model.config();
    let heads = mediation::all_heads(&(1..=cfg.n_layers).collect::<Vec<_>>(), &(0..cfg.n_heads).collect::<Vec<_>>());
    let map = EffectMap::compute(&runner, &subject, &heads, &[EffectKind::Nie, EffectKind::Nde])?;
    println!("TE {:.5}", map.evaluation.te_population());
    let mut out = std::io::stdout();
    println!("NIE");
    mediation::write_grid(&mut out, 1, &map.grid(EffectKind::Nie, 1, cfg.n_layers, cfg.n_heads))?;
    println!("NDE");
    mediation::write_grid(&mut out, 1, &map.grid(EffectKind::Nde, 1, cfg.n_layers, cfg.n_heads))?;
    for l in mediation::per_layer_sweep_heads(&runner, &subject, &(1..=cfg.n_layers).collect::<Vec<_>>(), &(0..cfg.n_heads).collect::<Vec<_>>())? {
        println!("layer {} all heads: NIE {:.5}", l.layer, l.effect.effect);
    }
    Ok(())
}
