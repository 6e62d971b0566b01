//! Neuron NIE map, per-layer top-5% sweep and NIE-sum vs NIE-all on a toy model.

use cma::effects::Metric;
use cma::mediation::{self, EffectKind, EffectMap, LmSubject, Runner};
use cma::{toy, Model, Unit};
use cma::datasets::{build_professions, GenderMode};

fn main() -> cma::Result<()> {
    let model = Model::new(toy::model_checkpoint(2, 5)?);
    let vocab = toy::vocabulary();
    let units = build_professions(&toy::templates()[..2], &toy::professions(7), &vocab, GenderMode::Binary)?
        .iter()
        .map(|e| Unit::from_template(e, &vocab, false))
        .collect::<cma::Result<Vec<_>>>()?;
    let subject = LmSubject::new(&model, units);
    let runner = Runner::new(Metric::Original, 4)?;
    let cfg = *model.config();
    let neurons = mediation::all_neurons(&(0..=cfg.n_layers).collect::<Vec<_>>(), cfg.d_model);

    let map = EffectMap::compute(&runner, &subject, &neurons, &[EffectKind::Nie])?;
    println!("TE {:.4} over {} examples", map.evaluation.te_population(), map.evaluation.n_included());
    for (layer, row) in map.grid(EffectKind::Nie, 0, cfg.n_layers + 1, cfg.d_model).iter().enumerate() {
        let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("layer {layer}: max single-neuron NIE {best:.4}");
    }
    for l in mediation::per_layer_sweep_neurons(&runner, &subject, &map, 5.0)? {
        println!("layer {} top {} neurons: NIE {:.4}", l.layer, l.mediators.len(), l.effect.effect);
    }
    let all = mediation::run_neuron_nie(&runner, &subject, &neurons)?;
    let syn = mediation::nie_sum_vs_all(&map, all.effect);
    println!("sum of NIEs {:.4}, NIE of all {:.4}", syn.nie_sum, syn.nie_all);
    Ok(())
}
