//! Decomposition fit on the linear surrogate, neuron stripes and the TE/bias correlation.

use cma::datasets::{build_professions, GenderMode};
use cma::effects::Metric;
use cma::mediation::{self, EffectKind, EffectMap, LmSubject, Runner};
use cma::toy::LinearScm;
use cma::{toy, Model, Unit};

fn main() -> cma::Result<()> {
    let runner = Runner::new(Metric::Original, 4)?;

    let scm = LinearScm::random(6, 30, 1);
    let d = mediation::decomposition_check(&runner, &scm, &scm.mediators())?;
    println!("surrogate: max |TE - NDE - NIE| = {:.2e}, fit {:?}", d.max_abs_residual(), d.fit);

    let model = Model::new(toy::model_checkpoint(3, 5)?);
    let vocab = toy::vocabulary();
    let units = build_professions(&toy::templates()[..3], &toy::professions(7), &vocab, GenderMode::Binary)?
        .iter()
        .map(|e| Unit::from_template(e, &vocab, false))
        .collect::<cma::Result<Vec<_>>>()?;
    let subject = LmSubject::new(&model, units.clone());
    let cfg = *model.config();
    let neurons = mediation::all_neurons(&(0..=cfg.n_layers).collect::<Vec<_>>(), cfg.d_model);
    let map = EffectMap::compute(&runner, &subject, &neurons, &[EffectKind::Nie])?;
    let grid = map.grid(EffectKind::Nie, 0, cfg.n_layers + 1, cfg.d_model);
    for s in mediation::stripe_analysis(&grid, 0, 0.1, 100, 42)? {
        println!("layers {}-{}: aligned {:.3} vs random {:.3}", s.layer, s.layer + 1, s.aligned, s.randomized);
    }

    let eval = &map.evaluation;
    let (te, bias): (Vec<f64>, Vec<f64>) = (0..units.len())
        .filter(|&u| eval.included[u])
        .map(|u| (eval.te[u], units[u].external_bias))
        .unzip();
    let c = mediation::correlate_effects(&te, &bias)?;
    println!("corr(ln TE, bias) = {:.3} over {} examples ({} flagged)", c.r, c.n, c.flagged);
    Ok(())
}
