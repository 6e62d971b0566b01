use cma::effects::Metric;
use cma::error::Result;
use cma::mediation::{all_heads, Runner};
use cma::selection::{select_greedy, select_top_k, top_k_curve, NieObjective};
use cma::toy::LinearScm;
use cma::Mediator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn universe() -> Vec<Mediator> {
    all_heads(&[1, 2], &[0, 1, 2, 3, 4])
}

fn modular(seed: u64) -> Vec<(Mediator, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    universe().into_iter().map(|m| (m, rng.gen_range(-1.0..1.0))).collect()
}

fn value_of(weights: &[(Mediator, f64)], set: &[Mediator]) -> f64 {
    set.iter().map(|m| weights.iter().find(|(w, _)| w == m).unwrap().1).sum()
}

fn best_subset(weights: &[(Mediator, f64)], k: usize) -> f64 {
    let n = weights.len();
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| weights[i].1).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn greedy_is_optimal_on_modular_objectives() {
    for seed in 0..20 {
        let w = modular(seed);
        let f = |s: &[Mediator]| -> Result<f64> { Ok(value_of(&w, s)) };
        for k in 1..=5 {
            let g = select_greedy(&f, &universe(), k, None).unwrap();
            let got = value_of(&w, &g.chosen());
            assert!((got - best_subset(&w, k)).abs() < 1e-12, "seed {seed} k {k}");
            assert_eq!(g.chosen(), select_top_k(&w, k).unwrap());
        }
        let one = select_greedy(&f, &universe(), 1, None).unwrap();
        assert_eq!(one.chosen(), select_top_k(&w, 1).unwrap());
    }
}

#[test]
fn ties_resolve_to_lowest_mediator() {
    let w: Vec<(Mediator, f64)> = universe().into_iter().map(|m| (m, 1.0)).collect();
    let f = |s: &[Mediator]| -> Result<f64> { Ok(value_of(&w, s)) };
    let g = select_greedy(&f, &universe(), 4, None).unwrap();
    assert_eq!(g.chosen(), universe()[..4].to_vec());
    for _ in 0..5 {
        assert_eq!(select_greedy(&f, &universe(), 4, None).unwrap(), g);
    }
}

#[test]
fn candidate_limit_keeps_modular_optimum() {
    let w = modular(42);
    let f = |s: &[Mediator]| -> Result<f64> { Ok(value_of(&w, s)) };
    let limited = select_greedy(&f, &universe(), 3, Some((&w, 2))).unwrap();
    assert_eq!(limited.chosen(), select_top_k(&w, 3).unwrap());
}

#[test]
fn greedy_prefers_complementary_pairs() {
    // Two heads are only useful together; greedy cannot see it one step ahead.
    let u = universe();
    let f = |s: &[Mediator]| -> Result<f64> {
        let pair = s.contains(&u[0]) && s.contains(&u[1]);
        Ok(if pair { 3.0 } else { 0.0 } + if s.contains(&u[2]) { 1.0 } else { 0.0 })
    };
    let g = select_greedy(&f, &u, 2, None).unwrap();
    assert_eq!(g.chosen()[0], u[2]);
    assert_eq!(g.reference, 4.0);
}

#[test]
fn nie_selection_on_linear_model() {
    let scm = LinearScm::random(8, 25, 17);
    let runner = Runner::new(Metric::Original, 4).unwrap();
    let objective = NieObjective::new(&runner, &scm).unwrap();
    let mediators = scm.mediators();
    let singles: Vec<Vec<Mediator>> = mediators.iter().map(|&m| vec![m]).collect();
    let individual: Vec<(Mediator, f64)> = mediators.iter().copied().zip(objective.values(&singles).unwrap()).collect();
    let greedy = runner.install(|| select_greedy(&objective, &mediators, 8, None)).unwrap();
    let topk = top_k_curve(|sets| objective.values(sets), &individual, 1, 8).unwrap();
    assert_eq!(greedy.chosen(), topk.chosen());
    for (a, b) in greedy.steps.iter().zip(&topk.steps) {
        assert!((a.value - b.value).abs() < 1e-12);
    }
    assert!((greedy.reference - topk.reference).abs() < 1e-12);
    assert!((greedy.steps[7].value - greedy.reference).abs() < 1e-12);
}
