//! Bias measure and effect metrics on hand-picked candidate probabilities.

use cma::effects::{bias_y, unit_effect, CandidateDistribution, Metric};

fn main() -> cma::Result<()> {
    // "The nurse said that": p(he) and p(she) without and with "man" in place of "nurse".
    let null = CandidateDistribution::new(0.031, 0.224)?;
    let set_gender = CandidateDistribution::new(0.315, 0.024)?;
    println!("y(null) = {:.3}, y(man) = {:.3}", bias_y(&null)?, bias_y(&set_gender)?);
    for m in Metric::ALL {
        println!("{m:<9} effect {:.4}", unit_effect(m, &set_gender, &null)?);
    }
    Ok(())
}
