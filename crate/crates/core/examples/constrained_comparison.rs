//! Ranking inequality-constrained loading patterns against the
//! unrestricted model: encompassing Bayes factors from posterior and prior
//! proportions, and posterior model probabilities.

use bayes_cfa::compare::{bayes_factor_matrix, compare_models};
use bayes_cfa::dsl::{expand, parse_model_file};
use bayes_cfa::sampler::{gibbs_run, sample_prior, ChainSettings, PriorSpec};
use bayes_cfa::synthetic::{self, METABOLIC_NAMES};

fn main() -> bayes_cfa::Result<()> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/models.txt"))
        .map_err(|e| bayes_cfa::Error::Data(e.to_string()))?;
    let spec = synthetic::metabolic_spec();
    let models = parse_model_file(&text)?
        .into_iter()
        .map(|m| Ok((m.name, expand(&m.ast, &spec)?)))
        .collect::<bayes_cfa::Result<Vec<_>>>()?;

    let data = synthetic::dataset(&synthetic::metabolic_reference(), &METABOLIC_NAMES, 464, None, 204)?;
    let prior = PriorSpec::default();
    let posterior = gibbs_run(&data, &spec, &prior, ChainSettings::new(30_000, 5_000), 3)?;
    let prior_draws = sample_prior(&spec, &prior, 1_000_000, 4)?;
    let cmp = compare_models(&posterior, &prior_draws, &models, None)?;

    println!("{:<5} {:>8} {:>11} {:>12} {:>8}", "model", "f", "c", "BF", "PMP");
    for (m, pmp) in cmp.models.iter().zip(&cmp.result.posterior_probs) {
        println!("{:<5} {:>8.4} {:>11.3e} {:>12.4e} {pmp:>8.4}", m.label, m.bf.f, m.bf.c, m.bf.bf);
    }
    let logs: Vec<f64> = cmp.models.iter().map(|m| m.bf.bf.ln()).collect();
    println!("\npairwise Bayes factors (row vs column):\n{:.3e}", bayes_factor_matrix(&logs));
    Ok(())
}
