//! Logistic-regression weights with Wald tests.

use hypomimia::logit::{figure1_report, fit_table};
use hypomimia::synth::{generate_features, CohortSpec};

fn main() -> hypomimia::Result<()> {
    let table = generate_features(&CohortSpec::with_seed(11))?;
    let fit = fit_table(&table, true)?;
    println!("converged in {} Newton steps, log-likelihood {:.3}", fit.iterations, fit.log_likelihood);
    for r in figure1_report(&fit)? {
        println!(
            "{:<14} {:>7.3} ± {:.3}  z {:>6.2}  p {:.4}{}",
            r.feature,
            r.weight,
            r.se,
            r.z,
            r.p,
            if r.significant { "  *" } else { "" }
        );
    }
    Ok(())
}
