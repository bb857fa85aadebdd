//! Mann–Whitney comparison of every feature between groups.

use hypomimia::stats::{mann_whitney_u, table2_analysis, MwMode};
use hypomimia::synth::{generate_features, CohortSpec};

fn main() -> hypomimia::Result<()> {
    let small = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], MwMode::Exact)?;
    println!("exact U = {}, two-sided p = {:.4}", small.u, small.p_two_sided);

    let table = generate_features(&CohortSpec::with_seed(42))?;
    let t2 = table2_analysis(&table)?;
    println!("{:<14} {:>14} {:>14} {:>10} {:>10}", "feature", "PD", "non-PD", "p", "adj. p");
    for r in &t2.rows {
        println!(
            "{:<14} {:>5.2} ({:.2}) {:>6.2} ({:.2}) {:>10.2e} {:>10.2e}",
            r.feature.name(),
            r.pd_mean,
            r.pd_sd.unwrap_or(f64::NAN),
            r.nonpd_mean,
            r.nonpd_sd.unwrap_or(f64::NAN),
            r.raw_p,
            r.adjusted_p
        );
    }
    Ok(())
}
