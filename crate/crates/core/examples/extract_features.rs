//! Gated-variance features and the three-peak QC on a synthetic cohort.

use hypomimia::features::{extract_features, qc_expression_association, ExpressionAuMap, PeakConfig};
use hypomimia::synth::{generate_recordings, CohortSpec};

fn main() -> hypomimia::Result<()> {
    let spec = CohortSpec {
        n_pd: 10,
        n_nonpd: 20,
        seed: 7,
        ..Default::default()
    };
    let synth = generate_recordings(&spec)?;
    let map = ExpressionAuMap::default();

    let extraction = extract_features(&synth.cohort, &map)?;
    let table = &extraction.table;
    println!("{} participants x {} features", table.len(), table.dimension());
    for row in table.rows.iter().take(3) {
        let cells: Vec<String> = row.values.iter().map(|v| format!("{v:.3}")).collect();
        println!("{} pd={} [{}]", row.participant_id, row.pd_label, cells.join(", "));
    }

    let qc = qc_expression_association(&synth.cohort, &map, &PeakConfig::default())?;
    for r in qc.rows.iter().filter(|r| r.mapped) {
        println!("{} {}: {}/{} recordings show three peaks", r.expression, r.au, r.three_peak, r.recordings);
    }
    Ok(())
}
