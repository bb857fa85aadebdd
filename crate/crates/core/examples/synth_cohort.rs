//! Generate a calibrated synthetic cohort and write it to disk.
//!
//! cargo run --example synth_cohort -- [out_dir] [seed]

use std::path::PathBuf;

use hypomimia::synth::{generate_recordings, write_synthetic_cohort, CohortSpec};

fn main() -> hypomimia::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hypomimia_synthetic_cohort"));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);

    let spec = CohortSpec {
        n_pd: 20,
        n_nonpd: 60,
        seed,
        ..Default::default()
    };
    let synth = generate_recordings(&spec)?;
    let manifest = write_synthetic_cohort(&out, &synth)?;
    println!(
        "{} participants, {} recordings, {} warnings -> {}",
        synth.cohort.participants.len(),
        synth.cohort.recordings.len(),
        synth.warnings.len(),
        manifest.display()
    );
    Ok(())
}
