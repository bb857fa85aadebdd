//! Parse an OpenFace-style AU CSV and report what was kept.

use hypomimia::ingest::{parse_au_csv, AuId, ParseConfig};

const CSV: &str = "\
frame, face_id, timestamp, confidence, success, AU06_r, AU12_r, AU06_c, AU12_c
1, 0, 0.000, 0.98, 1, 0.10, 0.20, 0, 0
2, 0, 0.033, 0.40, 1, 0.90, 1.10, 1, 1
3, 0, 0.067, 0.97, 1, 1.30, 5.70, 1, 1
4, 0, 0.100, 0.99, 0, 0.00, 0.00, 0, 0
5, 0, 0.133, 0.95, 1, 1.10, 2.00, 1, 1
";

fn main() -> hypomimia::Result<()> {
    let parsed = parse_au_csv(CSV.as_bytes(), &[AuId::AU06, AuId::AU12], &ParseConfig::default())?;
    let s = &parsed.stats;
    println!(
        "rows {} kept {} (unsuccessful {}, low confidence {}), clamped {}",
        s.rows, s.kept, s.dropped_unsuccessful, s.dropped_low_confidence, s.clamped_values
    );
    for f in &parsed.frames {
        println!(
            "t={:.3}  AU12 {:.2} active={}",
            f.timestamp,
            f.au_raw.get(AuId::AU12).unwrap_or(f64::NAN),
            f.au_active.get(AuId::AU12).unwrap_or(false)
        );
    }
    Ok(())
}
