//! PCA to two dimensions, k-means, and PD share per cluster.

use hypomimia::cluster::{cluster_table, KmeansConfig};
use hypomimia::synth::{generate_features, CohortSpec};

fn main() -> hypomimia::Result<()> {
    let table = generate_features(&CohortSpec::with_seed(5))?;
    let analysis = cluster_table(&table, false, &KmeansConfig::default(), 5)?;
    let ev = analysis.pca.explained_variance;
    println!("explained variance: {:.4}, {:.4}", ev[0], ev[1]);
    println!("inertia {:.4} (restart {})", analysis.partition.inertia, analysis.partition.restart);
    for c in &analysis.clusters {
        println!(
            "cluster {}: {:>3} members, {:>5.1}% PD, centre ({:.3}, {:.3}), {:.3} from origin",
            c.cluster,
            c.size,
            100.0 * c.pd_fraction,
            c.center[0],
            c.center[1],
            c.distance_to_origin
        );
    }
    Ok(())
}
