//! Writes a synthetic demo corpus (images + manifest.jsonl) so the CLI can
//! be exercised without any real data:
//!
//! ```text
//! cargo run -p ugcrank --example make_fixture -- /tmp/ugcrank-demo
//! ```

use ugcrank::fixture::{generate_corpus, CorpusSpec};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "ugcrank-demo".to_string());
    let spec = CorpusSpec {
        train_studio: 24,
        train_good: 24,
        train_bad: 8,
        val_styles: 8,
        test_clean: 0,
        test_tiered: 5,
        image_size: 96,
        seed: 7,
    };
    let manifest = generate_corpus(std::path::Path::new(&dir), &spec)
        .unwrap_or_else(|e| panic!("fixture generation failed: {e}"));
    println!(
        "wrote {} records under {dir} (manifest: {dir}/manifest.jsonl)",
        manifest.records.len()
    );
}
