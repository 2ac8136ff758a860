//! Generates the stand-in datasets into a data directory so experiments can
//! run without downloading anything:
//!
//! ```text
//! cargo run --release --example make_fixtures -- data
//! ```

use trimsgd::data::DatasetName;
use trimsgd::synth::ensure_fixture;

fn main() {
    let root = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data".to_string());
    let root = std::path::PathBuf::from(root);
    for name in [
        DatasetName::Mnist,
        DatasetName::FashionMnist,
        DatasetName::EmnistLetters,
    ] {
        print!("writing {} ... ", name.dir_name());
        ensure_fixture(&root, name).expect("fixture generation failed");
        println!("done");
    }
    println!("fixtures ready under {}", root.display());
}
