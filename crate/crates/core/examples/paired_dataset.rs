//! Builds a small paired dataset (videos with and without the subject,
//! masks, panoramas, trajectories) and audits every pair.
//!
//! cargo run -p cinectx --example paired_dataset [out_dir]

use cinectx::scene::{build_dataset, load_manifest, load_sample_pair, DatasetConfig, FrameFormat, PairConfig};

fn main() -> cinectx::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("cinectx-dataset"));
    let config = DatasetConfig {
        pairs: 6,
        scenes: 3,
        seed: 1,
        pair: PairConfig {
            frames: 9,
            width: 64,
            height: 64,
            pano_h: 128,
            ..PairConfig::default()
        },
        frame_format: FrameFormat::Png,
    };
    build_dataset(&config, &out)?;

    let manifest = load_manifest(&out)?;
    for entry in &manifest.entries {
        let pair = load_sample_pair(&out, entry)?;
        let subject: usize = pair.subject_masks.iter().map(|m| m.count()).sum();
        let problems = pair.audit();
        println!(
            "{}: {} {} by {:.2}, prompt {}, {} subject pixels, {}",
            entry.id,
            entry.kind,
            entry.direction,
            entry.magnitude,
            entry.prompt_tag,
            subject,
            if problems.is_empty() { "consistent".to_string() } else { problems.join("; ") }
        );
    }
    println!("dataset in {}", out.display());
    Ok(())
}
