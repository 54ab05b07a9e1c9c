//! Encodes context views into implicit features, stores them and turns them
//! into model-ready rows.
//!
//! cargo run -p cinectx --example implicit_features [out_dir]

use cinectx::encoder::{fuse, prepare_implicit, EncoderBackend, FileEncoder, ImplicitFeatures, ToyEncoder};
use cinectx::scene::{make_sample_pair, PairConfig};

fn main() -> cinectx::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("cinectx-features"));
    std::fs::create_dir_all(&out).map_err(|e| cinectx::Error::io(&out, e))?;

    let pair = make_sample_pair(3, 4, &PairConfig { frames: 2, width: 32, height: 32, pano_h: 128, ..PairConfig::default() })?;
    let views = pair.context(20, 32, 32)?;
    let encoder = ToyEncoder::new(64, (4, 4), 0);
    let feats = encoder.encode(&views)?;
    println!(
        "{} views -> image features {:?}, camera features {:?}",
        feats.num_views(),
        feats.image_features.dim(),
        feats.camera_features.dim()
    );

    let path = out.join("features.ctb");
    feats.write(&path, encoder.name())?;
    assert_eq!(ImplicitFeatures::read(&path)?, feats);
    // Stored features can stand in for any backend.
    let replay = FileEncoder::open(&path)?.encode(&views)?;
    assert_eq!(replay, feats);

    let fused = fuse(&feats)?;
    let rows = prepare_implicit(&fused, (4, 4), (32, 32), 16)?;
    println!("fused {:?}, prepared rows {:?}, stored at {}", fused.dim(), rows.dim(), path.display());
    Ok(())
}
