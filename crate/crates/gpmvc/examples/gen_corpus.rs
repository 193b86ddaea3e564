//! Writes seed inputs for the fuzz targets into fuzz/corpus/.

use gpmvc::checkpoint::encode_checkpoint;
use gpmvc::dataio::{make_partial_split, MultiViewDataset};
use gpmvc::fusion::FusionMode;
use gpmvc::networks::{ModelState, NetworkConfig};
use gpmvc::rng::SeededRng;
use gpmvc::trainer::TrainConfig;
use ndarray::Array2;

fn main() {
    let root = std::path::Path::new("fuzz/corpus");

    let manifest = br#"{
  "name": "seed",
  "views": 2,
  "samples": 4,
  "dims": [3, 2],
  "classes": 2,
  "view_files": ["view_0.csv", "view_1.csv"],
  "labels_file": "labels.csv",
  "image_shapes": [null, null]
}"#;
    std::fs::write(root.join("manifest_json/valid.json"), manifest).unwrap();

    std::fs::write(
        root.join("view_csv/valid.csv"),
        "0.5,1.25,-3e2\n1,2,3\n0.0,0.1,0.2\n9,8,7\n",
    )
    .unwrap();
    std::fs::write(root.join("labels_csv/valid.csv"), "0\n1\n0\n1\n").unwrap();

    let views = vec![Array2::zeros((6, 3)), Array2::zeros((6, 2))];
    let ds = MultiViewDataset::new("seed", views, vec![0, 1, 0, 1, 0, 1], 2, None).unwrap();
    let split = make_partial_split(&ds, 0.5, 7).unwrap();
    std::fs::write(root.join("mask_json/valid.json"), split.to_json()).unwrap();

    let spec = br#"{
  "data": "data/manifest.json",
  "out": "sweep-out",
  "ratios": [0.1, 0.5, 0.9],
  "repeats": 2,
  "base_seed": 0,
  "modes": ["AE", "AE+AT", "ALL"]
}"#;
    std::fs::write(root.join("sweep_spec_json/valid.json"), spec).unwrap();

    let config = serde_json::to_vec_pretty(&TrainConfig::default()).unwrap();
    std::fs::write(root.join("config_json/default.json"), config).unwrap();

    let net = NetworkConfig {
        latent_dim: 2,
        encoder_hidden: vec![3],
        discriminator_hidden: [3, 2],
        ..NetworkConfig::default()
    };
    let mut rng = SeededRng::new(1);
    let model = ModelState::init(&net, &[3, 2], FusionMode::Projected, &mut rng);
    let mu = Array2::zeros((2, 2));
    std::fs::write(
        root.join("checkpoint_decode/valid.bin"),
        encode_checkpoint(&model, 2, Some(&mu)),
    )
    .unwrap();

    println!("corpus seeds written under {}", root.display());
}
