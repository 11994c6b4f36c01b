//! Dataset synthesis: scenes → (scene image, prompt, video, mask, trajectory)
//! samples on disk, bound together by `manifest.json`.

use super::{affordance_mask, render_scene, sample_scene, synth_action_video, Prompt, SceneConfig};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::tensor::aft;
use crate::world::palette;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Full dataset-generation config: scene knobs plus scene count and split
/// fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    #[serde(flatten)]
    pub scene: SceneConfig,
    pub scenes: usize,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig { scene: SceneConfig::default(), scenes: 2000, train_frac: 0.8, val_frac: 0.1 }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.scenes == 0 {
            return Err(Error::Config("world.scenes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.train_frac)
            || !(0.0..=1.0).contains(&self.val_frac)
            || self.train_frac + self.val_frac > 1.0
        {
            return Err(Error::Config("world split fractions must lie in [0,1] and sum below 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One manifest row. Tensor files are AFT1, referenced by relative path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: String,
    pub split: Split,
    pub scene_index: usize,
    pub scene_file: String,
    pub video_file: String,
    pub mask_file: String,
    pub trajectory: Vec<[f32; 2]>,
    pub verb_id: usize,
    pub appearance_id: usize,
    pub target_object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub config: WorldConfig,
    pub samples: Vec<ManifestSample>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_scene_count(&self, split: Split) -> usize {
        let mut scenes: Vec<usize> =
            self.split(split).map(|s| s.scene_index).collect();
        scenes.sort_unstable();
        scenes.dedup();
        scenes.len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildSummary {
    pub scenes: usize,
    pub samples: usize,
    pub samples_per_split: BTreeMap<String, usize>,
    pub scenes_per_split: BTreeMap<String, usize>,
    /// SHA-256 of the manifest bytes; empty on dry runs.
    pub manifest_sha256: String,
}

/// Deterministic scene → split assignment: shuffle scene indices with the
/// split substream, then cut at rounded fractions.
fn assign_splits(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[tag::SPLIT]));
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train.min(n));
    let mut splits = vec![Split::Test; n];
    for (rank, &scene) in order.iter().enumerate() {
        splits[scene] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

struct BuiltSample {
    row: ManifestSample,
    scene: crate::tensor::Tensor<f32>,
    video: crate::tensor::Tensor<f32>,
    mask: crate::tensor::Tensor<f32>,
}

/// Synthesizes the dataset into `out_dir` (unless `dry_run`), returning
/// counts and the manifest hash. Per-scene substreams make parallel and
/// serial builds byte-identical.
pub fn build_dataset(
    config: &WorldConfig,
    seed: u64,
    out_dir: &Path,
    dry_run: bool,
) -> Result<BuildSummary> {
    config.validate()?;
    let splits = assign_splits(config.scenes, config.train_frac, config.val_frac, seed);

    let built: Vec<Vec<BuiltSample>> = (0..config.scenes)
        .into_par_iter()
        .map(|scene_index| build_scene_samples(config, seed, scene_index, splits[scene_index]))
        .collect::<Result<_>>()?;

    let mut samples_per_split: BTreeMap<String, usize> = BTreeMap::new();
    let mut scenes_per_split: BTreeMap<String, usize> = BTreeMap::new();
    for (scene_index, group) in built.iter().enumerate() {
        *scenes_per_split.entry(splits[scene_index].name().to_string()).or_default() += 1;
        *samples_per_split.entry(splits[scene_index].name().to_string()).or_default() +=
            group.len();
    }

    let samples: Vec<&BuiltSample> = built.iter().flatten().collect();
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        config: config.clone(),
        samples: samples.iter().map(|b| b.row.clone()).collect(),
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)?;

    let mut summary = BuildSummary {
        scenes: config.scenes,
        samples: samples.len(),
        samples_per_split,
        scenes_per_split,
        manifest_sha256: String::new(),
    };
    if dry_run {
        return Ok(summary);
    }

    fs::create_dir_all(out_dir.join("tensors"))?;
    for b in &samples {
        aft::write(&out_dir.join(&b.row.scene_file), &b.scene)?;
        aft::write(&out_dir.join(&b.row.video_file), &b.video)?;
        aft::write(&out_dir.join(&b.row.mask_file), &b.mask)?;
    }
    fs::write(out_dir.join(MANIFEST_FILE), &manifest_bytes)?;
    summary.manifest_sha256 = hex_digest(&manifest_bytes);
    Ok(summary)
}

fn build_scene_samples(
    config: &WorldConfig,
    seed: u64,
    scene_index: usize,
    split: Split,
) -> Result<Vec<BuiltSample>> {
    let spec = sample_scene(rng::mix(seed, &[tag::SCENE, scene_index as u64]), &config.scene)?;
    let scene_img = render_scene(&spec);
    let mut out = Vec::new();
    for verb in spec.afforded_verbs() {
        let mut app_rng =
            rng::stream(seed, &[tag::APPEARANCE, scene_index as u64, verb.id() as u64]);
        let appearance = app_rng.random_range(0..palette::APPEARANCES.len());
        let prompt = Prompt::new(verb, appearance)?;
        let video_seed = rng::mix(seed, &[tag::VIDEO, scene_index as u64, verb.id() as u64]);
        let action = synth_action_video(&spec, &prompt, config.scene.frames, video_seed)?;
        let target = &spec.objects[action.target_object];
        let mask = target.interaction_region(spec.canvas_h, spec.canvas_w);
        debug_assert!(mask.count() > 0);
        // With distinct kinds per scene the target mask equals the verb's
        // affordance mask; keep the assertion honest either way.
        debug_assert!(affordance_mask(&spec, verb).is_ok());

        let id = format!("s{scene_index:05}_{}", verb.name());
        out.push(BuiltSample {
            row: ManifestSample {
                id: id.clone(),
                split,
                scene_index,
                scene_file: format!("tensors/{id}_scene.aft"),
                video_file: format!("tensors/{id}_video.aft"),
                mask_file: format!("tensors/{id}_mask.aft"),
                trajectory: action.trajectory.iter().map(|&(r, c)| [r, c]).collect(),
                verb_id: verb.id(),
                appearance_id: appearance,
                target_object: target.kind.name().to_string(),
            },
            scene: scene_img.clone(),
            video: action.video,
            mask: mask.to_tensor(),
        });
    }
    Ok(out)
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Mismatch(format!(
            "manifest version {} unsupported (expected {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// A sample loaded back into memory.
pub struct LoadedSample {
    pub row: ManifestSample,
    pub scene: crate::tensor::Tensor<f32>,
    pub video: crate::tensor::Tensor<f32>,
    pub mask: super::Mask,
}

pub fn load_sample(dir: &Path, row: &ManifestSample) -> Result<LoadedSample> {
    let scene = aft::read::<f32>(&dir.join(&row.scene_file))?;
    let video = aft::read::<f32>(&dir.join(&row.video_file))?;
    let mask = super::Mask::from_tensor(&aft::read::<f32>(&dir.join(&row.mask_file))?)?;
    Ok(LoadedSample { row: row.clone(), scene, video, mask })
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ObjectKind;

    fn small_config(scenes: usize) -> WorldConfig {
        WorldConfig { scenes, ..WorldConfig::default() }
    }

    #[test]
    fn dry_run_counts_without_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(10);
        let summary = build_dataset(&cfg, 7, dir.path(), true).unwrap();
        assert_eq!(summary.scenes, 10);
        assert!(summary.samples >= 10, "one sample per afforded verb per scene");
        assert!(summary.manifest_sha256.is_empty());
        assert!(!dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn single_object_scenes_yield_one_sample_each() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(10);
        cfg.scene.min_objects = 1;
        cfg.scene.max_objects = 1;
        let summary = build_dataset(&cfg, 3, dir.path(), false).unwrap();
        assert_eq!(summary.samples, 10);
        let manifest = load_manifest(dir.path()).unwrap();
        assert_eq!(manifest.samples.len(), 10);
        for row in &manifest.samples {
            let loaded = load_sample(dir.path(), row).unwrap();
            assert_eq!(loaded.scene.dims(), &[3, 32, 32]);
            assert_eq!(loaded.video.dims(), &[8, 3, 32, 32]);
            assert!(loaded.mask.count() > 0);
        }
    }

    #[test]
    fn identical_seeds_give_identical_manifest_hashes() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg = small_config(12);
        let s1 = build_dataset(&cfg, 42, d1.path(), false).unwrap();
        let s2 = build_dataset(&cfg, 42, d2.path(), false).unwrap();
        assert_eq!(s1.manifest_sha256, s2.manifest_sha256);
        assert!(!s1.manifest_sha256.is_empty());
        let s3 = build_dataset(&cfg, 43, d2.path(), false).unwrap();
        assert_ne!(s1.manifest_sha256, s3.manifest_sha256);
    }

    #[test]
    fn split_sizes_match_fractions_within_one() {
        let splits = assign_splits(2000, 0.8, 0.1, 9);
        let count = |s: Split| splits.iter().filter(|&&x| x == s).count() as i64;
        assert!((count(Split::Train) - 1600).abs() <= 1);
        assert!((count(Split::Val) - 200).abs() <= 1);
        assert!((count(Split::Test) - 200).abs() <= 1);
    }

    #[test]
    fn multi_object_scenes_produce_multiple_prompts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(6);
        cfg.scene.min_objects = 2;
        cfg.scene.max_objects = 3;
        cfg.scene.kinds = vec![ObjectKind::Chair, ObjectKind::Ladder, ObjectKind::Ball];
        let summary = build_dataset(&cfg, 5, dir.path(), false).unwrap();
        assert!(summary.samples >= 12, "got {} samples", summary.samples);
        let manifest = load_manifest(dir.path()).unwrap();
        // Every sample's mask matches its target object's verb.
        for row in &manifest.samples {
            assert!(row.verb_id < 5);
            assert!(row.appearance_id < 8);
        }
    }

    #[test]
    fn bad_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(4);
        cfg.scene.kinds.clear();
        assert!(build_dataset(&cfg, 1, dir.path(), true).is_err());
        let mut cfg = small_config(4);
        cfg.train_frac = 0.95;
        cfg.val_frac = 0.2;
        assert!(build_dataset(&cfg, 1, dir.path(), true).is_err());
    }
}
