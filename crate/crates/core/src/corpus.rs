//! Corpus-level augmentation with a per-item audit manifest, and the
//! throughput benchmark built on the same pipeline.
//!
//! Inputs are the `.png` and `.vol` (VOL1) files of a directory, taken in
//! sorted filename order. File `i` seeds its stream with item key `i << 16`;
//! slice `j` of a volume uses `(i << 16) | j`. Every item goes through
//! resize → policy → random crop with one derived stream, so the output
//! does not depend on thread count or directory listing order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policies::{sample_policy, PolicySpec};
use crate::rng::{streams, Rng};
use crate::tensor::{volume_to_slices, Image8, VolumeGrid};
use crate::transforms::{apply_transform, random_crop, resize_bilinear, TransformInstance, TransformKind, CROP_SIZE};

pub const DEFAULT_RESIZE: (usize, usize) = (297, 256);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub policy: PolicySpec,
    pub resize: (usize, usize),
    pub crop: usize,
}

impl PipelineConfig {
    pub fn new(seed: u64, policy: PolicySpec) -> Self {
        Self {
            seed,
            policy,
            resize: DEFAULT_RESIZE,
            crop: CROP_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.resize.0 < self.crop || self.resize.1 < self.crop || self.crop == 0 {
            return Err(Error::invalid(format!(
                "resize {:?} smaller than crop {}",
                self.resize, self.crop
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slice: Option<usize>,
    pub output: String,
    pub crop_offset: (usize, usize),
    pub transforms: Vec<TransformInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestError {
    pub source: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PipelineConfig,
    pub items: Vec<ManifestItem>,
    pub errors: Vec<ManifestError>,
}

fn item_key(file_index: usize, slice: usize) -> u64 {
    ((file_index as u64) << 16) | slice as u64
}

#[derive(Default)]
struct KindTimer {
    by_kind: BTreeMap<TransformKind, (u64, Duration)>,
}

impl KindTimer {
    fn merge(mut self, other: KindTimer) -> KindTimer {
        for (k, (n, t)) in other.by_kind {
            let e = self.by_kind.entry(k).or_default();
            e.0 += n;
            e.1 += t;
        }
        self
    }
}

/// resize → augment → random crop for one image, returning the crop, the
/// crop offset and the applied instances.
pub fn process_image(
    img: &Image8,
    config: &PipelineConfig,
    key: u64,
) -> Result<(Image8, (usize, usize), Vec<TransformInstance>)> {
    process_timed(img, config, key, None)
}

fn process_timed(
    img: &Image8,
    config: &PipelineConfig,
    key: u64,
    mut timer: Option<&mut KindTimer>,
) -> Result<(Image8, (usize, usize), Vec<TransformInstance>)> {
    let mut rng = Rng::derive(config.seed, streams::AUGMENT, key);
    let mut cur = resize_bilinear(img, config.resize.0, config.resize.1)?;
    let instances = sample_policy(&config.policy, &mut rng)?;
    for t in &instances {
        let start = timer.as_ref().map(|_| Instant::now());
        cur = apply_transform(&cur, t);
        if let (Some(timer), Some(start)) = (timer.as_deref_mut(), start) {
            let e = timer.by_kind.entry(t.kind).or_default();
            e.0 += 1;
            e.1 += start.elapsed();
        }
    }
    let (out, offset) = random_crop(&cur, config.crop, &mut rng)?;
    Ok((out, offset, instances))
}

fn is_input(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "vol")
    )
}

/// Input files of `dir` in sorted filename order.
pub fn list_inputs(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_input(p))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// The images of one input file: one for PNG, the kept slices for VOL1.
pub fn load_images(path: &Path) -> Result<Vec<(Option<usize>, Image8)>> {
    let is_vol = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("vol"));
    if is_vol {
        let vol = VolumeGrid::read_vol1(path)?;
        Ok(volume_to_slices(&vol)?
            .into_iter()
            .enumerate()
            .map(|(i, img)| (Some(i), img))
            .collect())
    } else {
        Ok(vec![(None, Image8::read_png(path)?)])
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn output_name(path: &Path, slice: Option<usize>) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match slice {
        Some(s) => format!("{stem}_s{s:03}.png"),
        None => format!("{stem}.png"),
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Augment every input of `input_dir` into `output_dir` and write
/// `manifest.json` there. Per-file failures are recorded in the manifest.
pub fn augment_corpus(
    input_dir: impl AsRef<Path>,
    output_dir: impl AsRef<Path>,
    config: &PipelineConfig,
    threads: usize,
) -> Result<Manifest> {
    config.validate()?;
    let files = list_inputs(input_dir)?;
    let out_dir = output_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let run_file = |(i, path): (usize, &PathBuf)| -> std::result::Result<Vec<ManifestItem>, ManifestError> {
        let fail = |e: Error| ManifestError {
            source: file_name(path),
            error: e.to_string(),
        };
        let images = load_images(path).map_err(fail)?;
        images
            .into_iter()
            .map(|(slice, img)| {
                let (out, offset, transforms) =
                    process_image(&img, config, item_key(i, slice.unwrap_or(0))).map_err(fail)?;
                let output = output_name(path, slice);
                out.write_png(out_dir.join(&output)).map_err(fail)?;
                Ok(ManifestItem {
                    source: file_name(path),
                    slice,
                    output,
                    crop_offset: offset,
                    transforms,
                })
            })
            .collect()
    };

    let results: Vec<_> = thread_pool(threads)?.install(|| files.par_iter().enumerate().map(run_file).collect());
    let mut manifest = Manifest {
        config: config.clone(),
        items: Vec::new(),
        errors: Vec::new(),
    };
    for r in results {
        match r {
            Ok(items) => manifest.items.extend(items),
            Err(e) => manifest.errors.push(e),
        }
    }
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub threads: usize,
    pub images: usize,
    pub seconds: f64,
    pub images_per_second: f64,
    /// SHA-256 over all output samples and applied instances, in item order.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindTiming {
    pub kind: TransformKind,
    pub count: u64,
    pub total_seconds: f64,
    pub mean_microseconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub policy: PolicySpec,
    pub runs: Vec<BenchRun>,
    pub per_kind: Vec<KindTiming>,
    /// All runs produced the same digest.
    pub deterministic: bool,
}

/// Time the in-memory pipeline over `images` for each thread count.
pub fn bench(images: &[Image8], config: &PipelineConfig, thread_counts: &[usize]) -> Result<BenchReport> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::invalid("bench corpus is empty"));
    }
    let mut runs = Vec::new();
    let mut timer = KindTimer::default();
    for &threads in thread_counts {
        let pool = thread_pool(threads)?;
        let start = Instant::now();
        let results: Vec<Result<(Image8, Vec<TransformInstance>, KindTimer)>> = pool.install(|| {
            images
                .par_iter()
                .enumerate()
                .map(|(i, img)| {
                    let mut t = KindTimer::default();
                    let (out, _, inst) = process_timed(img, config, item_key(i, 0), Some(&mut t))?;
                    Ok((out, inst, t))
                })
                .collect()
        });
        let seconds = start.elapsed().as_secs_f64();
        let mut hasher = Sha256::new();
        for r in results {
            let (out, inst, t) = r?;
            hasher.update(out.data());
            hasher.update(serde_json::to_vec(&inst)?);
            timer = timer.merge(t);
        }
        let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        runs.push(BenchRun {
            threads,
            images: images.len(),
            seconds,
            images_per_second: images.len() as f64 / seconds.max(1e-12),
            digest,
        });
    }
    let per_kind = timer
        .by_kind
        .into_iter()
        .map(|(kind, (count, total))| KindTiming {
            kind,
            count,
            total_seconds: total.as_secs_f64(),
            mean_microseconds: total.as_secs_f64() * 1e6 / count as f64,
        })
        .collect();
    let deterministic = runs.windows(2).all(|w| w[0].digest == w[1].digest);
    Ok(BenchReport {
        policy: config.policy.clone(),
        runs,
        per_kind,
        deterministic,
    })
}

/// Smooth random blob image, for demos and tests.
pub fn synthetic_image(height: usize, width: usize, seed: u64) -> Image8 {
    use rand::Rng as _;
    let mut rng = Rng::derive(seed, 0x5EED, 0);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..height as f64),
                rng.random_range(0.0..width as f64),
                rng.random_range(8.0..40.0),
                rng.random_range(60.0..220.0),
            )
        })
        .collect();
    Image8::from_fn(height, width, |y, x, _| {
        let v: f64 = blobs
            .iter()
            .map(|&(cy, cx, r, a)| a * (-((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)) / (2.0 * r * r)).exp())
            .sum();
        v.min(255.0) as u8
    })
}

/// Write `n` synthetic PNGs named `img_00000.png`, ... into `dir`.
pub fn write_synthetic_corpus(dir: impl AsRef<Path>, n: usize, height: usize, width: usize, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..n).into_par_iter().try_for_each(|i| {
        synthetic_image(height, width, seed.wrapping_add(i as u64)).write_png(dir.join(format!("img_{i:05}.png")))
    })
}
