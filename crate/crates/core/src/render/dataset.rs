use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat};
use rayon::prelude::*;

use super::finalize::{to_output_grey, WordImage};
use super::renderer::Renderer;
use super::SophisticationLevel;
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.tsv";
const IMAGE_DIR: &str = "images";

/// One manifest line: image path relative to the dataset root, label, the
/// sample seed and the level. `(label, seed, level)` alone re-renders the
/// image with recipe index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub label: String,
    pub seed: u64,
    pub level: SophisticationLevel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Directory image paths are relative to.
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.path, r.label, r.seed, r.level.letter()));
        }
        out
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.label.as_str())
    }
}

/// Seed of sample `index` of a dataset generated with `seed` (splitmix64).
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Renders `per_word` images of every lexicon word into `out_dir/images` as
/// 8-bit greyscale `32 x 100` PNGs and writes `out_dir/manifest.tsv`.
/// Sample `i` shows word `i mod |lexicon|` and depends only on `(seed, i)`,
/// so the output is identical for any number of workers.
pub fn generate_dataset(
    renderer: &Renderer,
    lexicon: &[String],
    per_word: usize,
    level: SophisticationLevel,
    seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<DatasetManifest> {
    if lexicon.is_empty() {
        return Err(Error::Config("lexicon is empty".into()));
    }
    let img_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let n = lexicon.len() * per_word;
    let render = |i: usize| -> Result<ManifestRow> {
        let s = sample_seed(seed, i as u64);
        let recipe = renderer.sample_recipe(&lexicon[i % lexicon.len()], level, s, 0)?;
        let grey = to_output_grey(&renderer.render(&recipe)?);
        let rel = format!("{IMAGE_DIR}/{i:08}.png");
        let path = out_dir.join(&rel);
        grey.save_with_format(&path, ImageFormat::Png)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        Ok(ManifestRow {
            path: rel,
            label: recipe.word,
            seed: s,
            level,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| (0..n).into_par_iter().map(render).collect::<Result<Vec<_>>>())?;
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        rows,
    };
    let mpath = out_dir.join(MANIFEST_NAME);
    fs::write(&mpath, manifest.to_tsv()).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

/// Reads a manifest file; image paths are resolved against its directory.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Config(format!("{}:{}: {what}", path.display(), n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("expected path, label, seed and level"));
        }
        rows.push(ManifestRow {
            path: f[0].to_string(),
            label: f[1].to_string(),
            seed: f[2].parse().map_err(|_| bad("bad seed"))?,
            level: f[3].parse().map_err(|_| bad("bad level"))?,
        });
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(DatasetManifest { root, rows })
}

/// Loads and normalises one image of a manifest.
pub fn load_word_image(manifest: &DatasetManifest, row: &ManifestRow) -> Result<WordImage> {
    let path = manifest.root.join(&row.path);
    let img = image::open(&path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let grey: GrayImage = img.to_luma8();
    Ok(WordImage::from_grey(&grey, &row.label))
}

/// Every image of a manifest, in manifest order.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Vec<WordImage>> {
    manifest.rows.par_iter().map(|r| load_word_image(manifest, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn renderer() -> &'static Renderer {
        static R: OnceLock<Renderer> = OnceLock::new();
        R.get_or_init(|| Renderer::bundled().unwrap())
    }

    fn words(n: usize) -> Vec<String> {
        ["apple", "river", "stone", "cloud", "night", "tiger", "lemon", "paper", "glass", "house"][..n]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn rows_per_word_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(renderer(), &words(10), 5, SophisticationLevel::F, 1, dir.path(), 1).unwrap();
        assert_eq!(m.len(), 50);
        let read = read_manifest(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(read.rows, m.rows);
        for w in words(10) {
            assert_eq!(m.labels().filter(|l| *l == w).count(), 5);
        }
        let images = load_dataset(&read).unwrap();
        for img in &images {
            let n = img.pixels.len() as f64;
            let mean = img.pixels.iter().map(|&v| v as f64).sum::<f64>() / n;
            let sd = (img.pixels.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-5 && (sd - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn generation_is_deterministic_and_worker_independent() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let lex = words(3);
        generate_dataset(renderer(), &lex, 2, SophisticationLevel::E, 7, a.path(), 1).unwrap();
        generate_dataset(renderer(), &lex, 2, SophisticationLevel::E, 7, b.path(), 4).unwrap();
        let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), MANIFEST_NAME), read(b.path(), MANIFEST_NAME));
        for i in 0..6 {
            let f = format!("{IMAGE_DIR}/{i:08}.png");
            assert_eq!(read(a.path(), &f), read(b.path(), &f));
        }
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        fs::write(&p, "a.png\tword\tx\ta\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Config(_))));
        assert!(matches!(read_manifest(&dir.path().join("nope")), Err(Error::Io { .. })));
        assert!(generate_dataset(renderer(), &[], 1, SophisticationLevel::A, 0, dir.path(), 1).is_err());
    }
}
