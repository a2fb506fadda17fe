use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use xmodal_core::dsp::{load_wav, MelExtractor, MelSpectrogram};
use xmodal_core::embedding::load_embeddings;
use xmodal_core::metrics::evaluate_manifest;
use xmodal_core::nn::{save_checkpoint, synthetic_linear_task, train_toy, ToyModel, ToySample};
use xmodal_core::pairing::{greedy_pair, similarity_stats, stratified_split, PairingManifest, Split};
use xmodal_core::Error;

use crate::config::PipelineConfig;
use crate::log;

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const PAIR_STATS_FILE: &str = "pair_stats.json";
pub const SPLIT_FILE: &str = "split.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSSES_FILE: &str = "losses.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const SPECTROGRAM_EXT: &str = "mel";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(())
}

/// Creates the output directory and records the effective configuration.
pub fn prepare_output(config: &PipelineConfig, command: &str) -> Result<PathBuf> {
    let dir = config.paths.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    write(&dir.join(format!("config.{command}.json")), config.to_json()? + "\n")?;
    Ok(dir)
}

fn print_json(v: &serde_json::Value) {
    println!("{v}");
}

/// `artwork_id \t style [\t description]` per line; `#` starts a comment.
fn read_styles(path: &Path) -> Result<HashMap<String, (String, Option<String>)>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(id), Some(style)) = (cols.next(), cols.next()) else {
            return Err(Error::Format(format!("{}:{}: expected `id<TAB>style`", path.display(), n + 1)).into());
        };
        let desc = cols.next().map(str::to_owned).filter(|d| !d.is_empty());
        out.insert(id.to_owned(), (style.to_owned(), desc));
    }
    Ok(out)
}

pub fn pair(config: &PipelineConfig) -> Result<()> {
    let p = &config.paths;
    let art_path = config.require(&p.artworks, "artworks")?;
    let mus_path = config.require(&p.music, "music")?;
    let artworks = load_embeddings(art_path)?;
    let music = load_embeddings(mus_path)?;
    log::info(
        "pair.loaded",
        json!({"artworks": artworks.len(), "music": music.len(), "dim": artworks.dim()}),
    );

    let mut manifest = greedy_pair(&artworks, &music)?;
    manifest.created_from = vec![art_path.display().to_string(), mus_path.display().to_string()];
    let styles = p.styles.as_deref().map(read_styles).transpose()?;
    for r in &mut manifest.records {
        r.prompt = config.prompt.clone();
        r.negative_prompt = config.negative_prompt.clone();
        if let Some((style, desc)) = styles.as_ref().and_then(|s| s.get(&r.artwork_id)) {
            r.style = Some(style.clone());
            r.description = desc.clone();
        }
    }
    manifest.validate()?;
    let stats = similarity_stats(&manifest.similarities())?;

    let dir = prepare_output(config, "pair")?;
    manifest.save(dir.join(PAIRS_FILE))?;
    write(&dir.join(PAIR_STATS_FILE), serde_json::to_string_pretty(&stats)? + "\n")?;
    log::info("pair.done", json!({"pairs": manifest.len()}));
    print_json(&serde_json::to_value(stats)?);
    Ok(())
}

pub fn split(config: &PipelineConfig) -> Result<()> {
    let path = config.require(&config.paths.manifest, "manifest")?;
    let manifest = PairingManifest::load(path)?;
    let s = &config.split;
    let out = stratified_split(&manifest, s.train_fraction, s.val_count, s.seed)?;
    let dir = prepare_output(config, "split")?;
    out.save(dir.join(SPLIT_FILE))?;
    let counts = json!({
        "train": out.count(Split::Train),
        "test": out.count(Split::Test),
        "val": out.count(Split::Val),
    });
    log::info("split.done", counts.clone());
    print_json(&counts);
    Ok(())
}

fn is_wav(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Extracts one spectrogram per WAV file. Unreadable files are logged and
/// skipped; the run succeeds if at least one file was processed.
pub fn melspec(config: &PipelineConfig) -> Result<()> {
    let audio_dir = config.require(&config.paths.audio_dir, "audio_dir")?;
    let entries = fs::read_dir(audio_dir).map_err(|source| Error::Io {
        path: audio_dir.to_owned(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_wav(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyInput("no WAV files in audio directory").into());
    }

    let dir = prepare_output(config, "melspec")?;
    let extractor = MelExtractor::<f64>::new(config.dsp)?;
    let mut processed = Vec::new();
    let mut excluded = Vec::new();
    let mut first_error: Option<Error> = None;
    for file in &files {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("track").to_owned();
        let result = load_wav::<f64>(file, config.dsp.sample_rate).and_then(|audio| {
            let mel = extractor.extract(&audio)?;
            mel.save(dir.join(format!("{stem}.{SPECTROGRAM_EXT}")))?;
            Ok(mel.frames())
        });
        match result {
            Ok(frames) => {
                log::info("melspec.file", json!({"file": file.display().to_string(), "frames": frames}));
                processed.push(json!({"id": stem, "frames": frames}));
            }
            Err(e) => {
                log::warn(
                    "melspec.skip",
                    json!({"file": file.display().to_string(), "error": e.to_string(), "code": e.exit_code()}),
                );
                excluded.push(json!({"id": stem, "error": e.to_string()}));
                first_error.get_or_insert(e);
            }
        }
    }
    let summary = json!({
        "processed": processed.len(),
        "skipped": excluded.len(),
        "tracks": processed,
        "excluded": excluded,
    });
    log::info("melspec.done", json!({"processed": processed.len(), "skipped": excluded.len()}));
    print_json(&summary);
    match first_error {
        Some(e) if processed.is_empty() => Err(e.into()),
        _ => Ok(()),
    }
}

/// Train-split pairs as (artwork embedding, mean log-mel frame) samples.
fn manifest_samples(config: &PipelineConfig) -> Result<Vec<ToySample<f64>>> {
    let p = &config.paths;
    let manifest = PairingManifest::load(config.require(&p.manifest, "manifest")?)?;
    let artworks = load_embeddings(config.require(&p.artworks, "artworks")?)?;
    let spec_dir = config.require(&p.spectrogram_dir, "spectrogram_dir")?;
    let mut out = Vec::new();
    for r in manifest.records.iter().filter(|r| r.split == Split::Train) {
        let condition: Vec<f64> = artworks
            .get(&r.artwork_id)
            .ok_or_else(|| Error::Lookup {
                id: r.artwork_id.clone(),
                store: "artworks",
            })?
            .iter()
            .map(|&x| x as f64)
            .collect();
        let spec_path = spec_dir.join(format!("{}.{SPECTROGRAM_EXT}", r.music_id));
        if !spec_path.exists() {
            return Err(Error::Lookup {
                id: r.music_id.clone(),
                store: "spectrograms",
            }
            .into());
        }
        let mel = MelSpectrogram::<f64>::load(&spec_path)?;
        let mut latent = vec![0.0; mel.n_mels()];
        for f in 0..mel.frames() {
            for (l, &v) in latent.iter_mut().zip(mel.data.row(f)) {
                *l += v;
            }
        }
        latent.iter_mut().for_each(|l| *l /= mel.frames() as f64);
        out.push(ToySample { condition, latent });
    }
    if out.is_empty() {
        return Err(Error::Config("manifest has no train records".into()).into());
    }
    Ok(out)
}

pub fn train(config: &PipelineConfig) -> Result<()> {
    let toy = &config.toy;
    let data = if toy.synthetic {
        synthetic_linear_task(toy.samples, toy.projection.in_dim, toy.latent_dim, toy.noise, toy.data_seed)
    } else {
        manifest_samples(config)?
    };
    let latent_dim = data[0].latent.len();
    let mut rng = ChaCha8Rng::seed_from_u64(toy.init_seed);
    let model = ToyModel::<f64>::random(toy.projection, latent_dim, toy.denoiser_hidden, &mut rng)?;
    log::info(
        "train.start",
        json!({"samples": data.len(), "latent_dim": latent_dim, "synthetic": toy.synthetic}),
    );

    let report = train_toy(model, &data, &config.train)?;
    let dir = prepare_output(config, "train")?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    save_checkpoint(&report.model, &ckpt)?;
    let mut curve = Vec::new();
    report.write_jsonl(&mut curve)?;
    write(&dir.join(LOSSES_FILE), curve)?;

    let losses = report.losses();
    let summary = json!({
        "steps": losses.len(),
        "first_loss": losses.first(),
        "final_loss": losses.last(),
        "checkpoint": ckpt.display().to_string(),
    });
    log::info("train.done", summary.clone());
    print_json(&summary);
    Ok(())
}

pub fn eval(config: &PipelineConfig, only: Option<Split>) -> Result<()> {
    let p = &config.paths;
    let mut manifest = PairingManifest::load(config.require(&p.manifest, "manifest")?)?;
    if let Some(s) = only {
        manifest.records.retain(|r| r.split == s);
    }
    let generated = load_embeddings(config.require(&p.generated, "generated")?)?;
    let groundtruth = load_embeddings(config.require(&p.groundtruth, "groundtruth")?)?;
    let artworks = load_embeddings(config.require(&p.artworks, "artworks")?)?;
    let report = evaluate_manifest(&manifest, &generated, &groundtruth, &artworks, &config.eval)
        .context("evaluating manifest")?;
    let dir = prepare_output(config, "eval")?;
    write(&dir.join(METRICS_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    log::info("eval.done", json!({"pairs": manifest.len()}));
    print_json(&serde_json::to_value(report)?);
    Ok(())
}
