use std::fs;
use std::path::{Path, PathBuf};

use wordsynth::corpus::{
    bundled_word_list, gram_weights, load_lexicon, parse_vocab_dump, select_ngram_vocab, vocab_dump, LanguagePrior,
    Lexicon, NGramVocab,
};
use wordsynth::encode::{charseq_dump, dict_dump, ngram_dump, NGramCodebook};
use wordsynth::eval::{
    evaluate, make_samples, run_ablation, AblationConfig, Decoder, DecoderConfig, LexiconMode, TargetKind,
};
use wordsynth::net::{
    incremental_train, load_checkpoint, save_checkpoint, sgd_train, HeadSpec, Network, NetworkSpec, TrainConfig,
    Widths,
};
use wordsynth::render::{
    fit_color_clusters, generate_dataset, load_dataset, read_manifest, tiles, ColorClusterSet, DatasetManifest,
    FontCatalogue, NaturalCrops, RenderConfig, Renderer, MANIFEST_NAME,
};
use wordsynth::{Error, Result};

use crate::args::*;
use crate::Failure;

pub const FONT_DIR_VAR: &str = "WORDSYNTH_FONT_DIR";

pub fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Clusters(a) => clusters(a),
        Command::Vocab(a) => vocab(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Encode(a) => encode(a),
        Command::Inspect(a) => inspect(a),
    }
    .map_err(Failure::from)
}

pub fn load_run_config(path: &Path) -> std::result::Result<Command, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {}", path.display(), e.message())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// `dir/name` for directory outputs, `file.name` for file outputs.
fn sidecar(out: &Path, is_dir: bool, name: &str) -> PathBuf {
    if is_dir {
        out.join(name)
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".");
        s.push(name);
        PathBuf::from(s)
    }
}

fn write_run_config(command: &Command, path: &Path) -> Result<()> {
    let text = toml::to_string(command).map_err(|e| Error::Config(format!("serialising run config: {e}")))?;
    write(path, text)
}

/// Loads the rendering resources and writes the resolved palettes and
/// sampling config next to the outputs, returning args that point at them.
fn renderer(args: &RenderArgs, out: &Path, is_dir: bool) -> Result<(Renderer, RenderArgs)> {
    let font_dir = args
        .fonts
        .clone()
        .or_else(|| std::env::var_os(FONT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(FontCatalogue::bundled_dir);
    let fonts = FontCatalogue::from_dir(&font_dir)?;
    let natural_dir = args.natural.clone().unwrap_or_else(NaturalCrops::bundled_dir);
    let crops = NaturalCrops::from_dir(&natural_dir)?;
    let palettes = match &args.palettes {
        Some(p) => ColorClusterSet::load(p)?,
        None => wordsynth::render::tile_palettes(&crops, 0)?,
    };
    let config = match &args.render_config {
        Some(p) => RenderConfig::load(p)?,
        None => RenderConfig::default(),
    };
    let palettes_path = sidecar(out, is_dir, "palettes.json");
    let config_path = sidecar(out, is_dir, "render.toml");
    write(&palettes_path, palettes.to_json())?;
    write(&config_path, config.to_toml())?;
    let resolved = RenderArgs {
        fonts: Some(absolute(&font_dir)),
        natural: Some(absolute(&natural_dir)),
        palettes: Some(absolute(&palettes_path)),
        render_config: Some(absolute(&config_path)),
    };
    Ok((Renderer::new(fonts, palettes, crops, config)?, resolved))
}

fn words_of(path: &Path) -> Result<Lexicon> {
    Ok(load_lexicon(path)?.0)
}

fn manifest_of(data: &Path) -> Result<DatasetManifest> {
    if data.is_dir() {
        read_manifest(&data.join(MANIFEST_NAME))
    } else {
        read_manifest(data)
    }
}

fn load_vocab(path: &Path, max_n: usize, min_count: u64) -> Result<NGramVocab> {
    parse_vocab_dump(&read(path)?, max_n, min_count)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn gen(mut a: GenArgs) -> Result<()> {
    let lexicon = words_of(&a.lexicon)?;
    let (r, resolved) = renderer(&a.render, &a.out, true)?;
    let manifest = generate_dataset(&r, lexicon.words(), a.per_word, a.level, a.seed, &a.out, a.workers)?;
    println!("{} images in {}", manifest.len(), a.out.display());
    a.render = resolved;
    a.lexicon = absolute(&a.lexicon);
    a.out = absolute(&a.out);
    write_run_config(&Command::Gen(a.clone()), &a.out.join("run.toml"))
}

fn clusters(mut a: ClustersArgs) -> Result<()> {
    let dir = a.images.clone().unwrap_or_else(NaturalCrops::bundled_dir);
    let crops = NaturalCrops::from_dir(&dir)?;
    if a.tile == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    let sources: Vec<_> = crops.images().iter().flat_map(|i| tiles(i, a.tile)).collect();
    let set = fit_color_clusters(&sources, 3, a.seed)?;
    set.save(&a.out)?;
    println!("{} palettes to {}", set.len(), a.out.display());
    a.images = Some(absolute(&dir));
    a.out = absolute(&a.out);
    write_run_config(&Command::Clusters(a.clone()), &sidecar(&a.out, false, "run.toml"))
}

fn vocab(mut a: VocabArgs) -> Result<()> {
    let path = a.words.clone().unwrap_or_else(bundled_word_list);
    let lexicon = words_of(&path)?;
    let vocab = select_ngram_vocab(lexicon.words(), a.max_n, a.min_count);
    let weights = gram_weights(lexicon.words(), &vocab)?;
    write(&a.out, vocab_dump(&vocab, &weights))?;
    println!("{} grams ({:?} per length) to {}", vocab.len(), vocab.per_length(), a.out.display());
    a.words = Some(absolute(&path));
    a.out = absolute(&a.out);
    write_run_config(&Command::Vocab(a.clone()), &sidecar(&a.out, false, "run.toml"))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("{what} must be comma-separated integers, got {s:?}")))
}

fn network_spec(m: &ModelArgs, head: HeadSpec) -> Result<NetworkSpec> {
    let w = parse_list(&m.widths, "widths")?;
    let conv: [usize; 4] = w
        .try_into()
        .map_err(|_| Error::Config("widths needs four convolution widths".into()))?;
    let widths = Widths { conv, fc: m.fc };
    Ok(match m.variant {
        VariantKind::Base => NetworkSpec::base(widths, head, m.dropout),
        VariantKind::Plus2 => NetworkSpec::plus2(widths, head, m.dropout),
    })
}

fn train_config(m: &ModelArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: m.batch,
        learning_rate: m.lr,
        momentum: m.momentum,
        weight_decay: m.weight_decay,
        epochs: m.epochs,
        seed,
        val_fraction: m.val_fraction,
        ..TrainConfig::default()
    }
}

fn train(mut a: TrainArgs) -> Result<()> {
    let manifest = manifest_of(&a.data)?;
    let images = load_dataset(&manifest)?;
    let mut cfg = train_config(&a.model, a.seed);
    let lexicon;
    let vocab;
    let (kind, head) = match a.head {
        HeadKind::Dict => {
            let path = a
                .lexicon
                .as_ref()
                .ok_or_else(|| Error::Config("the dict head needs --lexicon".into()))?;
            lexicon = words_of(path)?;
            let classes = match &a.schedule {
                Some(s) => {
                    cfg.schedule = parse_list(s, "schedule")?;
                    cfg.schedule[0]
                }
                None => lexicon.len(),
            };
            (TargetKind::Dict(&lexicon), HeadSpec::Dict { classes })
        }
        HeadKind::Charseq => (TargetKind::CharSeq, HeadSpec::CharSeq),
        HeadKind::Ngram => {
            let path = a
                .vocab
                .as_ref()
                .ok_or_else(|| Error::Config("the ngram head needs --vocab".into()))?;
            vocab = load_vocab(path, a.max_n, a.min_count)?;
            (TargetKind::NGram(&vocab), HeadSpec::NGram { grams: vocab.len() })
        }
    };
    let samples = make_samples(images, kind)?;
    let spec = network_spec(&a.model, head)?;
    let mut net = Network::<f32>::new(&spec, a.seed)?;
    let log = match (&kind, cfg.schedule.is_empty()) {
        (TargetKind::Dict(lex), false) => incremental_train(&mut net, &samples, lex.len(), &cfg)?,
        _ => sgd_train(&mut net, &samples, &cfg, None)?,
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    save_checkpoint(&net, &a.out.join("model.ckpt"))?;
    write(&a.out.join("train.log"), log.to_tsv())?;
    if let Some(last) = log.records.last() {
        println!("epoch {} val_acc {:.4}", last.epoch, last.val_acc);
    }
    a.data = absolute(&a.data);
    a.lexicon = a.lexicon.as_deref().map(absolute);
    a.vocab = a.vocab.as_deref().map(absolute);
    a.out = absolute(&a.out);
    write_run_config(&Command::Train(a.clone()), &a.out.join("run.toml"))
}

fn eval(mut a: EvalArgs) -> Result<()> {
    let net = load_checkpoint(&a.model)?;
    let manifest = manifest_of(&a.data)?;
    let kind = a.decoder.unwrap_or(match net.head_spec() {
        HeadSpec::Dict { .. } => HeadKind::Dict,
        HeadSpec::CharSeq => HeadKind::Charseq,
        HeadSpec::NGram { .. } => HeadKind::Ngram,
    });
    let lexicon = a.lexicon.as_deref().map(words_of).transpose()?;
    let need_lexicon = || {
        lexicon
            .as_ref()
            .ok_or_else(|| Error::Config("this decoder needs --lexicon".into()))
    };
    let prior;
    let codebook;
    let decoder = match kind {
        HeadKind::Dict => {
            let lex = need_lexicon()?;
            prior = LanguagePrior::uniform(lex);
            Decoder::Dict { lexicon: lex, prior: &prior }
        }
        HeadKind::Charseq => Decoder::CharSeq {
            lexicon: lexicon.as_ref(),
        },
        HeadKind::Ngram => {
            let lex = need_lexicon()?;
            let path = a
                .vocab
                .as_ref()
                .ok_or_else(|| Error::Config("the ngram decoder needs --vocab".into()))?;
            codebook = NGramCodebook::new(lex, &load_vocab(path, a.max_n, a.min_count)?);
            Decoder::NGram {
                lexicon: lex,
                codebook: &codebook,
            }
        }
    };
    let cfg = DecoderConfig {
        decoder,
        mode: a.sublexicon.map_or(LexiconMode::None, LexiconMode::Sublexicon),
        seed: a.seed,
    };
    let report = pool(a.workers)?.install(|| evaluate(&net, &manifest, &cfg))?;
    write(&a.out, report.to_text())?;
    match report.error_mean_edit_distance {
        Some(d) => println!("word_accuracy {:.4} error_edit {d:.3}", report.word_accuracy),
        None => println!("word_accuracy {:.4}", report.word_accuracy),
    }
    a.model = absolute(&a.model);
    a.data = absolute(&a.data);
    a.lexicon = a.lexicon.as_deref().map(absolute);
    a.vocab = a.vocab.as_deref().map(absolute);
    a.out = absolute(&a.out);
    write_run_config(&Command::Eval(a.clone()), &sidecar(&a.out, false, "run.toml"))
}

fn ablate(mut a: AblateArgs) -> Result<()> {
    let lexicon = words_of(&a.lexicon)?;
    let (r, resolved) = renderer(&a.render, &a.out, true)?;
    let config = AblationConfig {
        spec: network_spec(&a.model, HeadSpec::Dict { classes: lexicon.len() })?,
        train: train_config(&a.model, a.seed),
        per_word: a.per_word,
        reduced_per_word: a.reduced_per_word,
        test_per_word: a.test_per_word,
        seed: a.seed,
        workers: a.workers,
    };
    let result = run_ablation(&r, &lexicon, &config, &a.out.join("data"))?;
    write(&a.out.join("ablation.tsv"), result.plot_data())?;
    write(&a.out.join("ablation.txt"), result.to_table())?;
    print!("{}", result.to_table());
    a.render = resolved;
    a.lexicon = absolute(&a.lexicon);
    a.out = absolute(&a.out);
    write_run_config(&Command::Ablate(a.clone()), &a.out.join("run.toml"))
}

fn encode(mut a: EncodeArgs) -> Result<()> {
    let lexicon = words_of(&a.lexicon)?;
    let text = match a.kind {
        EncodingKind::Dict => dict_dump(&lexicon),
        EncodingKind::Charseq => charseq_dump(&lexicon)?,
        EncodingKind::Ngram => {
            let vocab = match &a.vocab {
                Some(p) => load_vocab(p, a.max_n, a.min_count)?,
                None => select_ngram_vocab(lexicon.words(), a.max_n, a.min_count),
            };
            ngram_dump(&lexicon, &vocab)
        }
    };
    write(&a.out, text)?;
    a.lexicon = absolute(&a.lexicon);
    a.vocab = a.vocab.as_deref().map(absolute);
    a.out = absolute(&a.out);
    write_run_config(&Command::Encode(a.clone()), &sidecar(&a.out, false, "run.toml"))
}

fn inspect(mut a: InspectArgs) -> Result<()> {
    let (r, resolved) = renderer(&a.render, &a.out, false)?;
    let recipe = r.sample_recipe(&a.word, a.level, a.seed, a.index)?;
    let img = r.render(&recipe)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    img.save_with_format(&a.out, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", a.out.display())))?;
    let json = serde_json::to_string_pretty(&recipe).map_err(|e| Error::Config(e.to_string()))?;
    write(&sidecar(&a.out, false, "recipe.json"), json)?;
    a.render = resolved;
    a.out = absolute(&a.out);
    write_run_config(&Command::Inspect(a.clone()), &sidecar(&a.out, false, "run.toml"))
}
