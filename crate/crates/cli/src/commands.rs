use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dvs_nearchip::bench::{self, AblationOptions, Variant};
use dvs_nearchip::bnn::{self, TrainConfig};
use dvs_nearchip::codec::{build_dictionary, deframe_stream, frame_packet, HuffmanDictionary};
use dvs_nearchip::events::{read_event_file, read_events, write_event_file, Event, EVS_MAGIC};
use dvs_nearchip::filter::{read_frame_file, read_frames, write_frame_file, FilterPipeline, FilteredFrame, FrameLayout, FRM_MAGIC};
use dvs_nearchip::synth::{build_dataset, gen_clip, read_labels, write_labels, DatasetSpec, LabelRow};
use dvs_nearchip::FilterConfig;

use crate::error::Failure;
use crate::manifest::{beside, RunManifest};
use crate::{filter_config, Cli, Command, TrainArgs};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let config = cli.config.as_ref();
    match &cli.command {
        Command::Gen { pos, neg, seed, out, duration_us, edge_rate, noise_rate, empty_fraction } => {
            let mut spec = DatasetSpec::default();
            if let Some(v) = duration_us {
                spec.duration_us = *v;
            }
            if let Some(v) = edge_rate {
                spec.edge_rate = *v;
            }
            if let Some(v) = noise_rate {
                spec.noise_rate = *v;
            }
            if let Some(v) = empty_fraction {
                if !(0.0..=1.0).contains(v) {
                    return Err(Failure::usage("--empty-fraction must lie in [0, 1]"));
                }
                spec.empty_fraction = *v;
            }
            gen(*pos, *neg, *seed, &spec, out)
        }
        Command::Filter { input, out, filter, dict, packets } => {
            if *packets && dict.is_none() {
                return Err(Failure::usage("--packets needs --dict"));
            }
            let cfg = filter_config(config, filter)?;
            filter_cmd(input, out, &cfg, dict.as_deref())
        }
        Command::Dict { inputs, out } => dict_cmd(inputs, out),
        Command::Decode { input, dict, out, filter, sensor } => {
            let cfg = filter_config(config, filter)?;
            let geometry = sensor.geometry()?;
            cfg.validate(geometry)?;
            decode_cmd(input, dict, out, cfg.layout(geometry))
        }
        Command::Train { labels, out, seed, filter, train } => {
            let cfg = filter_config(config, filter)?;
            train_cmd(labels, out, &cfg, &train_config(train, *seed), train.frames_per_clip)
        }
        Command::Detect { input, model, dict, out, filter, sensor } => {
            let cfg = filter_config(config, filter)?;
            let geometry = sensor.geometry()?;
            cfg.validate(geometry)?;
            detect_cmd(input, model, dict.as_deref(), out.as_deref(), cfg.layout(geometry))
        }
        Command::Bench { pos, neg, seed, out, variants, no_f1, duration_us, noise_rate, filter, train } => {
            let cfg = filter_config(config, filter)?;
            let variants = variants
                .iter()
                .map(|name| Variant::by_name(name).ok_or_else(|| Failure::usage(format!("unknown variant {name:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let mut spec = DatasetSpec::default();
            if let Some(v) = duration_us {
                spec.duration_us = *v;
            }
            if let Some(v) = noise_rate {
                spec.noise_rate = *v;
            }
            let opts = AblationOptions {
                base: cfg,
                train: train_config(train, *seed),
                evaluate_f1: !no_f1,
                train_frames_per_clip: train.frames_per_clip,
                ..Default::default()
            };
            bench_cmd(*pos, *neg, *seed, &spec, &variants, &opts, out)
        }
    }
}

fn train_config(t: &TrainArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        learning_rate: t.learning_rate,
        filter_learning_rate: t.filter_learning_rate,
        batch_size: t.batch,
        seed,
        n_filters: t.filters,
        kernel: t.kernel,
        threshold: t.threshold,
        ..Default::default()
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::from(e).at(dir.display()))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::from(e).at(path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::from(e).at(path.display()))
}

fn read_dict(path: &Path) -> Result<HuffmanDictionary, Failure> {
    HuffmanDictionary::from_bytes(&read(path)?).map_err(|e| Failure::from(e).at(path.display()))
}

fn gen(pos: usize, neg: usize, seed: u64, spec: &DatasetSpec, out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("gen");
    let dataset = build_dataset(pos, neg, spec, seed)?;
    create_dir(out)?;
    let mut rows = Vec::with_capacity(dataset.len());
    for (i, scene) in dataset.scenes.iter().enumerate() {
        let clip = gen_clip(scene)?;
        let name = format!("clip_{i:04}.evs");
        let path = out.join(&name);
        write_event_file(&path, scene.geometry, &clip.events).map_err(|e| Failure::from(e).at(path.display()))?;
        rows.push(LabelRow { path: name.into(), label: clip.label, seed: scene.seed });
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    write_labels(out.join("labels.csv"), &rows)?;
    write_labels(out.join("train.csv"), &pick(&dataset.train))?;
    write_labels(out.join("test.csv"), &pick(&dataset.test))?;
    manifest.seeds.insert("dataset".into(), seed);
    manifest.outputs = vec![out.to_path_buf()];
    manifest.set("clips", rows.len());
    manifest.set("train", dataset.train.len());
    manifest.set("test", dataset.test.len());
    manifest.set("edge_rate", spec.edge_rate);
    manifest.set("noise_rate", spec.noise_rate);
    manifest.set("duration_us", spec.duration_us);
    manifest.write(&out.join("manifest.json"))?;
    eprintln!("wrote {} clips ({} train / {} test) to {}", rows.len(), dataset.train.len(), dataset.test.len(), out.display());
    Ok(())
}

/// Stream duration used for bitrates: whole windows up to the last event.
fn stream_duration_us(events: &[Event], tau_us: u64) -> u64 {
    events.last().map_or(0, |e| (e.t / tau_us + 1) * tau_us)
}

fn filter_cmd(input: &Path, out: &Path, cfg: &FilterConfig, dict: Option<&Path>) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("filter");
    manifest.filter_config(cfg);
    let dict = dict.map(read_dict).transpose()?;
    let (geometry, events) = read_event_file(input).map_err(|e| Failure::from(e).at(input.display()))?;
    let mut pipeline = FilterPipeline::new(cfg.clone(), geometry)?;
    let mut frames = Vec::new();
    pipeline.push_all(&events, &mut frames);
    pipeline.finish(&mut frames);
    let layout = cfg.layout(geometry);
    let bits: u64 = match &dict {
        Some(d) => {
            let mut w = BufWriter::new(fs::File::create(out).map_err(|e| Failure::from(e).at(out.display()))?);
            let mut bits = 0u64;
            for f in &frames {
                let p = frame_packet(f, d);
                bits += 8 * p.len() as u64;
                w.write_all(&p)?;
            }
            w.flush()?;
            bits
        }
        None => {
            write_frame_file(out, layout, &frames).map_err(|e| Failure::from(e).at(out.display()))?;
            frames.iter().map(|f| bench::frame_packet_bits(f, None) as u64).sum()
        }
    };
    let duration_us = stream_duration_us(&events, cfg.tau_us);
    let bitrate = if duration_us > 0 { bits as f64 * 1e6 / duration_us as f64 } else { 0.0 };
    let stats = pipeline.stats();
    eprintln!(
        "{} events, {} frames, {} packet bits over {:.3} s: {:.1} bit/s{}",
        stats.events_in,
        frames.len(),
        bits,
        duration_us as f64 * 1e-6,
        bitrate,
        if dict.is_some() { "" } else { " (uncompressed payload)" }
    );
    manifest.inputs = vec![input.to_path_buf()];
    manifest.outputs = vec![out.to_path_buf()];
    manifest.set("frames", frames.len());
    manifest.set("packet_bits", bits);
    manifest.set("bitrate_bps", bitrate);
    manifest.set("events_dropped", stats.events_dropped);
    manifest.set("frames_suppressed", stats.frames_suppressed);
    manifest.set("output_kind", if dict.is_some() { "packets" } else { "frames" });
    manifest.write(&beside(out))?;
    Ok(())
}

fn dict_cmd(inputs: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("dict");
    let mut layout: Option<FrameLayout> = None;
    let mut corpus = Vec::new();
    for path in inputs {
        let (l, frames) = read_frame_file(path).map_err(|e| Failure::from(e).at(path.display()))?;
        match layout {
            Some(prev) if prev != l => {
                return Err(Failure::mismatch(format!(
                    "{}: frames are {}x{}, earlier inputs {}x{}",
                    path.display(),
                    l.width,
                    l.height,
                    prev.width,
                    prev.height
                )));
            }
            _ => layout = Some(l),
        }
        corpus.extend(frames);
    }
    let dict = build_dictionary(&corpus)?;
    write(out, &dict.to_bytes())?;
    eprintln!("dictionary from {} frames, code lengths {}..={}", corpus.len(), dict.lengths().iter().min().unwrap(), dict.lengths().iter().max().unwrap());
    manifest.inputs = inputs.to_vec();
    manifest.outputs = vec![out.to_path_buf()];
    manifest.set("frames", corpus.len());
    manifest.write(&beside(out))?;
    Ok(())
}

fn decode_cmd(input: &Path, dict: &Path, out: &Path, layout: FrameLayout) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("decode");
    let d = read_dict(dict)?;
    let bytes = read(input)?;
    let (frames, stats) = deframe_stream(&bytes, &d, layout);
    write_frame_file(out, layout, &frames).map_err(|e| Failure::from(e).at(out.display()))?;
    eprintln!(
        "{} packets decoded, {} checksum failures, {} truncated, {} resyncs, {} bytes discarded",
        stats.packets_ok, stats.checksum_failures, stats.truncated, stats.resyncs, stats.bytes_discarded
    );
    manifest.inputs = vec![input.to_path_buf(), dict.to_path_buf()];
    manifest.outputs = vec![out.to_path_buf()];
    manifest.set("packets", stats.packets_ok);
    manifest.set("checksum_failures", stats.checksum_failures);
    manifest.set("truncated", stats.truncated);
    manifest.set("resyncs", stats.resyncs);
    manifest.set("bytes_discarded", stats.bytes_discarded);
    manifest.set("frame_width", layout.width);
    manifest.set("frame_height", layout.height);
    manifest.write(&beside(out))?;
    Ok(())
}

/// Frames of one labelled input: frame files are used as-is, event files
/// are filtered with `cfg`.
fn load_frames(path: &Path, cfg: &FilterConfig) -> Result<Vec<FilteredFrame>, Failure> {
    let bytes = read(path)?;
    let at = |e: Failure| e.at(path.display());
    if bytes.starts_with(FRM_MAGIC) {
        Ok(read_frames(&bytes).map_err(|e| at(e.into()))?.1)
    } else if bytes.starts_with(EVS_MAGIC) {
        let (geometry, events) = read_events(&bytes).map_err(|e| at(e.into()))?;
        FilterPipeline::run(cfg.clone(), geometry, &events).map_err(|e| at(e.into()))
    } else {
        Err(Failure::io("neither a frame file nor an event file").at(path.display()))
    }
}

fn train_cmd(labels: &Path, out: &Path, cfg: &FilterConfig, train: &TrainConfig, per_clip: usize) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("train");
    manifest.filter_config(cfg);
    let rows = read_labels(labels).map_err(|e| Failure::from(e).at(labels.display()))?;
    let base = labels.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::new();
    let mut truth = Vec::new();
    for row in &rows {
        let clip = load_frames(&base.join(&row.path), cfg)?;
        let take: Vec<usize> = if per_clip == 0 { (0..clip.len()).collect() } else { bench::spread_indices(clip.len(), per_clip).collect() };
        for i in take {
            frames.push(clip[i].clone());
            truth.push(row.label);
        }
    }
    if frames.is_empty() {
        return Err(Failure::usage("the labelled inputs produced no frames"));
    }
    let (model, report) = bnn::train(&frames, &truth, train)?;
    for (epoch, loss) in report.loss_per_epoch.iter().enumerate() {
        eprintln!("epoch {:3}  loss {loss:.6}", epoch + 1);
    }
    eprintln!("{} training frames, training accuracy {:.4}", frames.len(), report.train_accuracy);
    bnn::write_model_file(out, &model).map_err(|e| Failure::from(e).at(out.display()))?;
    manifest.seeds.insert("train".into(), train.seed);
    manifest.inputs = vec![labels.to_path_buf()];
    manifest.outputs = vec![out.to_path_buf()];
    manifest.set("frames", frames.len());
    manifest.set("epochs", train.epochs);
    manifest.set("learning_rate", train.learning_rate);
    manifest.set("filter_learning_rate", train.filter_learning_rate);
    manifest.set("n_filters", train.n_filters);
    manifest.set("kernel", train.kernel);
    manifest.set("loss_per_epoch", report.loss_per_epoch.clone());
    manifest.set("train_accuracy", report.train_accuracy);
    manifest.write(&beside(out))?;
    Ok(())
}

fn detect_cmd(input: &Path, model: &Path, dict: Option<&Path>, out: Option<&Path>, layout: FrameLayout) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("detect");
    let m = bnn::read_model_file(model).map_err(|e| Failure::from(e).at(model.display()))?;
    let bytes = read(input)?;
    // (time or packet index, frame)
    let items: Vec<(u64, FilteredFrame)> = if bytes.starts_with(FRM_MAGIC) {
        let (l, frames) = read_frames(&bytes).map_err(|e| Failure::from(e).at(input.display()))?;
        if l != m.input() {
            return Err(Failure::mismatch(format!("frames are {}x{} but the model expects {}x{}", l.width, l.height, m.input().width, m.input().height)));
        }
        frames.into_iter().map(|f| (f.emit_time_us, f)).collect()
    } else {
        let dict = dict.ok_or_else(|| Failure::usage("packet input needs --dict"))?;
        if layout != m.input() {
            return Err(Failure::mismatch(format!(
                "packets decode to {}x{} frames but the model expects {}x{}",
                layout.width,
                layout.height,
                m.input().width,
                m.input().height
            )));
        }
        let (frames, stats) = deframe_stream(&bytes, &read_dict(dict)?, layout);
        if stats.checksum_failures > 0 {
            eprintln!("{} checksum failures, {} bytes discarded", stats.checksum_failures, stats.bytes_discarded);
        }
        manifest.set("checksum_failures", stats.checksum_failures);
        frames.into_iter().enumerate().map(|(i, f)| (i as u64, f)).collect()
    };
    let mut text = String::new();
    let mut positives = 0usize;
    for (t, f) in &items {
        let d = bnn::detect(f, &m)?;
        positives += d.decision as usize;
        text.push_str(&format!("{t} {:.6} {}\n", d.score, d.decision as u8));
    }
    match out {
        Some(path) => {
            write(path, text.as_bytes())?;
            manifest.inputs = vec![input.to_path_buf(), model.to_path_buf()];
            manifest.inputs.extend(dict.map(Path::to_path_buf));
            manifest.outputs = vec![path.to_path_buf()];
            manifest.set("frames", items.len());
            manifest.set("positives", positives);
            manifest.write(&beside(path))?;
        }
        None => print!("{text}"),
    }
    eprintln!("{} frames scored, {} positive", items.len(), positives);
    Ok(())
}

fn bench_cmd(pos: usize, neg: usize, seed: u64, spec: &DatasetSpec, variants: &[Variant], opts: &AblationOptions, out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::start("bench");
    manifest.filter_config(&opts.base);
    let dataset = build_dataset(pos, neg, spec, seed)?;
    let report = bench::run_ablation(&dataset, variants, opts)?;
    create_dir(out)?;
    let csv_path = out.join("report.csv");
    let svg_path = out.join("report.svg");
    bench::write_csv(fs::File::create(&csv_path).map_err(|e| Failure::from(e).at(csv_path.display()))?, &report)?;
    bench::write_svg(fs::File::create(&svg_path).map_err(|e| Failure::from(e).at(svg_path.display()))?, &report)?;

    let sample: Vec<Vec<Event>> = dataset.scenes.iter().take(20).map(|s| gen_clip(s).map(|c| c.events)).collect::<Result<_, _>>()?;
    let tp = bench::measure_throughput(&sample, &opts.base, spec.geometry)?;

    eprintln!("{:<10} {:>12} {:>10} {:>8} {:>10}", "variant", "bit/s", "pkt bits", "F1", "reduction");
    for r in &report.rows {
        let f1 = r.f1.map_or("-".to_string(), |f| format!("{:.4}", f.f1));
        eprintln!("{:<10} {:>12.1} {:>10.1} {:>8} {:>9.3}%", r.variant.name, r.bitrate_bps, r.mean_packet_bits, f1, r.reduction_pct);
    }
    eprintln!("filter throughput {:.2} M events/s (single thread)", tp.events_per_sec / 1e6);

    manifest.seeds.insert("dataset".into(), seed);
    manifest.seeds.insert("train".into(), opts.train.seed);
    manifest.outputs = vec![csv_path, svg_path];
    manifest.set("clips", dataset.len());
    manifest.set("variants", variants.iter().map(|v| v.name.clone()).collect::<Vec<_>>());
    manifest.set("events", report.events);
    manifest.set("duration_s", report.duration_s);
    manifest.set("throughput_events_per_s", tp.events_per_sec);
    manifest.set("evaluate_f1", opts.evaluate_f1);
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}
