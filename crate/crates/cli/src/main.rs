use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mvdesc::harness::{
    build_keepall_db, build_mv_db, build_rhog_db, build_sv_db, build_test_queries, pyramids, query_pairs,
    recognition_rate, run_and_write, select_tracks, unit_rng, BenchmarkReport, ExperimentConfig, TrackData,
};
use mvdesc::matchdb::{DescriptorDatabase, Method, Metric};
use mvdesc::synth::{generate_dataset, load_dataset};
use mvdesc::tracker::{read_tracks, run_tracker, usable_levels, write_tracks, TrackerParams};

/// Multi-view gradient orientation descriptors on synthetic scenes.
#[derive(Parser)]
#[command(name = "mvdesc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render one scene's training orbit and test views to a directory.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Scene index; its seed derives from the master seed.
        #[arg(long, default_value_t = 0)]
        scene: usize,
        /// Overrides the number of training frames.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track corners through a dataset's training frames.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 11)]
        patch_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a descriptor database from a track dump.
    Describe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        /// sv_hog, mv_hog, keep_all, r_hog or r_hog_maxout.
        #[arg(long)]
        method: String,
        /// Single-view trial index (sv_hog only).
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the synthesized-view store (r_hog_maxout only).
        #[arg(long)]
        views: Option<PathBuf>,
    },
    /// Score a database against the dataset's test views.
    Match {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        db: PathBuf,
        /// Defaults to the database's own metric.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Run the full benchmark and write the reports.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the number of scenes.
        #[arg(long)]
        scenes: Option<usize>,
        /// Overrides the method list, comma separated.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Overrides the primary metric.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Summarize a written report.
    Report {
        /// Directory holding report.json.
        #[arg(long)]
        input: PathBuf,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Print the default configuration as TOML.
    Config,
}

fn parse_method(s: &str) -> Result<Method> {
    Method::from_name(s).with_context(|| format!("unknown method {s:?}"))
}

fn parse_metric(s: &str) -> Result<Metric> {
    Metric::from_name(s).with_context(|| format!("unknown metric {s:?}"))
}

fn load_track_data(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<TrackData>, usize)> {
    let (tracks, patch_size) = read_tracks(dir).with_context(|| format!("reading tracks from {}", dir.display()))?;
    let params = cfg.descriptor.params(patch_size);
    let selected = select_tracks(tracks, cfg.min_track_len, cfg.max_tracks);
    if selected.is_empty() {
        bail!("no track has at least {} frames", cfg.min_track_len);
    }
    let data = selected
        .into_iter()
        .map(|t| TrackData::new(t, &params))
        .collect::<mvdesc::Result<Vec<_>>>()?;
    Ok((data, patch_size))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            scene,
            frames,
            out,
        } => {
            let cfg = common.load()?;
            let mut dcfg = cfg.scene_dataset(scene);
            if let Some(f) = frames {
                dcfg.orbit.frames = f;
            }
            let m = generate_dataset(&dcfg, &out)?;
            println!(
                "wrote {} training and {} test frames to {}",
                m.training.len(),
                m.test.len(),
                out.display()
            );
        }
        Command::Track {
            common,
            dataset,
            patch_size,
            out,
        } => {
            let cfg = common.load()?;
            let ds = load_dataset(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            let frames: Vec<_> = ds.training.iter().map(|f| f.image.clone()).collect();
            let params = TrackerParams {
                patch_size,
                ..cfg.tracker.clone()
            };
            let tracks = run_tracker(&frames, &params)?;
            write_tracks(&out, &tracks, patch_size)?;
            let long = tracks.iter().filter(|t| t.len() >= cfg.min_track_len).count();
            println!("{} tracks ({} with at least {} frames)", tracks.len(), long, cfg.min_track_len);
        }
        Command::Describe {
            common,
            dataset,
            tracks,
            method,
            trial,
            out,
            views,
        } => {
            let cfg = common.load()?;
            let method = parse_method(&method)?;
            let (data, patch_size) = load_track_data(&cfg, &tracks)?;
            let params = cfg.descriptor.params(patch_size);
            let db = match method {
                Method::SvHog => {
                    let mut rng = unit_rng(cfg.seed, 0, patch_size, 1, trial);
                    build_sv_db(&data, &params, cfg.metric, &mut rng)?.0
                }
                Method::MvHog => build_mv_db(&data, &params, cfg.metric)?,
                Method::KeepAll => build_keepall_db(&data, &params, cfg.metric)?,
                Method::RHog | Method::RHogMaxOut => {
                    let ds = load_dataset(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
                    let levels = usable_levels(ds.config.camera.width, ds.config.camera.height, cfg.tracker.levels);
                    let pyr = pyramids(&ds.training, levels)?;
                    let maxout = method == Method::RHogMaxOut;
                    let built = build_rhog_db(&data, &ds.training, &pyr, &params, &cfg.rhog, cfg.metric, maxout)?;
                    if let Some(path) = &views {
                        std::fs::write(path, built.views.encode()).with_context(|| format!("writing {}", path.display()))?;
                    }
                    if maxout {
                        built.maxout.expect("requested")
                    } else {
                        built.db
                    }
                }
            };
            db.save(&out)?;
            println!("{} entries for {} tracks written to {}", db.len(), db.tracks().len(), out.display());
        }
        Command::Match {
            common,
            dataset,
            tracks,
            db,
            metric,
        } => {
            let cfg = common.load()?;
            let database = DescriptorDatabase::load(&db)?;
            let metric = match metric {
                Some(m) => parse_metric(&m)?,
                None => database.default_metric(),
            };
            let (data, patch_size) = load_track_data(&cfg, &tracks)?;
            let params = cfg.descriptor.params(patch_size);
            let ds = load_dataset(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            let levels = usable_levels(ds.config.camera.width, ds.config.camera.height, cfg.tracker.levels);
            let test_pyr = pyramids(&ds.test, levels)?;
            let queries = build_test_queries(&ds.training, &ds.test, &test_pyr, &data, &params)?;
            if queries.is_empty() {
                bail!("no covisible test queries");
            }
            let rate = recognition_rate(&query_pairs(&queries), &database, metric)?;
            println!("method={} metric={} queries={} rate={:.6}", database.method().name(), metric.name(), queries.len(), rate);
        }
        Command::Bench {
            common,
            out,
            scenes,
            methods,
            metric,
        } => {
            let mut cfg = common.load()?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(s) = scenes {
                cfg.scenes = s;
            }
            if let Some(ms) = methods {
                cfg.methods = ms.iter().map(|m| parse_method(m)).collect::<Result<_>>()?;
            }
            if let Some(m) = metric {
                cfg.metric = parse_metric(&m)?;
            }
            let report = run_and_write(&cfg)?;
            print!("{}", report.summary_table());
            println!("reports written to {}", cfg.output_dir.display());
        }
        Command::Report { input, json } => {
            let report = BenchmarkReport::read_json(&input.join("report.json"))?;
            if json {
                println!("{}", report.to_json()?);
            } else {
                print!("{}", report.summary_table());
            }
        }
        Command::Config => {
            print!("{}", ExperimentConfig::default().to_toml()?);
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
