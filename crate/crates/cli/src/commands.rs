use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use fairadv_core::datagen::Split;
use fairadv_core::experiment::{
    build_dataset, run_once, run_ordered, summarize, DataSource, ExperimentConfig, RunOutput, Splits, HISTORY_HEADER,
    RESULT_HEADER,
};
use fairadv_core::fairmetrics::leakage_summary;
use fairadv_core::fairmodel::Checkpoint;
use fairadv_core::{Error, Result};

use crate::exit_code;

/// CSV sink: a file (created with `header`, or appended to if it already
/// starts with `header`) or stdout.
fn open_csv(path: Option<&Path>, header: &str) -> Result<Box<dyn Write>> {
    let Some(path) = path else {
        let mut out = io::stdout();
        writeln!(out, "{header}")?;
        return Ok(Box::new(out));
    };
    if path.exists() && fs::metadata(path)?.len() > 0 {
        let mut first = String::new();
        BufReader::new(File::open(path)?).read_line(&mut first)?;
        if first.trim_end() != header {
            return Err(Error::Validation(format!(
                "{} exists with a different header; refusing to append",
                path.display()
            )));
        }
        return Ok(Box::new(OpenOptions::new().append(true).open(path)?));
    }
    let mut f = File::create(path)?;
    writeln!(f, "{header}")?;
    Ok(Box::new(f))
}

fn history_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".history.csv");
    PathBuf::from(p)
}

/// Tracks the first failure's exit code while runs continue.
#[derive(Default)]
struct Status {
    code: u8,
    io: Option<Error>,
}

impl Status {
    fn fail(&mut self, what: &str, e: &Error) {
        eprintln!("{what} failed: {e}");
        if self.code == 0 {
            self.code = exit_code(e);
        }
    }

    fn io(&mut self, r: Result<()>) {
        if let Err(e) = r {
            if self.io.is_none() {
                self.io = Some(e);
            }
        }
    }

    fn finish(self) -> Result<u8> {
        match self.io {
            Some(e) => Err(e),
            None => Ok(self.code),
        }
    }
}

fn print_summary(text: &str, to_stdout: bool, quiet: bool) {
    if quiet || text.is_empty() {
        return;
    }
    if to_stdout {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

pub fn train(cfg: &ExperimentConfig, workers: usize, checkpoint_dir: Option<PathBuf>, quiet: bool) -> Result<u8> {
    cfg.validate()?;
    let splits = Splits::new(&build_dataset(cfg)?);
    let out_path = cfg.output_path.as_deref();
    if cfg.history && out_path.is_none() {
        return Err(Error::Validation("history = true needs an output path".into()));
    }
    if let Some(dir) = &checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut out = open_csv(out_path, RESULT_HEADER)?;
    let mut history = match (cfg.history, out_path) {
        (true, Some(p)) => Some(open_csv(Some(&history_path(p)), HISTORY_HEADER)?),
        _ => None,
    };
    let seeds = cfg.seeds();
    let mut status = Status::default();
    let mut results = Vec::new();
    run_ordered(&seeds, workers, |&seed| run_once(cfg, &splits, seed), |i, r: Result<RunOutput>| match r {
        Ok(run) => {
            status.io(writeln!(out, "{}", run.result.csv_row()).and_then(|_| out.flush()).map_err(Error::from));
            if let Some(h) = history.as_mut() {
                for row in run.history_rows() {
                    status.io(writeln!(h, "{row}").map_err(Error::from));
                }
                status.io(h.flush().map_err(Error::from));
            }
            if let Some(dir) = &checkpoint_dir {
                let name = format!("{}_seed{}.ckpt", run.result.method, run.result.seed);
                status.io(run.checkpoint.save(dir.join(name)));
            }
            results.push(run.result);
        }
        Err(e) => status.fail(&format!("run with seed {}", seeds[i]), &e),
    });
    let summary = summarize(results.iter().map(|r| (r.method.to_string(), r)));
    print_summary(&summary, out_path.is_some(), quiet);
    status.finish()
}

pub fn sweep(cfg: &ExperimentConfig, workers: usize, quiet: bool) -> Result<u8> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Validation("sweep needs sweep_param and sweep_grid".into()))?;
    let splits = Splits::new(&build_dataset(cfg)?);
    let points = sweep
        .grid
        .iter()
        .map(|g| cfg.with_sweep_value(sweep.param, g.value))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| cfg.seeds().into_iter().map(move |s| (p, s)))
        .collect();
    let out_path = cfg.output_path.as_deref();
    let mut out = open_csv(out_path, &format!("param,param_value,status,{RESULT_HEADER}"))?;
    let mut status = Status::default();
    let mut results = Vec::new();
    let param = sweep.param.as_str();
    run_ordered(&jobs, workers, |&(p, seed)| run_once(&points[p], &splits, seed), |i, r| {
        let (p, seed) = jobs[i];
        let text = &sweep.grid[p].text;
        let row = match r {
            Ok(run) => {
                let row = format!("{param},{text},ok,{}", run.result.csv_row());
                results.push((format!("{} {param}={text}", run.result.method), run.result));
                row
            }
            Err(e) => {
                status.fail(&format!("{param}={text} seed {seed}"), &e);
                let t = points[p].trainer(seed);
                format!(
                    "{param},{text},failed,{},{seed},{},{},{},,,,,,,",
                    points[p].method,
                    t.lambda_adv,
                    t.lambda_diff,
                    t.method.discriminators(t.k)
                )
            }
        };
        status.io(writeln!(out, "{row}").and_then(|_| out.flush()).map_err(Error::from));
    });
    let summary = summarize(results.iter().map(|(l, r)| (l.clone(), r)));
    print_summary(&summary, out_path.is_some(), quiet);
    status.finish()
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<u8> {
    if cfg.data_source != DataSource::Synthetic {
        return Err(Error::Validation("gen-data writes synthetic data; set data_source = synthetic".into()));
    }
    let path = cfg
        .output_path
        .as_deref()
        .ok_or_else(|| Error::Validation("gen-data needs --out".into()))?;
    let data = build_dataset(cfg)?;
    data.save(path)?;
    for split in Split::ALL {
        eprintln!("{split}: cells {:?}", data.cell_counts(split));
    }
    Ok(0)
}

pub fn probe(cfg: &ExperimentConfig, checkpoint: &str) -> Result<u8> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let test = build_dataset(cfg)?.subset(Split::Test);
    let (h, logits) = ckpt.model.net().infer(&test.x)?;
    let leakage = cfg.leakage();
    let lh = leakage_summary(&h, &test.g, cfg.train.seed, &leakage)?;
    let ly = leakage_summary(&logits, &test.g, cfg.train.seed, &leakage)?;
    let mut out = open_csv(
        cfg.output_path.as_deref(),
        "leakage_h,leakage_h_std,leakage_yhat,leakage_yhat_std",
    )?;
    writeln!(out, "{},{},{},{}", lh.mean, lh.std, ly.mean, ly.std)?;
    out.flush()?;
    Ok(0)
}
