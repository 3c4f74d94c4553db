use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fracmatch::emfit::FitConfig;
use fracmatch::matchkit::{
    calibrate_threshold, classify as classify_pair, posterior_match, train as train_model, MatchModel, Threshold,
};
use fracmatch::simharness::{
    cross_set_cases, loocv_cases, run_subset_sweep, simulate_fragments, simulate_specimen_set, SweepCase, TallyTable,
};
use fracmatch::spectral::{
    amplitude_spectrum, observation_from_spectra, read_dataset, write_dataset, BandSpectrum, Label, PairId,
    PairObservation,
};
use fracmatch::surface::{
    despike, detrend_plane, fit_plane, fit_self_affine, height_height_correlation, load_height_map, save_fhm1,
    HeightMap, MapFormat,
};

use crate::config::RunConfig;
use crate::CliError;

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

/// CSV writer whose buffer already holds the provenance comment.
fn csv_out(cfg: &RunConfig) -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(format!("# {}\n", cfg.provenance()).into_bytes())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::Input(e.to_string()))
}

fn row<W: Write>(w: &mut csv::Writer<W>, fields: &[String]) -> Result<(), CliError> {
    w.write_record(fields).map_err(|e| CliError::Input(e.to_string()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reports name inputs without their directory.
fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_map(cfg: &RunConfig, path: &Path) -> Result<HeightMap, CliError> {
    let format = MapFormat::from_path(path, cfg.pitch)?;
    Ok(load_height_map(path, format)?)
}

fn load_dataset(path: &Path) -> Result<Vec<PairObservation>, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let obs =
        read_dataset(std::io::BufReader::new(f)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if obs.is_empty() {
        return Err(CliError::Input(format!("{}: no observations", path.display())));
    }
    Ok(obs)
}

fn load_model(path: &Path) -> Result<MatchModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    MatchModel::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn split_labels(obs: &[PairObservation]) -> Result<(Vec<PairObservation>, Vec<PairObservation>), CliError> {
    let mut m = Vec::new();
    let mut n = Vec::new();
    for o in obs {
        match o.label {
            Label::Match => m.push(o.clone()),
            Label::NonMatch => n.push(o.clone()),
            Label::Unknown => return Err(CliError::Input(format!("pair {} has no label", o.pair_id))),
        }
    }
    Ok((m, n))
}

pub fn parse_threshold(s: &str) -> Result<Threshold, CliError> {
    Ok(s.parse()?)
}

/// `"2-9"` or `"3,5,9"`.
pub fn parse_k_values(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Input(format!("bad window sizes {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',') {
        match part.trim().split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.trim().parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

const DESPIKE_PASSES: usize = 20;

struct Cleaned {
    masked_pct: f64,
    rms: f64,
    tilt: (f64, f64),
}

fn preprocess_one(cfg: &RunConfig, path: &Path, out: &Path) -> Result<Cleaned, CliError> {
    let map = load_map(cfg, path)?;
    let plane = fit_plane(&map)?;
    // Despike until nothing moves, so a second run finds no spikes.
    let mut clean = detrend_plane(&map)?;
    for _ in 0..DESPIKE_PASSES {
        let next = despike(&clean, cfg.despike.window, cfg.despike.threshold)?;
        if next == clean {
            break;
        }
        clean = next;
    }
    let level = detrend_plane(&clean)?;
    save_fhm1(&level, &out.join(format!("{}.fhm", stem(path))))?;
    Ok(Cleaned {
        masked_pct: 100.0 * level.masked_fraction(),
        rms: level.rms(),
        tilt: (plane.slope_col / map.pitch(), plane.slope_row / map.pitch()),
    })
}

pub fn preprocess(cfg: &RunConfig, inputs: &[PathBuf], out: &Path, report: Option<&Path>) -> Result<usize, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Input("no input files".into()));
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut inputs = inputs.to_vec();
    inputs.sort();
    let mut w = csv_out(cfg);
    row(
        &mut w,
        &["file", "status", "masked_pct", "rms_um", "tilt_x", "tilt_y", "message"].map(String::from),
    )?;
    let mut seen = BTreeSet::new();
    let mut failed = 0;
    for path in &inputs {
        let result = if seen.insert(stem(path)) {
            preprocess_one(cfg, path, out)
        } else {
            Err(CliError::Input(format!("output name {}.fhm already used", stem(path))))
        };
        let name = file_name(path);
        match result {
            Ok(c) => row(
                &mut w,
                &[
                    name,
                    "ok".into(),
                    format!("{:.3}", c.masked_pct),
                    format!("{:.6e}", c.rms),
                    format!("{:.6e}", c.tilt.0),
                    format!("{:.6e}", c.tilt.1),
                    String::new(),
                ],
            )?,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed += 1;
                row(
                    &mut w,
                    &[
                        name,
                        "failed".into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        e.to_string(),
                    ],
                )?;
            }
        }
    }
    emit(report, &finish(w)?)?;
    Ok(failed)
}

struct ManifestEntry {
    id: PairId,
    label: Label,
    base: Vec<String>,
    tip: Vec<String>,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    let (ci, cl, cb, ct) = (col("pair_id")?, col("label")?, col("base_files")?, col("tip_files")?);
    let files = |s: &str| {
        s.split(';')
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .map(String::from)
            .collect()
    };
    let mut out: Vec<ManifestEntry> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = PairId::parse(&rec[ci])
            .ok_or_else(|| bad(format!("line {line}: pair_id {:?} is not base:tip", &rec[ci])))?;
        let label = Label::parse(&rec[cl]).ok_or_else(|| bad(format!("line {line}: unknown label {:?}", &rec[cl])))?;
        out.push(ManifestEntry {
            id,
            label,
            base: files(&rec[cb]),
            tip: files(&rec[ct]),
        });
    }
    if out.is_empty() {
        return Err(bad("manifest lists no pairs".into()));
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = out.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(bad(format!("pair {} listed twice", w[0].id)));
    }
    Ok(out)
}

pub fn correlate(
    cfg: &RunConfig,
    manifest: &Path,
    base_dir: Option<&Path>,
    tip_dir: Option<&Path>,
    out: &Path,
) -> Result<usize, CliError> {
    let plan = cfg.band_plan()?;
    let opts = cfg.spectrum_options();
    let entries = read_manifest(manifest)?;
    let here = manifest.parent().unwrap_or(Path::new("."));
    let (base_dir, tip_dir) = (base_dir.unwrap_or(here), tip_dir.unwrap_or(here));
    // Pairs share images; each file is transformed once.
    let mut cache: HashMap<PathBuf, Result<BandSpectrum, String>> = HashMap::new();
    let mut spectra = |dir: &Path, files: &[String]| -> Result<Vec<BandSpectrum>, String> {
        files
            .iter()
            .map(|f| {
                let path = dir.join(f);
                cache
                    .entry(path.clone())
                    .or_insert_with(|| {
                        load_map(cfg, &path)
                            .and_then(|m| Ok(amplitude_spectrum(&m, &opts)?))
                            .map_err(|e| format!("{}: {e}", path.display()))
                    })
                    .clone()
            })
            .collect()
    };
    let mut obs = Vec::with_capacity(entries.len());
    let mut failed = 0;
    for e in &entries {
        let result = if e.base.len() != e.tip.len() {
            Err(format!("{} base images but {} tip images", e.base.len(), e.tip.len()))
        } else {
            spectra(base_dir, &e.base).and_then(|b| {
                let t = spectra(tip_dir, &e.tip)?;
                observation_from_spectra(&b, &t, &plan, e.id.clone()).map_err(|err| err.to_string())
            })
        };
        match result {
            Ok(o) => obs.push(o.with_label(e.label)),
            Err(msg) => {
                eprintln!("error: pair {}: {msg}", e.id);
                failed += 1;
            }
        }
    }
    if obs.is_empty() {
        return Err(CliError::Input("no pair could be correlated".into()));
    }
    let mut buf = Vec::new();
    write_dataset(&mut buf, &obs, Some(&cfg.provenance()))?;
    write_file(out, &buf)?;
    Ok(failed)
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<usize, CliError> {
    let obs = load_dataset(data)?;
    let (m, n) = split_labels(&obs)?;
    let mut model = train_model(&m, &n, &cfg.fit_config(), cfg.prior)?;
    model.provenance.training_set = stem(data);
    model.provenance.config_hash = Some(cfg.hash());
    write_file(out, model.to_json()?.as_bytes())?;
    Ok(0)
}

pub fn calibrate(cfg: &RunConfig, model_path: &Path, data: &Path, loocv: bool, out: &Path) -> Result<usize, CliError> {
    let model = load_model(model_path)?;
    let obs = load_dataset(data)?;
    let nonmatch = |x: &&PairObservation| x.label == Label::NonMatch;
    let scores: Vec<f64> = if loocv {
        let fit = FitConfig {
            nu: model.nu(),
            ..cfg.fit_config()
        };
        let cases: Vec<SweepCase> = loocv_cases(&obs, &fit, model.prior_match)?;
        let mut s = Vec::new();
        for c in &cases {
            for x in c.test.iter().filter(nonmatch) {
                s.push(posterior_match(&c.model, x)?.logodds);
            }
        }
        s
    } else {
        obs.iter()
            .filter(nonmatch)
            .map(|x| posterior_match(&model, x).map(|e| e.logodds))
            .collect::<Result<_, _>>()?
    };
    let cal = calibrate_threshold(&scores, &cfg.calibration_config())?;
    println!(
        "threshold_logodds={:.6} threshold_posterior={:.6} n_scores={}",
        cal.threshold_logodds, cal.threshold_posterior, cal.n_scores
    );
    write_file(out, model.with_calibration(cal).to_json()?.as_bytes())?;
    Ok(0)
}

pub fn classify(
    cfg: &RunConfig,
    model_path: &Path,
    data: &Path,
    threshold: &str,
    prior: Option<f64>,
    out: &Path,
) -> Result<usize, CliError> {
    let mut model = load_model(model_path)?;
    if let Some(p) = prior {
        model = model.with_prior(p)?;
    }
    let t = parse_threshold(threshold)?;
    model.threshold_for(t)?;
    let mut obs = load_dataset(data)?;
    obs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    let mut w = csv_out(cfg);
    row(
        &mut w,
        &["pair_id", "logodds", "posterior", "decision", "threshold"].map(String::from),
    )?;
    let mut failed = 0;
    for x in &obs {
        match classify_pair(&model, x, t) {
            Ok(d) => row(
                &mut w,
                &[
                    d.pair_id.to_string(),
                    format!("{:.6}", d.evidence.logodds),
                    format!("{:.6e}", d.evidence.posterior),
                    d.label.to_string(),
                    format!("{:.6}", d.threshold_logodds),
                ],
            )?,
            Err(e) => {
                eprintln!("error: pair {}: {e}", x.pair_id);
                failed += 1;
            }
        }
    }
    write_file(out, &finish(w)?)?;
    Ok(failed)
}

fn load_sets(paths: &[PathBuf]) -> Result<Vec<(String, Vec<PairObservation>)>, CliError> {
    paths.iter().map(|p| Ok((stem(p), load_dataset(p)?))).collect()
}

fn write_tally(cfg: &RunConfig, table: &TallyTable, out: &Path) -> Result<(), CliError> {
    let mut buf = format!("# {}\n", cfg.provenance()).into_bytes();
    table.write_csv(&mut buf).map_err(|e| CliError::Input(e.to_string()))?;
    write_file(out, &buf)
}

fn nu_values(cfg: &RunConfig, nu: Option<f64>) -> Vec<f64> {
    nu.map(|v| vec![v]).unwrap_or_else(|| cfg.eval.nu_values.clone())
}

pub fn eval_loocv(
    cfg: &RunConfig,
    data: &[PathBuf],
    threshold: &str,
    nu: Option<f64>,
    out: &Path,
) -> Result<usize, CliError> {
    let t = parse_threshold(threshold)?;
    let sets = load_sets(data)?;
    let q = sets[0].1[0].q();
    let mut table = TallyTable::new(Vec::new())?;
    for nu in nu_values(cfg, nu) {
        let fit = FitConfig { nu, ..cfg.fit_config() };
        let mut cases = Vec::new();
        for (_, obs) in &sets {
            cases.extend(loocv_cases(obs, &fit, cfg.prior)?);
        }
        table.extend(run_subset_sweep(&cases, &[q], t)?);
    }
    write_tally(cfg, &table, out)?;
    Ok(0)
}

pub fn eval_subsets(
    cfg: &RunConfig,
    data: &[PathBuf],
    k_values: Option<&str>,
    threshold: &str,
    nu: Option<f64>,
    out: &Path,
) -> Result<usize, CliError> {
    let t = parse_threshold(threshold)?;
    let ks = match k_values {
        Some(s) => parse_k_values(s)?,
        None => cfg.eval.k_values.clone(),
    };
    let sets = load_sets(data)?;
    let mut table = TallyTable::new(Vec::new())?;
    for nu in nu_values(cfg, nu) {
        let fit = FitConfig { nu, ..cfg.fit_config() };
        table.extend(run_subset_sweep(&cross_set_cases(&sets, &fit, cfg.prior)?, &ks, t)?);
    }
    write_tally(cfg, &table, out)?;
    Ok(0)
}

pub fn simulate(cfg: &RunConfig, out: &Path, surfaces: usize, prefix: &str, maps: bool) -> Result<usize, CliError> {
    if surfaces == 0 {
        return Err(CliError::Input("--surfaces must be >= 1".into()));
    }
    let obs = simulate_specimen_set(&cfg.sim, prefix, surfaces, &cfg.band_plan()?, &cfg.spectrum_options())?;
    let mut buf = Vec::new();
    write_dataset(&mut buf, &obs, Some(&cfg.provenance()))?;
    write_file(&out.join(format!("{prefix}.csv")), &buf)?;
    if !maps {
        return Ok(0);
    }
    let frags = simulate_fragments(&cfg.sim, prefix, surfaces)?;
    let image = |name: &str, j: usize| format!("{name}_{:02}.fhm", j + 1);
    for f in &frags {
        for (side, images) in [("base", &f.base), ("tip", &f.tip)] {
            let dir = out.join(side);
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            for (j, m) in images.iter().enumerate() {
                save_fhm1(m, &dir.join(image(&f.name, j)))?;
            }
        }
    }
    let mut w = csv_out(cfg);
    row(
        &mut w,
        &["pair_id", "label", "base_files", "tip_files"].map(String::from),
    )?;
    for a in &frags {
        for b in &frags {
            let files = |f: &fracmatch::simharness::Fragments| {
                (0..f.base.len())
                    .map(|j| image(&f.name, j))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            let label = if a.name == b.name {
                Label::Match
            } else {
                Label::NonMatch
            };
            row(
                &mut w,
                &[
                    PairId::new(&a.name, &b.name).to_string(),
                    label.to_string(),
                    files(a),
                    files(b),
                ],
            )?;
        }
    }
    write_file(&out.join(format!("{prefix}_manifest.csv")), &finish(w)?)?;
    Ok(0)
}

pub fn roughness(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    out: Option<&Path>,
    curves: Option<&Path>,
) -> Result<usize, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Input("no input files".into()));
    }
    let mut inputs = inputs.to_vec();
    inputs.sort();
    let r = &cfg.roughness;
    let mut summary = csv_out(cfg);
    row(
        &mut summary,
        &["file", "exponent", "intercept", "transition_um"].map(String::from),
    )?;
    let mut long = csv_out(cfg);
    row(&mut long, &["file", "lag_um", "dh_um"].map(String::from))?;
    let mut failed = 0;
    for path in &inputs {
        let name = file_name(path);
        let result = load_map(cfg, path).and_then(|m| {
            let curve = height_height_correlation(&m, r.max_lag)?;
            let fit = fit_self_affine(&curve, (r.fit_range[0], r.fit_range[1]))?;
            Ok((curve, fit))
        });
        match result {
            Ok((curve, fit)) => {
                row(
                    &mut summary,
                    &[
                        name.clone(),
                        format!("{:.6}", fit.exponent),
                        format!("{:.6}", fit.intercept),
                        fit.transition_scale.map(|t| format!("{t:.3}")).unwrap_or_default(),
                    ],
                )?;
                for (lag, v) in curve.lags.iter().zip(&curve.values) {
                    row(&mut long, &[name.clone(), format!("{lag:.3}"), format!("{v:.6e}")])?;
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    emit(out, &finish(summary)?)?;
    if let Some(p) = curves {
        write_file(p, &finish(long)?)?;
    }
    Ok(failed)
}
