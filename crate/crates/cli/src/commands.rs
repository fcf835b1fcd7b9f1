use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spades::dictionary::{Dictionary, DictionarySpec};
use spades::experiments::{run_study, spaced_dictionary, MixtureTruth, StudyConfig, StudyKind};
use spades::objective::{make_weights, WeightVariant};
use spades::optimizer::{solve, SolverSettings};
use spades::sample::{read_samples, SampleSet};
use spades::theory::{
    check_conditions_mixture, coherence_report, correlation, min_eigenvalue, sparsity_index,
    MixtureConditions,
};
use spades::tuning::{cv_select, gbm_path, top_level, write_tuning_csv, CvSettings};

use crate::manifest::RunManifest;
use crate::{CliError, FitArgs, GramArgs, StudyArgs};

const PRESETS: &[(&str, &str)] = &[
    ("fig1_k2", include_str!("../../../configs/fig1_k2.toml")),
    ("fig1_k5", include_str!("../../../configs/fig1_k5.toml")),
    ("fig3_separation", include_str!("../../../configs/fig3_separation.toml")),
    ("fig4_circle", include_str!("../../../configs/fig4_circle.toml")),
];

fn default_delta() -> f64 {
    0.1
}

/// Configuration shared by `fit`, `tune` and `gram-report`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    dictionary: DictionarySpec,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default)]
    weights: Option<String>,
    #[serde(default)]
    solver: SolverSettings,
    #[serde(default)]
    cv: CvSettings,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn load_fit_config(path: &Path) -> Result<FitConfig, CliError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path) -> Result<SampleSet, CliError> {
    let file = File::open(path).map_err(|e| CliError::new(CliError::PARSE, format!("{}: {e}", path.display())))?;
    read_samples(BufReader::new(file)).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

/// Parses `simple | bernstein | data-driven | scalar:<w> | mixture`.
pub fn parse_weights(text: &str) -> Result<WeightVariant, CliError> {
    let v = match text {
        "simple" => WeightVariant::Simple,
        "bernstein" => WeightVariant::Bernstein,
        "data-driven" => WeightVariant::DataDriven,
        "mixture" => WeightVariant::Mixture,
        other => match other.strip_prefix("scalar:") {
            Some(w) => match w.parse::<f64>() {
                Ok(w) if w >= 0.0 && w.is_finite() => WeightVariant::Scalar(w),
                _ => return Err(CliError::config(format!("bad scalar weight `{w}`"))),
            },
            None => return Err(CliError::config(format!("unknown weight choice `{other}`"))),
        },
    };
    Ok(v)
}

#[derive(Serialize)]
struct FitOutput<'a> {
    n: usize,
    m: usize,
    delta: f64,
    #[serde(flatten)]
    fit: &'a spades::optimizer::SpadesFit,
}

pub fn fit(args: &FitArgs, tune: bool) -> Result<(), CliError> {
    let mut manifest = RunManifest::start(if tune { "tune" } else { "fit" }, &args.out_dir)?;
    manifest.config_path = Some(args.config.display().to_string());
    manifest.data_path = Some(args.data.display().to_string());
    let cfg = load_fit_config(&args.config)?;
    let sample = load_data(&args.data)?;
    let dict = cfg.dictionary.build(Some(sample.len()))?;
    let delta = args.delta.unwrap_or(cfg.delta);
    let moments = dict.empirical_moments(&sample)?;
    cfg.solver.validate()?;

    let fit = if tune {
        let settings = CvSettings {
            seed: args.seed.unwrap_or(cfg.cv.seed),
            solver: cfg.solver,
            ..cfg.cv.clone()
        };
        manifest.seed = Some(settings.seed);
        let selection = cv_select(&sample, &dict, &settings)?;
        let path = gbm_path(&moments, dict.gram(), &cfg.solver, settings.alpha_rel * top_level(&moments))?;
        let mut csv = Vec::new();
        write_tuning_csv(&selection, Some(&path), &mut csv)?;
        manifest.write("tuning.csv", &csv)?;
        manifest.write_json("path.json", &path.entries)?;
        manifest.write_json("selection.json", &selection)?;
        selection.fit
    } else {
        let choice = args.weights.as_deref().or(cfg.weights.as_deref()).unwrap_or("data-driven");
        let weights = make_weights(&dict, &moments, delta, parse_weights(choice)?)?;
        solve(&moments, dict.gram(), &weights, &cfg.solver, None)?
    };
    let report = coherence_report(dict.gram(), &fit.lambda_hat, &fit.weights, delta, sample.len())?;
    manifest.write_json(
        "fit.json",
        &FitOutput {
            n: sample.len(),
            m: dict.len(),
            delta,
            fit: &fit,
        },
    )?;
    manifest.write_json("coherence.json", &report)?;
    manifest.finish()?;
    if !fit.converged {
        return Err(CliError::new(
            CliError::NOT_CONVERGED,
            format!("solver stopped after {} sweeps with KKT residual {:e}", fit.sweeps, fit.kkt_residual),
        ));
    }
    Ok(())
}

fn load_study(args: &StudyArgs, manifest: &mut RunManifest) -> Result<StudyConfig, CliError> {
    let text = match (&args.config, &args.preset) {
        (Some(path), _) => {
            manifest.config_path = Some(path.display().to_string());
            read_text(path)?
        }
        (None, Some(name)) => {
            manifest.preset = Some(name.clone());
            PRESETS
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.to_string())
                .ok_or_else(|| {
                    let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                    CliError::config(format!("unknown preset `{name}`; available: {}", names.join(", ")))
                })?
        }
        (None, None) => return Err(CliError::config("give --config or --preset")),
    };
    let mut cfg: StudyConfig = toml::from_str(&text).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(delta) = args.delta {
        cfg.delta = delta;
    }
    cfg.validate()?;
    manifest.seed = Some(cfg.seed);
    Ok(cfg)
}

pub fn study(args: &StudyArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("study", &args.out_dir)?;
    let cfg = load_study(args, &mut manifest)?;
    let result = run_study(&cfg)?;
    if cfg.kind == StudyKind::Circle {
        let mut curve = Vec::new();
        result.write_curve_csv(&mut curve)?;
        manifest.write("curve.csv", &curve)?;
        let mut centers = Vec::new();
        result.write_centers_csv(&mut centers)?;
        manifest.write("centers.csv", &centers)?;
        if let Some(c) = &result.circle {
            manifest.write_json(
                "circle.json",
                &serde_json::json!({
                    "centers": c.centers.len(),
                    "k_report": c.k_report,
                    "residual_fraction": c.residual_fraction,
                    "gamma_0": c.curve.gamma_0,
                    "fit_count": c.curve.fit_count,
                }),
            )?;
        }
    } else {
        let mut summary = Vec::new();
        result.write_summary_csv(&mut summary)?;
        manifest.write("summary.csv", &summary)?;
        let mut reps = Vec::new();
        result.write_replicates_csv(&mut reps)?;
        manifest.write("replicates.csv", &reps)?;
        manifest.write_json("conditions.json", &result.conditions)?;
    }
    manifest.write_json("config.json", &cfg)?;
    manifest.finish()
}

#[derive(Serialize)]
struct CellConditions {
    #[serde(rename = "M")]
    m: usize,
    n: usize,
    d_min: f64,
    #[serde(flatten)]
    conditions: MixtureConditions,
}

pub fn check_conditions(args: &StudyArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("check-conditions", &args.out_dir)?;
    let cfg = load_study(args, &mut manifest)?;
    if cfg.kind == StudyKind::Circle {
        return Err(CliError::config("mixture conditions need an identification or separation study"));
    }
    let spacings = if cfg.kind == StudyKind::Separation {
        cfg.d_min_grid.clone()
    } else {
        vec![cfg.spacing]
    };
    let mut out = Vec::new();
    for &a in &spacings {
        for &n in &cfg.n_grid {
            for &m in &cfg.m_grid {
                let dict = spaced_dictionary(m, a, cfg.tau, cfg.dims)?;
                let star = MixtureTruth::equal_first(&dict, cfg.k_star)?.normalized_weights;
                out.push(CellConditions {
                    m,
                    n,
                    d_min: a,
                    conditions: check_conditions_mixture(&dict, &star, n, cfg.delta)?,
                });
            }
        }
    }
    manifest.write_json("conditions.json", &out)?;
    manifest.finish()
}

#[derive(Serialize)]
struct GramReport {
    atoms: usize,
    kind: spades::dictionary::DictionaryKind,
    kappa_m: f64,
    sparsity_index: usize,
    max_correlation: f64,
    min_diagonal: f64,
    max_diagonal: f64,
}

fn gram_summary(dict: &Dictionary) -> GramReport {
    let g = dict.gram();
    let m = g.dim();
    let mut max_corr = 0.0f64;
    for i in 0..m {
        for j in 0..i {
            max_corr = max_corr.max(correlation(g, i, j).abs());
        }
    }
    let diag = (0..m).map(|j| g.get(j, j));
    GramReport {
        atoms: m,
        kind: dict.kind(),
        kappa_m: min_eigenvalue(g),
        sparsity_index: sparsity_index(g),
        max_correlation: max_corr,
        min_diagonal: diag.clone().fold(f64::INFINITY, f64::min),
        max_diagonal: diag.fold(0.0, f64::max),
    }
}

pub fn gram_report(args: &GramArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("gram-report", &args.out_dir)?;
    manifest.config_path = Some(args.config.display().to_string());
    let cfg = load_fit_config(&args.config)?;
    let n = match &args.data {
        Some(p) => {
            manifest.data_path = Some(p.display().to_string());
            Some(load_data(p)?.len())
        }
        None => None,
    };
    let dict = cfg.dictionary.build(n)?;
    manifest.write_json("gram_report.json", &gram_summary(&dict))?;
    manifest.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_choices() {
        assert_eq!(parse_weights("simple").unwrap(), WeightVariant::Simple);
        assert_eq!(parse_weights("data-driven").unwrap(), WeightVariant::DataDriven);
        assert_eq!(parse_weights("scalar:0.25").unwrap(), WeightVariant::Scalar(0.25));
        assert!(parse_weights("scalar:-1").is_err());
        assert!(parse_weights("lasso").is_err());
    }

    #[test]
    fn presets_parse() {
        for (name, text) in PRESETS {
            let cfg: StudyConfig = toml::from_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap();
        }
    }
}
