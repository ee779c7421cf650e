//! Command-line runner: parses a [`RunConfig`], executes one construction
//! or detector run and writes `report.json`, `points.csv` and, for the
//! pixel demo, `image.ppm`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use reparam::bijections::ScoreFunction;
use reparam::constructions::{
    annulus_demo, arbitrary_scoring_attack, canonical_swap, gaussian_ball_score, pixel_demo, uniformization_attack,
    Cell, ConstructionOutput, ConstructionReport, DetectorConfig, PointTable, Stage, Status, SwapInputs, VerdictTable,
    PIXEL_CALIBRATION, PIXEL_COUNT,
};
use reparam::densities::{
    build_pixel_mixture, Density, Gaussian, Mixture, Uniform, PIXEL_ALPHA, PIXEL_ALPHA_CUBED, PIXEL_BETA,
};
use reparam::detectors::{calibrate_density_threshold, density_ratio_score, Label, Rule, TypicalityTest};
use reparam::{Error, RngState};

pub const OUT_DIR_ENV: &str = "REPARAM_OUT_DIR";
pub const DEFAULT_EPSILON: f64 = 1.0;

#[derive(Debug, Parser)]
#[command(name = "reparam", version, about = "Reparametrization attacks on density-based anomaly detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (defaults to $REPARAM_OUT_DIR, then ./out).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Inlier mass targeted by density-score calibration, in (0.5, 1).
    #[arg(long, default_value_t = 0.95)]
    pub mass_level: f64,
    /// Typicality tolerance in nats. Defaults to 1.0, an arbitrary choice.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Draws used to calibrate the density threshold.
    #[arg(long)]
    pub n_calibration: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityChoice {
    StandardNormal,
    Bimodal,
    UnitUniform,
    Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorePair {
    /// Standard normal with a low score on a small central ball.
    Ramp,
    /// Score equal to the standard normal density.
    Identity,
    /// Uniform density on [0, 1] with the constant score 0.5.
    Constant,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map a product density onto the unit cube.
    Uniformize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, value_enum, default_value_t = DensityChoice::StandardNormal)]
        density: DensityChoice,
        /// Probe points.
        #[arg(long, default_value_t = 1000)]
        n_samples: usize,
    },
    /// Reparametrize so the density of every point equals a chosen score.
    ScoreAttack {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, value_enum, default_value_t = ScorePair::Ramp)]
        pair: ScorePair,
        /// Probability of the low-score ball, below 1 − mass level.
        #[arg(long, default_value_t = 0.025)]
        region_mass: f64,
        #[arg(long, default_value_t = 200)]
        n_samples: usize,
    },
    /// Exchange the densities of an inlier and an outlier, keeping the distribution.
    Swap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Comma-separated inlier coordinates (default: origin).
        #[arg(long, allow_hyphen_values = true)]
        x_in: Option<String>,
        /// Comma-separated outlier coordinates (default: all twos).
        #[arg(long, allow_hyphen_values = true)]
        x_out: Option<String>,
        #[arg(long, default_value_t = 1000)]
        n_samples: usize,
    },
    /// Sample the three-cube pixel mixture and label every pixel.
    PixelDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = PIXEL_ALPHA)]
        alpha: f64,
        /// Use α = 1001⁻³ instead of 1/1001; white and black densities then differ.
        #[arg(long, conflicts_with = "alpha")]
        alpha_cubed: bool,
        #[arg(long, default_value_t = PIXEL_BETA)]
        beta: f64,
        /// Pixel count, a perfect square.
        #[arg(long, default_value_t = PIXEL_COUNT)]
        n_samples: usize,
    },
    /// Norm concentration of a standard Gaussian and the atypical mode.
    Annulus {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        n_samples: usize,
    },
    /// Run the three detectors on points of a chosen density.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = DensityChoice::StandardNormal)]
        density: DensityChoice,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Points as `x0,x1;y0,y1`; sampled from the density when absent.
        #[arg(long, allow_hyphen_values = true)]
        points: Option<String>,
        #[arg(long, default_value_t = 100)]
        n_samples: usize,
        /// Density ratios at or below this value are labeled outliers.
        #[arg(long, default_value_t = 1.0)]
        ratio_threshold: f64,
    },
}

/// Validated parameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: SubcommandConfig,
    pub seed: u64,
    pub dim: usize,
    pub n_samples: usize,
    pub mass_level: f64,
    pub epsilon: f64,
    pub epsilon_defaulted: bool,
    pub n_calibration: usize,
    pub alpha: f64,
    pub beta: f64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubcommandConfig {
    Uniformize { density: DensityChoice },
    ScoreAttack { pair: ScorePair, region_mass: f64 },
    Swap { x_in: Vec<f64>, x_out: Vec<f64> },
    PixelDemo,
    Annulus,
    Detect { density: DensityChoice, points: Option<Vec<Vec<f64>>>, ratio_threshold: f64 },
}

impl SubcommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SubcommandConfig::Uniformize { .. } => "uniformize",
            SubcommandConfig::ScoreAttack { .. } => "score-attack",
            SubcommandConfig::Swap { .. } => "swap",
            SubcommandConfig::PixelDemo => "pixel-demo",
            SubcommandConfig::Annulus => "annulus",
            SubcommandConfig::Detect { .. } => "detect",
        }
    }

    fn uses_typicality(&self) -> bool {
        !matches!(self, SubcommandConfig::Swap { .. })
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Construction(Error),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 2,
            RunError::Construction(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "invalid configuration: {m}"),
            RunError::Construction(e) => write!(f, "construction failed: {e}"),
            RunError::Io(m) => write!(f, "cannot write outputs: {m}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Construction(e)
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, RunError> {
    Err(RunError::Config(msg.into()))
}

fn parse_point(text: &str) -> Result<Vec<f64>, RunError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| RunError::Config(format!("`{t}` is not a number"))))
        .collect()
}

fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

impl RunConfig {
    /// Converts parsed arguments into a validated configuration.
    pub fn from_cli(cli: Cli) -> Result<Self, RunError> {
        let (common, dim, n_samples, alpha, beta, subcommand) = match cli.command {
            Command::Uniformize { common, dim, density, n_samples } => {
                (common, dim, n_samples, PIXEL_ALPHA, PIXEL_BETA, SubcommandConfig::Uniformize { density })
            }
            Command::ScoreAttack { common, dim, pair, region_mass, n_samples } => {
                (common, dim, n_samples, PIXEL_ALPHA, PIXEL_BETA, SubcommandConfig::ScoreAttack { pair, region_mass })
            }
            Command::Swap { common, dim, x_in, x_out, n_samples } => {
                let x_in = match x_in {
                    Some(t) => parse_point(&t)?,
                    None => vec![0.0; dim],
                };
                let x_out = match x_out {
                    Some(t) => parse_point(&t)?,
                    None => vec![2.0; dim],
                };
                (common, dim, n_samples, PIXEL_ALPHA, PIXEL_BETA, SubcommandConfig::Swap { x_in, x_out })
            }
            Command::PixelDemo { common, alpha, alpha_cubed, beta, n_samples } => {
                let alpha = if alpha_cubed { PIXEL_ALPHA_CUBED } else { alpha };
                (common, 3, n_samples, alpha, beta, SubcommandConfig::PixelDemo)
            }
            Command::Annulus { common, dim, n_samples } => {
                (common, dim, n_samples, PIXEL_ALPHA, PIXEL_BETA, SubcommandConfig::Annulus)
            }
            Command::Detect { common, density, dim, points, n_samples, ratio_threshold } => {
                let points = match points {
                    Some(t) => Some(t.split(';').map(parse_point).collect::<Result<Vec<_>, _>>()?),
                    None => None,
                };
                (
                    common,
                    dim,
                    n_samples,
                    PIXEL_ALPHA,
                    PIXEL_BETA,
                    SubcommandConfig::Detect { density, points, ratio_threshold },
                )
            }
        };
        let default_calibration = match subcommand {
            SubcommandConfig::PixelDemo => PIXEL_CALIBRATION,
            _ => 10_000,
        };
        let config = RunConfig {
            subcommand,
            seed: common.seed,
            dim,
            n_samples,
            mass_level: common.mass_level,
            epsilon: common.epsilon.unwrap_or(DEFAULT_EPSILON),
            epsilon_defaulted: common.epsilon.is_none(),
            n_calibration: common.n_calibration.unwrap_or(default_calibration),
            alpha,
            beta,
            out_dir: resolve_out_dir(common.out_dir),
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every numeric field against the preconditions of the
    /// operation it feeds.
    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.mass_level > 0.5 && self.mass_level < 1.0) {
            return config_err(format!("--mass-level must lie in (0.5, 1), got {}", self.mass_level));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return config_err(format!("--epsilon must be positive, got {}", self.epsilon));
        }
        if self.n_calibration < 100 {
            return config_err("--n-calibration must be at least 100");
        }
        if self.dim == 0 {
            return config_err("--dim must be at least 1");
        }
        if self.n_samples == 0 {
            return config_err("--n-samples must be positive");
        }
        match &self.subcommand {
            SubcommandConfig::Uniformize { density } => match density {
                DensityChoice::Bimodal if self.dim != 1 => return config_err("the bimodal mixture is one-dimensional"),
                DensityChoice::Pixel => return config_err("the pixel mixture is not a product density"),
                _ => {}
            },
            SubcommandConfig::ScoreAttack { pair, region_mass } => {
                if *pair == ScorePair::Ramp && !(*region_mass > 0.0 && *region_mass < 1.0 - self.mass_level) {
                    return config_err(format!(
                        "--region-mass must lie in (0, 1 - mass level) = (0, {}), got {region_mass}",
                        1.0 - self.mass_level
                    ));
                }
                if *pair == ScorePair::Constant && self.dim != 1 {
                    return config_err("the constant-score pair is one-dimensional");
                }
            }
            SubcommandConfig::Swap { x_in, x_out } => {
                if self.dim < 2 {
                    return config_err("swap needs --dim >= 2");
                }
                if x_in.len() != self.dim || x_out.len() != self.dim {
                    return config_err("--x-in and --x-out must have --dim coordinates");
                }
                if x_in.iter().chain(x_out).any(|v| !v.is_finite()) {
                    return config_err("swap points must be finite");
                }
            }
            SubcommandConfig::PixelDemo => {
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return config_err(format!("--alpha must lie in (0, 1), got {}", self.alpha));
                }
                if !(self.beta >= 0.0 && self.beta < 1.0) {
                    return config_err(format!("--beta must lie in [0, 1), got {}", self.beta));
                }
                let side = (self.n_samples as f64).sqrt().round() as usize;
                if side * side != self.n_samples {
                    return config_err("--n-samples must be a perfect square for the pixel image");
                }
            }
            SubcommandConfig::Annulus => {
                if self.n_samples < 100 {
                    return config_err("annulus needs --n-samples >= 100");
                }
            }
            SubcommandConfig::Detect { density, points, ratio_threshold } => {
                let dim = detect_dim(*density, self.dim);
                if *density == DensityChoice::Bimodal && self.dim != 1 {
                    return config_err("the bimodal mixture is one-dimensional");
                }
                if ratio_threshold.is_nan() || *ratio_threshold < 0.0 {
                    return config_err("--ratio-threshold must be non-negative");
                }
                if let Some(points) = points {
                    if points.iter().any(|p| p.len() != dim) {
                        return config_err(format!("every point needs {dim} coordinates"));
                    }
                }
            }
        }
        Ok(())
    }

    fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            mass_level: self.mass_level,
            epsilon: self.epsilon,
            n_calibration: self.n_calibration,
            n_mc: 10_000,
        }
    }
}

fn detect_dim(density: DensityChoice, dim: usize) -> usize {
    match density {
        DensityChoice::Pixel => 3,
        DensityChoice::Bimodal => 1,
        _ => dim,
    }
}

fn make_density(choice: DensityChoice, dim: usize) -> Result<Arc<dyn Density>, RunError> {
    Ok(match choice {
        DensityChoice::StandardNormal => Arc::new(Gaussian::standard(dim)),
        DensityChoice::Bimodal => Arc::new(Mixture::bimodal()),
        DensityChoice::UnitUniform => Arc::new(Uniform::unit_cube(dim)),
        DensityChoice::Pixel => Arc::new(build_pixel_mixture(PIXEL_ALPHA, PIXEL_BETA)?),
    })
}

/// Broad density against which `detect` computes ratios.
fn background_for(choice: DensityChoice, dim: usize) -> Result<Arc<dyn Density>, RunError> {
    Ok(match choice {
        DensityChoice::StandardNormal | DensityChoice::Bimodal => {
            Arc::new(Gaussian::new(vec![0.0; dim], vec![3.0; dim])?)
        }
        DensityChoice::UnitUniform => Arc::new(Uniform::cube(dim, -1.0, 2.0)?),
        DensityChoice::Pixel => Arc::new(Uniform::cube(3, 0.0, 256.0)?),
    })
}

/// Runs the construction for `config` without touching the filesystem.
pub fn execute(config: &RunConfig) -> Result<ConstructionOutput, RunError> {
    let mut rng = RngState::new(config.seed);
    let detectors = config.detector_config();
    let out = match &config.subcommand {
        SubcommandConfig::Uniformize { density } => {
            let p = make_density(*density, config.dim)?;
            uniformization_attack(p, config.n_samples, &detectors, &mut rng)?
        }
        SubcommandConfig::ScoreAttack { pair, region_mass } => {
            let (p, s): (Arc<dyn Density>, ScoreFunction) = match pair {
                ScorePair::Ramp => {
                    (Arc::new(Gaussian::standard(config.dim)), gaussian_ball_score(config.dim, *region_mass, 0.1, 1.0)?)
                }
                ScorePair::Identity => {
                    let p: Arc<dyn Density> = Arc::new(Gaussian::standard(config.dim));
                    (p.clone(), ScoreFunction::from_density(p, 1e-300)?)
                }
                ScorePair::Constant => (Arc::new(Uniform::unit_cube(1)), ScoreFunction::constant(0.5)?),
            };
            arbitrary_scoring_attack(p, s, config.n_samples, &detectors, &mut rng)?
        }
        SubcommandConfig::Swap { x_in, x_out } => {
            let inputs = SwapInputs {
                density: Arc::new(Gaussian::standard(config.dim)),
                x_in: x_in.clone(),
                x_out: x_out.clone(),
            };
            canonical_swap(&inputs, config.n_samples, &detectors, &mut rng)?.1
        }
        SubcommandConfig::PixelDemo => pixel_demo(config.alpha, config.beta, config.n_samples, &detectors, &mut rng)?,
        SubcommandConfig::Annulus => annulus_demo(config.dim, config.n_samples, config.epsilon, &mut rng)?,
        SubcommandConfig::Detect { density, points, ratio_threshold } => {
            detect(config, *density, points.as_deref(), *ratio_threshold, &mut rng)?
        }
    };
    Ok(out)
}

fn detect(
    config: &RunConfig,
    choice: DensityChoice,
    points: Option<&[Vec<f64>]>,
    ratio_threshold: f64,
    rng: &mut RngState,
) -> Result<ConstructionOutput, RunError> {
    let dim = detect_dim(choice, config.dim);
    let p = make_density(choice, dim)?;
    let bg = background_for(choice, dim)?;
    let xs = match points {
        Some(pts) => pts.to_vec(),
        None => p.sample(config.n_samples, rng)?,
    };
    let scorer = calibrate_density_threshold(p.clone(), config.mass_level, config.n_calibration, rng)?;
    let test = TypicalityTest::new(p.clone(), config.epsilon, 10_000, rng)?;
    let mut report = ConstructionReport::new(
        "detect",
        json!({ "density": p.describe(), "background": bg.describe(), "points": xs.len() }),
        json!({ "density_scorer": scorer.parameters(), "typicality": test.parameters(), "ratio_threshold": ratio_threshold }),
        config.seed,
    );
    let mut tables = [Rule::DensityScore, Rule::Typicality, Rule::DensityRatio].map(|rule| VerdictTable {
        rule,
        stage: Stage::Before,
        parameters: match rule {
            Rule::DensityScore => scorer.parameters(),
            Rule::Typicality => test.parameters(),
            Rule::DensityRatio => json!({ "threshold": ratio_threshold }),
        },
        scores: Vec::new(),
        labels: Vec::new(),
    });
    for x in &xs {
        let d = scorer.density.density(x)?;
        tables[0].scores.push(d);
        tables[0].labels.push(scorer.label_score(d));
        let stat = reparam::detectors::typicality_statistic(&test, std::slice::from_ref(x))?;
        tables[1].scores.push(stat);
        tables[1].labels.push(test.label_statistic(stat));
        let r = density_ratio_score(p.as_ref(), bg.as_ref(), x)?;
        tables[2].scores.push(r);
        tables[2].labels.push(if r <= ratio_threshold { Label::Outlier } else { Label::Inlier });
    }
    let mut header: Vec<String> = (0..dim).map(|d| format!("x{d}")).collect();
    header.extend(
        ["density", "density_label", "typicality_statistic", "typicality_label", "density_ratio", "ratio_label"]
            .map(String::from),
    );
    let mut table = PointTable::new(&header);
    for (i, x) in xs.iter().enumerate() {
        let mut row: Vec<Cell> = x.iter().map(|v| Cell::from(*v)).collect();
        for t in &tables {
            row.push(t.scores[i].into());
            row.push(t.labels[i].into());
        }
        table.push(row);
    }
    report.verdict_tables = tables.to_vec();
    report.finalize();
    Ok(ConstructionOutput { report, points: table, image: None })
}

/// Float format shared by every CSV: 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn points_csv(table: &PointTable) -> Result<Vec<u8>, RunError> {
    let io = |e: csv::Error| RunError::Io(e.to_string());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        let fields: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Float(v) => format_float(*v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        w.write_record(&fields).map_err(io)?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.to_string()))
}

pub fn report_json(report: &ConstructionReport) -> Result<Vec<u8>, RunError> {
    let mut bytes = serde_json::to_vec_pretty(report).map_err(|e| RunError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), RunError> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(bytes).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

/// Writes the artifacts of `out` into `dir`.
pub fn write_outputs(out: &ConstructionOutput, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    write_file(dir, "report.json", &report_json(&out.report)?)?;
    write_file(dir, "points.csv", &points_csv(&out.points)?)?;
    let mut written = vec![dir.join("report.json"), dir.join("points.csv")];
    if let Some(img) = &out.image {
        write_file(dir, "image.ppm", &img.to_ppm())?;
        written.push(dir.join("image.ppm"));
    }
    Ok(written)
}

/// Validates, runs and writes one subcommand; returns a one-line summary.
pub fn run(cli: Cli) -> Result<String, RunError> {
    let config = RunConfig::from_cli(cli)?;
    run_config(&config)
}

pub fn run_config(config: &RunConfig) -> Result<String, RunError> {
    if config.epsilon_defaulted && config.subcommand.uses_typicality() {
        eprintln!(
            "warning: typicality epsilon defaults to 1.0 nat; this value is arbitrary, set --epsilon to choose another"
        );
    }
    let out = execute(config)?;
    write_outputs(&out, &config.out_dir)?;
    let r = &out.report;
    let failed: Vec<&str> = r
        .residuals
        .iter()
        .filter(|x| !x.pass)
        .map(|x| x.check.as_str())
        .chain(r.expectations.iter().filter(|e| !e.pass).map(|e| e.check.as_str()))
        .collect();
    let status = match r.status {
        Status::Pass => "pass",
        Status::Fail => "fail",
    };
    let mut line = format!(
        "{}: status {status}; {} residuals, {} expectations; outputs in {}",
        config.subcommand.name(),
        r.residuals.len(),
        r.expectations.len(),
        config.out_dir.display()
    );
    if !failed.is_empty() {
        line.push_str(&format!("; failed: {}", failed.join(", ")));
    }
    Ok(line)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[&str]) -> Result<RunConfig, RunError> {
        let mut argv = vec!["reparam"];
        argv.extend_from_slice(args);
        RunConfig::from_cli(Cli::try_parse_from(argv).unwrap())
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.0), "-2.0000000000000000e0");
        let v = std::f64::consts::PI / 7.0;
        assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn points_parse_and_reject_garbage() {
        assert_eq!(parse_point(" 1, -2.5 ").unwrap(), vec![1.0, -2.5]);
        assert!(parse_point("1,x").is_err());
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let mut t = PointTable::new(&["a", "b"]);
        t.push(vec![Cell::Int(3), Cell::Text("inlier".into())]);
        let bytes = points_csv(&t).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\n3,inlier\n");
    }

    #[test]
    fn defaults_and_validation() {
        let c = config(&["swap"]).unwrap();
        assert_eq!(c.subcommand, SubcommandConfig::Swap { x_in: vec![0.0, 0.0], x_out: vec![2.0, 2.0] });
        assert!(c.epsilon_defaulted);
        assert_eq!(c.mass_level, 0.95);
        assert_eq!(config(&["swap", "--dim", "1"]).unwrap_err().exit_code(), 2);
        assert_eq!(config(&["uniformize", "--density", "pixel"]).unwrap_err().exit_code(), 2);
        assert_eq!(config(&["pixel-demo", "--alpha-cubed"]).unwrap().alpha, PIXEL_ALPHA_CUBED);
        assert!(!config(&["annulus", "--epsilon", "0.5"]).unwrap().epsilon_defaulted);
    }

    #[test]
    fn construction_failures_map_to_three() {
        let c = config(&["swap", "--x-in", "1,1", "--x-out", "1,1"]).unwrap();
        assert_eq!(execute(&c).unwrap_err().exit_code(), 3);
    }
}
