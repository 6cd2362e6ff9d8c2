use std::path::{Path, PathBuf};

use strcgp::data_io::{generate, write_csv, write_truth_csv, GeneratorConfig};

use crate::args::{Preset, SimulateArgs};
use crate::config::read_json;
use crate::error::{usage, CliResult};
use crate::output::emit;

fn preset_of(cfg: &GeneratorConfig) -> Preset {
    match cfg {
        GeneratorConfig::TemporalMatern(_) => Preset::TemporalMatern,
        GeneratorConfig::StQuadratic(_) => Preset::StQuadratic,
        GeneratorConfig::Custom(_) => Preset::Custom,
    }
}

/// `data.csv` → `data.truth.csv` in the same directory.
pub fn default_truth_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.truth.csv"))
}

pub fn generator_config(args: &SimulateArgs) -> CliResult<GeneratorConfig> {
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), preset) => {
            let cfg: GeneratorConfig = read_json(path)?;
            if preset.is_some_and(|p| p != preset_of(&cfg)) {
                return usage(format!("--preset disagrees with the preset in {}", path.display()));
            }
            cfg
        }
        (None, Some(Preset::TemporalMatern)) => GeneratorConfig::TemporalMatern(Default::default()),
        (None, Some(Preset::StQuadratic)) => GeneratorConfig::StQuadratic(Default::default()),
        (None, Some(Preset::Custom)) => return usage("--preset custom needs a kernel from --config"),
        (None, None) => return usage("give --preset or --config"),
    };
    if let Some(n) = args.n_t {
        match &mut cfg {
            GeneratorConfig::TemporalMatern(c) => c.n_t = n,
            GeneratorConfig::StQuadratic(c) => c.n_t = n,
            GeneratorConfig::Custom(c) => c.n_t = n,
        }
    }
    if let Some(g) = args.grid {
        match &mut cfg {
            GeneratorConfig::TemporalMatern(_) => return usage("--grid does not apply to --preset temporal-matern"),
            GeneratorConfig::StQuadratic(c) => c.grid = g,
            GeneratorConfig::Custom(c) => c.grid = Some(g),
        }
    }
    if let Some(r) = args.outlier_rate {
        match &mut cfg {
            GeneratorConfig::TemporalMatern(c) => c.outlier_rate = r,
            GeneratorConfig::StQuadratic(c) => c.outlier_rate = r,
            GeneratorConfig::Custom(c) => match c.contamination.as_mut() {
                Some(cont) => cont.rate = r,
                None => return usage("--outlier-rate needs a contamination block in the custom config"),
            },
        }
    }
    Ok(cfg)
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let cfg = generator_config(&args)?;
    let ds = generate(&cfg, args.seed.unwrap_or(0))?;
    let mut data = Vec::new();
    write_csv(&ds, &mut data)?;
    emit(args.output.as_deref(), &data)?;
    let truth = args.truth.clone().or_else(|| args.output.as_deref().map(default_truth_path));
    if let Some(path) = truth {
        let mut bytes = Vec::new();
        write_truth_csv(&ds, &mut bytes)?;
        emit(Some(&path), &bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(preset: Option<Preset>) -> SimulateArgs {
        SimulateArgs {
            preset,
            config: None,
            seed: None,
            grid: None,
            n_t: None,
            outlier_rate: None,
            output: None,
            truth: None,
        }
    }

    #[test]
    fn truth_path_sits_next_to_output() {
        assert_eq!(default_truth_path(Path::new("out/data.csv")), Path::new("out/data.truth.csv"));
        assert_eq!(default_truth_path(Path::new("d")), Path::new("d.truth.csv"));
    }

    #[test]
    fn overrides_apply_per_preset() {
        let mut a = args(Some(Preset::StQuadratic));
        a.grid = Some(5);
        a.n_t = Some(4);
        match generator_config(&a).unwrap() {
            GeneratorConfig::StQuadratic(c) => assert_eq!((c.grid, c.n_t), (5, 4)),
            other => panic!("{other:?}"),
        }
        let mut a = args(Some(Preset::TemporalMatern));
        a.grid = Some(5);
        assert!(generator_config(&a).is_err());
        assert!(generator_config(&args(Some(Preset::Custom))).is_err());
        assert!(generator_config(&args(None)).is_err());
    }
}
