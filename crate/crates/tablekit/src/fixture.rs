//! SGCL toy fixtures: a parameter file plus instance files in one directory.
//!
//! Each instance file `toy_*.json` holds an annotation (cell logical
//! coordinates and ground-truth boxes, ordered by cell id) and the dumps the
//! forward pass consumes: decoder hidden states, the cell token spans, the
//! P3/P4/P5 feature maps, target-token logits and target tokens. Shapes must
//! agree with the configuration in `params.txt`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tablekit_core::sgcl::{FeatureMap, HiddenStates, Mat, SgclConfig, SgclInputs, SgclParams, TokenSpanIndex, ToyInstance};
use tablekit_core::{Cell, TableAnnotation};

use crate::{params_file, Error, Result};

pub const FORMAT: &str = "sgcl-toy v1";
pub const PARAMS_FILE: &str = "params.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatDump {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDump {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDump {
    pub format: String,
    pub annotation: TableAnnotation,
    pub hidden: Vec<MatDump>,
    pub spans: Vec<(usize, usize)>,
    pub p3: MapDump,
    pub p4: MapDump,
    pub p5: MapDump,
    pub token_logits: MatDump,
    pub tokens: Vec<usize>,
}

fn mat(m: &Mat<f64>) -> MatDump {
    MatDump { rows: m.rows(), cols: m.cols(), data: m.data().to_vec() }
}

fn map(f: &FeatureMap<f64>) -> MapDump {
    MapDump { channels: f.channels(), height: f.height(), width: f.width(), data: f.data().to_vec() }
}

impl ToyDump {
    pub fn from_instance(id: &str, inst: &ToyInstance) -> Self {
        let cells = inst
            .logical
            .iter()
            .zip(&inst.boxes)
            .enumerate()
            .map(|(id, (l, b))| Cell { id, bbox: Some(*b), logical: *l, content: String::new() })
            .collect();
        let mut annotation = TableAnnotation::from_cells(cells);
        annotation.id = id.into();
        ToyDump {
            format: FORMAT.into(),
            annotation,
            hidden: inst.inputs.hidden.layers().iter().map(mat).collect(),
            spans: inst.inputs.spans.spans().to_vec(),
            p3: map(&inst.inputs.p3),
            p4: map(&inst.inputs.p4),
            p5: map(&inst.inputs.p5),
            token_logits: mat(&inst.token_logits),
            tokens: inst.tokens.clone(),
        }
    }

    pub fn into_instance(self, config: SgclConfig) -> std::result::Result<ToyInstance, String> {
        if self.format != FORMAT {
            return Err(format!("unknown format {:?}", self.format));
        }
        let mut cells = self.annotation.cells;
        cells.sort_by_key(|c| c.id);
        if cells.iter().enumerate().any(|(i, c)| c.id != i) {
            return Err(String::from("cell ids must be 0..n"));
        }
        let boxes = cells
            .iter()
            .map(|c| c.bbox.ok_or(format!("cell {} has no box", c.id)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let e = |e: tablekit_core::sgcl::SgclError| e.to_string();
        let m = |d: MatDump| Mat::from_vec(d.rows, d.cols, d.data).map_err(e);
        let f = |d: MapDump| FeatureMap::new(d.channels, d.height, d.width, d.data).map_err(e);
        let layers = self.hidden.into_iter().map(m).collect::<std::result::Result<Vec<_>, _>>()?;
        let hidden = HiddenStates::new(layers).map_err(e)?;
        let spans = TokenSpanIndex::new(self.spans, hidden.tokens()).map_err(e)?;
        let inst = ToyInstance {
            config,
            logical: cells.iter().map(|c| c.logical).collect(),
            boxes,
            inputs: SgclInputs { hidden, spans, p3: f(self.p3)?, p4: f(self.p4)?, p5: f(self.p5)? },
            token_logits: m(self.token_logits)?,
            tokens: self.tokens,
        };
        inst.check().map_err(e)?;
        if inst.inputs.hidden.dim() != config.dim {
            return Err(format!("hidden width {} but dim is {}", inst.inputs.hidden.dim(), config.dim));
        }
        let channels = [inst.inputs.p3.channels(), inst.inputs.p4.channels(), inst.inputs.p5.channels()];
        if channels != [config.c3, config.c4, config.c5] {
            return Err(format!("feature channels {channels:?} disagree with the parameter file"));
        }
        if inst.tokens.iter().any(|&t| t >= inst.token_logits.cols()) {
            return Err(String::from("target token outside the vocabulary"));
        }
        Ok(inst)
    }
}

/// A loaded fixture directory.
#[derive(Debug, Clone)]
pub struct Fixtures {
    pub params: SgclParams<f64>,
    /// Instances with their file stems, sorted by file name.
    pub instances: Vec<(String, ToyInstance)>,
}

fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("toy_") && name.ends_with(".json")
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Whether `dir` looks like a fixture directory at all.
pub fn is_fixture_dir(dir: &Path) -> bool {
    dir.join(PARAMS_FILE).is_file() && instance_files(dir).is_ok_and(|f| !f.is_empty())
}

pub fn load(dir: &Path) -> Result<Fixtures> {
    if !is_fixture_dir(dir) {
        return Err(Error::Usage(format!(
            "{} is not a fixture directory: it needs {PARAMS_FILE} and at least one toy_*.json",
            dir.display()
        )));
    }
    let params = params_file::load(&dir.join(PARAMS_FILE))?;
    let mut instances = Vec::new();
    for path in instance_files(dir)? {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let dump: ToyDump = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.line(), e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let inst = dump.into_instance(params.config).map_err(|m| Error::format(&path, 0, m))?;
        instances.push((stem, inst));
    }
    Ok(Fixtures { params, instances })
}

/// Write `params.txt` and one `toy_NN.json` per instance.
pub fn save(dir: &Path, params: &SgclParams<f64>, instances: &[ToyInstance]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    params_file::save(&dir.join(PARAMS_FILE), params)?;
    for (i, inst) in instances.iter().enumerate() {
        let stem = format!("toy_{i:02}");
        let path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string(&ToyDump::from_instance(&stem, inst)).map_err(|e| Error::Other(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64) -> ToyInstance {
        ToyInstance::random(SgclConfig::toy(), 6, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn dump_round_trip() {
        let inst = instance(1);
        let dump = ToyDump::from_instance("toy_00", &inst);
        let text = serde_json::to_string(&dump).unwrap();
        let back: ToyDump = serde_json::from_str(&text).unwrap();
        let inst2 = back.into_instance(SgclConfig::toy()).unwrap();
        assert_eq!(inst2.logical, inst.logical);
        assert_eq!(inst2.boxes, inst.boxes);
        assert_eq!(inst2.inputs, inst.inputs);
        assert_eq!(inst2.token_logits, inst.token_logits);
        assert_eq!(inst2.tokens, inst.tokens);
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let dump = ToyDump::from_instance("x", &instance(2));
        let cfg = SgclConfig { c4: 11, ..SgclConfig::toy() };
        assert!(dump.clone().into_instance(cfg).is_err());
        let cfg = SgclConfig { dim: 24, ..SgclConfig::toy() };
        assert!(dump.clone().into_instance(cfg).is_err());
        let mut bad = dump;
        bad.tokens[0] = 99;
        assert!(bad.into_instance(SgclConfig::toy()).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params = SgclParams::random(SgclConfig::toy(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        save(dir.path(), &params, &[instance(3), instance(4)]).unwrap();
        let f = load(dir.path()).unwrap();
        assert_eq!(f.params, params);
        assert_eq!(f.instances.len(), 2);
        assert_eq!(f.instances[1].0, "toy_01");
    }

    #[test]
    fn empty_directory_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Usage(_))));
        assert!(matches!(load(&dir.path().join("missing")), Err(Error::Usage(_))));
    }
}
