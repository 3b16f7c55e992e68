//! Scenario documents: one JSON object per file with the top-level keys
//! `format_version`, `category`, `seed`, `n_frames`, `map`, `ego`, `agents`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentTrack, RoadMap, Scenario, ScenarioCategory};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct ScenarioDocRef<'a> {
    format_version: u32,
    category: ScenarioCategory,
    seed: u64,
    n_frames: usize,
    map: &'a RoadMap,
    ego: &'a AgentTrack,
    agents: &'a [AgentTrack],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[allow(dead_code)]
    format_version: u32,
    category: ScenarioCategory,
    seed: u64,
    n_frames: usize,
    map: RoadMap,
    ego: AgentTrack,
    agents: Vec<AgentTrack>,
}

pub fn scenario_to_string(s: &Scenario) -> String {
    let doc = ScenarioDocRef {
        format_version: FORMAT_VERSION,
        category: s.category,
        seed: s.seed,
        n_frames: s.n_frames,
        map: &s.map,
        ego: &s.ego,
        agents: &s.agents,
    };
    serde_json::to_string(&doc).expect("scenario serialization cannot fail")
}

pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        field: "<document>".into(),
        message: e.to_string(),
    })?;
    // Check the version before the schema so old files get a useful error.
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v as u32 == FORMAT_VERSION => {}
        Some(v) => {
            return Err(Error::Version {
                found: v as u32,
                expected: FORMAT_VERSION,
            })
        }
        None => {
            return Err(Error::Parse {
                field: "format_version".into(),
                message: "missing or not an integer".into(),
            })
        }
    }
    let doc: ScenarioDoc = serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        let field = message
            .split('`')
            .nth(1)
            .unwrap_or("<document>")
            .to_string();
        Error::Parse { field, message }
    })?;
    let s = Scenario {
        map: doc.map,
        ego: doc.ego,
        agents: doc.agents,
        n_frames: doc.n_frames,
        category: doc.category,
        seed: doc.seed,
    };
    s.validate()?;
    Ok(s)
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scenario_to_string(s)).map_err(|e| Error::file(path, e))
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    scenario_from_str(&text)
}
