use std::path::Path;

use anyhow::Context;
use serde_json::{Map, Value};
use seqmc::chain::{Algorithm, Settings};

use crate::target_spec::TargetSpec;
use crate::Usage;

/// Everything needed to replay a run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub settings: Settings,
    pub target: TargetSpec,
    pub seed: u64,
}

#[derive(Debug, Default)]
pub struct Overrides {
    pub algo: Option<Algorithm>,
    pub target: Option<TargetSpec>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
}

fn read_config(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?
    {
        Value::Object(m) => Ok(m),
        _ => Err(Usage(format!("config {} must be a JSON object", path.display())).into()),
    }
}

fn string_key(file: &mut Map<String, Value>, key: &str) -> anyhow::Result<Option<String>> {
    match file.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(Usage(format!("config key {key:?} must be a string, got {other}")).into()),
    }
}

/// Layers, lowest first: the algorithm's defaults, the target's defaults,
/// the config file, then command-line flags.
pub fn resolve(config: Option<&Path>, flags: Overrides) -> anyhow::Result<Resolved> {
    let mut file = match config {
        Some(p) => read_config(p)?,
        None => Map::new(),
    };
    let algo = match (flags.algo, string_key(&mut file, "algo")?) {
        (Some(a), _) => a,
        (None, Some(s)) => s.parse().map_err(|e: seqmc::Error| Usage(e.to_string()))?,
        (None, None) => return Err(Usage("--algo is required".into()).into()),
    };
    let target = match (flags.target, string_key(&mut file, "target")?) {
        (Some(t), _) => t,
        (None, Some(s)) => s.parse().map_err(Usage)?,
        (None, None) => return Err(Usage("--target is required".into()).into()),
    };
    let file_seed = match file.remove("seed") {
        None => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| Usage(format!("config key \"seed\" must be an unsigned integer, got {v}")))?,
        ),
    };
    let seed = flags.seed.or(file_seed).unwrap_or_else(rand::random);

    let mut merged = match serde_json::to_value(Settings::defaults(algo))? {
        Value::Object(m) => m,
        _ => unreachable!("settings serialize to an object"),
    };
    if let Value::Object(t) = target.default_overrides() {
        merged.extend(t);
    }
    for (k, v) in file {
        if !merged.contains_key(&k) {
            let valid: Vec<&str> = merged.keys().map(String::as_str).collect();
            return Err(Usage(format!(
                "unknown config key {k:?}; valid: algo, target, seed, {}",
                valid.join(", ")
            ))
            .into());
        }
        merged.insert(k, v);
    }
    merged.insert("algo".into(), Value::String(algo.name().into()));
    if let Some(n) = flags.iters {
        merged.insert("iters".into(), n.into());
    }
    let settings: Settings =
        serde_json::from_value(Value::Object(merged)).map_err(|e| Usage(format!("config: {e}")))?;
    Ok(Resolved {
        settings,
        target,
        seed,
    })
}

/// The sidecar: the resolved settings plus `seed` and `target`, readable
/// back through `--config`.
pub fn sidecar(r: &Resolved) -> anyhow::Result<String> {
    let mut m = match serde_json::to_value(&r.settings)? {
        Value::Object(m) => m,
        _ => unreachable!("settings serialize to an object"),
    };
    m.insert("seed".into(), r.seed.into());
    m.insert("target".into(), r.target.to_string().into());
    Ok(serde_json::to_string_pretty(&Value::Object(m))? + "\n")
}
