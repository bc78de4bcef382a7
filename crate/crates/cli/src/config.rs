//! Layered configuration: defaults, then a JSON file, then `--set` overrides.
//! Every key is checked against the defaults so typos fail loudly.

use navbridge::eval::ExperimentConfig;
use navbridge::runner::RunConfig;
use navbridge::sim::SimConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunConfig,
    pub sim: SimConfig,
    pub experiment: ExperimentConfig,
}

fn valid_keys(obj: &Map<String, Value>, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in obj {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) => valid_keys(inner, &path, out),
            _ => out.push(path),
        }
    }
}

fn unknown_key(path: &str, root: &Value) -> String {
    let mut keys = Vec::new();
    if let Value::Object(obj) = root {
        valid_keys(obj, "", &mut keys);
    }
    format!("unknown config key `{path}`; valid keys: {}", keys.join(", "))
}

fn merge(target: &mut Value, patch: Value, prefix: &str, root: &Value) -> Result<(), String> {
    let Value::Object(patch) = patch else {
        *target = patch;
        return Ok(());
    };
    let Value::Object(obj) = target else {
        return Err(format!("config key `{prefix}` takes a value, not a section"));
    };
    for (k, v) in patch {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let slot = obj.get_mut(&k).ok_or_else(|| unknown_key(&path, root))?;
        if slot.is_object() || v.is_object() {
            merge(slot, v, &path, root)?;
        } else {
            *slot = v;
        }
    }
    Ok(())
}

fn set(target: &mut Value, assignment: &str, root: &Value) -> Result<(), String> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| format!("--set expects key=value, got `{assignment}`"))?;
    let mut slot = &mut *target;
    for part in key.split('.') {
        slot = slot.as_object_mut().and_then(|o| o.get_mut(part)).ok_or_else(|| unknown_key(key, root))?;
    }
    if slot.is_object() {
        return Err(format!("config key `{key}` is a section; set one of its fields"));
    }
    // bare words such as `A` or `+P-B` are strings
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Builds the effective config. Errors are usage errors.
pub fn load(file_text: Option<&str>, overrides: &[String]) -> Result<Config, String> {
    let root = serde_json::to_value(Config::default()).expect("defaults serialize");
    let mut value = root.clone();
    if let Some(text) = file_text {
        let patch: Value = serde_json::from_str(text).map_err(|e| format!("config file: {e}"))?;
        if !patch.is_object() {
            return Err("config file must hold a JSON object".into());
        }
        merge(&mut value, patch, "", &root)?;
    }
    for o in overrides {
        set(&mut value, o, &root)?;
    }
    serde_json::from_value(value).map_err(|e| format!("config: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use navbridge::eval::Configuration;
    use navbridge::runner::Mode;

    #[test]
    fn defaults_without_input() {
        assert_eq!(load(None, &[]).unwrap(), Config::default());
    }

    #[test]
    fn file_then_overrides() {
        let file = r#"{"run": {"max_agent_steps": 300, "use_bus": true}, "sim": {"body": {"radius": 0.12}}}"#;
        let c = load(Some(file), &["run.max_agent_steps=200".into(), "run.mode=B".into()]).unwrap();
        assert_eq!(c.run.max_agent_steps, 200);
        assert!(c.run.use_bus);
        assert_eq!(c.run.mode, Mode::PlannerNative);
        assert_eq!(c.sim.body.radius, 0.12);
    }

    #[test]
    fn list_values_parse() {
        let c = load(None, &[r#"experiment.configurations=["-P-B","+P-B"]"#.into()]).unwrap();
        assert_eq!(
            c.experiment.configurations,
            vec![Configuration::BASELINE, Configuration { physics: true, bus: false }]
        );
    }

    #[test]
    fn unknown_keys_list_valid_ones() {
        let e = load(Some(r#"{"run": {"max_steps": 3}}"#), &[]).unwrap_err();
        assert!(e.contains("run.max_steps") && e.contains("run.max_agent_steps"), "{e}");
        let e = load(None, &["sim.body.colour=1".into()]).unwrap_err();
        assert!(e.contains("sim.body.radius"), "{e}");
        assert!(load(None, &["nokey".into()]).is_err());
        assert!(load(None, &["sim=1".into()]).is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(load(None, &["run.max_agent_steps=-1".into()]).is_err());
        assert!(load(Some("[1]"), &[]).is_err());
    }
}
