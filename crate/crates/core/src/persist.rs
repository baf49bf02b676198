//! Versioned JSON envelope for trained models.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    format_version: u32,
    toolkit_version: String,
    model: T,
}

pub(crate) fn to_json<T: Serialize>(format: &str, version: u32, model: &T) -> Result<String> {
    let env = Envelope {
        format: format.to_string(),
        format_version: version,
        toolkit_version: crate::VERSION.to_string(),
        model,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub(crate) fn from_json<T: DeserializeOwned>(format: &str, version: u32, text: &str) -> Result<T> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    let found_format = raw.get("format").and_then(|v| v.as_str()).unwrap_or("<missing>");
    let found_version = raw.get("format_version").and_then(|v| v.as_u64());
    if found_format != format || found_version != Some(version as u64) {
        return Err(Error::Version {
            found: format!(
                "{found_format} v{}",
                found_version.map_or("<missing>".to_string(), |v| v.to_string())
            ),
            expected: format!("{format} v{version}"),
        });
    }
    let env: Envelope<T> = serde_json::from_value(raw)?;
    Ok(env.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_mismatch() {
        let s = to_json("thing", 2, &vec![1.5, 2.5]).unwrap();
        let back: Vec<f64> = from_json("thing", 2, &s).unwrap();
        assert_eq!(back, vec![1.5, 2.5]);
        let err = from_json::<Vec<f64>>("thing", 3, &s).unwrap_err();
        assert!(matches!(err, Error::Version { .. }), "{err}");
        assert!(from_json::<Vec<f64>>("other", 2, &s).is_err());
    }
}
