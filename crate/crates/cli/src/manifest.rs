use altshift_core::config::Config;
use altshift_core::formats::{FormatError, KvDoc};
use sha2::{Digest, Sha256};

/// SHA-256 of the canonical configuration text.
pub fn config_hash(cfg: &Config) -> String {
    hex::encode(Sha256::digest(cfg.canonical().as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub label: String,
    pub start: u64,
    pub count: usize,
}

/// Record of one command run. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    /// Free-form run parameters (terrain, mode, input paths).
    pub params: Vec<(String, String)>,
    pub seeds: Vec<SeedRange>,
    pub artifacts: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

impl RunManifest {
    pub fn new(command: &str, cfg: &Config) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash(cfg),
            params: Vec::new(),
            seeds: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut doc = KvDoc::default();
        doc.push("tool_version", &self.tool_version);
        doc.push("command", &self.command);
        doc.push("config_hash", &self.config_hash);
        doc.push("params", self.params.len());
        for (i, (k, v)) in self.params.iter().enumerate() {
            doc.push(format!("param.{i}.name"), k);
            doc.push(format!("param.{i}.value"), v);
        }
        doc.push("seed_ranges", self.seeds.len());
        for (i, s) in self.seeds.iter().enumerate() {
            doc.push(format!("seeds.{i}.label"), &s.label);
            doc.push(format!("seeds.{i}.start"), s.start);
            doc.push(format!("seeds.{i}.count"), s.count);
        }
        doc.push("artifacts", self.artifacts.len());
        for (i, a) in self.artifacts.iter().enumerate() {
            doc.push(format!("artifact.{i}"), a);
        }
        doc.render("run manifest")
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let doc = KvDoc::parse(text)?;
        let s = |k: &str| doc.get(k).map(|(v, _)| v.to_string());
        let params = (0..doc.usize("params")?)
            .map(|i| Ok((s(&format!("param.{i}.name"))?, s(&format!("param.{i}.value"))?)))
            .collect::<Result<_, FormatError>>()?;
        let seeds = (0..doc.usize("seed_ranges")?)
            .map(|i| {
                Ok(SeedRange {
                    label: s(&format!("seeds.{i}.label"))?,
                    start: doc.u64(&format!("seeds.{i}.start"))?,
                    count: doc.usize(&format!("seeds.{i}.count"))?,
                })
            })
            .collect::<Result<_, FormatError>>()?;
        let artifacts = (0..doc.usize("artifacts")?)
            .map(|i| s(&format!("artifact.{i}")))
            .collect::<Result<_, FormatError>>()?;
        Ok(Self {
            tool_version: s("tool_version")?,
            command: s("command")?,
            config_hash: s("config_hash")?,
            params,
            seeds,
            artifacts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut m = RunManifest::new("evaluate", &Config::default());
        m.params.push(("terrain".into(), "stepped".into()));
        m.seeds.push(SeedRange {
            label: "evaluation".into(),
            start: 5000,
            count: 20,
        });
        m.artifacts.push("baseline/telemetry_5000.csv".into());
        assert_eq!(RunManifest::parse(&m.render()).unwrap(), m);
    }

    #[test]
    fn hash_tracks_semantics_only() {
        let base = Config::default();
        let same = Config::parse("# reordered, commented, explicit default\nkp_z = 3\n").unwrap();
        assert_eq!(config_hash(&base), config_hash(&same));
        let changed = Config::parse("kp_z = 3.5\n").unwrap();
        assert_ne!(config_hash(&base), config_hash(&changed));
        assert_eq!(config_hash(&base).len(), 64);
    }
}
