use std::collections::HashMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::distill::{PolicyNet, NET_FORMAT};
use crate::doc;
use crate::error::{Error, Result};
use crate::markov::{MarkovEnsemble, ENSEMBLE_FORMAT};
use crate::model::{Episode, EPISODE_FORMAT};
use crate::quantize::{QuantizationScheme, SCHEME_FORMAT};
use crate::style::{StyleDistanceReport, REPORT_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Episode,
    Ensemble,
    Net,
    Scheme,
    Report,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::Episode,
        ArtifactKind::Ensemble,
        ArtifactKind::Net,
        ArtifactKind::Scheme,
        ArtifactKind::Report,
    ];

    /// Document `format` tag.
    pub fn format(self) -> &'static str {
        match self {
            ArtifactKind::Episode => EPISODE_FORMAT,
            ArtifactKind::Ensemble => ENSEMBLE_FORMAT,
            ArtifactKind::Net => NET_FORMAT,
            ArtifactKind::Scheme => SCHEME_FORMAT,
            ArtifactKind::Report => REPORT_FORMAT,
        }
    }

    pub fn from_format(format: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.format() == format)
    }

    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Episode => "episode",
            ArtifactKind::Ensemble => "ensemble",
            ArtifactKind::Net => "net",
            ArtifactKind::Scheme => "scheme",
            ArtifactKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Episode(Episode),
    Ensemble(MarkovEnsemble),
    Net(PolicyNet),
    Scheme(QuantizationScheme),
    Report(StyleDistanceReport),
}

impl Artifact {
    pub fn kind(&self) -> ArtifactKind {
        match self {
            Artifact::Episode(_) => ArtifactKind::Episode,
            Artifact::Ensemble(_) => ArtifactKind::Ensemble,
            Artifact::Net(_) => ArtifactKind::Net,
            Artifact::Scheme(_) => ArtifactKind::Scheme,
            Artifact::Report(_) => ArtifactKind::Report,
        }
    }

    pub fn to_doc(&self) -> Result<String> {
        match self {
            Artifact::Episode(a) => a.to_doc(),
            Artifact::Ensemble(a) => a.to_doc(),
            Artifact::Net(a) => a.to_doc(),
            Artifact::Scheme(a) => a.to_doc(),
            Artifact::Report(a) => a.to_doc(),
        }
    }

    /// Decodes any artifact document, dispatching on its `format` tag.
    pub fn from_doc(text: &str) -> Result<Self> {
        let (format, _) = doc::probe(text)?;
        let kind = ArtifactKind::from_format(&format).ok_or_else(|| Error::Parse {
            line: 1,
            offset: 0,
            message: format!("unknown document format `{format}`"),
        })?;
        Ok(match kind {
            ArtifactKind::Episode => Artifact::Episode(Episode::from_doc(text)?),
            ArtifactKind::Ensemble => Artifact::Ensemble(MarkovEnsemble::from_doc(text)?),
            ArtifactKind::Net => Artifact::Net(PolicyNet::from_doc(text)?),
            ArtifactKind::Scheme => Artifact::Scheme(QuantizationScheme::from_doc(text)?),
            ArtifactKind::Report => Artifact::Report(StyleDistanceReport::from_doc(text)?),
        })
    }
}

/// File name used by [`persist`]: `<name>.<kind>.ndjson`.
pub fn file_name(kind: ArtifactKind, name: &str) -> String {
    format!("{name}.{}.ndjson", kind.name())
}

/// Resolves `rel` under `root`, rejecting absolute paths and `..`.
pub fn resolve(root: &Path, rel: &str) -> Result<PathBuf> {
    let p = Path::new(rel);
    if rel.is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(Error::invalid(format!("path `{rel}` must be relative and stay inside the root")));
    }
    Ok(root.join(p))
}

fn path_lock(path: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    map.entry(path.to_path_buf()).or_default().clone()
}

/// Writes `text` to `path` through a sibling temporary file and a rename.
/// Writers to the same path within the process are serialised.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let lock = path_lock(path);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Saves `artifact` as `<root>/<name>.<kind>.ndjson` and returns the path.
pub fn persist(artifact: &Artifact, root: &Path, name: &str) -> Result<PathBuf> {
    let path = resolve(root, &file_name(artifact.kind(), name))?;
    write_atomic(&path, &artifact.to_doc()?)?;
    Ok(path)
}

pub fn restore(path: &Path) -> Result<Artifact> {
    Artifact::from_doc(&fs::read_to_string(path)?)
}
