//! Result and trajectory files.
//!
//! Trajectories come in two layouts. The CSV form starts with `#` comment
//! lines carrying the seed and the JSON engine config, followed by
//! `t,agent_id,opinion` rows. The binary form is the magic `DGTRAJ01`, a
//! little-endian `u32` header length, a JSON header, then `steps x agents`
//! little-endian `f64` values in row-major order.

use std::io::Write;
use std::path::{Path, PathBuf};

use degroot_core::SimConfig;
use serde::{Deserialize, Serialize};

use crate::config::TrajectoryFormat;
use crate::result::ScenarioResult;
use crate::LabError;

const MAGIC: &[u8; 8] = b"DGTRAJ01";

fn io_err(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Io(path.to_path_buf(), e.to_string())
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// Writes `result.json`, `metrics.csv` and, when present, `z_values.csv` and
/// the recorded trajectory.
pub fn write_result(result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>, LabError> {
    let mut written = Vec::new();
    let json = serde_json::to_vec_pretty(result).expect("results serialize");
    let path = dir.join("result.json");
    write_atomic(&path, &json)?;
    written.push(path);
    let path = dir.join("metrics.csv");
    write_atomic(&path, result.metrics_csv().as_bytes())?;
    written.push(path);
    if !result.z_records.is_empty() {
        let mut csv = String::from("label,seed,converged,agent_id,z_even,z_odd\n");
        for rec in &result.z_records {
            for (k, &agent) in rec.agents.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{},{:?},{:?}\n",
                    rec.label, rec.seed, rec.converged, agent, rec.z_even[k], rec.z_odd[k]
                ));
            }
        }
        let path = dir.join("z_values.csv");
        write_atomic(&path, csv.as_bytes())?;
        written.push(path);
    }
    if let (Some(traj), Some(format)) = (&result.trajectory, result.provenance.config.trajectory) {
        let (path, bytes) = match format {
            TrajectoryFormat::Csv => (dir.join("trajectory.csv"), traj.to_csv().into_bytes()),
            TrajectoryFormat::Binary => (dir.join("trajectory.bin"), traj.to_binary()),
        };
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_result(path: &Path) -> Result<ScenarioResult, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// A fully recorded trajectory together with the config that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub config: SimConfig,
    /// `layers[t][i]`.
    pub layers: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    seed: u64,
    steps: usize,
    agents: usize,
    config: SimConfig,
}

impl TrajectoryFile {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# seed={}\n# config={}\nt,agent_id,opinion\n",
            self.config.seed,
            serde_json::to_string(&self.config).expect("configs serialize")
        );
        for (t, layer) in self.layers.iter().enumerate() {
            for (i, x) in layer.iter().enumerate() {
                out.push_str(&format!("{t},{i},{x:?}\n"));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, LabError> {
        let bad = |line: usize, msg: &str| LabError::Trajectory(format!("line {line}: {msg}"));
        let mut config = None;
        let mut layers: Vec<Vec<f64>> = Vec::new();
        let mut header_seen = false;
        for (no, line) in text.lines().enumerate() {
            let no = no + 1;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(json) = rest.trim().strip_prefix("config=") {
                    config = Some(serde_json::from_str(json).map_err(|e| bad(no, &e.to_string()))?);
                }
                continue;
            }
            if !header_seen {
                if line.trim() != "t,agent_id,opinion" {
                    return Err(bad(no, "expected header t,agent_id,opinion"));
                }
                header_seen = true;
                continue;
            }
            let mut fields = line.split(',');
            let mut next = || fields.next().ok_or_else(|| bad(no, "expected three fields"));
            let t: usize = next()?.trim().parse().map_err(|_| bad(no, "bad time"))?;
            let i: usize = next()?.trim().parse().map_err(|_| bad(no, "bad agent id"))?;
            let x: f64 = next()?.trim().parse().map_err(|_| bad(no, "bad opinion"))?;
            if t == layers.len() {
                layers.push(Vec::new());
            }
            if t + 1 != layers.len() || i != layers[t].len() {
                return Err(bad(no, "rows must be ordered by time, then agent"));
            }
            layers[t].push(x);
        }
        let config = config.ok_or_else(|| LabError::Trajectory("missing '# config=' line".into()))?;
        Self::checked(config, layers)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&BinaryHeader {
            seed: self.config.seed,
            steps: self.layers.len(),
            agents: self.layers.first().map_or(0, Vec::len),
            config: self.config.clone(),
        })
        .expect("headers serialize");
        let values: usize = self.layers.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(12 + header.len() + 8 * values);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for layer in &self.layers {
            for x in layer {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self, LabError> {
        let bad = |msg: &str| LabError::Trajectory(msg.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("not a DGTRAJ01 file"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = 12 + len;
        if bytes.len() < body {
            return Err(bad("truncated header"));
        }
        let header: BinaryHeader = serde_json::from_slice(&bytes[12..body]).map_err(|e| bad(&e.to_string()))?;
        let data = &bytes[body..];
        if data.len() != 8 * header.steps * header.agents {
            return Err(bad("payload size does not match header"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let layers = if header.agents == 0 {
            Vec::new()
        } else {
            values.chunks(header.agents).map(<[f64]>::to_vec).collect()
        };
        Self::checked(header.config, layers)
    }

    fn checked(config: SimConfig, layers: Vec<Vec<f64>>) -> Result<Self, LabError> {
        let n = config.graph.node_count();
        if layers.is_empty() || layers.iter().any(|l| l.len() != n) {
            return Err(LabError::Trajectory(format!("every layer must hold {n} opinions")));
        }
        Ok(TrajectoryFile { config, layers })
    }

    /// Reads either layout, chosen by the magic bytes.
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        if bytes.starts_with(MAGIC) {
            Self::from_binary(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|e| io_err(path, e))?;
            Self::from_csv(&text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use degroot_core::{GraphSpec, InitialDistribution, Noise, Record, UpdateRule};

    fn sample() -> TrajectoryFile {
        TrajectoryFile {
            config: SimConfig {
                graph: GraphSpec::Path { n: 3 },
                rule: UpdateRule::EpsDeGroot { eps: 0.1 },
                bots: vec![],
                distortion: Default::default(),
                init: InitialDistribution {
                    mu: 0.5,
                    noise: Noise::Uniform { half_width: 0.5 },
                    clip_range: None,
                },
                horizon: 1,
                seed: 3,
                record: Record::Full,
                stop_on_convergence: None,
            },
            layers: vec![vec![0.1, 0.2, 1.0 / 3.0], vec![0.4, 0.5, 0.6]],
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let traj = sample();
        let text = traj.to_csv();
        assert!(text.starts_with("# seed=3\n# config="));
        assert_eq!(TrajectoryFile::from_csv(&text).unwrap(), traj);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let traj = sample();
        let bytes = traj.to_binary();
        assert_eq!(&bytes[..8], b"DGTRAJ01");
        assert_eq!(TrajectoryFile::from_binary(&bytes).unwrap(), traj);
        assert!(TrajectoryFile::from_binary(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn csv_rejects_misordered_rows() {
        let text = sample().to_csv().replace("0,1,0.2", "0,2,0.2");
        assert!(TrajectoryFile::from_csv(&text).is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
    }
}
