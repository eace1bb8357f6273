//! Observation sets: generation, on-disk format and compatibility checks.
//!
//! A file is one JSON header line followed by the raw coefficient payload as
//! little-endian `f64` in `(h, k, i, j)` row-major order. The header carries
//! the first eight bytes of the payload's SHA-256 as a hex checksum.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsg::{forward_solve, project_initial, ForwardOptions};
use crate::error::{DsgError, Result};
use crate::field::{CoefficientField, FieldShape};
use crate::mesh::DistributionParams;
use crate::optimizer::Discretization;
use crate::problems::ProblemDefinition;

pub const SCHEMA_VERSION: u32 = 1;
pub const SOLVER_VERSION: &str = concat!("dsg-ident ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMetadata {
    pub problem: String,
    pub reference: [f64; 2],
    pub final_time: f64,
    pub nx: usize,
    pub nxi: usize,
    pub kx: usize,
    pub kxi: usize,
    pub solver_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    #[serde(flatten)]
    meta: ObservationMetadata,
    checksum: String,
}

/// Observed coefficients `u_D` with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub metadata: ObservationMetadata,
    pub coefficients: CoefficientField,
}

/// What a run expects of its data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSignature {
    pub problem: String,
    pub final_time: f64,
    pub nx: usize,
    pub nxi: usize,
    pub kx: usize,
    pub kxi: usize,
}

fn checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl ObservationSet {
    pub fn new(metadata: ObservationMetadata, coefficients: CoefficientField) -> Result<Self> {
        let set = Self {
            metadata,
            coefficients,
        };
        set.check_dimensions()?;
        Ok(set)
    }

    fn check_dimensions(&self) -> Result<()> {
        let m = &self.metadata;
        let s = self.coefficients.shape();
        let pairs = [
            ("N_x", m.nx, s.nx),
            ("N_Xi", m.nxi, s.nxi),
            ("K_X", m.kx, s.kx()),
            ("K_Xi", m.kxi, s.kxi()),
        ];
        for (name, meta, tensor) in pairs {
            if meta != tensor {
                return Err(DsgError::Data(format!(
                    "{name} is {meta} in the metadata but {tensor} in the tensor"
                )));
            }
        }
        if !(m.final_time >= 0.0) || !m.final_time.is_finite() {
            return Err(DsgError::Data(format!(
                "final time must be non-negative, got {}",
                m.final_time
            )));
        }
        Ok(())
    }

    pub fn signature(&self) -> RunSignature {
        let m = &self.metadata;
        RunSignature {
            problem: m.problem.clone(),
            final_time: m.final_time,
            nx: m.nx,
            nxi: m.nxi,
            kx: m.kx,
            kxi: m.kxi,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload: Vec<u8> = self
            .coefficients
            .to_hkij()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let header = Header {
            schema_version: SCHEMA_VERSION,
            meta: self.metadata.clone(),
            checksum: format!("{:016x}", checksum(&payload)),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| DsgError::Data(e.to_string()))?;
        out.push(b'\n');
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| DsgError::Data("missing header line".into()))?;
        let raw: serde_json::Value = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| DsgError::Data(format!("bad header: {e}")))?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if version != SCHEMA_VERSION {
            return Err(DsgError::SchemaVersion {
                expected: SCHEMA_VERSION,
                found: version,
            });
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| DsgError::Data(format!("bad header: {e}")))?;
        let payload = &bytes[nl + 1..];
        let expected = u64::from_str_radix(&header.checksum, 16)
            .map_err(|_| DsgError::Data(format!("bad checksum field '{}'", header.checksum)))?;
        let found = checksum(payload);
        if expected != found {
            return Err(DsgError::Checksum { expected, found });
        }
        let m = &header.meta;
        let shape = FieldShape::new(m.kx, m.kxi, m.nx, m.nxi);
        if payload.len() != 8 * shape.len() {
            return Err(DsgError::Data(format!(
                "payload holds {} values but N_x = {}, N_Xi = {}, K_X = {}, K_Xi = {} need {}",
                payload.len() / 8,
                m.nx,
                m.nxi,
                m.kx,
                m.kxi,
                shape.len()
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(header.meta, CoefficientField::from_hkij(shape, &values)?)
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("observations");
        let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Exact match of the discretization and problem; every mismatch is listed.
    pub fn validate_compatibility(&self, run: &RunSignature) -> Result<()> {
        let have = self.signature();
        let mut problems = Vec::new();
        if have.problem != run.problem {
            problems.push(format!(
                "problem: expected {}, found {}",
                run.problem, have.problem
            ));
        }
        if have.final_time != run.final_time {
            problems.push(format!(
                "T: expected {}, found {}",
                run.final_time, have.final_time
            ));
        }
        for (name, want, got) in [
            ("N_x", run.nx, have.nx),
            ("N_Xi", run.nxi, have.nxi),
            ("K_X", run.kx, have.kx),
            ("K_Xi", run.kxi, have.kxi),
        ] {
            if want != got {
                problems.push(format!("{name}: expected {want}, found {got}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DsgError::Data(format!(
                "observations do not match the run ({})",
                problems.join("; ")
            )))
        }
    }
}

/// Solves the forward problem at `reference` and keeps `u(T)`.
pub fn generate_observations(
    problem: &ProblemDefinition,
    disc: &Discretization,
    reference: DistributionParams,
) -> Result<ObservationSet> {
    let scheme = disc.scheme(problem.flux, reference)?;
    let u0 = project_initial(&scheme, &problem.initial);
    let opts = ForwardOptions {
        store_intermediate: false,
        ..disc.forward
    };
    let traj = forward_solve(&scheme, u0, &opts)?;
    let metadata = ObservationMetadata {
        problem: problem.kind.name().to_string(),
        reference: reference.as_array(),
        final_time: disc.forward.final_time,
        nx: disc.phys.num_cells,
        nxi: disc.num_elements,
        kx: disc.kx,
        kxi: disc.kxi,
        solver_version: SOLVER_VERSION.to_string(),
    };
    ObservationSet::new(metadata, traj.final_state().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Boundary, PhysicalMesh};
    use crate::problems::ProblemKind;
    use proptest::prelude::*;

    fn disc(t: f64) -> Discretization {
        Discretization {
            phys: PhysicalMesh::new(0.0, 1.0, 8, Boundary::Periodic).unwrap(),
            num_elements: 3,
            kx: 1,
            kxi: 2,
            forward: ForwardOptions::new(t),
        }
    }

    fn sample() -> ObservationSet {
        let p = ProblemKind::Burgers.definition();
        generate_observations(&p, &disc(0.01), DistributionParams::new(-1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(sample().to_bytes().unwrap(), sample().to_bytes().unwrap());
    }

    #[test]
    fn zero_time_observations_are_projection() {
        let p = ProblemKind::Burgers.definition();
        let d = disc(0.0);
        let reference = DistributionParams::new(-1.0, 1.0).unwrap();
        let set = generate_observations(&p, &d, reference).unwrap();
        let s = d.scheme(p.flux, reference).unwrap();
        assert_eq!(set.coefficients, project_initial(&s, &p.initial));
    }

    #[test]
    fn round_trip_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.bin");
        let set = sample();
        set.save(&path).unwrap();
        assert_eq!(ObservationSet::load(&path).unwrap(), set);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let bytes = sample().to_bytes().unwrap();
        let err = ObservationSet::from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, DsgError::Checksum { .. }));
    }

    #[test]
    fn schema_version_checked() {
        let bytes = sample().to_bytes().unwrap();
        let text =
            String::from_utf8_lossy(&bytes).replace("\"schema_version\":1", "\"schema_version\":7");
        let err = ObservationSet::from_bytes(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DsgError::SchemaVersion { found: 7, .. }));
    }

    #[test]
    fn dimension_mismatch_named() {
        let set = sample();
        let bytes = set.to_bytes().unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = String::from_utf8(bytes[..nl].to_vec())
            .unwrap()
            .replace("\"kxi\":2", "\"kxi\":1");
        let mut edited = header.into_bytes();
        edited.extend_from_slice(&bytes[nl..]);
        let err = ObservationSet::from_bytes(&edited).unwrap_err().to_string();
        assert!(err.contains("K_Xi"), "{err}");

        let mut meta = set.metadata.clone();
        meta.nx = 9;
        let err = ObservationSet::new(meta, set.coefficients.clone())
            .unwrap_err()
            .to_string();
        assert!(err.contains("N_x"), "{err}");
    }

    #[test]
    fn compatibility_checks() {
        let set = sample();
        let sig = set.signature();
        set.validate_compatibility(&sig).unwrap();
        let err = set
            .validate_compatibility(&RunSignature {
                kxi: 4,
                ..sig.clone()
            })
            .unwrap_err()
            .to_string();
        assert!(err.contains("K_Xi: expected 4, found 2"), "{err}");
        let err = set
            .validate_compatibility(&RunSignature {
                final_time: 0.02,
                ..sig.clone()
            })
            .unwrap_err()
            .to_string();
        assert!(err.contains("T:"), "{err}");
        let err = set
            .validate_compatibility(&RunSignature {
                problem: "advection-shock".into(),
                ..sig
            })
            .unwrap_err()
            .to_string();
        assert!(err.contains("problem"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_any_finite_tensor(values in proptest::collection::vec(
            prop_oneof![Just(-0.0f64), Just(0.0f64), -1e300f64..1e300, Just(f64::MIN_POSITIVE)], 12)) {
            let shape = FieldShape::new(1, 1, 3, 1);
            let field = CoefficientField::from_vec(shape, values).unwrap();
            let meta = ObservationMetadata {
                problem: "burgers".into(),
                reference: [-1.0, 1.0],
                final_time: 0.05,
                nx: 3, nxi: 1, kx: 1, kxi: 1,
                solver_version: SOLVER_VERSION.into(),
            };
            let set = ObservationSet::new(meta, field).unwrap();
            let back = ObservationSet::from_bytes(&set.to_bytes().unwrap()).unwrap();
            let a: Vec<u64> = set.coefficients.as_slice().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.coefficients.as_slice().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.metadata, set.metadata);
        }
    }
}
