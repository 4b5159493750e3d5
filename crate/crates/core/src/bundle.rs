//! Problem bundles: a directory with `manifest.json` and CSV matrices.
//!
//! ```text
//! manifest.json   dimensions, lambda and generation metadata
//! phi.csv         n x p
//! c.csv           n
//! d.csv           m x p
//! theta_star.csv  p   (optional, together with epsilon.csv)
//! epsilon.csv     n   (optional)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionaries::DictionarySpec;
use crate::error::{Error, Result};
use crate::linalg::{linf_norm, Matrix, Vector};
use crate::matrix_io::{read_matrix_shaped, read_vector_len, write_matrix, write_vector};
use crate::problem::{generate_instance, DictionaryProblem, GroundTruth, InstanceSpec};
use crate::simplify::SimplifiedForm;

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// Tolerance on `c = Phi theta* + epsilon`, relative to `max(1, |c|_inf)`.
pub const CONSTRUCTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format_version: u32,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub lambda: f64,
    #[serde(default)]
    pub dictionary: Option<DictionarySpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub has_ground_truth: bool,
    /// Full generation recipe, when the bundle was generated.
    #[serde(default)]
    pub spec: Option<InstanceSpec>,
    /// SHA-256 of the recipe's JSON form.
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemBundle {
    pub manifest: BundleManifest,
    pub problem: DictionaryProblem,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ProblemBundle {
    /// Wraps a problem that has no generation recipe.
    pub fn from_problem(problem: DictionaryProblem) -> Self {
        let gt = problem.ground_truth.as_ref();
        let manifest = BundleManifest {
            format_version: FORMAT_VERSION,
            n: problem.n(),
            p: problem.p(),
            m: problem.m(),
            lambda: problem.lambda,
            dictionary: None,
            seed: None,
            noise_sigma: gt.map(|g| g.noise_sigma),
            has_ground_truth: gt.is_some(),
            spec: None,
            config_hash: None,
        };
        ProblemBundle { manifest, problem }
    }

    pub fn generate(spec: &InstanceSpec) -> Result<Self> {
        let problem = generate_instance(spec)?;
        let mut bundle = Self::from_problem(problem);
        bundle.manifest.dictionary = Some(spec.dictionary.clone());
        bundle.manifest.seed = Some(spec.seed);
        bundle.manifest.noise_sigma = Some(spec.noise_sigma);
        bundle.manifest.config_hash = Some(sha256_hex(serde_json::to_string(spec)?.as_bytes()));
        bundle.manifest.spec = Some(spec.clone());
        Ok(bundle)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let pr = &self.problem;
        write_matrix(&dir.join("phi.csv"), &pr.phi)?;
        write_vector(&dir.join("c.csv"), &pr.c)?;
        write_matrix(&dir.join("d.csv"), &pr.d)?;
        if let Some(gt) = &pr.ground_truth {
            write_vector(&dir.join("theta_star.csv"), &gt.theta_star)?;
            write_vector(&dir.join("epsilon.csv"), &gt.epsilon)?;
        }
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let manifest: BundleManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", MANIFEST)))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported bundle format_version {}", manifest.format_version)));
        }
        let (n, p, m) = (manifest.n, manifest.p, manifest.m);
        let phi = read_matrix_shaped(&dir.join("phi.csv"), n, p)?;
        let c = read_vector_len(&dir.join("c.csv"), n)?;
        let d = read_matrix_shaped(&dir.join("d.csv"), m, p)?;
        let theta_path = dir.join("theta_star.csv");
        let eps_path = dir.join("epsilon.csv");
        let ground_truth = match (theta_path.exists(), eps_path.exists()) {
            (true, true) => {
                let theta_star = read_vector_len(&theta_path, p)?;
                let epsilon = read_vector_len(&eps_path, n)?;
                check_construction(&phi, &c, &theta_star, &epsilon)?;
                Some(GroundTruth { theta_star, epsilon, noise_sigma: manifest.noise_sigma.unwrap_or(0.0) })
            }
            (false, false) => None,
            _ => {
                return Err(Error::Parse("theta_star.csv and epsilon.csv must be given together".into()));
            }
        };
        if manifest.has_ground_truth != ground_truth.is_some() {
            return Err(Error::Parse("manifest has_ground_truth disagrees with the files present".into()));
        }
        let problem = DictionaryProblem { phi, c, d, lambda: manifest.lambda, ground_truth };
        problem.validate()?;
        Ok(ProblemBundle { manifest, problem })
    }
}

fn check_construction(phi: &Matrix, c: &Vector, theta_star: &Vector, epsilon: &Vector) -> Result<()> {
    let gap = linf_norm(&(phi * theta_star + epsilon - c));
    let tol = CONSTRUCTION_TOL * linf_norm(c).max(1.0);
    if gap > tol {
        return Err(Error::InvalidArgument(format!(
            "c differs from Phi theta* + epsilon by {gap:e} (tolerance {tol:e})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedManifest {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub rank_r: usize,
    pub free_dim: usize,
    pub sigma_max_z: f64,
    pub sigma_min_z: f64,
    pub kappa: f64,
    pub sigma_min_ata: Option<f64>,
    /// Files written; matrices with a zero dimension are omitted.
    pub files: Vec<String>,
}

/// Writes every matrix of the reduction plus a manifest into `dir`.
pub fn dump_simplified(sf: &SimplifiedForm, dir: &Path) -> Result<SimplifiedManifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let matrices: [(&str, &Matrix); 7] = [
        ("v_alpha.csv", &sf.v_alpha),
        ("v_beta.csv", &sf.v_beta),
        ("z.csv", &sf.z),
        ("z_pinv.csv", &sf.z_pinv),
        ("a.csv", &sf.a),
        ("b.csv", &sf.b),
        ("x.csv", &sf.x),
    ];
    for (name, mat) in matrices {
        if mat.nrows() > 0 && mat.ncols() > 0 {
            write_matrix(&dir.join(name), mat)?;
            files.push(name.to_string());
        }
    }
    for (name, vec) in [("sigma.csv", &sf.sigma), ("y.csv", &sf.y)] {
        write_vector(&dir.join(name), vec)?;
        files.push(name.to_string());
    }
    let manifest = SimplifiedManifest {
        n: sf.n(),
        p: sf.p(),
        m: sf.m(),
        rank_r: sf.rank_r,
        free_dim: sf.free_dim(),
        sigma_max_z: sf.sigma_max_z(),
        sigma_min_z: sf.sigma_min_z(),
        kappa: sf.kappa(),
        sigma_min_ata: sf.sigma_min_gram(),
        files,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Design, LambdaChoice};
    use crate::simplify::simplify;

    fn spec() -> InstanceSpec {
        InstanceSpec {
            dictionary: DictionarySpec::Difference1d { p: 9 },
            n: 7,
            sparsity: Some(2),
            noise_sigma: 0.05,
            design: Design::Gaussian,
            lambda: LambdaChoice::default(),
            c_mult: 2.0,
            seed: 42,
        }
    }

    fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        let bundle = ProblemBundle::generate(&spec()).unwrap();
        bundle.write(&a).unwrap();
        let loaded = ProblemBundle::read(&a).unwrap();
        assert_eq!(loaded, bundle);
        loaded.write(&b).unwrap();
        assert_eq!(dir_bytes(&a), dir_bytes(&b));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let bundle = ProblemBundle::generate(&spec()).unwrap();
        bundle.write(tmp.path()).unwrap();
        let mut m = bundle.manifest.clone();
        m.n = 8;
        fs::write(tmp.path().join(MANIFEST), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(ProblemBundle::read(tmp.path()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn inconsistent_ground_truth_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let mut bundle = ProblemBundle::generate(&spec()).unwrap();
        bundle.problem.c[0] += 1e-6;
        bundle.write(tmp.path()).unwrap();
        assert!(ProblemBundle::read(tmp.path()).is_err());
    }

    #[test]
    fn dump_lists_files() {
        let tmp = tempfile::tempdir().unwrap();
        let bundle = ProblemBundle::generate(&spec()).unwrap();
        let sf = simplify(&bundle.problem).unwrap();
        let man = dump_simplified(&sf, tmp.path()).unwrap();
        assert_eq!(man.rank_r, 8);
        assert_eq!(man.free_dim, 1);
        for f in &man.files {
            assert!(tmp.path().join(f).exists());
        }
        let x = crate::matrix_io::read_matrix(&tmp.path().join("x.csv")).unwrap();
        assert_eq!(x, sf.x);
    }
}
