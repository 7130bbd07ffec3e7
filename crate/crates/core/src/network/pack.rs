use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Cell-culture submodel parameters, in table order.
pub const CELLCULTURE_PARAMS: &[&str] = &[
    "mu_max", "mu_death_max", "K_Glc", "K_Gal", "K_Urd", "K_Asn", "KI_Amm", "KI_Urd", "Kd_Amm",
    "Kd_Urd", "Y_mAb_X", "m_mAb", "Y_X_Glc", "Y_X_Gln", "Y_X_Lac", "Y_X_Amm", "Y_X_Glu",
    "Y_X_Gal", "Y_X_Urd", "Y_X_Asn", "m_Glc", "m_Lac", "K_C_Gal", "f_Gal", "Lac_max1",
    "Lac_max2", "Y_Gln_Amm", "Y_Asn_Asp", "Y_Amm_Urd",
];

/// NSD-synthesis submodel parameters, in table order.
pub const NSD_PARAMS: &[&str] = &[
    "V_max_1", "V_max_2", "V_max_2b", "V_max_3", "V_max_4", "V_max_5", "V_max_6", "V_max_7",
    "V_max_1Urd", "V_max_2Urd", "V_max_4Urd", "V_max_6Urd", "V_max_7sink", "V_max_1sink",
    "V_max_6sink", "V_max_6Gal", "f_Gln", "K_M1Gln", "K_M1sink", "KI_1sink", "K_M2Glc",
    "K_M2bUDPGal", "KI_2A", "KI_2B", "KI_2C", "KI_2D", "K_M3Glc", "K_M4UDPGlcNAc",
    "K_M5UDPGlcNAc", "KI_5", "K_M6UDPGlc", "KI_6A", "KI_6B", "KI_6C", "K_M6sink", "KI_6sink",
    "K_M7GDPMan", "KI_7", "K_M7sink", "K_M1Urd", "K_M2Urd", "K_M4Urd", "K_M6Urd", "K_M6Gal",
    "KI_6D", "KI_6E", "KI_6F", "K_TP_UDP_Glc", "K_TP_UDP_GlcNAc", "K_TP_UDP_Gal",
    "K_TP_UDP_GalNAc", "K_TP_GDP_Man", "K_TP_GDP_Fuc", "K_TP_CMP_Neu5Ac",
];

/// Golgi submodel parameters (dissociation constants), in table order.
pub const GOLGI_PARAMS: &[&str] = &[
    "Kd_OS1_ManI", "Kd_OS2_ManI", "Kd_OS3_ManI", "Kd_OS4_ManI", "Kd_OS6_ManII", "Kd_OS7_ManII",
    "Kd_OS5_GnTI", "Kd_OS9_GnTII", "Kd_OS6_FucT", "Kd_OS9_GalT", "Kd_OS12_GalT", "Kd_OS13_SiaT",
    "Kd_Mn_GnTI", "Kd_Mn_GnTII", "Kd_Mn_GalT", "Kd_UDPGlcNAc_GnTI", "Kd_UDPGlcNAc_GnTII",
    "Kd_GDPFuc_FucT", "Kd_UDPGal_GalT", "Kd_CMPNeu5Ac_SiaT",
];

const REQUIRED_SCALARS: &[&str] = &[
    "MW_mAb_g_per_mol", "mAb_intra_uM", "nsd_golgi_factor", "UDP_golgi_mM", "GDP_golgi_mM",
    "CMP_golgi_mM", "V_cell_L", "V_golgi_L", "OS1_inlet_uM", "Mn_mM", "pKa_golgi", "NA_golgi_mM",
    "pH_opt_golgi", "K_regulator_mM", "KI_Lac_mM", "Y_X_Asp", "Y_Asp_Asn", "Y_Lac_Glc",
];

const ENZYME_NAMES: &[&str] = &["ManI", "ManII", "GnTI", "GnTII", "FucT", "GalT", "SiaT"];

pub const NSD_SPECIES: &[&str] = &[
    "GDP_Man", "GDP_Fuc", "UDP_Gal", "UDP_Glc", "UDP_GalNAc", "UDP_GlcNAc", "CMP_Neu5Ac",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamBlock {
    Cellculture,
    Nsd,
    Golgi,
}

#[derive(Debug, Clone, Deserialize)]
struct PackEntry {
    name: String,
    block: ParamBlock,
    ln_value: f64,
    #[serde(default)]
    ln_lb: Option<f64>,
    #[serde(default)]
    ln_ub: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvValue {
    pub value: f64,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnzymeConstants {
    #[serde(rename = "E_max_mM")]
    pub e_max_mm: f64,
    pub z_max: f64,
    pub sigma: f64,
    pub kf_max_per_min: f64,
    pub omega_f: f64,
    #[serde(rename = "Kd_nuc_mM")]
    pub kd_nuc_mm: f64,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NsdSinkConstants {
    pub v_hcp_lipid_mmol_per_cell: f64,
    pub v_precursor_mmol_per_pg: f64,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constants {
    pub scalars: HashMap<String, ProvValue>,
    pub enzymes: HashMap<String, EnzymeConstants>,
    pub nsd_sinks: HashMap<String, NsdSinkConstants>,
}

impl Constants {
    pub fn scalar(&self, name: &str) -> f64 {
        self.scalars[name].value
    }

    pub fn enzyme(&self, name: &str) -> &EnzymeConstants {
        &self.enzymes[name]
    }
}

#[derive(Debug, Clone, Deserialize)]
struct PackFile {
    schema_version: u32,
    name: String,
    parameters: Vec<PackEntry>,
    constants: Constants,
}

/// Block-diagonal prior covariance over the log-space parameters.
#[derive(Debug, Clone)]
pub struct PriorCovariance {
    /// Variance per parameter, aligned to the pack's name order.
    pub diag: Vec<f64>,
    /// Full per-block matrices for the MAP penalty, keyed by block.
    pub blocks: HashMap<ParamBlock, (Vec<String>, DMatrix<f64>)>,
}

#[derive(Debug, Clone, Deserialize)]
struct CovBlockFile {
    names: Vec<String>,
    #[serde(default)]
    variances: Option<Vec<f64>>,
    #[serde(default)]
    cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
struct CovFile {
    schema_version: u32,
    blocks: HashMap<String, CovBlockFile>,
}

/// Named log-space parameter vector plus bounds, prior, and fixed constants.
#[derive(Debug, Clone)]
pub struct ParameterPack {
    pub name: String,
    pub names: Vec<String>,
    pub blocks: Vec<ParamBlock>,
    pub ln_p: Vec<f64>,
    pub ln_lb: Vec<f64>,
    pub ln_ub: Vec<f64>,
    /// Prior mean for MAP estimation; defaults to the pack's own values.
    pub prior_mean: Vec<f64>,
    pub prior: Option<PriorCovariance>,
    pub constants: Constants,
    index: HashMap<String, usize>,
    /// Parameters sitting exactly on a bound after loading.
    pub at_bound: Vec<String>,
    pub checksum: String,
}

impl ParameterPack {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Pack(format!("unresolved symbol {name}")))
    }

    pub fn ln_value(&self, name: &str) -> Result<f64> {
        Ok(self.ln_p[self.index_of(name)?])
    }

    pub fn natural(&self, name: &str) -> Result<f64> {
        Ok(self.ln_value(name)?.exp())
    }

    /// Replace a log-space value (used by the estimator when moving through
    /// parameter space). Bounds are not enforced here; the NLP owns them.
    pub fn set_ln(&mut self, name: &str, v: f64) -> Result<()> {
        let i = self.index_of(name)?;
        self.ln_p[i] = v;
        Ok(())
    }

    pub fn with_ln_values(&self, names: &[String], values: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        for (n, v) in names.iter().zip(values) {
            out.set_ln(n, *v)?;
        }
        Ok(out)
    }

    /// p_i = exp(ln_p_i) for every entry.
    pub fn to_natural(&self) -> NaturalVector {
        NaturalVector {
            names: self.names.clone(),
            values: self.ln_p.iter().map(|v| v.exp()).collect(),
        }
    }

    pub fn block_of(&self, name: &str) -> Result<ParamBlock> {
        Ok(self.blocks[self.index_of(name)?])
    }

    fn validate(&self) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            if !(self.ln_lb[i] <= self.ln_p[i] && self.ln_p[i] <= self.ln_ub[i]) {
                return Err(Error::Pack(format!(
                    "parameter {name} violates bounds: {} not in [{}, {}]",
                    self.ln_p[i], self.ln_lb[i], self.ln_ub[i]
                )));
            }
        }
        for req in CELLCULTURE_PARAMS.iter().chain(NSD_PARAMS).chain(GOLGI_PARAMS) {
            if !self.index.contains_key(*req) {
                return Err(Error::Pack(format!("unresolved symbol {req}")));
            }
        }
        for s in REQUIRED_SCALARS {
            let v = self
                .constants
                .scalars
                .get(*s)
                .ok_or_else(|| Error::Pack(format!("unresolved symbol {s}")))?;
            if !(v.value > 0.0) {
                return Err(Error::Pack(format!("fixed constant {s} must be > 0")));
            }
        }
        for e in ENZYME_NAMES {
            let enz = self
                .constants
                .enzymes
                .get(*e)
                .ok_or_else(|| Error::Pack(format!("missing enzyme constants for {e}")))?;
            if enz.sigma <= 0.0 {
                return Err(Error::Pack(format!("enzyme {e}: sigma must be > 0")));
            }
            if enz.e_max_mm < 0.0 || enz.kf_max_per_min <= 0.0 || enz.omega_f <= 0.0 {
                return Err(Error::Pack(format!("enzyme {e}: invalid kinetic constants")));
            }
        }
        for s in NSD_SPECIES {
            let snk = self
                .constants
                .nsd_sinks
                .get(*s)
                .ok_or_else(|| Error::Pack(format!("missing sink stoichiometry for {s}")))?;
            if snk.v_hcp_lipid_mmol_per_cell < 0.0 || snk.v_precursor_mmol_per_pg < 0.0 {
                return Err(Error::Pack(format!("sink stoichiometry for {s} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Named natural-space parameter vector.
#[derive(Debug, Clone)]
pub struct NaturalVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl NaturalVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(hex::encode(h.finalize()))
}

/// Load and validate a parameter pack. If a `prior_cov.json` file sits next to
/// the pack it is attached automatically: the covariance must be symmetric
/// positive definite per block, and missing bounds default to
/// prior mean +/- 3 sigma in log-space.
pub fn load_parameter_pack(path: &Path) -> Result<ParameterPack> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Pack(format!("cannot read {}: {e}", path.display())))?;
    let file: PackFile =
        serde_json::from_str(&text).map_err(|e| Error::Pack(format!("{}: {e}", path.display())))?;
    if file.schema_version != 1 {
        return Err(Error::Pack(format!(
            "unsupported pack schema version {}",
            file.schema_version
        )));
    }

    let n = file.parameters.len();
    let mut names = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(n);
    let mut ln_p = Vec::with_capacity(n);
    let mut index = HashMap::with_capacity(n);
    let mut lb_file = Vec::with_capacity(n);
    let mut ub_file = Vec::with_capacity(n);
    for (i, e) in file.parameters.iter().enumerate() {
        if index.insert(e.name.clone(), i).is_some() {
            return Err(Error::Pack(format!("duplicate parameter {}", e.name)));
        }
        names.push(e.name.clone());
        blocks.push(e.block);
        ln_p.push(e.ln_value);
        lb_file.push(e.ln_lb);
        ub_file.push(e.ln_ub);
    }

    let prior = load_prior(path, &names, &index)?;

    let mut ln_lb = Vec::with_capacity(n);
    let mut ln_ub = Vec::with_capacity(n);
    for i in 0..n {
        let sigma = prior
            .as_ref()
            .map(|p| p.diag[i].sqrt())
            .unwrap_or(f64::INFINITY);
        ln_lb.push(lb_file[i].unwrap_or(ln_p[i] - 3.0 * sigma));
        ln_ub.push(ub_file[i].unwrap_or(ln_p[i] + 3.0 * sigma));
    }

    let mut at_bound = Vec::new();
    for i in 0..n {
        if ln_p[i] == ln_lb[i] || ln_p[i] == ln_ub[i] {
            at_bound.push(format!("{} at bound", names[i]));
        }
    }

    let pack = ParameterPack {
        name: file.name,
        prior_mean: ln_p.clone(),
        names,
        blocks,
        ln_p,
        ln_lb,
        ln_ub,
        prior,
        constants: file.constants,
        index,
        at_bound,
        checksum: sha256_file(path)?,
    };
    pack.validate()?;
    Ok(pack)
}

fn load_prior(
    pack_path: &Path,
    names: &[String],
    index: &HashMap<String, usize>,
) -> Result<Option<PriorCovariance>> {
    let cov_path = pack_path
        .parent()
        .map(|d| d.join("prior_cov.json"))
        .filter(|p| p.exists());
    let Some(cov_path) = cov_path else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(&cov_path)?;
    let file: CovFile = serde_json::from_str(&text)
        .map_err(|e| Error::Pack(format!("{}: {e}", cov_path.display())))?;
    if file.schema_version != 1 {
        return Err(Error::Pack("unsupported covariance schema version".into()));
    }

    let mut diag = vec![f64::NAN; names.len()];
    let mut blocks = HashMap::new();
    for (bname, b) in &file.blocks {
        let block = match bname.as_str() {
            "cellculture" => ParamBlock::Cellculture,
            "nsd" => ParamBlock::Nsd,
            "golgi" => ParamBlock::Golgi,
            other => return Err(Error::Pack(format!("unknown covariance block {other}"))),
        };
        let m = b.names.len();
        let mat = if let Some(cov) = &b.cov {
            let mut mat = DMatrix::zeros(m, m);
            for (i, row) in cov.iter().enumerate() {
                if row.len() != m {
                    return Err(Error::Pack("covariance block is not square".into()));
                }
                for (j, v) in row.iter().enumerate() {
                    mat[(i, j)] = *v;
                }
            }
            mat
        } else if let Some(vars) = &b.variances {
            DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(vars))
        } else {
            return Err(Error::Pack(format!("covariance block {bname} has no data")));
        };

        // symmetry + positive definiteness
        for i in 0..m {
            for j in 0..i {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * mat[(i, i)].abs().max(1.0) {
                    return Err(Error::Pack(format!(
                        "covariance block {bname} is not symmetric"
                    )));
                }
            }
        }
        if nalgebra::Cholesky::new(mat.clone()).is_none() {
            return Err(Error::Pack(format!(
                "covariance block {bname} is not positive definite"
            )));
        }

        for (i, pname) in b.names.iter().enumerate() {
            let gi = *index
                .get(pname)
                .ok_or_else(|| Error::Pack(format!("covariance names unknown symbol {pname}")))?;
            diag[gi] = mat[(i, i)];
        }
        blocks.insert(block, (b.names.clone(), mat));
    }
    if diag.iter().any(|v| v.is_nan()) {
        return Err(Error::Pack(
            "prior covariance does not cover every pack parameter".into(),
        ));
    }
    Ok(Some(PriorCovariance { diag, blocks }))
}
