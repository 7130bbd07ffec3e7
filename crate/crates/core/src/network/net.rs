use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::{Error, Result};

use super::pack::{sha256_file, NSD_SPECIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum KineticClass {
    MichaelisMenten,
    SeqBiBi,
    RandBiBi,
}

#[derive(Debug, Clone, Deserialize)]
struct SpeciesFile {
    id: String,
    label: String,
}

#[derive(Debug, Clone, Deserialize)]
struct ReactionFile {
    id: String,
    enzyme: String,
    class: KineticClass,
    reactant: String,
    product: String,
    donor: Option<String>,
    nucleotide: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct BindingFile {
    os: String,
    kd: String,
}

#[derive(Debug, Clone, Deserialize)]
struct EnzymeFile {
    binding: Vec<BindingFile>,
    #[serde(default)]
    kd_mn: Option<String>,
    #[serde(default)]
    kd_nsd: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct GolgiFile {
    schema_version: u32,
    kind: String,
    inlet: String,
    species: Vec<SpeciesFile>,
    reactions: Vec<ReactionFile>,
    enzymes: HashMap<String, EnzymeFile>,
    groups: HashMap<String, Vec<String>>,
}

/// One Golgi glycosylation reaction, resolved to species indices.
#[derive(Debug, Clone)]
pub struct GolgiReaction {
    pub id: String,
    pub enzyme: String,
    pub class: KineticClass,
    pub reactant: usize,
    pub product: usize,
    /// Index into the NSD species list, when the reaction consumes a donor.
    pub donor: Option<usize>,
    /// Nucleotide byproduct tag ("UDP" | "GDP" | "CMP").
    pub nucleotide: Option<String>,
}

/// Species-to-group mapping for the measured glycoform fractions.
#[derive(Debug, Clone)]
pub struct GlycoformGroups {
    pub names: Vec<String>,
    /// For each OS species index, the group it belongs to (or None).
    pub membership: Vec<Option<usize>>,
}

impl GlycoformGroups {
    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// The Golgi reaction network: 33 oligosaccharides, 43 enzyme-catalyzed steps.
#[derive(Debug, Clone)]
pub struct GolgiNetwork {
    pub species_ids: Vec<String>,
    pub species_labels: Vec<String>,
    pub inlet: usize,
    pub reactions: Vec<GolgiReaction>,
    /// Per-enzyme competing-species set: (species index, Kd symbol).
    pub binding_sets: HashMap<String, Vec<(usize, String)>>,
    /// Kd symbol for the reactant/product of each reaction (from binding set).
    pub kd_mn: HashMap<String, String>,
    pub kd_nsd: HashMap<String, String>,
    pub groups: GlycoformGroups,
    /// Cumulative donor content v_{i,j}: number of NSD_i molecules
    /// incorporated into one molecule of OS_j (row = NSD, col = OS).
    pub donor_content: Vec<Vec<f64>>,
    pub n_os: usize,
    pub n_reactions: usize,
    pub checksum: String,
}

/// Structural findings from `validate`; an empty report means a clean network.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub dangling_species: Vec<String>,
    pub duplicate_reactions: Vec<String>,
    pub unreachable_species: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.dangling_species.is_empty()
            && self.duplicate_reactions.is_empty()
            && self.unreachable_species.is_empty()
    }
}

impl GolgiNetwork {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Network(format!("cannot read {}: {e}", path.display())))?;
        let file: GolgiFile = serde_json::from_str(&text)
            .map_err(|e| Error::Network(format!("{}: {e}", path.display())))?;
        if file.schema_version != 1 || file.kind != "golgi" {
            return Err(Error::Network("unsupported golgi network file".into()));
        }
        let checksum = sha256_file(path)?;
        Self::from_file(file, checksum)
    }

    fn from_file(file: GolgiFile, checksum: String) -> Result<Self> {
        let n_os = file.species.len();
        let mut sp_index = HashMap::new();
        let mut species_ids = Vec::with_capacity(n_os);
        let mut species_labels = Vec::with_capacity(n_os);
        for (i, s) in file.species.iter().enumerate() {
            if sp_index.insert(s.id.clone(), i).is_some() {
                return Err(Error::Network(format!("duplicate species {}", s.id)));
            }
            species_ids.push(s.id.clone());
            species_labels.push(s.label.clone());
        }
        let resolve = |id: &str| -> Result<usize> {
            sp_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Network(format!("reaction references unknown species {id}")))
        };
        let nsd_index = |id: &str| -> Result<usize> {
            NSD_SPECIES
                .iter()
                .position(|s| *s == id)
                .ok_or_else(|| Error::Network(format!("unknown NSD donor {id}")))
        };

        let mut reactions = Vec::with_capacity(file.reactions.len());
        for r in &file.reactions {
            reactions.push(GolgiReaction {
                id: r.id.clone(),
                enzyme: r.enzyme.clone(),
                class: r.class,
                reactant: resolve(&r.reactant)?,
                product: resolve(&r.product)?,
                donor: r.donor.as_deref().map(nsd_index).transpose()?,
                nucleotide: r.nucleotide.clone(),
            });
            match r.class {
                KineticClass::MichaelisMenten => {}
                KineticClass::SeqBiBi | KineticClass::RandBiBi => {
                    if r.donor.is_none() || r.nucleotide.is_none() {
                        return Err(Error::Network(format!(
                            "reaction {} of class {:?} needs donor and nucleotide",
                            r.id, r.class
                        )));
                    }
                }
            }
        }

        let mut binding_sets = HashMap::new();
        let mut kd_mn = HashMap::new();
        let mut kd_nsd = HashMap::new();
        for (ename, e) in &file.enzymes {
            let mut set = Vec::with_capacity(e.binding.len());
            for b in &e.binding {
                set.push((resolve(&b.os)?, b.kd.clone()));
            }
            binding_sets.insert(ename.clone(), set);
            if let Some(k) = &e.kd_mn {
                kd_mn.insert(ename.clone(), k.clone());
            }
            if let Some(k) = &e.kd_nsd {
                kd_nsd.insert(ename.clone(), k.clone());
            }
        }
        for r in &reactions {
            let set = binding_sets
                .get(&r.enzyme)
                .ok_or_else(|| Error::Network(format!("reaction {} cites unknown enzyme {}", r.id, r.enzyme)))?;
            for sp in [r.reactant, r.product] {
                if !set.iter().any(|(i, _)| *i == sp) {
                    return Err(Error::Network(format!(
                        "species {} of reaction {} missing from {} binding set",
                        species_ids[sp], r.id, r.enzyme
                    )));
                }
            }
        }

        let mut group_names = Vec::new();
        let mut membership = vec![None; n_os];
        let mut order: Vec<_> = file.groups.keys().cloned().collect();
        order.sort();
        for g in order {
            let gi = group_names.len();
            for id in &file.groups[&g] {
                let i = resolve(id)?;
                if membership[i].is_some() {
                    return Err(Error::Network(format!("species {id} in two groups")));
                }
                membership[i] = Some(gi);
            }
            group_names.push(g);
        }

        let inlet = resolve(&file.inlet)?;
        let donor_content = propagate_donor_content(n_os, inlet, &reactions)?;

        Ok(GolgiNetwork {
            species_ids,
            species_labels,
            inlet,
            n_reactions: reactions.len(),
            reactions,
            binding_sets,
            kd_mn,
            kd_nsd,
            groups: GlycoformGroups {
                names: group_names,
                membership,
            },
            donor_content,
            n_os,
            checksum,
        })
    }

    /// Structural validation: dangling species, duplicate reactions, and
    /// reachability from the inlet species.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();

        let mut touched = vec![false; self.n_os];
        for r in &self.reactions {
            touched[r.reactant] = true;
            touched[r.product] = true;
        }
        for (i, t) in touched.iter().enumerate() {
            if !t && i != self.inlet {
                report.dangling_species.push(self.species_ids[i].clone());
            }
        }

        let mut seen = HashMap::new();
        for r in &self.reactions {
            if let Some(prev) = seen.insert((r.enzyme.clone(), r.reactant, r.product), r.id.clone())
            {
                report
                    .duplicate_reactions
                    .push(format!("{} duplicates {}", r.id, prev));
            }
        }

        let mut reach = vec![false; self.n_os];
        reach[self.inlet] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for r in &self.reactions {
                if reach[r.reactant] && !reach[r.product] {
                    reach[r.product] = true;
                    changed = true;
                }
            }
        }
        for (i, r) in reach.iter().enumerate() {
            if !r {
                report.unreachable_species.push(self.species_ids[i].clone());
            }
        }
        report
    }
}

/// Walk the network from the inlet accumulating donor incorporation counts.
/// Every path to a species must agree, otherwise the transcription is bad.
fn propagate_donor_content(
    n_os: usize,
    inlet: usize,
    reactions: &[GolgiReaction],
) -> Result<Vec<Vec<f64>>> {
    let n_nsd = NSD_SPECIES.len();
    let mut content: Vec<Option<Vec<f64>>> = vec![None; n_os];
    content[inlet] = Some(vec![0.0; n_nsd]);
    let mut changed = true;
    while changed {
        changed = false;
        for r in reactions {
            let Some(src) = content[r.reactant].clone() else {
                continue;
            };
            let mut dst = src;
            if let Some(d) = r.donor {
                dst[d] += 1.0;
            }
            match &content[r.product] {
                None => {
                    content[r.product] = Some(dst);
                    changed = true;
                }
                Some(existing) => {
                    if existing != &dst {
                        return Err(Error::Network(format!(
                            "inconsistent donor content for species index {} via {}",
                            r.product, r.id
                        )));
                    }
                }
            }
        }
    }
    let mut out = vec![vec![0.0; n_os]; n_nsd];
    for (j, c) in content.iter().enumerate() {
        if let Some(c) = c {
            for (i, v) in c.iter().enumerate() {
                out[i][j] = *v;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
struct NsdFile {
    schema_version: u32,
    kind: String,
    species: Vec<String>,
    rates: Vec<String>,
    stoichiometry: HashMap<String, HashMap<String, f64>>,
}

/// Named NSD reaction-rate slots, fixed by the synthesis-pathway rate laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsdRate {
    R1,
    R1Sink,
    R2,
    R2b,
    R3,
    R4,
    R5,
    R6,
    R6Sink,
    R6Gal,
    R7,
    R7Sink,
    R1Urd,
    R2Urd,
    R4Urd,
    R6Urd,
}

pub const NSD_RATE_NAMES: &[(&str, NsdRate)] = &[
    ("r1", NsdRate::R1),
    ("r1sink", NsdRate::R1Sink),
    ("r2", NsdRate::R2),
    ("r2b", NsdRate::R2b),
    ("r3", NsdRate::R3),
    ("r4", NsdRate::R4),
    ("r5", NsdRate::R5),
    ("r6", NsdRate::R6),
    ("r6sink", NsdRate::R6Sink),
    ("r6Gal", NsdRate::R6Gal),
    ("r7", NsdRate::R7),
    ("r7sink", NsdRate::R7Sink),
    ("r1Urd", NsdRate::R1Urd),
    ("r2Urd", NsdRate::R2Urd),
    ("r4Urd", NsdRate::R4Urd),
    ("r6Urd", NsdRate::R6Urd),
];

/// The NSD synthesis network: which rate feeds which donor pool.
#[derive(Debug, Clone)]
pub struct NsdNetwork {
    pub species: Vec<String>,
    pub rate_names: Vec<String>,
    /// Stoichiometric matrix, row = NSD species, column = rate slot.
    pub stoich: Vec<Vec<f64>>,
    pub n_nsd: usize,
    pub n_rates: usize,
    pub checksum: String,
}

impl NsdNetwork {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Network(format!("cannot read {}: {e}", path.display())))?;
        let file: NsdFile = serde_json::from_str(&text)
            .map_err(|e| Error::Network(format!("{}: {e}", path.display())))?;
        if file.schema_version != 1 || file.kind != "nsd" {
            return Err(Error::Network("unsupported nsd network file".into()));
        }
        if file.species != NSD_SPECIES {
            return Err(Error::Network(
                "nsd network species must match the seven canonical donors".into(),
            ));
        }
        for (name, _) in NSD_RATE_NAMES {
            if !file.rates.iter().any(|r| r == name) {
                return Err(Error::Network(format!("nsd network missing rate {name}")));
            }
        }
        let n_nsd = file.species.len();
        let n_rates = file.rates.len();
        let mut stoich = vec![vec![0.0; n_rates]; n_nsd];
        for (sp, row) in &file.stoichiometry {
            let i = file
                .species
                .iter()
                .position(|s| s == sp)
                .ok_or_else(|| Error::Network(format!("stoichiometry cites unknown NSD {sp}")))?;
            for (rate, v) in row {
                let j = file
                    .rates
                    .iter()
                    .position(|r| r == rate)
                    .ok_or_else(|| Error::Network(format!("stoichiometry cites unknown rate {rate}")))?;
                stoich[i][j] = *v;
            }
        }
        Ok(NsdNetwork {
            species: file.species,
            rate_names: file.rates,
            stoich,
            n_nsd,
            n_rates,
            checksum: sha256_file(path)?,
        })
    }

    pub fn rate_index(&self, rate: NsdRate) -> usize {
        let name = NSD_RATE_NAMES
            .iter()
            .find(|(_, r)| *r == rate)
            .map(|(n, _)| *n)
            .unwrap();
        self.rate_names.iter().position(|r| r == name).unwrap()
    }
}
